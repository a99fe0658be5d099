//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates checked per input tensor; `None` checks all of them.
    pub max_coords: Option<usize>,
    /// Relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose ±step evaluations crossed a ReLU or pooling switch.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let value = g.value(out).item().ok_or_else(|| TensorError::NonScalarLoss(g.value(out).shape().to_vec()))?;
    Ok((value, g.kink_signature()))
}

/// Compares the gradient of the scalar `f(inputs)` against central differences.
///
/// Every tensor in `inputs` becomes a differentiable leaf. Coordinates whose
/// perturbed evaluations change the kink signature are skipped, since the
/// function is not smooth across that interval.
pub fn grad_check<F>(inputs: &[Tensor], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let base_sig = g.kink_signature();
    let grads = g.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[ti]).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; input.len()]);
        let coords: Vec<usize> = match cfg.max_coords {
            Some(k) if k < input.len() => sample(&mut rng, input.len(), k).into_vec(),
            _ => (0..input.len()).collect(),
        };
        for c in coords {
            let orig = input.data()[c];
            work[ti].data_mut()[c] = orig + cfg.step;
            let (plus, sig_plus) = evaluate(&work, &f)?;
            work[ti].data_mut()[c] = orig - cfg.step;
            let (minus, sig_minus) = evaluate(&work, &f)?;
            work[ti].data_mut()[c] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(analytic[c], numeric, cfg.floor);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((ti, c));
            }
        }
    }
    Ok(report)
}
