//! Builds a small convolutional graph, checks its gradients against finite
//! differences and takes a few Adam steps.
//!
//! `cargo run --release --example autodiff`

use gazefollow_tensor::optim::{adam_step, AdamConfig, AdamState};
use gazefollow_tensor::{grad_check, GradCheckConfig, Graph, Tensor};

fn main() -> gazefollow_tensor::Result<()> {
    let x = Tensor::from_fn(&[1, 1, 6, 6], |i| ((i * 7) % 11) as f64 / 10.0);
    let target = Tensor::from_fn(&[1, 1, 6, 6], |i| if i % 7 == 0 { 1.0 } else { 0.0 });
    let mut params = vec![Tensor::from_fn(&[1, 1, 3, 3], |i| 0.1 * (i as f64 - 4.0)), Tensor::zeros(&[1])];

    let loss_of = |g: &mut Graph, p: &[gazefollow_tensor::graph::Var]| {
        let xi = g.input(x.clone());
        let t = g.input(target.clone());
        let y = g.conv2d(xi, p[0], Some(p[1]))?;
        let y = g.sigmoid(y);
        g.mse_loss(y, t)
    };

    let report = grad_check(&params, loss_of, &GradCheckConfig::default())?;
    println!("gradient check: max relative error {:.2e} over {} coordinates", report.max_rel_error, report.checked);

    let mut state = AdamState::new();
    let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
    for step in 0..=50 {
        let mut g = Graph::new();
        let vars: Vec<_> = params.iter().map(|p| g.param(p.clone())).collect();
        let loss = loss_of(&mut g, &vars)?;
        if step % 10 == 0 {
            println!("step {step:2} loss {:.5}", g.value(loss).item().unwrap_or(f64::NAN));
        }
        let grads = g.backward(loss)?;
        let gs: Vec<&Tensor> = vars.iter().map(|&v| grads.get(v).expect("parameter gradient")).collect();
        adam_step(&mut params, &gs, &mut state, &cfg)?;
    }
    Ok(())
}
