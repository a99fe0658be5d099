//! Low-level numeric kernels: strided GEMM wrappers, im2col/col2im for
//! "same"-padded stride-1 convolutions, and window-argmax for pooling.

/// `c = a · b + beta · c` with `a: [m, k]`, `b: [k, n]`, `c: [m, n]`, all row-major.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover every index implied by the dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a · bᵀ + beta · c` with `a: [m, k]`, `b: [n, k]`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as above; `b` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = aᵀ · b + beta · c` with `a: [k, m]`, `b: [k, n]`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above; `a` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Geometry of a stride-1 convolution with odd kernels and "same" zero padding
/// over a single sample `[c, t, h, w]`. 2D convolutions use `t = kt = 1`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c * self.kt * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.t * self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.t * self.h * self.w
    }

    /// Visits every (row, t, h) triple with the contiguous run of `w` indices that
    /// maps inside the input. `f(row, col_offset, src_offset, run_len)`; rows of
    /// the column matrix not covered by a visit are zero.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (pt, ph, pw) = (self.kt / 2, self.kh / 2, self.kw / 2);
        let plane = self.h * self.w;
        let mut row = 0;
        for ci in 0..self.c {
            for dt in 0..self.kt {
                for dh in 0..self.kh {
                    for dw in 0..self.kw {
                        // output w ranges over [w0, w1) with input iw = w + dw - pw
                        let w0 = pw.saturating_sub(dw);
                        let w1 = (self.w + pw).saturating_sub(dw).min(self.w);
                        if w0 < w1 {
                            for t in 0..self.t {
                                let it = t + dt;
                                if it < pt || it - pt >= self.t {
                                    continue;
                                }
                                let it = it - pt;
                                for h in 0..self.h {
                                    let ih = h + dh;
                                    if ih < ph || ih - ph >= self.h {
                                        continue;
                                    }
                                    let ih = ih - ph;
                                    let col = t * plane + h * self.w + w0;
                                    let src = ((ci * self.t + it) * self.h + ih) * self.w + (w0 + dw - pw);
                                    f(row, col, src, w1 - w0);
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Fills `cols: [rows, t*h*w]` from one input sample.
    pub fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let ncols = self.cols();
        cols.fill(0.0);
        self.for_each_run(|row, col, src, len| {
            let dst = row * ncols + col;
            cols[dst..dst + len].copy_from_slice(&x[src..src + len]);
        });
    }

    /// Scatter-adds `cols` back into an input-shaped gradient buffer.
    pub fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let ncols = self.cols();
        self.for_each_run(|row, col, src, len| {
            let from = &cols[row * ncols + col..row * ncols + col + len];
            for (d, s) in dx[src..src + len].iter_mut().zip(from) {
                *d += s;
            }
        });
    }
}

/// Window max over `[planes, t, h, w]` with window `(kt, kh, kw)` and stride equal
/// to the window. Trailing partial windows are clipped, which is the same as
/// replication padding for a max. Returns output dims and, per output element,
/// the flat index of the first maximal input element.
pub(crate) fn window_argmax(
    x: &[f64],
    planes: usize,
    dims: [usize; 3],
    window: [usize; 3],
) -> ([usize; 3], Vec<u32>) {
    let [t, h, w] = dims;
    let [kt, kh, kw] = window;
    let out = [t.div_ceil(kt), h.div_ceil(kh), w.div_ceil(kw)];
    let in_plane = t * h * w;
    let mut src = Vec::with_capacity(planes * out[0] * out[1] * out[2]);
    for p in 0..planes {
        let base = p * in_plane;
        for ot in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for it in ot * kt..((ot + 1) * kt).min(t) {
                        for ih in oh * kh..((oh + 1) * kh).min(h) {
                            for iw in ow * kw..((ow + 1) * kw).min(w) {
                                let idx = base + (it * h + ih) * w + iw;
                                let v = x[idx];
                                if best == usize::MAX || v > best_v {
                                    best = idx;
                                    best_v = v;
                                }
                            }
                        }
                    }
                    src.push(best as u32);
                }
            }
        }
    }
    (out, src)
}
