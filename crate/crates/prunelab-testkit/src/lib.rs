//! Reference oracles for the test suites.
//!
//! Everything here is written for clarity over speed and shares no code
//! with the production implementations it cross-checks: a textbook triple
//! loop, a one-sided Jacobi SVD, a quadratic-time Fourier sum, and a
//! central-difference gradient probe.

/// Textbook `m x k` times `k x n` product, row-major buffers.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Singular values of a row-major `m x n` matrix, descending, via one-sided
/// Jacobi rotations. Suitable for the small matrices the suites use.
pub fn jacobi_singular_values(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    // Work on a tall copy (rows >= cols) so column norms are the values.
    let (rows, cols, mut w) = if m >= n {
        (m, n, a.to_vec())
    } else {
        let mut t = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                t[c * m + r] = a[r * n + c];
            }
        }
        (n, m, t)
    };
    let col = |w: &[f64], c: usize, r: usize| w[r * cols + c];
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..rows {
                    let x = col(&w, p, r);
                    let y = col(&w, q, r);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(1e-300));
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let x = w[r * cols + p];
                    let y = w[r * cols + q];
                    w[r * cols + p] = c * x - s * y;
                    w[r * cols + q] = s * x + c * y;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    let mut svals: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| w[r * cols + c].powi(2)).sum::<f64>().sqrt())
        .collect();
    svals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    svals
}

/// Quadratic-time one-sided discrete Fourier transform of a real signal.
///
/// Returns `(re, im)` pairs for bins `k = 0..=n/2` with the `1/n`
/// normalization and the `e^{-2 pi i k j / n}` sign convention.
pub fn naive_dft(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, &x) in samples.iter().enumerate() {
            let angle = -2.0 * core::f64::consts::PI * (k as f64) * (j as f64) / (n as f64);
            re += x * angle.cos();
            im += x * angle.sin();
        }
        out.push((re / n as f64, im / n as f64));
    }
    out
}

/// Central finite difference of a scalar function at `x`, entrywise.
///
/// `f` is evaluated at `x` with one coordinate displaced by `±step`; the
/// buffer is restored between probes.
pub fn central_difference(
    x: &mut [f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let saved = x[i];
        x[i] = saved + step;
        let plus = f(x);
        x[i] = saved - step;
        let minus = f(x);
        x[i] = saved;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Guarded max-norm relative error between a gradient and its reference.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
    got.iter()
        .zip(want)
        .fold(0.0f64, |m, (g, w)| m.max((g - w).abs()))
        / scale
}
