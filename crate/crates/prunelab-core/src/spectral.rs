//! Fourier and norm-chain analysis of networks as functions.
//!
//! The closed-form Fourier components of a ReLU network are intractable to
//! evaluate directly, so the measurement instrument here is empirical: the
//! network is sampled on a uniform 1-D grid and transformed with a radix-2
//! FFT. The norm-chain side bounds the network's Lipschitz behavior through
//! per-layer spectral norms and the ordered weight-matrix product.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Matrix, SpectralNorm};

/// Uniform half-open sampling grid `[lo, hi)` with a power-of-two length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Default for Grid1D {
    /// `[0, 1)` with 256 samples: cheap enough for per-epoch spectra,
    /// fine enough to resolve single-digit bands cleanly.
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            n: 256,
        }
    }
}

impl Grid1D {
    pub const MIN_LEN: usize = 8;
    pub const MAX_LEN: usize = 4096;

    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument {
                what: "grid domain",
                detail: format!("[{lo}, {hi})"),
            });
        }
        if !n.is_power_of_two() {
            return Err(Error::NonPowerOfTwo(n));
        }
        if !(Self::MIN_LEN..=Self::MAX_LEN).contains(&n) {
            return Err(Error::InvalidArgument {
                what: "grid length",
                detail: format!("{n} outside {}..={}", Self::MIN_LEN, Self::MAX_LEN),
            });
        }
        Ok(Self { lo, hi, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// The i-th sample point.
    pub fn point(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * (i as f64) / (self.n as f64)
    }

    /// All sample points as an `n x 1` matrix.
    pub fn column(&self) -> Matrix {
        Matrix::from_fn(self.n, 1, |r, _| self.point(r))
    }
}

/// One-sided spectrum of a real signal of length `n`: bins `0..=n/2`,
/// amplitudes normalized by `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    n: usize,
    bins: Vec<(f64, f64)>,
}

impl Spectrum {
    /// Wraps precomputed bins; the count must be `n/2 + 1`.
    pub fn from_bins(n: usize, bins: Vec<(f64, f64)>) -> Result<Self> {
        if !n.is_power_of_two() || n < Grid1D::MIN_LEN {
            return Err(Error::NonPowerOfTwo(n));
        }
        if bins.len() != n / 2 + 1 {
            return Err(Error::InvalidArgument {
                what: "spectrum bins",
                detail: format!("{} bins for n = {n}", bins.len()),
            });
        }
        Ok(Self { n, bins })
    }

    /// Number of time-domain samples behind this spectrum.
    pub fn sample_count(&self) -> usize {
        self.n
    }

    /// Highest resolvable frequency (the Nyquist bin).
    pub fn max_band(&self) -> usize {
        self.n / 2
    }

    /// Complex amplitude `(re, im)` at bin `k`.
    pub fn amplitude(&self, k: usize) -> (f64, f64) {
        self.bins[k]
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        let (re, im) = self.bins[k];
        (re * re + im * im).sqrt()
    }

    pub fn bins(&self) -> &[(f64, f64)] {
        &self.bins
    }

    /// One-sided power: interior bins weighted twice so the total matches
    /// the mean square of the time-domain signal.
    pub fn total_power(&self) -> f64 {
        let mut p = 0.0;
        for (k, &(re, im)) in self.bins.iter().enumerate() {
            let w = if k == 0 || k == self.n / 2 { 1.0 } else { 2.0 };
            p += w * (re * re + im * im);
        }
        p
    }
}

/// One-sided discrete Fourier transform of a real signal.
///
/// Length must be a power of two, at least [`Grid1D::MIN_LEN`]. Uses an
/// iterative radix-2 transform; bins carry the `1/n` normalization and the
/// `e^{-2 pi i k j / n}` sign convention, so a constant signal `c` puts
/// amplitude `c` in bin 0 and a unit cosine at bin `k` has magnitude `1/2`.
pub fn dft(samples: &[f64]) -> Result<Spectrum> {
    let n = samples.len();
    if !n.is_power_of_two() || n < Grid1D::MIN_LEN {
        return Err(Error::NonPowerOfTwo(n));
    }
    let mut re: Vec<f64> = samples.to_vec();
    let mut im: Vec<f64> = vec![0.0; n];

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    // Butterfly stages.
    let mut len = 2;
    while len <= n {
        let angle = -2.0 * core::f64::consts::PI / len as f64;
        let (w_re, w_im) = (angle.cos(), angle.sin());
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for off in 0..len / 2 {
                let a = start + off;
                let b = a + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len *= 2;
    }

    let scale = 1.0 / n as f64;
    let bins = (0..=n / 2)
        .map(|k| (re[k] * scale, im[k] * scale))
        .collect();
    Spectrum::from_bins(n, bins)
}

/// Spectrum of the network evaluated on a 1-D grid.
///
/// The network must produce one output from either one input (probed as
/// `f(x)`) or two inputs (probed as `f(x, 1)`, the constant-lifted
/// convention that gives bias-free networks first-layer offsets).
pub fn network_spectrum(net: &Network, grid: &Grid1D) -> Result<Spectrum> {
    let d0 = net.spec().input_dim;
    if !(d0 == 1 || d0 == 2) || net.output_dim() != 1 {
        return Err(Error::NotScalarFunction {
            input_dim: d0,
            output_dim: net.output_dim(),
        });
    }
    let inputs = if d0 == 1 {
        grid.column()
    } else {
        Matrix::from_fn(grid.len(), 2, |r, c| if c == 0 { grid.point(r) } else { 1.0 })
    };
    let out = net.forward(&inputs)?;
    dft(out.data())
}

/// Convergence record for one tracked frequency band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConvergence {
    pub band: usize,
    /// First trace index whose relative amplitude error dropped below the
    /// threshold; `None` when it never did.
    pub first_hit: Option<usize>,
    /// Set when the target amplitude at this band is exactly zero, making
    /// the relative error ill-conditioned.
    pub zero_target: bool,
}

/// For each band, finds the first epoch whose spectrum is within `delta`
/// relative error of the target at that band.
///
/// The error at epoch `t` is `|f_t(k) - g(k)| / (|g(k)| + 1e-12)` on complex
/// amplitudes. Bands whose target amplitude is exactly zero are flagged
/// rather than rejected.
pub fn frequency_convergence(
    trace: &[Spectrum],
    target: &Spectrum,
    bands: &[usize],
    delta: f64,
) -> Result<Vec<BandConvergence>> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument {
            what: "trace",
            detail: "no spectra".to_string(),
        });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument {
            what: "delta",
            detail: format!("{delta} <= 0"),
        });
    }
    for s in trace {
        if s.sample_count() != target.sample_count() {
            return Err(Error::InvalidArgument {
                what: "trace",
                detail: format!(
                    "spectrum over {} samples vs target over {}",
                    s.sample_count(),
                    target.sample_count()
                ),
            });
        }
    }
    let mut out = Vec::with_capacity(bands.len());
    for &band in bands {
        if band > target.max_band() {
            return Err(Error::BandOutOfRange {
                band,
                max: target.max_band(),
            });
        }
        let (g_re, g_im) = target.amplitude(band);
        let g_mag = target.magnitude(band);
        let denom = g_mag + 1e-12;
        let first_hit = trace.iter().position(|s| {
            let (re, im) = s.amplitude(band);
            let err = ((re - g_re).powi(2) + (im - g_im).powi(2)).sqrt() / denom;
            err < delta
        });
        out.push(BandConvergence {
            band,
            first_hit,
            zero_target: g_mag == 0.0,
        });
    }
    Ok(out)
}

/// Ordered product of the weight matrices, `W^L * ... * W^1`.
///
/// The multiplication order matches forward composition, so the result maps
/// input space to output space (shape `d_L x d_0`). With one layer this is
/// the weight matrix itself.
pub fn flow_indicator(net: &Network) -> Result<Matrix> {
    let mut acc = net.weights()[0].clone();
    for w in &net.weights()[1..] {
        acc = w.matmul(&acc)?;
    }
    Ok(acc)
}

/// Per-layer norms, their product, the max-norm bound, and the flow norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    /// Spectral norm of each layer's weight matrix.
    pub layer_norms: Vec<f64>,
    /// Product of the per-layer spectral norms.
    pub norm_product: f64,
    /// `max|theta|^L * sqrt(d) * prod(d_k)` with `d` the hidden/output unit
    /// count. Only meaningful when the input is no wider than `d * d_L`;
    /// see [`norm_report`].
    pub max_norm_bound: f64,
    /// Spectral norm of the ordered weight product.
    pub flow_norm: f64,
}

/// Power-iteration budget used for the chain computations.
const CHAIN_ITERS: usize = 1000;
const CHAIN_TOL: f64 = 1e-12;

/// Computes the full norm chain and verifies
/// `flow <= product <= bound` to within `1e-9` relative slack.
///
/// A violation of the first inequality indicates a numeric bug. The second
/// inequality is a theorem only when the input width satisfies
/// `d_0 <= d * d_L` (with `d` the unit count over layers `1..=L`); wider
/// inputs on very small networks can genuinely exceed the stated bound, and
/// the same error is reported.
pub fn norm_report(net: &Network) -> Result<NormReport> {
    let layer_norms: Vec<f64> = net
        .weights()
        .iter()
        .map(|w| w.spectral_norm(CHAIN_ITERS, CHAIN_TOL).map(|s| s.value))
        .collect::<Result<_>>()?;
    let norm_product = layer_norms.iter().product();
    let flow = flow_indicator(net)?;
    let flow_norm = flow.spectral_norm(CHAIN_ITERS, CHAIN_TOL)?.value;

    let depth = net.spec().depth() as i32;
    let max_abs = net
        .weights()
        .iter()
        .fold(0.0f64, |m, w| m.max(w.max_abs()));
    let unit_count = net.spec().unit_count() as f64;
    let width_product: f64 = net
        .spec()
        .layer_widths
        .iter()
        .map(|&w| w as f64)
        .product();
    let max_norm_bound = max_abs.powi(depth) * unit_count.sqrt() * width_product;

    let slack = 1e-9;
    let ok = flow_norm <= norm_product * (1.0 + slack) + 1e-12
        && norm_product <= max_norm_bound * (1.0 + slack) + 1e-12;
    if !ok {
        return Err(Error::NormChainViolation {
            flow_norm,
            norm_product,
            max_norm_bound,
        });
    }
    Ok(NormReport {
        layer_norms,
        norm_product,
        max_norm_bound,
        flow_norm,
    })
}

/// Relative movement of the flow indicator and the norm product between two
/// same-architecture networks. Pure measurement, no thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub flow_drift: f64,
    pub bound_drift: f64,
}

pub fn pruning_stability(before: &Network, after: &Network) -> Result<StabilityReport> {
    if before.spec().input_dim != after.spec().input_dim
        || before.spec().layer_widths != after.spec().layer_widths
    {
        return Err(Error::InvalidArgument {
            what: "networks",
            detail: "architectures differ".to_string(),
        });
    }
    let eps = 1e-12;
    let flow_before = flow_indicator(before)?;
    let flow_after = flow_indicator(after)?;
    let delta = flow_before.sub(&flow_after)?;
    let delta_norm = delta.spectral_norm(CHAIN_ITERS, CHAIN_TOL)?.value;
    let base_norm = flow_before.spectral_norm(CHAIN_ITERS, CHAIN_TOL)?.value;
    let flow_drift = delta_norm / (base_norm + eps);

    let product = |net: &Network| -> Result<f64> {
        let mut p = 1.0;
        for w in net.weights() {
            p *= w.spectral_norm(CHAIN_ITERS, CHAIN_TOL)?.value;
        }
        Ok(p)
    };
    let p_before = product(before)?;
    let p_after = product(after)?;
    let bound_drift = (p_before - p_after).abs() / (p_before + eps);
    Ok(StabilityReport {
        flow_drift,
        bound_drift,
    })
}

/// Spectral norm of a single matrix with the chain budget; exposed for
/// metrics emission.
pub fn tight_spectral_norm(m: &Matrix) -> Result<SpectralNorm> {
    m.spectral_norm(CHAIN_ITERS, CHAIN_TOL)
}


#[cfg(test)]
mod network_tests {
    use super::*;
    use crate::network::{InitScheme, NetworkSpec};
    use crate::pruning::{self, MaskSet};

    fn spec(input_dim: usize, widths: &[usize], seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            layer_widths: widths.to_vec(),
            seed,
            init: InitScheme::HeNormal,
        }
    }

    #[test]
    fn network_spectrum_of_untrained_net_satisfies_parseval() {
        let net = Network::init(spec(1, &[16, 1], 4)).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 256).unwrap();
        let out = net.forward(&grid.column()).unwrap();
        let s = network_spectrum(&net, &grid).unwrap();
        let mean_sq: f64 = out.data().iter().map(|x| x * x).sum::<f64>() / out.rows() as f64;
        assert!((s.total_power() - mean_sq).abs() <= 1e-9 * mean_sq.max(1e-300));
    }

    #[test]
    fn network_spectrum_of_zero_net_is_zero() {
        let s = spec(1, &[4, 1], 0);
        let weights = alloc::vec![Matrix::zeros(4, 1), Matrix::zeros(1, 4)];
        let net = Network::from_parts(s, weights, None, None, 0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 64).unwrap();
        let spec_out = network_spectrum(&net, &grid).unwrap();
        for k in 0..=spec_out.max_band() {
            assert_eq!(spec_out.magnitude(k), 0.0);
        }
    }

    #[test]
    fn network_spectrum_rejects_wide_nets() {
        let net = Network::init(spec(3, &[4, 1], 1)).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 64).unwrap();
        assert!(matches!(
            network_spectrum(&net, &grid),
            Err(Error::NotScalarFunction { input_dim: 3, output_dim: 1 })
        ));
        let wide_out = Network::init(spec(1, &[4, 2], 1)).unwrap();
        assert!(network_spectrum(&wide_out, &grid).is_err());
    }

    #[test]
    fn flow_indicator_single_layer_is_the_weight() {
        let net = Network::init(spec(3, &[2], 6)).unwrap();
        assert_eq!(&flow_indicator(&net).unwrap(), &net.weights()[0]);
    }

    #[test]
    fn flow_indicator_identity_layers() {
        let s = spec(3, &[3, 3], 0);
        let weights = alloc::vec![Matrix::identity(3), Matrix::identity(3)];
        let net = Network::from_parts(s, weights, None, None, 0).unwrap();
        assert_eq!(flow_indicator(&net).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn flow_indicator_matches_fold_oracle() {
        let net = Network::init(spec(4, &[5, 3, 2], 12)).unwrap();
        let got = flow_indicator(&net).unwrap();
        // Left fold from the output side: W3 * (W2 * W1).
        let w = net.weights();
        let oracle = w[2].matmul(&w[1].matmul(&w[0]).unwrap()).unwrap();
        for (a, b) in got.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(got.shape(), (2, 4));
    }

    #[test]
    fn flow_indicator_unchanged_by_all_ones_mask() {
        let mut net = Network::init(spec(3, &[4, 2], 8)).unwrap();
        let before = flow_indicator(&net).unwrap();
        let shapes: alloc::vec::Vec<(usize, usize)> =
            net.weights().iter().map(|w| w.shape()).collect();
        pruning::apply(&mut net, MaskSet::all_ones(&shapes)).unwrap();
        let after = flow_indicator(&net).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn norm_report_identity_layers() {
        let s = spec(3, &[3, 3], 0);
        let weights = alloc::vec![Matrix::identity(3), Matrix::identity(3)];
        let net = Network::from_parts(s, weights, None, None, 0).unwrap();
        let report = norm_report(&net).unwrap();
        assert!((report.flow_norm - 1.0).abs() < 1e-9);
        assert!((report.norm_product - 1.0).abs() < 1e-9);
        // Bound: 1^2 * sqrt(6) * 9 >= 1.
        assert!(report.max_norm_bound >= 1.0);
    }

    #[test]
    fn norm_report_commuting_diagonal() {
        let s = spec(2, &[2, 2], 0);
        let d2 = Matrix::from_vec(2, 2, alloc::vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let net = Network::from_parts(s, alloc::vec![d2.clone(), d2], None, None, 0).unwrap();
        let report = norm_report(&net).unwrap();
        assert!((report.flow_norm - 4.0).abs() < 1e-9);
        assert!((report.norm_product - 4.0).abs() < 1e-9);
    }

    #[test]
    fn norm_chain_holds_on_random_nets_and_pruned() {
        use crate::pruning::{select_magnitude, PruneRecipe, PruneRule, PruneScope, TieBreak};
        for seed in 0..20u64 {
            let widths: alloc::vec::Vec<usize> = match seed % 3 {
                0 => alloc::vec![6, 4],
                1 => alloc::vec![8, 5, 3],
                _ => alloc::vec![5, 7, 4, 2],
            };
            let mut net = Network::init(spec(4, &widths, 1000 + seed)).unwrap();
            let r = norm_report(&net).unwrap();
            assert!(r.flow_norm <= r.norm_product * (1.0 + 1e-9) + 1e-12);
            assert!(r.norm_product <= r.max_norm_bound * (1.0 + 1e-9) + 1e-12);
            let recipe = PruneRecipe {
                ratio: 0.5,
                scope: PruneScope::Global,
                rule: PruneRule::Magnitude,
                prune_epoch: 0,
                tie_break: TieBreak::StableIndex,
            };
            let mask = select_magnitude(&net, &recipe).unwrap();
            pruning::apply(&mut net, mask).unwrap();
            assert!(norm_report(&net).is_ok(), "pruned chain violated at seed {seed}");
        }
    }

    #[test]
    fn stability_of_identical_nets_is_exactly_zero() {
        let net = Network::init(spec(3, &[5, 2], 3)).unwrap();
        let report = pruning_stability(&net, &net.clone()).unwrap();
        assert_eq!(report.flow_drift, 0.0);
        assert_eq!(report.bound_drift, 0.0);
    }

    #[test]
    fn pruning_a_zero_weight_changes_nothing() {
        let s = spec(2, &[2], 0);
        let w = Matrix::from_vec(2, 2, alloc::vec![1.5, 0.0, -0.5, 2.0]).unwrap();
        let before = Network::from_parts(s.clone(), alloc::vec![w.clone()], None, None, 0).unwrap();
        // Mask off exactly the zero entry: bit 1 = (0,1).
        let mut after = before.clone();
        let mask = MaskSet::from_words(&[(2, 2)], alloc::vec![alloc::vec![0b1101u64]]).unwrap();
        pruning::apply(&mut after, mask).unwrap();
        let report = pruning_stability(&before, &after).unwrap();
        assert_eq!(report.flow_drift, 0.0);
        assert_eq!(report.bound_drift, 0.0);
    }

    #[test]
    fn stability_rejects_mismatched_architectures() {
        let a = Network::init(spec(3, &[4, 2], 1)).unwrap();
        let b = Network::init(spec(3, &[5, 2], 1)).unwrap();
        assert!(pruning_stability(&a, &b).is_err());
    }
}
