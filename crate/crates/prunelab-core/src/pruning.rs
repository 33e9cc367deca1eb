//! Binary weight masks and pruning-mask construction.
//!
//! Pruning a network is the Hadamard product of each weight matrix with a
//! same-shape binary mask. Masks are immutable once built and keep exact
//! nonzero accounting: the selection rules remove exactly
//! `floor(ratio * d)` weights, never an approximation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec};

/// Per-layer bitsets with the shapes of the owning network's weights.
///
/// Bits are flat row-major per layer, stored LSB-first in 64-bit words; a
/// set bit means the weight is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    shapes: Vec<(usize, usize)>,
    words: Vec<Vec<u64>>,
    kept: Vec<usize>,
}

impl MaskSet {
    /// Mask keeping every weight.
    pub fn all_ones(shapes: &[(usize, usize)]) -> Self {
        let mut m = Self::all_zeros(shapes);
        for (k, &(rows, cols)) in shapes.iter().enumerate() {
            let bits = rows * cols;
            for w in &mut m.words[k] {
                *w = u64::MAX;
            }
            // Clear tail bits past the last valid index.
            let tail = bits % 64;
            if tail != 0 {
                *m.words[k].last_mut().expect("at least one word") = (1u64 << tail) - 1;
            }
            m.kept[k] = bits;
        }
        m
    }

    /// Mask removing every weight.
    pub fn all_zeros(shapes: &[(usize, usize)]) -> Self {
        let words = shapes
            .iter()
            .map(|&(rows, cols)| vec![0u64; (rows * cols).div_ceil(64)])
            .collect();
        Self {
            shapes: shapes.to_vec(),
            words,
            kept: vec![0; shapes.len()],
        }
    }

    /// Rebuilds a mask from serialized words, validating word counts and
    /// that no tail bit past the last valid index is set.
    pub fn from_words(shapes: &[(usize, usize)], words: Vec<Vec<u64>>) -> Result<Self> {
        if words.len() != shapes.len() {
            return Err(Error::InvalidArgument {
                what: "mask words",
                detail: format!("{} layers of words for {} shapes", words.len(), shapes.len()),
            });
        }
        let mut kept = Vec::with_capacity(shapes.len());
        for (k, (&(rows, cols), layer)) in shapes.iter().zip(&words).enumerate() {
            let bits = rows * cols;
            if layer.len() != bits.div_ceil(64) {
                return Err(Error::InvalidArgument {
                    what: "mask words",
                    detail: format!("layer {k}: {} words for {bits} bits", layer.len()),
                });
            }
            let tail = bits % 64;
            if tail != 0 && layer.last().expect("nonempty") >> tail != 0 {
                return Err(Error::InvalidArgument {
                    what: "mask words",
                    detail: format!("layer {k}: tail bits set past bit {bits}"),
                });
            }
            kept.push(layer.iter().map(|w| w.count_ones() as usize).sum());
        }
        Ok(Self {
            shapes: shapes.to_vec(),
            words,
            kept,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.shapes.len()
    }

    pub fn shape(&self, layer: usize) -> (usize, usize) {
        self.shapes[layer]
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// Serialized words for one layer, LSB-first flat row-major bits.
    pub fn words(&self, layer: usize) -> &[u64] {
        &self.words[layer]
    }

    /// True when the weight at `(layer, r, c)` is kept.
    pub fn get(&self, layer: usize, r: usize, c: usize) -> bool {
        let (rows, cols) = self.shapes[layer];
        assert!(r < rows && c < cols, "mask index out of bounds");
        let bit = r * cols + c;
        self.words[layer][bit / 64] >> (bit % 64) & 1 == 1
    }

    fn clear(&mut self, layer: usize, flat: usize) {
        let word = &mut self.words[layer][flat / 64];
        if *word >> (flat % 64) & 1 == 1 {
            *word &= !(1u64 << (flat % 64));
            self.kept[layer] -= 1;
        }
    }

    /// Kept-weight count for one layer; always the popcount of its bitset.
    pub fn kept_in_layer(&self, layer: usize) -> usize {
        self.kept[layer]
    }

    pub fn kept_total(&self) -> usize {
        self.kept.iter().sum()
    }

    /// Total number of maskable weights.
    pub fn weight_count(&self) -> usize {
        self.shapes.iter().map(|&(r, c)| r * c).sum()
    }

    /// Checks that the mask shapes mirror the spec's weight shapes.
    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let want: Vec<(usize, usize)> = (0..spec.depth()).map(|k| spec.layer_shape(k)).collect();
        if self.shapes != want {
            return Err(Error::InvalidArgument {
                what: "mask",
                detail: format!("mask shapes {:?} do not mirror {:?}", self.shapes, want),
            });
        }
        Ok(())
    }
}

/// How many weights to remove, where, and by which rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneRecipe {
    /// Fraction of weights REMOVED, in `[0, 1)`.
    pub ratio: f64,
    pub scope: PruneScope,
    pub rule: PruneRule,
    /// Teacher epoch whose weights the mask is built from.
    pub prune_epoch: usize,
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneScope {
    /// One magnitude threshold across all layers.
    Global,
    /// An independent threshold per layer.
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneRule {
    Magnitude,
    Random,
}

/// Tie handling at the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Equal-magnitude weights are kept in ascending flat-index order
    /// (layer-major, row-major): lower index kept first.
    #[default]
    StableIndex,
}

/// Kept and removed weight fractions of a mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sparsity {
    /// Surviving fraction (the literature's `s`).
    pub kept_fraction: f64,
    /// `1 - kept_fraction`; what experiment tables call the pruning ratio.
    pub removed_fraction: f64,
}

/// Number of weights removed by ratio `r` over `d` weights:
/// `floor(r * d)`, with a tiny epsilon so exact decimal ratios are not
/// floored one short by binary representation error.
fn removal_count(ratio: f64, d: usize) -> usize {
    ((ratio * d as f64) + 1e-9).floor() as usize
}

fn check_recipe(net: &Network, recipe: &PruneRecipe, want_rule: PruneRule) -> Result<()> {
    if recipe.rule != want_rule {
        return Err(Error::InvalidArgument {
            what: "recipe",
            detail: format!("rule {:?} passed to a {:?} selector", recipe.rule, want_rule),
        });
    }
    if !(0.0..1.0).contains(&recipe.ratio) {
        return Err(Error::InvalidRatio(recipe.ratio));
    }
    if net.spec().weight_count() == 0 {
        return Err(Error::EmptyNetwork);
    }
    Ok(())
}

/// Builds a magnitude mask: exactly `floor(ratio * d)` weights of smallest
/// absolute value are removed (per layer under [`PruneScope::PerLayer`]).
/// Ties at the threshold keep the lower flat index.
pub fn select_magnitude(net: &Network, recipe: &PruneRecipe) -> Result<MaskSet> {
    check_recipe(net, recipe, PruneRule::Magnitude)?;
    let shapes: Vec<(usize, usize)> = net.weights().iter().map(|w| w.shape()).collect();
    let mut mask = MaskSet::all_ones(&shapes);
    match recipe.scope {
        PruneScope::Global => {
            let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(net.spec().weight_count());
            for (k, w) in net.weights().iter().enumerate() {
                for (flat, &x) in w.data().iter().enumerate() {
                    entries.push((x.abs(), k, flat));
                }
            }
            let m = removal_count(recipe.ratio, entries.len());
            sort_for_removal(&mut entries, &shapes);
            for &(_, k, flat) in entries.iter().take(m) {
                mask.clear(k, flat);
            }
        }
        PruneScope::PerLayer => {
            for (k, w) in net.weights().iter().enumerate() {
                let mut entries: Vec<(f64, usize, usize)> = w
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(flat, &x)| (x.abs(), k, flat))
                    .collect();
                let m = removal_count(recipe.ratio, entries.len());
                sort_for_removal(&mut entries, &shapes);
                for &(_, k, flat) in entries.iter().take(m) {
                    mask.clear(k, flat);
                }
            }
        }
    }
    Ok(mask)
}

/// Ascending magnitude; among equal magnitudes the HIGHER global flat index
/// sorts first so it is removed first, keeping lower indices.
fn sort_for_removal(entries: &mut [(f64, usize, usize)], shapes: &[(usize, usize)]) {
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0usize, |acc, &(r, c)| {
            let here = *acc;
            *acc += r * c;
            Some(here)
        })
        .collect();
    entries.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite weights")
            .then_with(|| {
                let ga = offsets[a.1] + a.2;
                let gb = offsets[b.1] + b.2;
                gb.cmp(&ga)
            })
    });
}

/// Builds a random mask: exactly `floor(ratio * d)` positions removed,
/// sampled uniformly without replacement from the given seed.
pub fn select_random(net: &Network, recipe: &PruneRecipe, seed: u64) -> Result<MaskSet> {
    check_recipe(net, recipe, PruneRule::Random)?;
    let shapes: Vec<(usize, usize)> = net.weights().iter().map(|w| w.shape()).collect();
    let mut mask = MaskSet::all_ones(&shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match recipe.scope {
        PruneScope::Global => {
            let d = net.spec().weight_count();
            let m = removal_count(recipe.ratio, d);
            let offsets: Vec<usize> = shapes.iter().map(|&(r, c)| r * c).collect();
            for global in rand::seq::index::sample(&mut rng, d, m) {
                let mut idx = global;
                for (k, &count) in offsets.iter().enumerate() {
                    if idx < count {
                        mask.clear(k, idx);
                        break;
                    }
                    idx -= count;
                }
            }
        }
        PruneScope::PerLayer => {
            for (k, &(rows, cols)) in shapes.iter().enumerate() {
                let bits = rows * cols;
                let m = removal_count(recipe.ratio, bits);
                for flat in rand::seq::index::sample(&mut rng, bits, m) {
                    mask.clear(k, flat);
                }
            }
        }
    }
    Ok(mask)
}

/// Zeroes every masked-off weight and attaches the mask so training keeps
/// respecting it. Idempotent: applying the same mask twice changes nothing.
pub fn apply(net: &mut Network, masks: MaskSet) -> Result<()> {
    masks.check_shapes(net.spec())?;
    for (k, w) in net.weights_mut().iter_mut().enumerate() {
        let cols = w.cols();
        for (flat, x) in w.data_mut().iter_mut().enumerate() {
            if !masks.get(k, flat / cols, flat % cols) {
                *x = 0.0;
            }
        }
    }
    net.set_masks(Some(masks));
    Ok(())
}

/// Kept/removed fractions of a mask, both reported to leave no ambiguity
/// about which way the ratio is read.
pub fn sparsity(masks: &MaskSet) -> Sparsity {
    let kept = masks.kept_total() as f64 / masks.weight_count() as f64;
    Sparsity {
        kept_fraction: kept,
        removed_fraction: 1.0 - kept,
    }
}

/// Resets the network to its initial weights, then applies the mask: the
/// lottery-ticket starting point. The epoch counter returns to zero.
pub fn rewind(net: &mut Network, masks: MaskSet) -> Result<()> {
    let initial = net
        .initial_weights()
        .ok_or(Error::MissingInitialSnapshot)?
        .to_vec();
    net.set_weights(initial);
    net.set_epoch(0);
    apply(net, masks)
}
