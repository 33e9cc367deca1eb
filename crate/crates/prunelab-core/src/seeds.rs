//! Deterministic seed derivation.
//!
//! Experiment stages (init, teacher training, student training, mask
//! sampling, data generation) each consume their own RNG stream so that
//! running a stage in isolation reproduces exactly what it produced inside a
//! longer pipeline. Streams are derived from one root seed and a stage
//! label.

/// One round of splitmix64; the standard 64-bit finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a stage seed from a root seed and a stage label.
///
/// Same `(root, label)` always yields the same seed; distinct labels yield
/// independent streams for any root.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes, then mixed with the root.
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(root ^ h)
}
