//! Versioned binary network checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "WLTN" | u32 version = 1 | u32 section_count | sections... | u32 crc32
//! section := u32 tag | u64 byte_len | payload
//! ```
//!
//! The CRC covers everything between the version word and the trailer.
//! Required sections: spec, epoch, weights, RNG state, optimizer
//! velocities. Optional: masks (per-layer bitsets as little-endian 64-bit
//! words, layer-major) and the initial-weight snapshot used for
//! lottery-ticket rewinding. `save(load(x))` reproduces `x` byte for byte.

use std::fs;
use std::path::Path;

use prunelab_core::network::{InitScheme, Network, NetworkSpec, OptimizerState};
use prunelab_core::pruning::MaskSet;
use prunelab_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;

pub const MAGIC: &[u8; 4] = b"WLTN";
pub const VERSION: u32 = 1;

const TAG_SPEC: u32 = 1;
const TAG_EPOCH: u32 = 2;
const TAG_WEIGHTS: u32 = 3;
const TAG_MASKS: u32 = 4;
const TAG_INITIAL: u32 = 5;
const TAG_RNG: u32 = 6;
const TAG_VELOCITY: u32 = 7;

/// Serializable ChaCha stream position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to resume or rewind a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub epoch: u64,
    pub weights: Vec<Matrix>,
    pub masks: Option<MaskSet>,
    pub initial: Option<Vec<Matrix>>,
    pub rng: RngState,
    pub velocities: Vec<Matrix>,
}

impl Checkpoint {
    /// Snapshots a network mid-run. Velocities default to zero when no
    /// optimizer is supplied.
    pub fn from_network(net: &Network, opt: Option<&OptimizerState>, rng: &ChaCha8Rng) -> Self {
        let velocities = match opt {
            Some(o) => o.velocities().to_vec(),
            None => net
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        };
        Self {
            spec: net.spec().clone(),
            epoch: net.epoch() as u64,
            weights: net.weights().to_vec(),
            masks: net.masks().cloned(),
            initial: net.initial_weights().map(|w| w.to_vec()),
            rng: RngState::capture(rng),
            velocities,
        }
    }

    /// Reassembles the network, revalidating shapes and mask invariants.
    pub fn to_network(&self) -> Result<Network, DataError> {
        Ok(Network::from_parts(
            self.spec.clone(),
            self.weights.clone(),
            self.masks.clone(),
            self.initial.clone(),
            self.epoch as usize,
        )?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut sections: Vec<u8> = Vec::new();
        let mut count = 0u32;
        let push = |sections: &mut Vec<u8>, tag: u32, payload: Vec<u8>| {
            sections.extend_from_slice(&tag.to_le_bytes());
            sections.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            sections.extend_from_slice(&payload);
        };

        push(&mut sections, TAG_SPEC, encode_spec(&self.spec));
        count += 1;
        push(&mut sections, TAG_EPOCH, self.epoch.to_le_bytes().to_vec());
        count += 1;
        push(&mut sections, TAG_WEIGHTS, encode_stack(&self.weights));
        count += 1;
        if let Some(masks) = &self.masks {
            push(&mut sections, TAG_MASKS, encode_masks(masks));
            count += 1;
        }
        if let Some(initial) = &self.initial {
            push(&mut sections, TAG_INITIAL, encode_stack(initial));
            count += 1;
        }
        let mut rng_payload = Vec::with_capacity(48);
        rng_payload.extend_from_slice(&self.rng.seed);
        rng_payload.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        push(&mut sections, TAG_RNG, rng_payload);
        count += 1;
        push(&mut sections, TAG_VELOCITY, encode_stack(&self.velocities));
        count += 1;

        let mut out = Vec::with_capacity(sections.len() + 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let crc_start = out.len();
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&sections);
        let crc = crc32fast::hash(&out[crc_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DataError> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            let actual = u32::from_be_bytes(magic.try_into().expect("4 bytes"));
            return Err(DataError::BadMagic {
                expected: u32::from_be_bytes(*MAGIC),
                actual,
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(DataError::UnsupportedVersion(version));
        }
        // CRC covers section_count through the last section byte.
        if bytes.len() < 8 + 4 + 4 {
            return Err(DataError::Truncated { what: "crc trailer" });
        }
        let payload = &bytes[8..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(DataError::CrcMismatch {
                expected: stored,
                actual: computed,
            });
        }

        let section_count = r.u32("section count")?;
        let mut spec: Option<NetworkSpec> = None;
        let mut epoch: Option<u64> = None;
        let mut weights: Option<Vec<Matrix>> = None;
        let mut masks: Option<MaskSet> = None;
        let mut initial: Option<Vec<Matrix>> = None;
        let mut rng: Option<RngState> = None;
        let mut velocities: Option<Vec<Matrix>> = None;

        let mut raw_masks: Option<RawMasks> = None;
        for _ in 0..section_count {
            let tag = r.u32("section tag")?;
            let len = r.u64("section length")? as usize;
            let body = r.take(len, "section body")?;
            let mut br = Reader::new(body);
            let dup = |name: &str| DataError::Malformed(format!("duplicate {name} section"));
            match tag {
                TAG_SPEC => {
                    if spec.replace(decode_spec(&mut br)?).is_some() {
                        return Err(dup("spec"));
                    }
                }
                TAG_EPOCH => {
                    if epoch.replace(br.u64("epoch")?).is_some() {
                        return Err(dup("epoch"));
                    }
                }
                TAG_WEIGHTS => {
                    if weights.replace(decode_stack(&mut br)?).is_some() {
                        return Err(dup("weights"));
                    }
                }
                TAG_MASKS => {
                    if raw_masks.replace(decode_masks(&mut br)?).is_some() {
                        return Err(dup("masks"));
                    }
                }
                TAG_INITIAL => {
                    if initial.replace(decode_stack(&mut br)?).is_some() {
                        return Err(dup("initial"));
                    }
                }
                TAG_RNG => {
                    let seed: [u8; 32] = br
                        .take(32, "rng seed")?
                        .try_into()
                        .expect("32 bytes");
                    let word_pos = u128::from_le_bytes(
                        br.take(16, "rng word position")?.try_into().expect("16 bytes"),
                    );
                    if rng.replace(RngState { seed, word_pos }).is_some() {
                        return Err(dup("rng"));
                    }
                }
                TAG_VELOCITY => {
                    if velocities.replace(decode_stack(&mut br)?).is_some() {
                        return Err(dup("velocity"));
                    }
                }
                other => {
                    return Err(DataError::Malformed(format!("unknown section tag {other}")));
                }
            }
            if !br.is_empty() {
                return Err(DataError::Malformed(format!(
                    "section {tag} has trailing bytes"
                )));
            }
        }
        if !r.is_empty() && r.remaining() != 4 {
            return Err(DataError::Malformed("trailing bytes after sections".into()));
        }

        if let Some((shapes, words)) = raw_masks {
            masks = Some(
                MaskSet::from_words(&shapes, words)
                    .map_err(|e| DataError::Malformed(e.to_string()))?,
            );
        }
        let missing = |name: &str| DataError::Malformed(format!("missing {name} section"));
        Ok(Self {
            spec: spec.ok_or_else(|| missing("spec"))?,
            epoch: epoch.ok_or_else(|| missing("epoch"))?,
            weights: weights.ok_or_else(|| missing("weights"))?,
            masks,
            initial,
            rng: rng.ok_or_else(|| missing("rng"))?,
            velocities: velocities.ok_or_else(|| missing("velocity"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.encode()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DataError> {
        let slice = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or(DataError::Truncated { what })?;
        self.at += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn is_empty(&self) -> bool {
        self.at == self.bytes.len()
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }
}

fn encode_spec(spec: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(spec.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(spec.layer_widths.len() as u32).to_le_bytes());
    for &w in &spec.layer_widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&spec.seed.to_le_bytes());
    out.push(match spec.init {
        InitScheme::HeNormal => 0,
        InitScheme::UniformScaled => 1,
    });
    out
}

fn decode_spec(r: &mut Reader) -> Result<NetworkSpec, DataError> {
    let input_dim = r.u32("spec input dim")? as usize;
    let depth = r.u32("spec depth")? as usize;
    let mut layer_widths = Vec::with_capacity(depth);
    for _ in 0..depth {
        layer_widths.push(r.u32("spec width")? as usize);
    }
    let seed = r.u64("spec seed")?;
    let init = match r.take(1, "spec init scheme")?[0] {
        0 => InitScheme::HeNormal,
        1 => InitScheme::UniformScaled,
        other => {
            return Err(DataError::Malformed(format!("unknown init scheme {other}")));
        }
    };
    Ok(NetworkSpec {
        input_dim,
        layer_widths,
        seed,
        init,
    })
}

fn encode_stack(stack: &[Matrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(stack.len() as u32).to_le_bytes());
    for m in stack {
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for x in m.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode_stack(r: &mut Reader) -> Result<Vec<Matrix>, DataError> {
    let count = r.u32("matrix count")? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32("matrix rows")? as usize;
        let cols = r.u32("matrix cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or(DataError::Malformed("matrix dims overflow".into()))?;
        let bytes = r.take(n * 8, "matrix data")?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(Matrix::from_vec(rows, cols, data)?);
    }
    Ok(out)
}

fn encode_masks(masks: &MaskSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(masks.layer_count() as u32).to_le_bytes());
    for k in 0..masks.layer_count() {
        let (rows, cols) = masks.shape(k);
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        let words = masks.words(k);
        out.extend_from_slice(&(words.len() as u64).to_le_bytes());
        for w in words {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

type RawMasks = (Vec<(usize, usize)>, Vec<Vec<u64>>);

fn decode_masks(r: &mut Reader) -> Result<RawMasks, DataError> {
    let count = r.u32("mask layer count")? as usize;
    let mut shapes = Vec::with_capacity(count);
    let mut words = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32("mask rows")? as usize;
        let cols = r.u32("mask cols")? as usize;
        let n_words = r.u64("mask word count")? as usize;
        let bytes = r.take(n_words * 8, "mask words")?;
        shapes.push((rows, cols));
        words.push(
            bytes
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
    }
    Ok((shapes, words))
}
