//! Randomness extraction: occupancy bits, Von Neumann unbiasing, min-entropy,
//! SHA-256 conditioning and the SP 800-22 battery.

use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::block_api::compress256;

use crate::error::{Error, Result};
use crate::sampling::SampleRecord;

pub mod nist;

pub use nist::{nist_suite, TestResult};

pub const DEFAULT_BLOCK_SIZE: usize = 8;
pub const MAX_BLOCK_SIZE: usize = 16;
pub const DEFAULT_P_THRESHOLD: f64 = 0.01;

/// Trials x modes click bits, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    trials: usize,
    modes: usize,
    bits: Vec<u8>,
}

impl BitMatrix {
    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.bits[t * self.modes..(t + 1) * self.modes]
    }

    /// Time-ordered bits of one mode.
    pub fn column(&self, j: usize) -> Vec<u8> {
        (0..self.trials).map(|t| self.bits[t * self.modes + j]).collect()
    }
}

/// b_j = 1 iff mode j holds at least one photon.
pub fn encode_occupancy(samples: &[SampleRecord], m: usize) -> BitMatrix {
    let mut bits = vec![0u8; samples.len() * m];
    for (t, s) in samples.iter().enumerate() {
        for (j, &occ) in s.output.occupations().iter().enumerate().take(m) {
            bits[t * m + j] = u8::from(occ > 0);
        }
    }
    BitMatrix {
        trials: samples.len(),
        modes: m,
        bits,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Vn,
    Hashed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub stage: Stage,
    pub source_mode: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitSidecar {
    pub stage: Stage,
    pub length: usize,
    pub h_min: Option<f64>,
    pub block_size: Option<usize>,
}

impl BitStream {
    pub fn new(bits: Vec<u8>, stage: Stage) -> Self {
        Self {
            bits,
            stage,
            source_mode: None,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits packed most significant first; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        pack_bits(&self.bits)
    }

    pub fn from_bytes(bytes: &[u8], length: usize, stage: Stage) -> Result<Self> {
        if length > bytes.len() * 8 {
            return Err(Error::InvalidInput(format!(
                "{length} bits requested from {} bytes",
                bytes.len()
            )));
        }
        let bits = (0..length).map(|k| (bytes[k / 8] >> (7 - k % 8)) & 1).collect();
        Ok(Self::new(bits, stage))
    }

    /// Writes `path` (packed bits) and `path.json` (sidecar).
    pub fn save(&self, path: &Path, h_min: Option<f64>, block_size: Option<usize>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        let sidecar = BitSidecar {
            stage: self.stage,
            length: self.len(),
            h_min,
            block_size,
        };
        let mut f = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, BitSidecar)> {
        let sidecar: BitSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let bytes = std::fs::read(path)?;
        Ok((Self::from_bytes(&bytes, sidecar.length, sidecar.stage)?, sidecar))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | (b << (7 - k))))
        .collect()
}

/// (0,1) -> 0, (1,0) -> 1, equal pairs and a trailing odd bit dropped.
pub fn von_neumann(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(2)
        .filter_map(|p| match (p[0], p[1]) {
            (0, 1) => Some(0),
            (1, 0) => Some(1),
            _ => None,
        })
        .collect()
}

/// Per-mode Von Neumann over time-ordered columns, concatenated by ascending mode.
pub fn von_neumann_columns(matrix: &BitMatrix) -> Vec<u8> {
    let parts: Vec<Vec<u8>> = (0..matrix.modes())
        .into_par_iter()
        .map(|j| von_neumann(&matrix.column(j)))
        .collect();
    parts.concat()
}

/// Plug-in min-entropy per bit from the most frequent `block_size`-bit block.
pub fn min_entropy(bits: &[u8], block_size: usize) -> Result<f64> {
    if block_size == 0 || block_size > MAX_BLOCK_SIZE {
        return Err(Error::InvalidInput(format!(
            "block size {block_size} outside 1..={MAX_BLOCK_SIZE}"
        )));
    }
    let blocks = bits.len() / block_size;
    if blocks == 0 {
        return Err(Error::InsufficientData("stream shorter than one block".into()));
    }
    if (blocks as f64) < 100.0 * (1u64 << block_size) as f64 {
        warn!(
            "{blocks} blocks of {block_size} bits is below the recommended {} for a min-entropy estimate",
            100u64 << block_size
        );
    }
    let mut counts = vec![0u64; 1 << block_size];
    for c in bits.chunks_exact(block_size) {
        let v = c.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        counts[v] += 1;
    }
    let max = *counts.iter().max().expect("non-empty") as f64 / blocks as f64;
    Ok((-max.log2() / block_size as f64).clamp(0.0, 1.0))
}

/// Bits per hashing block, ceil(256 / h_min).
pub fn hash_block_length(h_min: f64) -> Result<usize> {
    if !(h_min > 0.0 && h_min <= 1.0) {
        return Err(Error::InvalidEntropy(h_min));
    }
    Ok((256.0 / h_min).ceil() as usize)
}

const SHA256_IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// SHA-256 of a message given as individual bits (any length), with the
/// standard bit-level padding.
pub fn sha256_bits(bits: &[u8]) -> [u8; 32] {
    let mut padded = bits.to_vec();
    padded.push(1);
    while padded.len() % 512 != 448 {
        padded.push(0);
    }
    let len = bits.len() as u64;
    padded.extend((0..64).rev().map(|k| ((len >> k) & 1) as u8));
    let bytes = pack_bits(&padded);
    let blocks: Vec<[u8; 64]> = bytes
        .chunks_exact(64)
        .map(|c| c.try_into().expect("64-byte block"))
        .collect();
    let mut state = SHA256_IV;
    compress256(&mut state, &blocks);
    let mut out = [0u8; 32];
    for (k, w) in state.iter().enumerate() {
        out[4 * k..4 * k + 4].copy_from_slice(&w.to_be_bytes());
    }
    out
}

/// Hashes consecutive blocks of ceil(256 / h_min) bits into 256-bit digests.
pub fn condition_hash(bits: &[u8], h_min: f64) -> Result<Vec<u8>> {
    let l = hash_block_length(h_min)?;
    let digests: Vec<[u8; 32]> = bits.par_chunks_exact(l).map(sha256_bits).collect();
    let mut out = Vec::with_capacity(digests.len() * 256);
    for d in digests {
        for byte in d {
            out.extend((0..8).rev().map(|k| (byte >> k) & 1));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub trials: usize,
    pub modes: usize,
    pub raw_bits: usize,
    pub vn_bits: usize,
    pub h_min: f64,
    pub block_size: usize,
    pub hash_block_length: usize,
    pub hashed_bits: usize,
    /// Hashed bits per trial; the simulation has no wall clock rate.
    pub bits_per_trial: f64,
    pub p_threshold: f64,
    pub tests: Vec<TestResult>,
    pub all_computed_passed: bool,
}

pub struct PipelineOutput {
    pub report: RandomnessReport,
    pub vn: BitStream,
    pub hashed: BitStream,
}

/// Occupancy bits -> per-mode VN -> min-entropy -> SHA-256 -> SP 800-22.
pub fn pipeline(samples: &[SampleRecord], m: usize, block_size: usize, p_th: f64) -> Result<PipelineOutput> {
    let matrix = encode_occupancy(samples, m);
    let vn = von_neumann_columns(&matrix);
    let h_min = min_entropy(&vn, block_size)?;
    let l = hash_block_length(h_min)?;
    let hashed = condition_hash(&vn, h_min)?;
    let tests = nist_suite(&hashed, p_th);
    let all_computed_passed = tests.iter().filter(|t| !t.skipped).all(|t| t.pass);
    let report = RandomnessReport {
        trials: samples.len(),
        modes: m,
        raw_bits: samples.len() * m,
        vn_bits: vn.len(),
        h_min,
        block_size,
        hash_block_length: l,
        hashed_bits: hashed.len(),
        bits_per_trial: if samples.is_empty() { 0.0 } else { hashed.len() as f64 / samples.len() as f64 },
        p_threshold: p_th,
        tests,
        all_computed_passed,
    };
    Ok(PipelineOutput {
        report,
        vn: BitStream::new(vn, Stage::Vn),
        hashed: BitStream::new(hashed, Stage::Hashed),
    })
}
