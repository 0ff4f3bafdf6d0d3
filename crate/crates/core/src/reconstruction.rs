//! Reconstruction of a device submatrix from single- and two-photon counts.
//!
//! Moduli come from single-photon output frequencies, normalized per input.
//! Phases come from two-photon coincidences: each 2x2 block gives the cosine
//! of its phase closure. With the phases of the first output row and first
//! input column fixed to zero, the closure through that row and column gives
//! |theta| directly; signs are chosen to fit the redundant closures and the
//! result is refined by a weighted least-squares fit over all closures.
//! Counts cannot distinguish a matrix from its complex conjugate, so the
//! overall sign is fixed by making the phase with the largest |sin| positive.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::distr::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::unitary::{ComplexMatrix, UnitaryMatrix};

/// Entries with a smaller estimated modulus get no phase.
pub const MODULUS_FLOOR: f64 = 0.02;
/// Closure cosines beyond 1 by more than this many standard errors are inconsistent.
pub const COSINE_TOLERANCE_SIGMAS: f64 = 5.0;

/// Single-photon and coincidence counts for a set of inputs and measured outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub shots: u64,
    /// `singles[a][b]`: count at output `b` for a photon in input `a` (positions).
    pub singles: Vec<Option<Vec<u64>>>,
    /// For input positions `(a1, a2)`, a1 < a2: counts over output position
    /// pairs `(b1, b2)`, b1 < b2, in lexicographic order.
    pub pairs: BTreeMap<(usize, usize), Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct CountFile {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    shots: u64,
    singles: BTreeMap<String, Vec<u64>>,
    pairs: BTreeMap<String, BTreeMap<String, u64>>,
}

fn output_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|b1| (b1 + 1..n).map(move |b2| (b1, b2))).collect()
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidInput(format!("malformed pair key {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl CountTable {
    pub fn to_json(&self) -> String {
        let singles = self
            .singles
            .iter()
            .enumerate()
            .filter_map(|(a, v)| v.as_ref().map(|v| (self.inputs[a].to_string(), v.clone())))
            .collect();
        let op = output_pairs(self.outputs.len());
        let pairs = self
            .pairs
            .iter()
            .map(|(&(a1, a2), counts)| {
                let inner = op
                    .iter()
                    .zip(counts)
                    .map(|(&(b1, b2), &c)| (format!("{},{}", self.outputs[b1], self.outputs[b2]), c))
                    .collect();
                (format!("{},{}", self.inputs[a1], self.inputs[a2]), inner)
            })
            .collect();
        let file = CountFile {
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            shots: self.shots,
            singles,
            pairs,
        };
        serde_json::to_string_pretty(&file).expect("count table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CountFile = serde_json::from_str(text)?;
        let in_pos = |mode: usize| {
            f.inputs
                .iter()
                .position(|&x| x == mode)
                .ok_or_else(|| Error::InvalidInput(format!("mode {mode} is not a listed input")))
        };
        let out_pos = |mode: usize| {
            f.outputs
                .iter()
                .position(|&x| x == mode)
                .ok_or_else(|| Error::InvalidInput(format!("mode {mode} is not a listed output")))
        };
        let mut singles = vec![None; f.inputs.len()];
        for (k, v) in &f.singles {
            let mode: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("malformed input key {k:?}")))?;
            if v.len() != f.outputs.len() {
                return Err(Error::ShapeMismatch {
                    expected: f.outputs.len(),
                    got: v.len(),
                });
            }
            singles[in_pos(mode)?] = Some(v.clone());
        }
        let op = output_pairs(f.outputs.len());
        let mut pairs = BTreeMap::new();
        for (k, inner) in &f.pairs {
            let (i1, i2) = parse_pair(k)?;
            let (mut a1, mut a2) = (in_pos(i1)?, in_pos(i2)?);
            if a1 == a2 {
                return Err(Error::InvalidInput(format!("input pair {k} repeats a mode")));
            }
            if a1 > a2 {
                std::mem::swap(&mut a1, &mut a2);
            }
            let mut counts = vec![0u64; op.len()];
            for (jk, &c) in inner {
                let (j1, j2) = parse_pair(jk)?;
                let (mut b1, mut b2) = (out_pos(j1)?, out_pos(j2)?);
                if b1 == b2 {
                    return Err(Error::InvalidInput(format!("output pair {jk} repeats a mode")));
                }
                if b1 > b2 {
                    std::mem::swap(&mut b1, &mut b2);
                }
                let idx = op.iter().position(|&p| p == (b1, b2)).expect("pair enumerated");
                counts[idx] += c;
            }
            pairs.insert((a1, a2), counts);
        }
        Ok(Self {
            inputs: f.inputs,
            outputs: f.outputs,
            shots: f.shots,
            singles,
            pairs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn pair_counts(&self, a1: usize, a2: usize) -> Option<&[u64]> {
        let key = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        self.pairs.get(&key).map(|v| v.as_slice())
    }
}

/// Outcome probabilities for the singles of input `i` over `outputs`.
fn single_probabilities(u: &UnitaryMatrix, i: usize, outputs: &[usize]) -> Vec<f64> {
    outputs.iter().map(|&j| u.amplitude(j, i).norm_sqr()).collect()
}

/// Collision-free coincidence probabilities for inputs (i1, i2) over output pairs.
fn pair_probabilities(u: &UnitaryMatrix, i1: usize, i2: usize, outputs: &[usize]) -> Vec<f64> {
    output_pairs(outputs.len())
        .into_iter()
        .map(|(b1, b2)| {
            let (j1, j2) = (outputs[b1], outputs[b2]);
            (u.amplitude(j1, i1) * u.amplitude(j2, i2) + u.amplitude(j2, i1) * u.amplitude(j1, i2)).norm_sqr()
        })
        .collect()
}

fn multinomial<R: rand::Rng + ?Sized>(shots: u64, probabilities: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = shots;
    let mut mass = 1.0f64;
    let mut out = Vec::with_capacity(probabilities.len());
    for &p in probabilities {
        if remaining == 0 || p <= 0.0 || mass <= 0.0 {
            out.push(0);
            continue;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let x = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        out.push(x);
        remaining -= x;
        mass -= p;
    }
    out
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    output_pairs(n)
}

fn validate_modes(u: &UnitaryMatrix, inputs: &[usize], outputs: &[usize]) -> Result<()> {
    let m = u.dim();
    if inputs.len() < 2 || outputs.len() < 2 {
        return Err(Error::InvalidInput("need at least two inputs and two outputs".into()));
    }
    for (name, list) in [("input", inputs), ("output", outputs)] {
        let mut seen = vec![false; m];
        for &x in list {
            if x >= m || seen[x] {
                return Err(Error::InvalidInput(format!("{name} mode {x} out of range or repeated")));
            }
            seen[x] = true;
        }
    }
    Ok(())
}

/// Multinomial counts with `shots` single photons per input and `shots`
/// photon pairs per input pair. Photons leaving through unlisted outputs
/// are lost, and only coincidences between distinct listed outputs are kept.
pub fn simulate_counts(u: &UnitaryMatrix, inputs: &[usize], outputs: &[usize], shots: u64, seed: u64) -> Result<CountTable> {
    validate_modes(u, inputs, outputs)?;
    let singles = inputs
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut rng = rng::seeded(rng::indexed_seed(seed, "singles", a as u64));
            Some(multinomial(shots, &single_probabilities(u, i, outputs), &mut rng))
        })
        .collect();
    let pair_list = all_pairs(inputs.len());
    let pairs = pair_list
        .par_iter()
        .enumerate()
        .map(|(k, &(a1, a2))| {
            let mut rng = rng::seeded(rng::indexed_seed(seed, "pairs", k as u64));
            let p = pair_probabilities(u, inputs[a1], inputs[a2], outputs);
            ((a1, a2), multinomial(shots, &p, &mut rng))
        })
        .collect();
    Ok(CountTable {
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
        shots,
        singles,
        pairs,
    })
}

/// Counts rounded from the exact expectations, for noiseless checks.
pub fn expected_counts(u: &UnitaryMatrix, inputs: &[usize], outputs: &[usize], shots: u64) -> Result<CountTable> {
    validate_modes(u, inputs, outputs)?;
    let round = |p: Vec<f64>| p.iter().map(|&x| (x * shots as f64).round() as u64).collect::<Vec<_>>();
    let singles = inputs
        .iter()
        .map(|&i| Some(round(single_probabilities(u, i, outputs))))
        .collect();
    let pairs = all_pairs(inputs.len())
        .into_iter()
        .map(|(a1, a2)| ((a1, a2), round(pair_probabilities(u, inputs[a1], inputs[a2], outputs))))
        .collect();
    Ok(CountTable {
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
        shots,
        singles,
        pairs,
    })
}

/// Moduli rho[b][a] (output row, input column) with binomial standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuliTable {
    pub rho: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    /// Fraction of shots detected on the listed outputs, per input.
    pub transmission: Vec<f64>,
}

pub fn estimate_moduli(counts: &CountTable) -> Result<ModuliTable> {
    let n_in = counts.inputs.len();
    let n_out = counts.outputs.len();
    if counts.shots == 0 {
        return Err(Error::InsufficientData("zero shots per configuration".into()));
    }
    let mut rho = vec![vec![0.0; n_in]; n_out];
    let mut sd = vec![vec![0.0; n_in]; n_out];
    let mut transmission = vec![0.0; n_in];
    for a in 0..n_in {
        let row = counts.singles[a]
            .as_ref()
            .ok_or_else(|| Error::InsufficientData(format!("no single-photon counts for input {}", counts.inputs[a])))?;
        let total: u64 = row.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "input {} has no detected single photons",
                counts.inputs[a]
            )));
        }
        transmission[a] = total as f64 / counts.shots as f64;
        let t = total as f64;
        for b in 0..n_out {
            let p = row[b] as f64 / t;
            rho[b][a] = p.sqrt();
            let sd_p = (p.max(1.0 / t) * (1.0 - p).max(0.0) / t).sqrt().max(1.0 / t);
            sd[b][a] = if rho[b][a] > 0.0 {
                (sd_p / (2.0 * rho[b][a])).min(1.0)
            } else {
                (1.0 / t).sqrt()
            };
        }
    }
    Ok(ModuliTable { rho, sd, transmission })
}

#[derive(Clone, Copy, Debug)]
struct Closure {
    a: (usize, usize),
    b: (usize, usize),
    q: f64,
    sd_q: f64,
    /// A = (rho[b1][a1] rho[b2][a2])^2, B = (rho[b2][a1] rho[b1][a2])^2.
    big_a: f64,
    big_b: f64,
}

impl Closure {
    fn phase(&self, theta: &[Vec<f64>]) -> f64 {
        let (a1, a2) = self.a;
        let (b1, b2) = self.b;
        theta[b1][a1] + theta[b2][a2] - theta[b2][a1] - theta[b1][a2]
    }

    fn predicted(&self, theta: &[Vec<f64>]) -> f64 {
        self.big_a + self.big_b + 2.0 * (self.big_a * self.big_b).sqrt() * self.phase(theta).cos()
    }

    fn cosine(&self) -> f64 {
        (self.q - self.big_a - self.big_b) / (2.0 * (self.big_a * self.big_b).sqrt())
    }

    fn entries(&self) -> [((usize, usize), f64); 4] {
        let (a1, a2) = self.a;
        let (b1, b2) = self.b;
        [((b1, a1), 1.0), ((b2, a2), 1.0), ((b2, a1), -1.0), ((b1, a2), -1.0)]
    }
}

/// Gauge-fixed phases with uncertainties; `None` marks unresolved entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub theta: Vec<Vec<Option<f64>>>,
    pub sd: Vec<Vec<Option<f64>>>,
    /// Weighted sum of squared closure residuals at the solution.
    pub chi_square: f64,
    pub closures: usize,
}

fn wrap(x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * pi);
    if y > pi {
        y -= 2.0 * pi;
    }
    if y <= -pi {
        y += 2.0 * pi;
    }
    y
}

fn collect_closures(counts: &CountTable, moduli: &ModuliTable, usable: &[Vec<bool>]) -> Vec<Closure> {
    let n_in = counts.inputs.len();
    let n_out = counts.outputs.len();
    let op = output_pairs(n_out);
    let t = counts.shots as f64;
    let mut closures = Vec::new();
    for a1 in 0..n_in {
        for a2 in a1 + 1..n_in {
            let Some(pc) = counts.pair_counts(a1, a2) else { continue };
            let norm = moduli.transmission[a1] * moduli.transmission[a2];
            for (k, &(b1, b2)) in op.iter().enumerate() {
                if !(usable[b1][a1] && usable[b2][a2] && usable[b2][a1] && usable[b1][a2]) {
                    continue;
                }
                let raw = pc[k] as f64 / t;
                let sd_raw = (raw.max(1.0 / t) * (1.0 - raw).max(0.0) / t).sqrt().max(1.0 / t);
                let r = &moduli.rho;
                closures.push(Closure {
                    a: (a1, a2),
                    b: (b1, b2),
                    q: raw / norm,
                    sd_q: sd_raw / norm,
                    big_a: (r[b1][a1] * r[b2][a2]).powi(2),
                    big_b: (r[b2][a1] * r[b1][a2]).powi(2),
                });
            }
        }
    }
    closures
}

fn cosine_sd(c: &Closure, moduli: &ModuliTable) -> f64 {
    let mut rel = 0.0;
    for ((b, a), _) in c.entries() {
        rel += (2.0 * moduli.sd[b][a] / moduli.rho[b][a]).powi(2);
    }
    let var = c.sd_q.powi(2) + (c.big_a + c.big_b).powi(2) * rel;
    (var / (4.0 * c.big_a * c.big_b)).sqrt()
}

fn cost(closures: &[Closure], theta: &[Vec<f64>], known: &[Vec<bool>]) -> f64 {
    closures
        .iter()
        .filter(|c| c.entries().iter().all(|&((b, a), _)| known[b][a]))
        .map(|c| ((c.predicted(theta) - c.q) / c.sd_q).powi(2))
        .sum()
}

/// Weighted Levenberg-Marquardt over the free phases. Returns the
/// covariance diagonal when the normal matrix is invertible.
fn refine(closures: &[Closure], theta: &mut [Vec<f64>], free: &[(usize, usize)]) -> Option<Vec<f64>> {
    let p = free.len();
    if p == 0 || closures.is_empty() {
        return None;
    }
    let index: BTreeMap<(usize, usize), usize> = free.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let all_known: Vec<Vec<bool>> = theta.iter().map(|r| vec![true; r.len()]).collect();
    let jacobian = |theta: &[Vec<f64>]| {
        let mut j = DMatrix::<f64>::zeros(closures.len(), p);
        let mut r = DVector::<f64>::zeros(closures.len());
        for (row, c) in closures.iter().enumerate() {
            r[row] = (c.predicted(theta) - c.q) / c.sd_q;
            let d = -2.0 * (c.big_a * c.big_b).sqrt() * c.phase(theta).sin() / c.sd_q;
            for (e, s) in c.entries() {
                if let Some(&k) = index.get(&e) {
                    j[(row, k)] += s * d;
                }
            }
        }
        (j, r)
    };
    let mut lambda = 1e-3;
    let mut current = cost(closures, theta, &all_known);
    for _ in 0..200 {
        let (j, r) = jacobian(theta);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * r;
        let mut a = jtj.clone();
        for k in 0..p {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(step) = a.lu().solve(&(-g)) else { break };
        let mut trial = theta.to_vec();
        for (k, &(b, col)) in free.iter().enumerate() {
            trial[b][col] += step[k];
        }
        let next = cost(closures, &trial, &all_known);
        if next < current {
            let converged = step.amax() < 1e-13 || (current - next) <= 1e-15 * current.max(1e-300);
            theta.clone_from_slice(&trial);
            current = next;
            lambda = (lambda / 3.0).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let (j, _) = jacobian(theta);
    let cov = (j.transpose() * j).try_inverse()?;
    let diag: Vec<f64> = (0..p).map(|k| cov[(k, k)]).collect();
    diag.iter().all(|v| v.is_finite() && *v >= 0.0).then_some(diag)
}

pub fn estimate_phases(counts: &CountTable, moduli: &ModuliTable) -> Result<PhaseTable> {
    let n_in = counts.inputs.len();
    let n_out = counts.outputs.len();
    let rho = &moduli.rho;
    let usable: Vec<Vec<bool>> = rho.iter().map(|r| r.iter().map(|&x| x >= MODULUS_FLOOR).collect()).collect();
    let closures = collect_closures(counts, moduli, &usable);

    let mut theta = vec![vec![0.0; n_in]; n_out];
    let mut resolved = vec![vec![false; n_in]; n_out];
    let mut sd_fallback = vec![vec![0.0; n_in]; n_out];
    for b in 0..n_out {
        for a in 0..n_in {
            if (b == 0 || a == 0) && usable[b][a] {
                resolved[b][a] = true;
            }
        }
    }

    // |theta| from the closure through row 0 and column 0
    let mut unknowns = Vec::new();
    for c in &closures {
        if c.a.0 != 0 || c.b.0 != 0 {
            continue;
        }
        let (a, b) = (c.a.1, c.b.1);
        let cos = c.cosine();
        let sd_c = cosine_sd(c, moduli);
        if cos.abs() > 1.0 + COSINE_TOLERANCE_SIGMAS * sd_c + 1e-9 {
            return Err(Error::InconsistentCounts(format!(
                "closure cosine {cos:.4} for inputs ({}, {}) outputs ({}, {}) exceeds 1 by more than {} sd",
                counts.inputs[0], counts.inputs[a], counts.outputs[0], counts.outputs[b], COSINE_TOLERANCE_SIGMAS
            )));
        }
        let mag = cos.clamp(-1.0, 1.0).acos();
        theta[b][a] = mag;
        resolved[b][a] = true;
        sd_fallback[b][a] = (sd_c / mag.sin().abs().max(sd_c.sqrt())).min(std::f64::consts::PI);
        unknowns.push((b, a));
    }

    for c in &closures {
        let cos = c.cosine();
        let sd_c = cosine_sd(c, moduli);
        if cos.abs() > 1.0 + COSINE_TOLERANCE_SIGMAS * sd_c + 1e-9 {
            return Err(Error::InconsistentCounts(format!(
                "closure cosine {cos:.4} exceeds 1 by more than {COSINE_TOLERANCE_SIGMAS} sd"
            )));
        }
    }

    let usable_closures: Vec<Closure> = closures
        .iter()
        .copied()
        .filter(|c| c.entries().iter().all(|&((b, a), _)| resolved[b][a]))
        .collect();

    // signs: greedy by |sin| with the first entry as anchor, then single flips
    unknowns.sort_by(|x, y| {
        let sx = theta[x.0][x.1].sin().abs();
        let sy = theta[y.0][y.1].sin().abs();
        sy.total_cmp(&sx).then(x.cmp(y))
    });
    let mut known: Vec<Vec<bool>> = (0..n_out)
        .map(|b| (0..n_in).map(|a| (b == 0 || a == 0) && resolved[b][a]).collect())
        .collect();
    for (k, &(b, a)) in unknowns.iter().enumerate() {
        known[b][a] = true;
        if k == 0 {
            continue;
        }
        let plus = cost(&usable_closures, &theta, &known);
        theta[b][a] = -theta[b][a];
        let minus = cost(&usable_closures, &theta, &known);
        if plus <= minus {
            theta[b][a] = -theta[b][a];
        }
    }
    for _ in 0..50 {
        let mut improved = false;
        let base = cost(&usable_closures, &theta, &known);
        let mut best = base;
        for &(b, a) in &unknowns {
            theta[b][a] = -theta[b][a];
            let c = cost(&usable_closures, &theta, &known);
            if c < best * (1.0 - 1e-12) {
                best = c;
                improved = true;
            } else {
                theta[b][a] = -theta[b][a];
            }
        }
        if !improved {
            break;
        }
    }

    let cov = refine(&usable_closures, &mut theta, &unknowns);
    if let Some(&(b, a)) = unknowns.first() {
        if theta[b][a].sin() < 0.0 {
            for &(b, a) in &unknowns {
                theta[b][a] = -theta[b][a];
            }
        }
    }

    let mut out_theta = vec![vec![None; n_in]; n_out];
    let mut out_sd = vec![vec![None; n_in]; n_out];
    for b in 0..n_out {
        for a in 0..n_in {
            if resolved[b][a] {
                out_theta[b][a] = Some(wrap(theta[b][a]));
                out_sd[b][a] = Some(0.0);
            }
        }
    }
    for (k, &(b, a)) in unknowns.iter().enumerate() {
        let sd = match &cov {
            Some(d) => d[k].sqrt().min(std::f64::consts::PI),
            None => sd_fallback[b][a],
        };
        out_sd[b][a] = Some(sd);
    }
    let all_known: Vec<Vec<bool>> = resolved.clone();
    Ok(PhaseTable {
        theta: out_theta,
        sd: out_sd,
        chi_square: cost(&usable_closures, &theta, &all_known),
        closures: usable_closures.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedMatrix {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    /// `moduli[b][a]` for output position `b`, input position `a`.
    pub moduli: Vec<Vec<f64>>,
    pub phases: Vec<Vec<Option<f64>>>,
    pub moduli_sd: Vec<Vec<f64>>,
    pub phases_sd: Vec<Vec<Option<f64>>>,
    pub gauge: String,
    pub chi_square: f64,
    pub closures: usize,
}

impl ReconstructedMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.outputs.len(), self.inputs.len())
    }

    pub fn unresolved(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for (b, row) in self.phases.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                if p.is_none() {
                    v.push((b, a));
                }
            }
        }
        v
    }

    /// Complex entries; unresolved phases are taken as zero.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let (r, c) = self.shape();
        ComplexMatrix::from_fn(r, c, |b, a| Complex64::from_polar(self.moduli[b][a], self.phases[b][a].unwrap_or(0.0)))
    }
}

pub fn reconstruct(counts: &CountTable) -> Result<ReconstructedMatrix> {
    let moduli = estimate_moduli(counts)?;
    let phases = estimate_phases(counts, &moduli)?;
    Ok(ReconstructedMatrix {
        inputs: counts.inputs.clone(),
        outputs: counts.outputs.clone(),
        moduli: moduli.rho,
        phases: phases.theta,
        moduli_sd: moduli.sd,
        phases_sd: phases.sd,
        gauge: "zero phase on first output row and first input column".into(),
        chi_square: phases.chi_square,
        closures: phases.closures,
    })
}

/// Minimizes max_k |x_k e^{i g} - y_k| over g exactly: the optimum is a
/// minimum of one term or an intersection of two.
fn minimax_rotation(terms: &[(Complex64, Complex64)], current: f64) -> f64 {
    let params: Vec<(f64, f64, f64)> = terms
        .iter()
        .map(|&(x, y)| (x.norm_sqr() + y.norm_sqr(), x.norm() * y.norm(), x.arg() - y.arg()))
        .collect();
    let eval = |g: f64| {
        params
            .iter()
            .map(|&(p, r, psi)| p - 2.0 * r * (g + psi).cos())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut candidates = vec![current];
    for &(_, _, psi) in &params {
        candidates.push(-psi);
    }
    for k in 0..params.len() {
        for l in k + 1..params.len() {
            let (pk, rk, sk) = params[k];
            let (pl, rl, sl) = params[l];
            let a = 2.0 * (rk * sk.cos() - rl * sl.cos());
            let b = -2.0 * (rk * sk.sin() - rl * sl.sin());
            let c = pk - pl;
            let r = a.hypot(b);
            if r > 0.0 && c.abs() <= r {
                let base = b.atan2(a);
                let d = (c / r).acos();
                candidates.push(base + d);
                candidates.push(base - d);
            }
        }
    }
    let mut best = (eval(current), current);
    for g in candidates {
        let v = eval(g);
        if v < best.0 {
            best = (v, g);
        }
    }
    best.1
}

fn gauge_distance_oriented(a: &ComplexMatrix, b: &ComplexMatrix, resolved: &[Vec<bool>]) -> f64 {
    let (rows, cols) = (a.rows(), a.cols());
    let mut alpha = vec![0.0; rows];
    let mut beta = vec![0.0; cols];
    let entry = |alpha: &[f64], beta: &[f64], r: usize, c: usize| a[(r, c)] * Complex64::from_polar(1.0, alpha[r] + beta[c]);
    let err = |alpha: &[f64], beta: &[f64], r: usize, c: usize| {
        if resolved[r][c] {
            (entry(alpha, beta, r, c) - b[(r, c)]).norm()
        } else {
            (a[(r, c)].norm() - b[(r, c)].norm()).abs()
        }
    };
    let max_err = |alpha: &[f64], beta: &[f64]| {
        let mut m = 0.0f64;
        for r in 0..rows {
            for c in 0..cols {
                m = m.max(err(alpha, beta, r, c));
            }
        }
        m
    };

    // weighted least-squares alignment with Lawson weight updates
    let mut w = vec![vec![1.0; cols]; rows];
    let mut best = (max_err(&alpha, &beta), alpha.clone(), beta.clone());
    for _ in 0..60 {
        for _ in 0..4 {
            for r in 0..rows {
                let s: Complex64 = (0..cols)
                    .filter(|&c| resolved[r][c])
                    .map(|c| w[r][c] * (a[(r, c)] * Complex64::from_polar(1.0, beta[c])).conj() * b[(r, c)])
                    .sum();
                if s.norm() > 0.0 {
                    alpha[r] = s.arg();
                }
            }
            for c in 0..cols {
                let s: Complex64 = (0..rows)
                    .filter(|&r| resolved[r][c])
                    .map(|r| w[r][c] * (a[(r, c)] * Complex64::from_polar(1.0, alpha[r])).conj() * b[(r, c)])
                    .sum();
                if s.norm() > 0.0 {
                    beta[c] = s.arg();
                }
            }
        }
        let e = max_err(&alpha, &beta);
        if e < best.0 {
            best = (e, alpha.clone(), beta.clone());
        }
        let mut total = 0.0;
        for (r, row) in w.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x *= err(&alpha, &beta, r, c).max(1e-300);
                total += *x;
            }
        }
        if !(total > 0.0) {
            break;
        }
        for row in w.iter_mut() {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }

    // exact coordinate-wise minimax refinement
    let (_, mut alpha, mut beta) = best;
    let mut value = max_err(&alpha, &beta);
    for _ in 0..200 {
        for r in 0..rows {
            let terms: Vec<_> = (0..cols)
                .filter(|&c| resolved[r][c])
                .map(|c| (a[(r, c)] * Complex64::from_polar(1.0, beta[c]), b[(r, c)]))
                .collect();
            if !terms.is_empty() {
                alpha[r] = minimax_rotation(&terms, alpha[r]);
            }
        }
        for c in 0..cols {
            let terms: Vec<_> = (0..rows)
                .filter(|&r| resolved[r][c])
                .map(|r| (a[(r, c)] * Complex64::from_polar(1.0, alpha[r]), b[(r, c)]))
                .collect();
            if !terms.is_empty() {
                beta[c] = minimax_rotation(&terms, beta[c]);
            }
        }
        let next = max_err(&alpha, &beta);
        if next >= value * (1.0 - 1e-12) {
            value = value.min(next);
            break;
        }
        value = next;
    }
    value
}

/// Smallest max-entry deviation between `a` and `truth` over diagonal input
/// and output phases, also allowing complex conjugation of `a`. Unresolved
/// entries of `a` are compared by modulus. The truth is used as given; see
/// [`ComplexMatrix::normalize_columns`] for comparing against a lossy submatrix.
pub fn gauge_distance(a: &ReconstructedMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let (rows, cols) = a.shape();
    if truth.rows() != rows || truth.cols() != cols {
        return Err(Error::InvalidShape(format!(
            "reconstruction is {rows}x{cols}, truth is {}x{}",
            truth.rows(),
            truth.cols()
        )));
    }
    let m = a.to_matrix();
    let resolved: Vec<Vec<bool>> = a.phases.iter().map(|r| r.iter().map(|p| p.is_some()).collect()).collect();
    let d1 = gauge_distance_oriented(&m, truth, &resolved);
    let d2 = gauge_distance_oriented(&m.conj(), truth, &resolved);
    Ok(d1.min(d2))
}

/// Gauge distance between two plain matrices with every entry resolved.
pub fn matrix_gauge_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::InvalidShape(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let resolved = vec![vec![true; a.cols()]; a.rows()];
    Ok(gauge_distance_oriented(a, b, &resolved).min(gauge_distance_oriented(&a.conj(), b, &resolved)))
}
