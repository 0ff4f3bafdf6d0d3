//! Exact and rival samplers over Fock-state outputs.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permanent;
use crate::rng;
use crate::unitary::{ComplexMatrix, UnitaryMatrix};

/// Photon number limit of the exact sequential sampler.
pub const SAMPLER_PHOTON_LIMIT: usize = 20;
/// Photon number limit of brute-force enumeration.
pub const ENUMERATION_PHOTON_LIMIT: usize = 4;
pub const ENUMERATION_SIZE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockState {
    occupations: Vec<u32>,
}

impl FockState {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self { occupations }
    }

    /// Occupation vector of the multiset `modes` (repeats allowed).
    pub fn from_modes(m: usize, modes: &[usize]) -> Self {
        let mut occupations = vec![0; m];
        for &j in modes {
            occupations[j] += 1;
        }
        Self { occupations }
    }

    pub fn mode_count(&self) -> usize {
        self.occupations.len()
    }

    pub fn photon_count(&self) -> usize {
        self.occupations.iter().map(|&t| t as usize).sum()
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occupations
    }

    /// Occupied modes with repetition, ascending.
    pub fn modes(&self) -> Vec<usize> {
        self.occupations
            .iter()
            .enumerate()
            .flat_map(|(j, &t)| std::iter::repeat_n(j, t as usize))
            .collect()
    }

    pub fn is_collision_free(&self) -> bool {
        self.occupations.iter().all(|&t| t <= 1)
    }

    /// Product of occupation factorials.
    pub fn factorial_product(&self) -> f64 {
        self.occupations
            .iter()
            .map(|&t| (1..=t).map(f64::from).product::<f64>())
            .product()
    }
}

/// Distinct input modes, one photon each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputConfig {
    modes: Vec<usize>,
}

impl InputConfig {
    pub fn new(modes: Vec<usize>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in &modes {
            if i >= m {
                return Err(Error::InvalidInput(format!("input mode {i} outside 0..{m}")));
            }
            if seen[i] {
                return Err(Error::InvalidInput(format!("input mode {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(Self { modes })
    }

    /// Also require every input to be one of the device input ports.
    pub fn with_ports(modes: Vec<usize>, m: usize, ports: &[usize]) -> Result<Self> {
        if let Some(i) = modes.iter().find(|i| !ports.contains(i)) {
            return Err(Error::InvalidInput(format!("mode {i} is not an input port")));
        }
        Self::new(modes, m)
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn photon_count(&self) -> usize {
        self.modes.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerTag {
    Bs,
    Dist,
    Uniform,
    Mixture,
}

impl std::fmt::Display for SamplerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerTag::Bs => "bs",
            SamplerTag::Dist => "dist",
            SamplerTag::Uniform => "uniform",
            SamplerTag::Mixture => "mixture",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub trial: u64,
    pub output: FockState,
    pub tag: SamplerTag,
    /// Post-selection flag; samplers emit `true`, filters clear it.
    pub kept: bool,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    t: u64,
    modes: Vec<usize>,
    occ: BTreeMap<usize, u32>,
    tag: SamplerTag,
    kept: bool,
}

impl SampleRecord {
    pub fn to_json_line(&self) -> String {
        let occ = self
            .output
            .occupations()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0)
            .map(|(j, &t)| (j, t))
            .collect();
        let line = SampleLine {
            t: self.trial,
            modes: self.output.modes(),
            occ,
            tag: self.tag,
            kept: self.kept,
        };
        serde_json::to_string(&line).expect("sample record serializes")
    }

    pub fn from_json_line(line: &str, m: usize) -> Result<Self> {
        let l: SampleLine = serde_json::from_str(line)?;
        let mut occ = vec![0u32; m];
        for (&j, &t) in &l.occ {
            if j >= m {
                return Err(Error::InvalidInput(format!("sample mode {j} outside 0..{m}")));
            }
            occ[j] = t;
        }
        let output = FockState::new(occ);
        if output.modes() != l.modes {
            return Err(Error::InvalidInput(format!(
                "sample {} has inconsistent modes and occupations",
                l.t
            )));
        }
        Ok(Self {
            trial: l.t,
            output,
            tag: l.tag,
            kept: l.kept,
        })
    }
}

pub fn write_samples<W: Write>(mut w: W, records: &[SampleRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(r: R, m: usize) -> Result<Vec<SampleRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| SampleRecord::from_json_line(&l?, m))
        .collect()
}

/// Clears `kept` on every record with more than one photon in a mode.
pub fn post_select_collision_free(records: &mut [SampleRecord]) {
    for r in records {
        r.kept &= r.output.is_collision_free();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumerationScope {
    All,
    CollisionFree,
}

#[derive(Clone, Debug)]
pub struct ProbabilityTable {
    m: usize,
    outputs: Vec<Vec<usize>>,
    probabilities: Vec<f64>,
    index: HashMap<Vec<usize>, usize>,
}

impl ProbabilityTable {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn mode_count(&self) -> usize {
        self.m
    }

    /// Outputs as ascending mode multisets, in enumeration order.
    pub fn outputs(&self) -> &[Vec<usize>] {
        &self.outputs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability of the output multiset `modes` (any order), zero outside the table.
    pub fn probability(&self, modes: &[usize]) -> f64 {
        let mut key = modes.to_vec();
        key.sort_unstable();
        self.index.get(&key).map_or(0.0, |&i| self.probabilities[i])
    }

    /// Empirical distribution of `records` over the same outputs; the
    /// second value is the mass falling outside the table.
    pub fn empirical(&self, records: &[SampleRecord]) -> (Vec<f64>, f64) {
        let mut counts = vec![0u64; self.len()];
        let mut outside = 0u64;
        for r in records {
            match self.index.get(&r.output.modes()) {
                Some(&i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let n = records.len().max(1) as f64;
        (counts.iter().map(|&c| c as f64 / n).collect(), outside as f64 / n)
    }

    /// Total variation distance between the table and the empirical law of `records`.
    pub fn tvd(&self, records: &[SampleRecord]) -> f64 {
        let (emp, outside) = self.empirical(records);
        0.5 * (emp
            .iter()
            .zip(&self.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            + outside)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Ascending multisets (or strictly ascending sets) of size `n` from `0..m`.
fn enumerate_outputs(m: usize, n: usize, collision_free: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(m: usize, n: usize, start: usize, cf: bool, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for j in start..m {
            cur.push(j);
            rec(m, n, if cf { j + 1 } else { j }, cf, cur, out);
            cur.pop();
        }
    }
    rec(m, n, 0, collision_free, &mut cur, &mut out);
    out
}

fn multiplicities(modes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut distinct = Vec::new();
    let mut mult = Vec::new();
    for &j in modes {
        if distinct.last() == Some(&j) {
            *mult.last_mut().unwrap() += 1;
        } else {
            distinct.push(j);
            mult.push(1);
        }
    }
    (distinct, mult)
}

/// Boson-sampling probability of output multiset `modes` for a collision-free input.
pub fn output_probability(u: &UnitaryMatrix, input: &InputConfig, modes: &[usize]) -> f64 {
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    let sub = u.matrix().select(&sorted, input.modes());
    let (_, mult) = multiplicities(&sorted);
    let fact: f64 = mult.iter().map(|&t| (1..=t).map(|x| x as f64).product::<f64>()).product();
    permanent::glynn(&sub).norm_sqr() / fact
}

/// Distinguishable-particle probability perm(|U_{S,in}|^2) / prod t_j!.
pub fn distinguishable_probability(u: &UnitaryMatrix, input: &InputConfig, modes: &[usize]) -> f64 {
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    let sub = u.matrix().select(&sorted, input.modes()).abs_sqr();
    let (_, mult) = multiplicities(&sorted);
    let fact: f64 = mult.iter().map(|&t| (1..=t).map(|x| x as f64).product::<f64>()).product();
    permanent::glynn(&sub).re / fact
}

/// Brute-force output distribution. Collision-free scope is renormalized.
pub fn exact_distribution(
    u: &UnitaryMatrix,
    input: &InputConfig,
    scope: EnumerationScope,
) -> Result<ProbabilityTable> {
    let m = u.dim();
    let n = input.photon_count();
    if n > ENUMERATION_PHOTON_LIMIT {
        return Err(Error::SizeLimit {
            algorithm: "exact_distribution",
            n,
            limit: ENUMERATION_PHOTON_LIMIT,
        });
    }
    let size = match scope {
        EnumerationScope::All => binomial((m + n).saturating_sub(1) as u128, n as u128),
        EnumerationScope::CollisionFree => binomial(m as u128, n as u128),
    };
    if size > ENUMERATION_SIZE_LIMIT {
        return Err(Error::EnumerationTooLarge(size));
    }
    let outputs = enumerate_outputs(m, n, scope == EnumerationScope::CollisionFree);
    let mut probabilities: Vec<f64> = outputs
        .par_iter()
        .map(|s| output_probability(u, input, s))
        .collect();
    if scope == EnumerationScope::CollisionFree {
        let total: f64 = probabilities.iter().sum();
        if total > 0.0 {
            probabilities.iter_mut().for_each(|p| *p /= total);
        }
    }
    let index = outputs.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(ProbabilityTable {
        m,
        outputs,
        probabilities,
        index,
    })
}

/// Distinguishable-particle law over the full enumeration, for oracles.
pub fn distinguishable_distribution(u: &UnitaryMatrix, input: &InputConfig) -> Result<ProbabilityTable> {
    let m = u.dim();
    let n = input.photon_count();
    if n > ENUMERATION_PHOTON_LIMIT {
        return Err(Error::SizeLimit {
            algorithm: "distinguishable_distribution",
            n,
            limit: ENUMERATION_PHOTON_LIMIT,
        });
    }
    let size = binomial((m + n).saturating_sub(1) as u128, n as u128);
    if size > ENUMERATION_SIZE_LIMIT {
        return Err(Error::EnumerationTooLarge(size));
    }
    let outputs = enumerate_outputs(m, n, false);
    let probabilities = outputs
        .par_iter()
        .map(|s| distinguishable_probability(u, input, s))
        .collect();
    let index = outputs.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(ProbabilityTable {
        m,
        outputs,
        probabilities,
        index,
    })
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // rounding at the top end: last index with non-zero weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Sequential exact boson sampler (Clifford & Clifford, algorithm B).
///
/// The input columns are randomly permuted; photon `k` is then placed with
/// weight |Per(A[r_1..r_{k-1}, l ; 0..k])|^2, expanding along the new row so
/// only `k` permanents of size `k - 1` are needed per step.
fn draw_bs<R: Rng + ?Sized>(a: &ComplexMatrix, rng: &mut R) -> Vec<usize> {
    let m = a.rows();
    let n = a.cols();
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(rng);
    let a = a.select(&(0..m).collect::<Vec<_>>(), &cols);
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    let mut weights = vec![0.0; m];
    for k in 1..=n {
        // minors: permanent of rows `rows` and columns 0..k with column l removed
        let minors: Vec<_> = (0..k)
            .map(|l| {
                let c: Vec<usize> = (0..k).filter(|&x| x != l).collect();
                permanent::glynn(&a.select(&rows, &c))
            })
            .collect();
        for (j, w) in weights.iter_mut().enumerate() {
            let row = a.row(j);
            let s: num_complex::Complex64 = (0..k).map(|l| row[l] * minors[l]).sum();
            *w = s.norm_sqr();
        }
        rows.push(sample_index(&weights, rng));
    }
    rows.sort_unstable();
    rows
}

/// How a single trial is drawn.
#[derive(Clone, Debug)]
pub enum Sampler {
    Bs { a: ComplexMatrix },
    Dist { columns: Vec<WeightedIndex<f64>> },
    Uniform { m: usize, n: usize },
    Mixture { a: ComplexMatrix, columns: Vec<WeightedIndex<f64>>, x: f64 },
}

fn column_laws(u: &UnitaryMatrix, input: &InputConfig) -> Result<Vec<WeightedIndex<f64>>> {
    input
        .modes()
        .iter()
        .map(|&i| {
            WeightedIndex::new(u.column_probabilities(i))
                .map_err(|e| Error::InvalidDistribution(format!("column {i}: {e}")))
        })
        .collect()
}

fn check_photons(n: usize) -> Result<()> {
    if n > SAMPLER_PHOTON_LIMIT {
        return Err(Error::SizeLimit {
            algorithm: "sampler",
            n,
            limit: SAMPLER_PHOTON_LIMIT,
        });
    }
    Ok(())
}

impl Sampler {
    pub fn bs(u: &UnitaryMatrix, input: &InputConfig) -> Result<Self> {
        check_photons(input.photon_count())?;
        Ok(Sampler::Bs {
            a: u.matrix().select(&(0..u.dim()).collect::<Vec<_>>(), input.modes()),
        })
    }

    pub fn distinguishable(u: &UnitaryMatrix, input: &InputConfig) -> Result<Self> {
        check_photons(input.photon_count())?;
        Ok(Sampler::Dist {
            columns: column_laws(u, input)?,
        })
    }

    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if n > m {
            return Err(Error::InvalidInput(format!("{n} photons cannot be collision-free in {m} modes")));
        }
        Ok(Sampler::Uniform { m, n })
    }

    pub fn mixture(u: &UnitaryMatrix, input: &InputConfig, x: f64) -> Result<Self> {
        check_photons(input.photon_count())?;
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Config(format!("indistinguishability {x} outside [0, 1]")));
        }
        Ok(Sampler::Mixture {
            a: u.matrix().select(&(0..u.dim()).collect::<Vec<_>>(), input.modes()),
            columns: column_laws(u, input)?,
            x,
        })
    }

    pub fn tag(&self) -> SamplerTag {
        match self {
            Sampler::Bs { .. } => SamplerTag::Bs,
            Sampler::Dist { .. } => SamplerTag::Dist,
            Sampler::Uniform { .. } => SamplerTag::Uniform,
            Sampler::Mixture { .. } => SamplerTag::Mixture,
        }
    }

    fn mode_count(&self) -> usize {
        match self {
            Sampler::Bs { a } | Sampler::Mixture { a, .. } => a.rows(),
            Sampler::Dist { columns } => columns.first().map_or(0, |c| c.weights().count()),
            Sampler::Uniform { m, .. } => *m,
        }
    }

    /// One output multiset, ascending.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match self {
            Sampler::Bs { a } => draw_bs(a, rng),
            Sampler::Dist { columns } => draw_dist(columns, rng),
            Sampler::Uniform { m, n } => {
                let mut v = rand::seq::index::sample(rng, *m, *n).into_vec();
                v.sort_unstable();
                v
            }
            Sampler::Mixture { a, columns, x } => {
                if rng.random::<f64>() < *x {
                    draw_bs(a, rng)
                } else {
                    draw_dist(columns, rng)
                }
            }
        }
    }

    /// Draws trials `trials` with per-trial streams of `seed`; parallel over
    /// trials, output order and content independent of the worker count.
    pub fn sample(&self, trials: Range<u64>, seed: u64) -> Vec<SampleRecord> {
        let m = self.mode_count();
        let tag = self.tag();
        trials
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::trial_rng(seed, t);
                SampleRecord {
                    trial: t,
                    output: FockState::from_modes(m, &self.draw(&mut rng)),
                    tag,
                    kept: true,
                }
            })
            .collect()
    }
}

fn draw_dist<R: Rng + ?Sized>(columns: &[WeightedIndex<f64>], rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = columns.iter().map(|c| c.sample(rng)).collect();
    v.sort_unstable();
    v
}

pub fn sample_bs(u: &UnitaryMatrix, input: &InputConfig, count: u64, seed: u64) -> Result<Vec<SampleRecord>> {
    Ok(Sampler::bs(u, input)?.sample(0..count, seed))
}

pub fn sample_distinguishable(
    u: &UnitaryMatrix,
    input: &InputConfig,
    count: u64,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    Ok(Sampler::distinguishable(u, input)?.sample(0..count, seed))
}

pub fn sample_uniform(m: usize, n: usize, count: u64, seed: u64) -> Result<Vec<SampleRecord>> {
    Ok(Sampler::uniform(m, n)?.sample(0..count, seed))
}

/// Linear mixture: bs with probability `noise.indistinguishability`, else distinguishable.
pub fn sample_mixture(
    u: &UnitaryMatrix,
    input: &InputConfig,
    noise: &crate::device::NoiseModel,
    count: u64,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    Ok(Sampler::mixture(u, input, noise.indistinguishability)?.sample(0..count, seed))
}

/// With probability `g2`, adds one distinguishable photon entering through a
/// uniformly chosen input mode. Off unless explicitly requested.
pub fn inject_extra_photon<R: Rng + ?Sized>(
    u: &UnitaryMatrix,
    input: &InputConfig,
    g2: f64,
    record: &mut SampleRecord,
    rng: &mut R,
) {
    if input.photon_count() == 0 || rng.random::<f64>() >= g2 {
        return;
    }
    let i = input.modes()[rng.random_range(0..input.photon_count())];
    let j = sample_index(&u.column_probabilities(i), rng);
    let mut occ = record.output.occupations().to_vec();
    occ[j] += 1;
    record.output = FockState::new(occ);
}
