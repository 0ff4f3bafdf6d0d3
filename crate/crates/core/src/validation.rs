//! Sequential validation counters and Haar-benchmark statistics.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permanent;
use crate::sampling::{InputConfig, SampleRecord};
use crate::stats::{self, KsResult};
use crate::unitary::{haar_unitary, UnitaryMatrix};
use crate::rng;

/// Half-width of the acceptance band in units of sqrt(k).
pub const BAND_Z: f64 = 3.0;
/// Fraction of trailing events that must lie above the band to reject the null.
pub const REJECTION_TAIL: f64 = 0.1;
/// Largest fold scored by the likelihood counter.
pub const CK_FOLD_LIMIT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullHypothesis {
    Uniform,
    Distinguishable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationTrace {
    pub null: NullHypothesis,
    /// Counter after event k = 1, 2, ...
    pub counter: Vec<i64>,
    /// Band half-width z sqrt(k) for the same k.
    pub band: Vec<f64>,
    /// Events dropped as degenerate (zero likelihood under the null).
    pub skipped: usize,
}

impl ValidationTrace {
    fn from_steps(null: NullHypothesis, steps: &[i8], skipped: usize) -> Self {
        let mut c = 0i64;
        let counter = steps
            .iter()
            .map(|&s| {
                c += s as i64;
                c
            })
            .collect::<Vec<_>>();
        let band = (1..=counter.len()).map(|k| BAND_Z * (k as f64).sqrt()).collect();
        Self {
            null,
            counter,
            band,
            skipped,
        }
    }

    pub fn len(&self) -> usize {
        self.counter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counter.is_empty()
    }

    pub fn final_value(&self) -> i64 {
        self.counter.last().copied().unwrap_or(0)
    }

    /// Whether the counter ever rises above the band.
    pub fn exits_upward(&self) -> bool {
        self.counter.iter().zip(&self.band).any(|(&c, &b)| c as f64 > b)
    }

    /// Null rejected: the last 10% of events all lie above the band.
    pub fn rejects_null(&self) -> bool {
        let k = self.len();
        if k == 0 {
            return false;
        }
        let tail = ((k as f64 * REJECTION_TAIL).ceil() as usize).max(1);
        self.counter[k - tail..]
            .iter()
            .zip(&self.band[k - tail..])
            .all(|(&c, &b)| c as f64 > b)
    }

    /// CSV with columns k, counter, band.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,counter,band")?;
        for (i, (c, b)) in self.counter.iter().zip(&self.band).enumerate() {
            writeln!(w, "{},{},{:.6}", i + 1, c, b)?;
        }
        Ok(())
    }
}

fn check_fold(record: &SampleRecord, n: usize) -> Result<()> {
    let got = record.output.photon_count();
    if got != n {
        return Err(Error::InvalidFold { expected: n, got });
    }
    Ok(())
}

/// Row-norm discriminator R(S) = prod_i (m/n) sum_{j in S} |u_ji|^2.
pub fn row_norm_score(u: &UnitaryMatrix, input: &InputConfig, modes: &[usize]) -> f64 {
    let m = u.dim() as f64;
    let n = input.photon_count() as f64;
    input
        .modes()
        .iter()
        .map(|&i| m / n * modes.iter().map(|&j| u.amplitude(j, i).norm_sqr()).sum::<f64>())
        .product()
}

/// Likelihood ratio |perm(U_S,in)|^2 / perm(|U_S,in|^2); `None` when the
/// distinguishable probability vanishes.
pub fn likelihood_ratio(u: &UnitaryMatrix, input: &InputConfig, modes: &[usize]) -> Option<f64> {
    let sub = u.matrix().select(modes, input.modes());
    let p_dist = permanent::glynn(&sub.abs_sqr()).re;
    if !(p_dist > 0.0) {
        return None;
    }
    Some(permanent::glynn(&sub).norm_sqr() / p_dist)
}

/// Counter against the uniform sampler. Only records with `kept` set are
/// scored; they must be collision-free with fold |input|.
pub fn wk_counter(u: &UnitaryMatrix, input: &InputConfig, samples: &[SampleRecord]) -> Result<ValidationTrace> {
    let n = input.photon_count();
    let kept: Vec<&SampleRecord> = samples.iter().filter(|r| r.kept).collect();
    for r in &kept {
        check_fold(r, n)?;
        if !r.output.is_collision_free() {
            return Err(Error::InvalidInput(format!("event {} is not collision-free", r.trial)));
        }
    }
    let steps: Vec<i8> = kept
        .par_iter()
        .map(|r| if row_norm_score(u, input, &r.output.modes()) > 1.0 { 1 } else { -1 })
        .collect();
    Ok(ValidationTrace::from_steps(NullHypothesis::Uniform, &steps, 0))
}

/// Counter against fully distinguishable photons. Collision events are
/// scored with repeated rows, which gives the multiplicity permanents.
pub fn ck_counter(u: &UnitaryMatrix, input: &InputConfig, samples: &[SampleRecord]) -> Result<ValidationTrace> {
    let n = input.photon_count();
    if n > CK_FOLD_LIMIT {
        return Err(Error::SizeLimit {
            algorithm: "ck_counter",
            n,
            limit: CK_FOLD_LIMIT,
        });
    }
    let kept: Vec<&SampleRecord> = samples.iter().filter(|r| r.kept).collect();
    for r in &kept {
        check_fold(r, n)?;
    }
    let scored: Vec<Option<i8>> = kept
        .par_iter()
        .map(|r| likelihood_ratio(u, input, &r.output.modes()).map(|l| if l > 1.0 { 1 } else { -1 }))
        .collect();
    let mut skipped = 0;
    let mut steps = Vec::with_capacity(scored.len());
    for (r, s) in kept.iter().zip(scored) {
        match s {
            Some(s) => steps.push(s),
            None => {
                warn!("event {} has zero distinguishable probability; skipped", r.trial);
                skipped += 1;
            }
        }
    }
    Ok(ValidationTrace::from_steps(NullHypothesis::Distinguishable, &steps, skipped))
}

fn check_distribution(d: &[f64]) -> Result<()> {
    if let Some(x) = d.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("entry {x} is not a finite non-negative value")));
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}, expected 1")));
    }
    Ok(())
}

/// S = (sum_i sqrt(d1_i d2_i))^2.
pub fn similarity(d1: &[f64], d2: &[f64]) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::ShapeMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    check_distribution(d1)?;
    check_distribution(d2)?;
    let s: f64 = d1.iter().zip(d2).map(|(a, b)| (a * b).sqrt()).sum();
    Ok((s * s).min(1.0))
}

/// Renormalizes `d` on its restriction to `modes`.
pub fn restrict(d: &[f64], modes: &[usize]) -> Result<Vec<f64>> {
    if modes.is_empty() {
        return Err(Error::InvalidSubset("empty restriction set".into()));
    }
    let v: Vec<f64> = modes.iter().map(|&j| d[j]).collect();
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidDistribution("no weight on the restricted modes".into()));
    }
    Ok(v.into_iter().map(|x| x / total).collect())
}

/// Single-photon output distribution of `input`, restricted and renormalized.
pub fn column_distribution(u: &UnitaryMatrix, input: usize, restricted: &[usize]) -> Result<Vec<f64>> {
    restrict(&u.column_probabilities(input), restricted)
}

/// Collision-free two-photon distribution for inputs `(a, b)` over pairs of
/// restricted modes (lexicographic), renormalized.
pub fn two_photon_distribution(u: &UnitaryMatrix, inputs: (usize, usize), restricted: &[usize]) -> Result<Vec<f64>> {
    if restricted.len() < 2 {
        return Err(Error::InvalidSubset("two-photon distribution needs two modes".into()));
    }
    let (a, b) = inputs;
    let mut v = Vec::with_capacity(restricted.len() * (restricted.len() - 1) / 2);
    for (x, &j) in restricted.iter().enumerate() {
        for &k in &restricted[x + 1..] {
            let amp = u.amplitude(j, a) * u.amplitude(k, b) + u.amplitude(j, b) * u.amplitude(k, a);
            v.push(amp.norm_sqr());
        }
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidDistribution("no collision-free weight".into()));
    }
    Ok(v.into_iter().map(|x| x / total).collect())
}

/// Similarities of all unordered pairs, in (i, j > i) order.
pub fn pairwise_similarities(distributions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let pairs: Vec<(usize, usize)> = (0..distributions.len())
        .flat_map(|i| (i + 1..distributions.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| similarity(&distributions[i], &distributions[j]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarBand {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub similarities: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub reference: Option<HaarBand>,
}

impl SimilarityReport {
    pub fn new(similarities: Vec<f64>, reference: Option<HaarBand>) -> Self {
        let (mean, sd) = stats::mean_sd(&similarities);
        Self {
            similarities,
            mean,
            sd,
            reference,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values outside [lo, hi).
    pub overflow: u64,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let mut counts = vec![0u64; bins];
        let mut overflow = 0;
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = ((v - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            } else {
                overflow += 1;
            }
        }
        Self {
            lo,
            hi,
            counts,
            overflow,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuliReport {
    pub m: usize,
    pub values: usize,
    pub histogram: Histogram,
    /// KS test of the pooled values against Beta(1, m - 1).
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    Moduli,
    ColumnSim,
    TwoPhotonSim,
}

impl std::str::FromStr for BenchmarkMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moduli" => Ok(Self::Moduli),
            "column-sim" => Ok(Self::ColumnSim),
            "two-photon-sim" => Ok(Self::TwoPhotonSim),
            _ => Err(Error::Config(format!("unknown benchmark mode {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BenchmarkReport {
    Moduli(ModuliReport),
    ColumnSim(SimilarityReport),
    TwoPhotonSim(SimilarityReport),
}

/// Pooled |U_ij|^2 over restricted output rows and all inputs; the values
/// are not renormalized so the Beta(1, m - 1) marginal applies unchanged.
pub fn pooled_moduli(u: &UnitaryMatrix, restricted: &[usize]) -> Vec<f64> {
    restricted
        .iter()
        .flat_map(|&j| (0..u.dim()).map(move |i| (j, i)))
        .map(|(j, i)| u.amplitude(j, i).norm_sqr())
        .collect()
}

/// Monte Carlo over `n_matrices` Haar unitaries of dimension `m`.
pub fn haar_benchmark(
    mode: BenchmarkMode,
    m: usize,
    n_matrices: usize,
    seed: u64,
    restricted: &[usize],
) -> Result<BenchmarkReport> {
    if n_matrices < 2 {
        return Err(Error::InvalidInput("haar benchmark needs at least two matrices".into()));
    }
    if restricted.is_empty() {
        return Err(Error::InvalidSubset("empty restriction set".into()));
    }
    if let Some(j) = restricted.iter().find(|&&j| j >= m) {
        return Err(Error::InvalidSubset(format!("mode {j} outside 0..{m}")));
    }
    let unitaries: Vec<UnitaryMatrix> = (0..n_matrices as u64)
        .into_par_iter()
        .map(|k| haar_unitary(m, rng::indexed_seed(seed, "haar", k)))
        .collect::<Result<_>>()?;
    match mode {
        BenchmarkMode::Moduli => {
            let values: Vec<f64> = unitaries.iter().flat_map(|u| pooled_moduli(u, restricted)).collect();
            let KsResult { statistic, p_value, n } = stats::ks_test(&values, |x| stats::haar_moduli_cdf(m, x));
            Ok(BenchmarkReport::Moduli(ModuliReport {
                m,
                values: n,
                histogram: Histogram::new(&values, 50, 0.0, 8.0 / m as f64),
                ks_statistic: statistic,
                ks_p_value: p_value,
            }))
        }
        BenchmarkMode::ColumnSim => {
            let d: Vec<Vec<f64>> = unitaries
                .iter()
                .map(|u| column_distribution(u, 0, restricted))
                .collect::<Result<_>>()?;
            Ok(BenchmarkReport::ColumnSim(SimilarityReport::new(pairwise_similarities(&d)?, None)))
        }
        BenchmarkMode::TwoPhotonSim => {
            if m < 2 {
                return Err(Error::InvalidInput("two-photon benchmark needs m >= 2".into()));
            }
            let d: Vec<Vec<f64>> = unitaries
                .par_iter()
                .map(|u| two_photon_distribution(u, (0, 1), restricted))
                .collect::<Result<_>>()?;
            Ok(BenchmarkReport::TwoPhotonSim(SimilarityReport::new(pairwise_similarities(&d)?, None)))
        }
    }
}

/// Mean and sd of the Haar similarity distribution for `mode`, as the
/// reference band of a device report.
pub fn haar_reference(
    mode: BenchmarkMode,
    m: usize,
    n_matrices: usize,
    seed: u64,
    restricted: &[usize],
) -> Result<HaarBand> {
    match haar_benchmark(mode, m, n_matrices, seed, restricted)? {
        BenchmarkReport::ColumnSim(r) | BenchmarkReport::TwoPhotonSim(r) => Ok(HaarBand { mean: r.mean, sd: r.sd }),
        BenchmarkReport::Moduli(_) => Err(Error::InvalidInput("moduli mode has no similarity band".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_bs, sample_distinguishable, sample_uniform, FockState, SamplerTag};
    use crate::unitary::{ComplexMatrix, Provenance};
    use proptest::prelude::*;

    fn record(m: usize, modes: &[usize]) -> SampleRecord {
        SampleRecord {
            trial: 0,
            output: FockState::from_modes(m, modes),
            tag: SamplerTag::Bs,
            kept: true,
        }
    }

    #[test]
    fn similarity_examples() {
        assert!((similarity(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((similarity(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(similarity(&[1.5, -0.5], &[0.5, 0.5]), Err(Error::InvalidDistribution(_))));
        assert!(similarity(&[0.5, 0.4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hom_collision_event_ratio_is_two() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = UnitaryMatrix::new(ComplexMatrix::from_real(2, 2, &[s, s, s, -s]).unwrap(), Provenance::File).unwrap();
        let input = InputConfig::new(vec![0, 1], 2).unwrap();
        let l = likelihood_ratio(&u, &input, &[0, 0]).unwrap();
        assert!((l - 2.0).abs() < 1e-14);
        let t = ck_counter(&u, &input, &[record(2, &[0, 0])]).unwrap();
        assert_eq!(t.counter, vec![1]);
    }

    #[test]
    fn zero_likelihood_events_are_skipped() {
        let u = UnitaryMatrix::identity(3);
        let input = InputConfig::new(vec![0, 1], 3).unwrap();
        let t = ck_counter(&u, &input, &[record(3, &[0, 2]), record(3, &[0, 1])]).unwrap();
        assert_eq!(t.skipped, 1);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn fold_mismatch_is_rejected() {
        let u = haar_unitary(4, 0).unwrap();
        let input = InputConfig::new(vec![0, 1], 4).unwrap();
        assert!(matches!(
            wk_counter(&u, &input, &[record(4, &[0, 1, 2])]),
            Err(Error::InvalidFold { expected: 2, got: 3 })
        ));
        assert!(wk_counter(&u, &input, &[record(4, &[1, 1])]).is_err());
    }

    #[test]
    fn single_photon_row_norm_reduces_to_column() {
        let u = haar_unitary(6, 3).unwrap();
        let input = InputConfig::new(vec![2], 6).unwrap();
        for j in 0..6 {
            let r = row_norm_score(&u, &input, &[j]);
            assert!((r - 6.0 * u.amplitude(j, 2).norm_sqr()).abs() < 1e-13);
        }
    }

    #[test]
    fn single_photon_wk_drifts_up_and_ck_is_neutral() {
        // Expected W step under the true law: sum_j p_j sign(m p_j - 1).
        let m = 16;
        let u = haar_unitary(m, 5).unwrap();
        let input = InputConfig::new(vec![0], m).unwrap();
        let p = u.column_probabilities(0);
        let drift: f64 = p.iter().map(|&x| if m as f64 * x > 1.0 { x } else { -x }).sum();
        assert!(drift > 0.0);
        let s = sample_bs(&u, &input, 20_000, 1).unwrap();
        let w = wk_counter(&u, &input, &s).unwrap();
        let mean_step = w.final_value() as f64 / 20_000.0;
        assert!((mean_step - drift).abs() < 4.0 / (20_000f64).sqrt());
        // P_ind = P_dist for one photon, so L = 1 and every step is -1.
        let c = ck_counter(&u, &input, &s).unwrap();
        assert!(c.counter.iter().enumerate().all(|(k, &v)| v == -(k as i64 + 1)));
    }

    #[test]
    fn counters_discriminate_at_three_photons() {
        let m = 16;
        let u = haar_unitary(m, 11).unwrap();
        let input = InputConfig::new(vec![0, 1, 2], m).unwrap();
        let cf = |v: Vec<SampleRecord>| -> Vec<SampleRecord> {
            v.into_iter().filter(|r| r.output.is_collision_free()).take(5_000).collect()
        };
        let bs = cf(sample_bs(&u, &input, 8_000, 2).unwrap());
        let uni = sample_uniform(m, 3, 5_000, 2).unwrap();
        let dist = cf(sample_distinguishable(&u, &input, 8_000, 2).unwrap());
        assert!(wk_counter(&u, &input, &bs).unwrap().rejects_null());
        assert!(!wk_counter(&u, &input, &uni).unwrap().rejects_null());
        assert!(ck_counter(&u, &input, &bs).unwrap().final_value() > 0);
        assert!(!ck_counter(&u, &input, &dist).unwrap().rejects_null());
    }

    #[test]
    fn trace_csv_and_rules() {
        let t = ValidationTrace::from_steps(NullHypothesis::Uniform, &[1; 100], 0);
        assert!(t.rejects_null());
        assert!(t.exits_upward());
        let t = ValidationTrace::from_steps(NullHypothesis::Uniform, &[1, -1, 1, -1], 0);
        assert!(!t.exits_upward() && !t.rejects_null());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,counter,band\n1,1,3.000000\n2,0,4.242641\n3,1,5.196152\n4,0,6.000000\n"
        );
    }

    #[test]
    fn identical_matrices_have_unit_similarity() {
        let u = haar_unitary(10, 2).unwrap();
        let r: Vec<usize> = (0..8).collect();
        let d1 = column_distribution(&u, 0, &r).unwrap();
        let d2 = two_photon_distribution(&u, (0, 1), &r).unwrap();
        assert!((similarity(&d1, &d1).unwrap() - 1.0).abs() < 1e-12);
        assert!((similarity(&d2, &d2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(d2.len(), 28);
    }

    #[test]
    fn two_photon_distribution_matches_permanents() {
        let u = haar_unitary(5, 9).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let d = two_photon_distribution(&u, (0, 1), &all).unwrap();
        let input = InputConfig::new(vec![0, 1], 5).unwrap();
        let t = crate::sampling::exact_distribution(&u, &input, crate::sampling::EnumerationScope::CollisionFree).unwrap();
        let mut k = 0;
        for a in 0..5 {
            for b in a + 1..5 {
                assert!((d[k] - t.probability(&[a, b])).abs() < 1e-12);
                k += 1;
            }
        }
    }

    #[test]
    fn column_similarity_of_two_mode_haar_has_spread() {
        let r = haar_benchmark(BenchmarkMode::ColumnSim, 2, 60, 1, &[0, 1]).unwrap();
        let BenchmarkReport::ColumnSim(rep) = r else { panic!() };
        assert!(rep.sd > 0.05);
        assert!(rep.similarities.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn benchmark_input_errors() {
        assert!(haar_benchmark(BenchmarkMode::Moduli, 4, 1, 0, &[0]).is_err());
        assert!(matches!(
            haar_benchmark(BenchmarkMode::Moduli, 4, 3, 0, &[]),
            Err(Error::InvalidSubset(_))
        ));
    }

    #[test]
    fn moduli_benchmark_small() {
        let r = haar_benchmark(BenchmarkMode::Moduli, 16, 50, 3, &(0..16).collect::<Vec<_>>()).unwrap();
        let BenchmarkReport::Moduli(rep) = r else { panic!() };
        assert_eq!(rep.values, 50 * 256);
        assert!(rep.ks_p_value > 0.01);
    }

    proptest! {
        #[test]
        fn similarity_symmetric_bounded_permutation_invariant(
            a in proptest::collection::vec(0.0f64..1.0, 6),
            b in proptest::collection::vec(0.0f64..1.0, 6),
            shift in 0usize..6,
        ) {
            let sa: f64 = a.iter().sum::<f64>() + 1e-9;
            let sb: f64 = b.iter().sum::<f64>() + 1e-9;
            let mut a: Vec<f64> = a.iter().map(|x| (x + 1e-9 / 6.0) / sa).collect();
            let mut b: Vec<f64> = b.iter().map(|x| (x + 1e-9 / 6.0) / sb).collect();
            let ta: f64 = a.iter().sum(); a.iter_mut().for_each(|x| *x /= ta);
            let tb: f64 = b.iter().sum(); b.iter_mut().for_each(|x| *x /= tb);
            let s = similarity(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - similarity(&b, &a).unwrap()).abs() < 1e-15);
            a.rotate_left(shift);
            b.rotate_left(shift);
            prop_assert!((s - similarity(&a, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn counter_steps_are_unit(steps in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..200)) {
            let t = ValidationTrace::from_steps(NullHypothesis::Uniform, &steps, 0);
            let mut prev = 0i64;
            for (k, &c) in t.counter.iter().enumerate() {
                prop_assert_eq!((c - prev).abs(), 1);
                prop_assert!(c.abs() <= k as i64 + 1);
                prev = c;
            }
        }
    }
}
