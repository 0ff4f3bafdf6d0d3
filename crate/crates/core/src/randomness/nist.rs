//! The fifteen SP 800-22 tests with their default parameters.
//!
//! Each function takes a 0/1 slice and returns one p-value. Length minima
//! are enforced only by [`nist_suite`], which reports short inputs as skipped.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::stats::{erfc, igamc, normal_cdf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub p_values: Vec<f64>,
    pub pass: bool,
    pub skipped: bool,
}

pub const BLOCK_FREQUENCY_M: usize = 128;
pub const TEMPLATE: [u8; 9] = [0, 0, 0, 0, 0, 0, 0, 0, 1];
pub const NON_OVERLAPPING_BLOCKS: usize = 8;
pub const OVERLAPPING_M: usize = 1032;
pub const LINEAR_COMPLEXITY_M: usize = 500;
pub const SERIAL_M: usize = 2;
pub const APEN_M: usize = 2;

fn to_pm(bits: &[u8]) -> impl DoubleEndedIterator<Item = i64> + '_ {
    bits.iter().map(|&b| 2 * b as i64 - 1)
}

pub fn frequency(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let s: i64 = to_pm(bits).sum();
    erfc(s.unsigned_abs() as f64 / n.sqrt() / std::f64::consts::SQRT_2)
}

pub fn block_frequency(bits: &[u8], m: usize) -> f64 {
    let blocks = bits.len() / m;
    let chi2: f64 = bits
        .chunks_exact(m)
        .map(|c| {
            let pi = c.iter().map(|&b| b as f64).sum::<f64>() / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    igamc(blocks as f64 / 2.0, chi2 / 2.0)
}

pub fn runs(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let pi = bits.iter().map(|&b| b as f64).sum::<f64>() / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    erfc(num / (2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi)))
}

pub fn longest_run(bits: &[u8]) -> f64 {
    let n = bits.len();
    let (m, bounds, pi): (usize, (usize, usize), &[f64]) = if n < 6272 {
        (8, (1, 4), &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, (4, 9), &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (10_000, (10, 16), &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let blocks = n / m;
    let k = pi.len() - 1;
    let mut v = vec![0u64; pi.len()];
    for c in bits.chunks_exact(m) {
        let mut best = 0;
        let mut run = 0;
        for &b in c {
            run = if b == 1 { run + 1 } else { 0 };
            best = best.max(run);
        }
        let class = best.clamp(bounds.0, bounds.1) - bounds.0;
        v[class] += 1;
    }
    let nf = blocks as f64;
    let chi2: f64 = v.iter().zip(pi).map(|(&x, &p)| (x as f64 - nf * p).powi(2) / (nf * p)).sum();
    igamc(k as f64 / 2.0, chi2 / 2.0)
}

fn gf2_rank(rows: &mut [u64], cols: usize) -> usize {
    let mut rank = 0;
    for col in (0..cols).rev() {
        let bit = 1u64 << col;
        if let Some(p) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) {
            rows.swap(rank, p);
            let pivot = rows[rank];
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && *row & bit != 0 {
                    *row ^= pivot;
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Probability that a random binary m x q matrix has rank r.
fn rank_probability(r: usize, m: usize, q: usize) -> f64 {
    let exponent = (r * (q + m - r)) as f64 - (m * q) as f64;
    let mut p = 2f64.powf(exponent);
    for i in 0..r {
        let i = i as f64;
        p *= (1.0 - 2f64.powf(i - q as f64)) * (1.0 - 2f64.powf(i - m as f64)) / (1.0 - 2f64.powf(i - r as f64));
    }
    p
}

/// Binary matrix rank test with `m x q` matrices (defaults 32 x 32).
pub fn rank_with(bits: &[u8], m: usize, q: usize) -> f64 {
    let size = m * q;
    let blocks = bits.len() / size;
    let (mut full, mut minus_one) = (0u64, 0u64);
    for c in bits.chunks_exact(size) {
        let mut rows: Vec<u64> = c
            .chunks_exact(q)
            .map(|r| r.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
            .collect();
        let rank = gf2_rank(&mut rows, q);
        if rank == m.min(q) {
            full += 1;
        } else if rank + 1 == m.min(q) {
            minus_one += 1;
        }
    }
    let rmax = m.min(q);
    let p_full = rank_probability(rmax, m, q);
    let p_minus = rank_probability(rmax - 1, m, q);
    let p_rest = 1.0 - p_full - p_minus;
    let n = blocks as f64;
    let rest = n - full as f64 - minus_one as f64;
    let chi2 = (full as f64 - p_full * n).powi(2) / (p_full * n)
        + (minus_one as f64 - p_minus * n).powi(2) / (p_minus * n)
        + (rest - p_rest * n).powi(2) / (p_rest * n);
    (-chi2 / 2.0).exp()
}

pub fn rank(bits: &[u8]) -> f64 {
    rank_with(bits, 32, 32)
}

pub fn dft(bits: &[u8]) -> f64 {
    let n = bits.len();
    let mut x: Vec<Complex64> = to_pm(bits).map(|v| Complex64::new(v as f64, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut x);
    let t = ((1.0f64 / 0.05).ln() * n as f64).sqrt();
    let n0 = 0.95 * n as f64 / 2.0;
    let n1 = x[..n / 2].iter().filter(|z| z.norm() < t).count() as f64;
    let d = (n1 - n0) / (n as f64 * 0.95 * 0.05 / 4.0).sqrt();
    erfc(d.abs() / std::f64::consts::SQRT_2)
}

pub fn non_overlapping_template(bits: &[u8], template: &[u8], blocks: usize) -> f64 {
    let m = template.len();
    let big_m = bits.len() / blocks;
    let mu = (big_m - m + 1) as f64 / 2f64.powi(m as i32);
    let var = big_m as f64 * (1.0 / 2f64.powi(m as i32) - (2 * m - 1) as f64 / 2f64.powi(2 * m as i32));
    let chi2: f64 = bits
        .chunks_exact(big_m)
        .take(blocks)
        .map(|c| {
            let mut w = 0u64;
            let mut i = 0;
            while i + m <= big_m {
                if &c[i..i + m] == template {
                    w += 1;
                    i += m;
                } else {
                    i += 1;
                }
            }
            (w as f64 - mu).powi(2) / var
        })
        .sum();
    igamc(blocks as f64 / 2.0, chi2 / 2.0)
}

pub fn overlapping_template(bits: &[u8]) -> f64 {
    let m = 9;
    let big_m = OVERLAPPING_M;
    let blocks = bits.len() / big_m;
    let pi = [0.364091, 0.185659, 0.139381, 0.100571, 0.070432, 0.139865];
    let mut v = [0u64; 6];
    for c in bits.chunks_exact(big_m) {
        let hits = c.windows(m).filter(|w| w.iter().all(|&b| b == 1)).count();
        v[hits.min(5)] += 1;
    }
    let n = blocks as f64;
    let chi2: f64 = v.iter().zip(pi).map(|(&x, p)| (x as f64 - n * p).powi(2) / (n * p)).sum();
    igamc(5.0 / 2.0, chi2 / 2.0)
}

const UNIVERSAL_TABLE: [(f64, f64); 16] = [
    (0.0, 0.0),
    (0.7326495, 0.690),
    (1.5374383, 1.338),
    (2.4016068, 1.901),
    (3.3112247, 2.358),
    (4.2534266, 2.705),
    (5.2177052, 2.954),
    (6.1962507, 3.125),
    (7.1836656, 3.238),
    (8.1764248, 3.311),
    (9.1723243, 3.356),
    (10.170032, 3.384),
    (11.168765, 3.401),
    (12.168070, 3.410),
    (13.167693, 3.416),
    (14.167488, 3.419),
];

/// Block length for Maurer's test given the input length.
pub fn universal_block_length(n: usize) -> Option<usize> {
    const THRESHOLDS: [(usize, usize); 11] = [
        (1_059_061_760, 16),
        (496_435_200, 15),
        (231_669_760, 14),
        (107_560_960, 13),
        (49_643_520, 12),
        (22_753_280, 11),
        (10_342_400, 10),
        (4_654_080, 9),
        (2_068_480, 8),
        (904_960, 7),
        (387_840, 6),
    ];
    THRESHOLDS.iter().find(|&&(t, _)| n >= t).map(|&(_, l)| l)
}

/// Maurer's statistic fn = mean log2 distance over the test segment.
pub fn universal_statistic(bits: &[u8], l: usize, q: usize) -> f64 {
    let blocks = bits.len() / l;
    let k = blocks - q;
    let mut table = vec![0usize; 1 << l];
    let value = |i: usize| bits[i * l..(i + 1) * l].iter().fold(0usize, |a, &b| (a << 1) | b as usize);
    for i in 0..q {
        table[value(i)] = i + 1;
    }
    let mut sum = 0.0;
    for i in q..blocks {
        let v = value(i);
        sum += ((i + 1 - table[v]) as f64).log2();
        table[v] = i + 1;
    }
    sum / k as f64
}

pub fn universal(bits: &[u8]) -> f64 {
    let l = universal_block_length(bits.len()).unwrap_or(6);
    let q = 10 * (1 << l);
    let k = bits.len() / l - q;
    let f = universal_statistic(bits, l, q);
    let (expected, variance) = UNIVERSAL_TABLE[l];
    let lf = l as f64;
    let c = 0.7 - 0.8 / lf + (4.0 + 32.0 / lf) * (k as f64).powf(-3.0 / lf) / 15.0;
    let sigma = c * (variance / k as f64).sqrt();
    erfc((f - expected).abs() / (std::f64::consts::SQRT_2 * sigma))
}

/// Berlekamp-Massey linear complexity of a 0/1 sequence.
pub fn berlekamp_massey(s: &[u8]) -> usize {
    let n = s.len();
    let mut c = vec![0u8; n + 1];
    let mut b = vec![0u8; n + 1];
    c[0] = 1;
    b[0] = 1;
    let (mut l, mut m) = (0usize, -1isize);
    for i in 0..n {
        let mut d = s[i];
        for j in 1..=l {
            d ^= c[j] & s[i - j];
        }
        if d == 1 {
            let t = c.clone();
            let shift = (i as isize - m) as usize;
            for j in 0..=n - shift {
                c[j + shift] ^= b[j];
            }
            if l <= i / 2 {
                l = i + 1 - l;
                m = i as isize;
                b = t;
            }
        }
    }
    l
}

pub fn linear_complexity(bits: &[u8], m: usize) -> f64 {
    use rayon::prelude::*;
    let blocks = bits.len() / m;
    let mf = m as f64;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mu = mf / 2.0 + (9.0 - sign) / 36.0 - (mf / 3.0 + 2.0 / 9.0) / 2f64.powf(mf);
    let pi = [0.010417, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833];
    let classes: Vec<usize> = bits[..blocks * m]
        .par_chunks_exact(m)
        .map(|c| {
            let t = sign * (berlekamp_massey(c) as f64 - mu) + 2.0 / 9.0;
            if t <= -2.5 {
                0
            } else if t <= -1.5 {
                1
            } else if t <= -0.5 {
                2
            } else if t <= 0.5 {
                3
            } else if t <= 1.5 {
                4
            } else if t <= 2.5 {
                5
            } else {
                6
            }
        })
        .collect();
    let mut v = [0u64; 7];
    for c in classes {
        v[c] += 1;
    }
    let n = blocks as f64;
    let chi2: f64 = v.iter().zip(pi).map(|(&x, p)| (x as f64 - n * p).powi(2) / (n * p)).sum();
    igamc(3.0, chi2 / 2.0)
}

/// psi^2_m over overlapping m-bit patterns with wrap-around.
fn psi_squared(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let v = (0..m).fold(0usize, |a, k| (a << 1) | bits[(i + k) % n] as usize);
        counts[v] += 1;
    }
    let sum: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    sum * 2f64.powi(m as i32) / n as f64 - n as f64
}

/// The two serial-test p-values for block length `m`.
pub fn serial(bits: &[u8], m: usize) -> (f64, f64) {
    let p0 = psi_squared(bits, m);
    let p1 = psi_squared(bits, m - 1);
    let p2 = if m >= 2 { psi_squared(bits, m - 2) } else { 0.0 };
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    (
        igamc(2f64.powi(m as i32 - 2), d1 / 2.0),
        igamc(2f64.powi(m as i32 - 3), d2 / 2.0),
    )
}

fn phi(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let v = (0..m).fold(0usize, |a, k| (a << 1) | bits[(i + k) % n] as usize);
        counts[v] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p.ln()
        })
        .sum()
}

pub fn approximate_entropy(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    let apen = phi(bits, m) - phi(bits, m + 1);
    let chi2 = 2.0 * n * (2f64.ln() - apen);
    igamc(2f64.powi(m as i32 - 1), chi2 / 2.0)
}

pub fn cumulative_sums(bits: &[u8], forward: bool) -> f64 {
    let n = bits.len() as i64;
    let mut s = 0i64;
    let mut z = 0i64;
    let mut step = |x: i64| {
        s += x;
        z = z.max(s.abs());
    };
    if forward {
        to_pm(bits).for_each(&mut step);
    } else {
        to_pm(bits).rev().for_each(&mut step);
    }
    let nf = n as f64;
    let zf = z as f64;
    let sq = nf.sqrt();
    // integer bounds as in the reference implementation (truncating division)
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 += normal_cdf((4.0 * kf + 1.0) * zf / sq) - normal_cdf((4.0 * kf - 1.0) * zf / sq);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 += normal_cdf((4.0 * kf + 3.0) * zf / sq) - normal_cdf((4.0 * kf + 1.0) * zf / sq);
        k += 1;
    }
    1.0 - sum1 + sum2
}

/// Minimum input length for each test, in suite order.
pub const MINIMUM_LENGTHS: [(&str, usize); 15] = [
    ("frequency", 100),
    ("block_frequency", 100),
    ("runs", 100),
    ("longest_run", 128),
    ("rank", 38_912),
    ("dft", 1_000),
    ("non_overlapping_template", 20_544),
    ("overlapping_template", 1_000_000),
    ("universal", 387_840),
    ("linear_complexity", 1_000_000),
    ("serial_1", 100),
    ("serial_2", 100),
    ("approximate_entropy", 100),
    ("cumulative_sums_forward", 100),
    ("cumulative_sums_backward", 100),
];

/// Runs every test whose length minimum is met; the rest are reported skipped.
pub fn nist_suite(bits: &[u8], p_th: f64) -> Vec<TestResult> {
    let n = bits.len();
    let ok = |name: &str| MINIMUM_LENGTHS.iter().any(|&(t, min)| t == name && n >= min);
    let serial_p = ok("serial_1").then(|| serial(bits, SERIAL_M));
    MINIMUM_LENGTHS
        .iter()
        .map(|&(name, _)| {
            if !ok(name) {
                return TestResult {
                    test: name.to_string(),
                    p_values: vec![],
                    pass: false,
                    skipped: true,
                };
            }
            let p = match name {
                "frequency" => frequency(bits),
                "block_frequency" => block_frequency(bits, BLOCK_FREQUENCY_M),
                "runs" => runs(bits),
                "longest_run" => longest_run(bits),
                "rank" => rank(bits),
                "dft" => dft(bits),
                "non_overlapping_template" => non_overlapping_template(bits, &TEMPLATE, NON_OVERLAPPING_BLOCKS),
                "overlapping_template" => overlapping_template(bits),
                "universal" => universal(bits),
                "linear_complexity" => linear_complexity(bits, LINEAR_COMPLEXITY_M),
                "serial_1" => serial_p.expect("computed").0,
                "serial_2" => serial_p.expect("computed").1,
                "approximate_entropy" => approximate_entropy(bits, APEN_M),
                "cumulative_sums_forward" => cumulative_sums(bits, true),
                "cumulative_sums_backward" => cumulative_sums(bits, false),
                _ => unreachable!("unknown test {name}"),
            };
            TestResult {
                test: name.to_string(),
                p_values: vec![p],
                pass: p > p_th,
                skipped: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<u8> {
        s.bytes().filter(|b| *b == b'0' || *b == b'1').map(|b| b - b'0').collect()
    }

    // first 100 bits of the binary expansion used in the SP 800-22 worked examples
    const EPSILON_100: &str = "11001001000011111101101010100010001000010110100011\
                               00001000110100110001001100011001100010100010111000";

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn worked_examples() {
        let e = bits(EPSILON_100);
        assert_eq!(e.len(), 100);
        assert!(close(frequency(&bits("1011010101")), 0.527089, 1e-6));
        assert!(close(frequency(&e), 0.109599, 1e-6));
        assert!(close(block_frequency(&bits("0110011010"), 3), 0.801252, 1e-6));
        assert!(close(block_frequency(&e, 10), 0.706438, 1e-6));
        assert!(close(runs(&bits("1001101011")), 0.147232, 1e-6));
        assert!(close(runs(&e), 0.500798, 1e-6));
        // the printed DFT examples disagree with the stated algorithm; these come from nistrng
        assert!(close(dft(&bits("1001010011")), 0.468160, 1e-6));
        assert!(close(dft(&e), 0.646355, 1e-6));
        assert!(close(
            non_overlapping_template(&bits("10100100101110010110"), &[0, 0, 1], 2),
            0.344154,
            1e-6
        ));
        let (p1, p2) = serial(&bits("0011011101"), 3);
        assert!(close(p1, 0.808792, 1e-6) && close(p2, 0.670320, 1e-6));
        assert!(close(approximate_entropy(&bits("0100110101"), 3), 0.261961, 1e-6));
        assert!(close(approximate_entropy(&e, 2), 0.235301, 1e-6));
        assert!(close(cumulative_sums(&bits("1011010111"), true), 0.4116588, 1e-6));
        assert!(close(cumulative_sums(&e, true), 0.219194, 1e-6));
        assert!(close(cumulative_sums(&e, false), 0.114866, 1e-6));
    }

    #[test]
    fn universal_worked_statistic() {
        let f = universal_statistic(&bits("01011010011101010111"), 2, 4);
        assert!(close(f, 1.1949875, 1e-7));
    }

    #[test]
    fn berlekamp_massey_examples() {
        assert_eq!(berlekamp_massey(&bits("1101011110001")), 4);
        assert_eq!(berlekamp_massey(&[0; 10]), 0);
        assert_eq!(berlekamp_massey(&bits("0001")), 4);
    }

    #[test]
    fn gf2_rank_examples() {
        // rows of the two 3x3 matrices in the rank worked example
        let mut a = vec![0b010, 0b110, 0b010];
        assert_eq!(gf2_rank(&mut a, 3), 2);
        let mut b = vec![0b101, 0b011, 0b010];
        assert_eq!(gf2_rank(&mut b, 3), 3);
    }

    #[test]
    fn rank_probabilities_for_32() {
        assert!(close(rank_probability(32, 32, 32), 0.2888, 1e-4));
        assert!(close(rank_probability(31, 32, 32), 0.5776, 1e-4));
    }

    #[test]
    fn control_streams_fail() {
        let zeros = vec![0u8; 1_000_000];
        assert!(frequency(&zeros) < 0.01);
        let alt: Vec<u8> = (0..1_000_000).map(|k| (k % 2) as u8).collect();
        assert!(runs(&alt) < 0.01);
    }

    #[test]
    fn short_streams_are_skipped() {
        let r = nist_suite(&[0, 1, 1, 0, 1], 0.01);
        assert_eq!(r.len(), 15);
        assert!(r.iter().all(|t| t.skipped && !t.pass && t.p_values.is_empty()));
        let r = nist_suite(&vec![1u8; 2000], 0.01);
        assert!(!r[0].skipped && !r[0].pass);
        assert!(r.iter().find(|t| t.test == "rank").unwrap().skipped);
    }

    fn splitmix_bits(seed: u64, n: usize) -> Vec<u8> {
        let mut state = seed;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            out.extend((0..64).rev().map(|k| ((z >> k) & 1) as u8));
        }
        out
    }

    #[test]
    fn splitmix_stream_matches_python_oracle() {
        // p-values from an independent numpy/scipy implementation, seed 42, 2^20 bits
        let expected = [
            ("frequency", 0.9517200835),
            ("block_frequency", 0.7328935331),
            ("runs", 0.3201526653),
            ("longest_run", 0.6917633612),
            ("rank", 0.8576256444),
            ("dft", 0.3086625973),
            ("non_overlapping_template", 0.2786904242),
            ("overlapping_template", 0.6056431743),
            ("universal", 0.3064375534),
            ("linear_complexity", 0.7107851036),
            ("serial_1", 0.6101496771),
            ("serial_2", 0.3211060690),
            ("approximate_entropy", 0.6398330065),
            ("cumulative_sums_forward", 0.7830406491),
            ("cumulative_sums_backward", 0.7266065072),
        ];
        let bits = splitmix_bits(42, 1 << 20);
        let results = nist_suite(&bits, 0.01);
        for ((name, p), r) in expected.iter().zip(&results) {
            assert_eq!(*name, r.test);
            assert!(!r.skipped && r.pass, "{name}");
            assert!(close(r.p_values[0], *p, 1e-6), "{name}: {} vs {p}", r.p_values[0]);
        }
    }
}
