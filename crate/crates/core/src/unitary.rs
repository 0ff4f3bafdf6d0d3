//! Dense complex matrices, unitary matrices and the operations that create
//! them: Haar sampling, Hermitian exponentials and file loading.

use std::ops::{Index, IndexMut};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Maximum entry-wise defect tolerated by [`UnitaryMatrix`].
pub const UNITARITY_TOL: f64 = 1e-10;

/// Hermiticity tolerance of [`expm_hermitian`], relative to max(1, |h|_max).
pub const HERMITICITY_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense row-major complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn scale_row(&mut self, r: usize, k: Complex64) {
        let cols = self.cols;
        for z in &mut self.data[r * cols..(r + 1) * cols] {
            *z *= k;
        }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::InvalidShape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_nalgebra(&(self.to_nalgebra() * other.to_nalgebra())))
    }

    /// Submatrix with the given row and column indices; indices may repeat.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
        Self::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])])
    }

    /// Entry-wise squared moduli.
    pub fn abs_sqr(&self) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |h - h^dagger| over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut d: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                d = d.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        d
    }

    /// max |U^dagger U - I| and max |U U^dagger - I| over entries.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let u = self.to_nalgebra();
        let n = self.rows;
        let eye = DMatrix::<Complex64>::identity(n, n);
        let a = (u.adjoint() * &u - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let b = (&u * u.adjoint() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.max(b)
    }

    /// Returns a copy whose columns have unit Euclidean norm (zero columns are kept).
    pub fn normalize_columns(&self) -> ComplexMatrix {
        let mut out = self.clone();
        for c in 0..self.cols {
            let norm = (0..self.rows).map(|r| self[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                for r in 0..self.rows {
                    out[(r, c)] = self[(r, c)] / norm;
                }
            }
        }
        out
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Haar,
    Device,
    File,
}

/// Square matrix with ‖U†U − I‖_max ≤ 1e−10, checked at construction.
///
/// Entry `(j, i)` is the amplitude for a photon entering mode `i` to leave
/// in mode `j`; column `i` is the single-photon output law of input `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    matrix: ComplexMatrix,
    provenance: Provenance,
}

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidShape(format!(
                "unitary must be square and non-empty, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let defect = matrix.unitarity_defect();
        if defect > UNITARITY_TOL {
            return Err(Error::NotUnitary { defect });
        }
        Ok(Self { matrix, provenance })
    }

    /// Builds a unitary from an approximately unitary matrix by polar
    /// projection (the closest unitary in Frobenius norm).
    pub fn new_projected(matrix: ComplexMatrix, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidShape("polar projection needs a square matrix".into()));
        }
        let svd = matrix.to_nalgebra().svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::InvalidInput("SVD failed to converge".into()));
        };
        Self::new(ComplexMatrix::from_nalgebra(&(u * v_t)), provenance)
    }

    pub fn identity(m: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(m),
            provenance: Provenance::Device,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Amplitude from input `input` to output `output`.
    pub fn amplitude(&self, output: usize, input: usize) -> Complex64 {
        self.matrix[(output, input)]
    }

    /// Modulus rho and phase theta in (-pi, pi] of entry (output, input).
    pub fn polar(&self, output: usize, input: usize) -> (f64, f64) {
        let z = self.amplitude(output, input);
        let mut theta = z.arg();
        if theta <= -std::f64::consts::PI {
            theta += 2.0 * std::f64::consts::PI;
        }
        (z.norm(), theta)
    }

    /// Single-photon output probabilities |U_ji|^2 for input `i`.
    pub fn column_probabilities(&self, input: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.matrix[(j, input)].norm_sqr()).collect()
    }
}

/// Draws an m x m unitary from the Haar measure.
///
/// A matrix of i.i.d. standard complex Gaussians is QR-factorized and each
/// column of Q is multiplied by the phase of the matching diagonal entry of R,
/// which makes the factorization unique and the result exactly Haar.
pub fn haar_unitary(m: usize, seed: u64) -> Result<UnitaryMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("Haar unitary needs m >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = DMatrix::<Complex64>::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..m {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..m {
            q[(row, c)] *= phase;
        }
    }
    UnitaryMatrix::new(ComplexMatrix::from_nalgebra(&q), Provenance::Haar)
}

/// exp(-i h dz) for Hermitian `h`, through its eigendecomposition.
pub fn expm_hermitian(h: &ComplexMatrix, dz: f64) -> Result<UnitaryMatrix> {
    if !h.is_square() || h.rows() == 0 {
        return Err(Error::InvalidShape(format!(
            "Hamiltonian must be square and non-empty, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    if !(dz > 0.0) || !dz.is_finite() {
        return Err(Error::InvalidInput(format!("step length must be positive, got {dz}")));
    }
    let defect = h.hermiticity_defect();
    if defect > HERMITICITY_TOL * h.max_abs().max(1.0) {
        return Err(Error::HermiticityViolation { defect });
    }
    let n = h.rows();
    let u = if h.as_slice().iter().all(|z| z.im == 0.0) {
        let real = DMatrix::<f64>::from_fn(n, n, |r, c| h[(r, c)].re);
        let mut u = ComplexMatrix::identity(n);
        propagate_real_symmetric(&real, dz, &mut u);
        u
    } else {
        let eig = SymmetricEigen::new(h.to_nalgebra());
        let v = &eig.eigenvectors;
        let phases = DMatrix::<Complex64>::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -l * dz)),
        ));
        ComplexMatrix::from_nalgebra(&(v * phases * v.adjoint()))
    };
    UnitaryMatrix::new(u, Provenance::Device)
}

/// Left-multiplies `u` by exp(-i h t) for a real symmetric `h`.
///
/// With h = V diag(l) V^T this is V diag(e^{-i l t}) V^T u, evaluated with
/// real matrix products on the real and imaginary parts of `u`.
pub(crate) fn propagate_real_symmetric(h: &DMatrix<f64>, t: f64, u: &mut ComplexMatrix) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let v = eig.eigenvectors;
    let cols = u.cols();
    let re = DMatrix::<f64>::from_fn(n, cols, |r, c| u[(r, c)].re);
    let im = DMatrix::<f64>::from_fn(n, cols, |r, c| u[(r, c)].im);
    let vt = v.transpose();
    let mut wr = &vt * &re;
    let mut wi = &vt * &im;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let (s, c) = (-l * t).sin_cos();
        for col in 0..cols {
            let (a, b) = (wr[(k, col)], wi[(k, col)]);
            wr[(k, col)] = c * a - s * b;
            wi[(k, col)] = s * a + c * b;
        }
    }
    let out_r = &v * wr;
    let out_i = &v * wi;
    for r in 0..n {
        for c in 0..cols {
            u[(r, c)] = Complex64::new(out_r[(r, c)], out_i[(r, c)]);
        }
    }
}

/// On-disk unitary: `{ "m": int, "entries": [[re, im], ...] }`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitaryFile {
    pub m: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&UnitaryMatrix> for UnitaryFile {
    fn from(u: &UnitaryMatrix) -> Self {
        Self {
            m: u.dim(),
            entries: u.matrix().as_slice().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

/// A unitary read from disk together with its measured unitarity defect.
#[derive(Clone, Debug)]
pub struct LoadedUnitary {
    pub unitary: UnitaryMatrix,
    pub defect: f64,
    pub reprojected: bool,
}

impl UnitaryFile {
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        ComplexMatrix::new(
            self.m,
            self.m,
            self.entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        )
    }

    /// Validates unitarity; with `reproject` a defect above tolerance is
    /// repaired by polar projection instead of rejected.
    pub fn into_unitary(self, reproject: bool) -> Result<LoadedUnitary> {
        let matrix = self.to_matrix()?;
        if self.m == 0 {
            return Err(Error::InvalidDimension("unitary file has m = 0".into()));
        }
        let defect = matrix.unitarity_defect();
        if defect <= UNITARITY_TOL {
            let unitary = UnitaryMatrix::new(matrix, Provenance::File)?;
            return Ok(LoadedUnitary {
                unitary,
                defect,
                reprojected: false,
            });
        }
        if !reproject {
            return Err(Error::NotUnitary { defect });
        }
        let unitary = UnitaryMatrix::new_projected(matrix, Provenance::File)?;
        Ok(LoadedUnitary {
            unitary,
            defect,
            reprojected: true,
        })
    }
}

pub fn load_unitary(path: &Path, reproject: bool) -> Result<LoadedUnitary> {
    let text = std::fs::read_to_string(path)?;
    let file: UnitaryFile = serde_json::from_str(&text)?;
    file.into_unitary(reproject)
}

pub fn save_unitary(u: &UnitaryMatrix, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&UnitaryFile::from(u))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::Rng;

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = rng::seeded(seed);
        let mut h = ComplexMatrix::zeros(n, n);
        for r in 0..n {
            h[(r, r)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            for c in r + 1..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                h[(r, c)] = z;
                h[(c, r)] = z.conj();
            }
        }
        h
    }

    #[test]
    fn haar_dimension_one_is_a_phase() {
        let u = haar_unitary(1, 42).unwrap();
        assert!((u.amplitude(0, 0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn haar_rejects_zero_dimension() {
        assert!(matches!(haar_unitary(0, 1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn haar_is_deterministic_per_seed() {
        let a = haar_unitary(6, 11).unwrap();
        let b = haar_unitary(6, 11).unwrap();
        let c = haar_unitary(6, 12).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().max_abs_diff(c.matrix()) > 1e-3);
    }

    #[test]
    fn haar_mean_modulus_is_one_over_m() {
        // 10^4 draws at m = 8, mean of |U_00|^2 within 3 standard errors of 1/8.
        let m = 8;
        let values: Vec<f64> = (0..10_000)
            .map(|s| haar_unitary(m, s).unwrap().amplitude(0, 0).norm_sqr())
            .collect();
        let (mean, sd) = stats::mean_sd(&values);
        let se = sd / (values.len() as f64).sqrt();
        assert!((mean - 1.0 / m as f64).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn haar_phases_are_uniform() {
        // Without the phase correction arg(U_00) concentrates; with it the
        // phase of any fixed entry is uniform on (-pi, pi].
        let phases: Vec<f64> = (0..40000)
            .map(|s| haar_unitary(4, 1000 + s).unwrap().amplitude(0, 0).arg())
            .collect();
        let pi = std::f64::consts::PI;
        let r = stats::ks_test(&phases, |x| (x + pi) / (2.0 * pi));
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let u = expm_hermitian(&ComplexMatrix::zeros(4, 4), 0.7).unwrap();
        assert!(u.matrix().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn expm_of_diagonal() {
        let h = ComplexMatrix::from_real(2, 2, &[0.3, 0.0, 0.0, -1.7]).unwrap();
        let u = expm_hermitian(&h, 1.0).unwrap();
        assert!((u.amplitude(0, 0) - Complex64::from_polar(1.0, -0.3)).norm() < 1e-14);
        assert!((u.amplitude(1, 1) - Complex64::from_polar(1.0, 1.7)).norm() < 1e-14);
        assert!(u.amplitude(0, 1).norm() < 1e-15);
    }

    #[test]
    fn expm_inverse_product_is_identity() {
        let h = random_hermitian(6, 3);
        let fwd = expm_hermitian(&h, 1.0).unwrap();
        let back = expm_hermitian(&h.scale(Complex64::new(-1.0, 0.0)), 1.0).unwrap();
        let prod = fwd.matrix().matmul(back.matrix()).unwrap();
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(6)) < 1e-12);
    }

    #[test]
    fn expm_real_and_complex_paths_agree() {
        let mut h = random_hermitian(5, 8);
        for z in h.data.iter_mut() {
            z.im = 0.0;
        }
        let real = expm_hermitian(&h, 0.4).unwrap();
        // Tiny imaginary perturbation forces the complex eigensolver.
        let mut hc = h.clone();
        hc[(0, 1)].im = 1e-300;
        hc[(1, 0)].im = -1e-300;
        let cplx = expm_hermitian(&hc, 0.4).unwrap();
        assert!(real.matrix().max_abs_diff(cplx.matrix()) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let h = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            expm_hermitian(&h, 1.0),
            Err(Error::HermiticityViolation { .. })
        ));
    }

    #[test]
    fn constructor_rejects_non_unitary() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 1.001]).unwrap();
        assert!(matches!(
            UnitaryMatrix::new(m.clone(), Provenance::File),
            Err(Error::NotUnitary { .. })
        ));
        let fixed = UnitaryMatrix::new_projected(m, Provenance::File).unwrap();
        assert!(fixed.matrix().unitarity_defect() < 1e-12);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let r = ComplexMatrix::new(1, 1, vec![Complex64::new(f64::NAN, 0.0)]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![ONE]),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn unitary_file_round_trip_and_noise_handling() {
        let u = haar_unitary(5, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        save_unitary(&u, &path).unwrap();
        let loaded = load_unitary(&path, false).unwrap();
        assert_eq!(loaded.unitary.matrix(), u.matrix());
        assert!(loaded.defect <= UNITARITY_TOL);

        let mut noisy = UnitaryFile::from(&u);
        noisy.entries[3][0] += 1e-4;
        let err = noisy.clone().into_unitary(false).unwrap_err();
        assert!(matches!(err, Error::NotUnitary { defect } if defect > 1e-5));
        let repaired = noisy.into_unitary(true).unwrap();
        assert!(repaired.reprojected);
        assert!(repaired.unitary.matrix().max_abs_diff(u.matrix()) < 1e-3);
    }
}
