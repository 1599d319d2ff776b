//! Complex matrices, four-index curvature tensors, Hermitian eigen-analysis
//! and positivity classification.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense complex matrix.
pub type CMat = DMatrix<C64>;

/// Default absolute tolerance on eigenvalues of unit-normalized forms.
pub const DEFAULT_POSITIVITY_TOL: f64 = 1e-8;

const HERMITIAN_REL_TOL: f64 = 1e-12;

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest `|m[a][b] - conj(m[b][a])|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..m.nrows() {
        for b in 0..m.ncols() {
            worst = worst.max((m[(a, b)] - m[(b, a)].conj()).norm());
        }
    }
    worst
}

/// A square complex matrix known to be Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMat);

impl Hermitian {
    /// Validates finiteness and Hermitian symmetry to 1e-12 relative.
    pub fn new(m: CMat) -> Result<Self> {
        Self::with_tolerance(m, HERMITIAN_REL_TOL)
    }

    pub fn with_tolerance(m: CMat, rel_tol: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::input(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        let scale = max_abs_entry(&m).max(f64::MIN_POSITIVE);
        let defect = hermitian_defect(&m);
        if defect > rel_tol * scale {
            return Err(Error::input(format!(
                "matrix is not Hermitian: defect {defect:.3e} relative to scale {scale:.3e}"
            )));
        }
        Ok(Hermitian(symmetrized(&m)))
    }

    /// Replaces `m` by `(m + m*)/2` without checking.
    pub fn symmetrize(m: &CMat) -> Self {
        Hermitian(symmetrized(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

fn symmetrized(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Eigen-decomposition with ascending eigenvalues; column `k` of `vectors`
/// belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

const EIGEN_MAX_ITER: usize = 10_000;

pub fn hermitian_eigen(m: &Hermitian) -> Result<Eigen> {
    let dim = m.dim();
    let decomposition = m
        .0
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical {
            message: format!("Hermitian eigen-solver did not converge on a {dim}x{dim} matrix"),
            iterations: EIGEN_MAX_ITER,
        })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a]
            .partial_cmp(&decomposition.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| decomposition.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &decomposition.eigenvectors.column(k));
    }
    Ok(Eigen { values, vectors })
}

/// Inverse of a square matrix, failing on (numerical) singularity.
pub fn inverse(m: &CMat) -> Result<CMat> {
    let scale = max_abs_entry(m);
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::degenerate("matrix is singular"))?;
    if !inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::degenerate("matrix inverse is not finite"));
    }
    if scale * max_abs_entry(&inv) > 1e14 {
        return Err(Error::degenerate(format!(
            "matrix is numerically singular (condition estimate {:.3e})",
            scale * max_abs_entry(&inv)
        )));
    }
    Ok(inv)
}

/// Change of frame `P` with `P^T h conj(P) = I`, i.e. the columns of `P`
/// are the coefficients of an `h`-orthonormal frame.
pub fn unitary_frame(h: &CMat) -> Result<CMat> {
    let eig = hermitian_eigen(&Hermitian::symmetrize(h))?;
    if eig.values[0] <= 0.0 {
        return Err(Error::degenerate(format!(
            "metric is not positive definite (smallest eigenvalue {:.3e})",
            eig.values[0]
        )));
    }
    let dim = h.nrows();
    let mut p = CMat::zeros(dim, dim);
    for k in 0..dim {
        let s = 1.0 / eig.values[k].sqrt();
        for a in 0..dim {
            p[(a, k)] = eig.vectors[(a, k)].conj() * s;
        }
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Positivity verdicts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictClass {
    StrictlyPositive,
    SemiPositive,
    Indefinite,
    SemiNegative,
    StrictlyNegative,
}

impl VerdictClass {
    pub fn is_semi_positive(self) -> bool {
        matches!(self, VerdictClass::StrictlyPositive | VerdictClass::SemiPositive)
    }

    pub fn is_semi_negative(self) -> bool {
        matches!(self, VerdictClass::StrictlyNegative | VerdictClass::SemiNegative)
    }

    /// The class of the negated form.
    pub fn flipped(self) -> VerdictClass {
        match self {
            VerdictClass::StrictlyPositive => VerdictClass::StrictlyNegative,
            VerdictClass::SemiPositive => VerdictClass::SemiNegative,
            VerdictClass::Indefinite => VerdictClass::Indefinite,
            VerdictClass::SemiNegative => VerdictClass::SemiPositive,
            VerdictClass::StrictlyNegative => VerdictClass::StrictlyPositive,
        }
    }

    pub fn rank(self) -> i8 {
        match self {
            VerdictClass::StrictlyNegative => -2,
            VerdictClass::SemiNegative => -1,
            VerdictClass::Indefinite => 0,
            VerdictClass::SemiPositive => 1,
            VerdictClass::StrictlyPositive => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub class: VerdictClass,
    /// Smallest value of the form (raw, before normalization).
    pub extremal: f64,
    /// Largest value of the form (raw).
    pub maximal: f64,
    /// Vector(s) achieving `extremal`.
    pub witness: Vec<C64>,
    pub tolerance: f64,
    /// Normalization applied before comparing with `tolerance`.
    pub scale: f64,
    /// Number of random restarts when the extremum is a heuristic search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heuristic_restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Classifies a spectrum given its extremes; the zero form is reported as
/// semi-positive with a note.
pub fn classify(min: f64, max: f64, tol: f64) -> Result<(VerdictClass, Option<String>)> {
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::input("non-finite spectrum extremes"));
    }
    let class = if min > tol {
        VerdictClass::StrictlyPositive
    } else if max < -tol {
        VerdictClass::StrictlyNegative
    } else if min >= -tol && max > tol {
        VerdictClass::SemiPositive
    } else if max <= tol && min < -tol {
        VerdictClass::SemiNegative
    } else if min < -tol && max > tol {
        VerdictClass::Indefinite
    } else {
        return Ok((
            VerdictClass::SemiPositive,
            Some("zero form: also semi-negative".to_string()),
        ));
    };
    Ok((class, None))
}

/// Classification of a list of eigenvalues.
pub fn classify_spectrum(values: &[f64], tol: f64) -> Result<(VerdictClass, Option<String>)> {
    if values.is_empty() {
        return Err(Error::input("empty spectrum"));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    classify(min, max, tol)
}

/// Eigen-classification of a Hermitian form after scaling by its largest
/// absolute entry.
pub fn hermitian_verdict(m: &Hermitian, tol: f64) -> Result<Verdict> {
    let scale = max_abs_entry(m.matrix());
    let eig = hermitian_eigen(m)?;
    let norm = if scale > 0.0 { scale } else { 1.0 };
    let min = eig.values[0];
    let max = *eig.values.last().unwrap();
    let (class, note) = classify(min / norm, max / norm, tol)?;
    Ok(Verdict {
        class,
        extremal: min,
        maximal: max,
        witness: eig.vectors.column(0).iter().cloned().collect(),
        tolerance: tol,
        scale: norm,
        heuristic_restarts: None,
        note,
    })
}

// ---------------------------------------------------------------------------
// Curvature tensors
// ---------------------------------------------------------------------------

/// `T[α][β][i][j]`: bundle indices α, β over `0..rank`, base indices i, j
/// over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    rank: usize,
    n: usize,
    data: Vec<C64>,
}

impl CurvatureTensor {
    pub fn zeros(rank: usize, n: usize) -> Self {
        CurvatureTensor {
            rank,
            n,
            data: vec![C64::new(0.0, 0.0); rank * rank * n * n],
        }
    }

    pub fn from_fn(rank: usize, n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> C64) -> Self {
        let mut t = Self::zeros(rank, n);
        for a in 0..rank {
            for b in 0..rank {
                for i in 0..n {
                    for j in 0..n {
                        t.set(a, b, i, j, f(a, b, i, j));
                    }
                }
            }
        }
        t
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    fn offset(&self, a: usize, b: usize, i: usize, j: usize) -> usize {
        ((a * self.rank + b) * self.n + i) * self.n + j
    }

    pub fn get(&self, a: usize, b: usize, i: usize, j: usize) -> C64 {
        self.data[self.offset(a, b, i, j)]
    }

    pub fn set(&mut self, a: usize, b: usize, i: usize, j: usize, v: C64) {
        let k = self.offset(a, b, i, j);
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Largest violation of `T[α][β][i][j] = conj(T[β][α][j][i])`.
    pub fn pair_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.rank {
            for b in 0..self.rank {
                for i in 0..self.n {
                    for j in 0..self.n {
                        let d = self.get(a, b, i, j) - self.get(b, a, j, i).conj();
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
        worst
    }

    /// Bundle-index block `(T[α][β][i][j])_{αβ}` for fixed base indices.
    pub fn bundle_block(&self, i: usize, j: usize) -> CMat {
        CMat::from_fn(self.rank, self.rank, |a, b| self.get(a, b, i, j))
    }

    pub fn scaled(&self, s: f64) -> Self {
        CurvatureTensor {
            rank: self.rank,
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        CurvatureTensor {
            rank: self.rank,
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    /// Frobenius inner product `Σ conj(self)·other`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Re-expresses the tensor in the frame whose coefficient columns are `p`:
    /// `T'[a][b] = Σ p[α][a] conj(p[β][b]) T[α][β]`.
    pub fn in_frame(&self, p: &CMat) -> Self {
        let r = self.rank;
        Self::from_fn(r, self.n, |a, b, i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for al in 0..r {
                for be in 0..r {
                    acc += p[(al, a)] * p[(be, b)].conj() * self.get(al, be, i, j);
                }
            }
            acc
        })
    }

    /// Griffiths form `Σ T[α][β][i][j] s_α conj(s_β) v_i conj(v_j)`.
    pub fn griffiths_form(&self, s: &[C64], v: &[C64]) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..self.rank {
            for b in 0..self.rank {
                let sw = s[a] * s[b].conj();
                for i in 0..self.n {
                    for j in 0..self.n {
                        acc += self.get(a, b, i, j) * sw * v[i] * v[j].conj();
                    }
                }
            }
        }
        acc.re
    }
}

/// Flattens `T` into the `n(r+1)`-dimensional Nakano form with the fiber
/// pairing folded in: `M[(α,i)][(β,j)] = T[α][β][i][j]·H[α][β]`, row index
/// `α·n + i`. In an `H`-orthonormal frame this is the Nakano form itself.
pub fn nakano_flatten(t: &CurvatureTensor, h: &CMat) -> Result<Hermitian> {
    let (r, n) = (t.rank(), t.base_dim());
    if h.nrows() != r || h.ncols() != r {
        return Err(Error::input(format!(
            "metric is {}x{} but tensor has rank {r}",
            h.nrows(),
            h.ncols()
        )));
    }
    let dim = r * n;
    let m = CMat::from_fn(dim, dim, |p, q| {
        let (a, i) = (p / n, p % n);
        let (b, j) = (q / n, q % n);
        t.get(a, b, i, j) * h[(a, b)]
    });
    let scale = max_abs_entry(&m).max(f64::MIN_POSITIVE);
    if hermitian_defect(&m) > 1e-9 * scale {
        return Err(Error::input(format!(
            "tensor lacks pair symmetry (defect {:.3e})",
            hermitian_defect(&m)
        )));
    }
    Ok(Hermitian::symmetrize(&m))
}

pub fn column(v: &DVector<C64>) -> Vec<C64> {
    v.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_identity() {
        let m = Hermitian::new(CMat::identity(2, 2)).unwrap();
        let e = hermitian_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_diagonal_is_sorted() {
        let m = CMat::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.0), c(-1.0, 0.0)]));
        let e = hermitian_eigen(&Hermitian::new(m).unwrap()).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_two_by_two_complex() {
        // characteristic polynomial (2-λ)^2 - 1
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let h = Hermitian::new(m.clone()).unwrap();
        let e = hermitian_eigen(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        for k in 0..2 {
            let v = e.vectors.column(k);
            let mv = &m * v;
            let resid = (mv - v * c(e.values[k], 0.0)).norm();
            assert!(resid < 1e-10 * 3.0);
        }
    }

    #[test]
    fn rejects_non_hermitian_and_non_finite() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(Hermitian::new(m), Err(Error::Input(_))));
        let m = CMat::from_row_slice(1, 1, &[c(f64::NAN, 0.0)]);
        assert!(matches!(Hermitian::new(m), Err(Error::Input(_))));
    }

    #[test]
    fn classify_cases() {
        assert_eq!(classify(0.5, 1.0, 1e-8).unwrap().0, VerdictClass::StrictlyPositive);
        let (class, note) = classify(0.0, 0.0, 1e-8).unwrap();
        assert_eq!(class, VerdictClass::SemiPositive);
        assert!(note.unwrap().contains("semi-negative"));
        assert_eq!(classify(-0.3, 0.7, 1e-8).unwrap().0, VerdictClass::Indefinite);
        assert_eq!(classify(-0.7, -0.3, 1e-8).unwrap().0, VerdictClass::StrictlyNegative);
        assert_eq!(classify(-0.7, 0.0, 1e-8).unwrap().0, VerdictClass::SemiNegative);
        assert_eq!(classify(0.0, 0.4, 1e-8).unwrap().0, VerdictClass::SemiPositive);
        assert!(classify(0.0, 1.0, 0.0).is_err());
        assert!(classify_spectrum(&[], 1e-8).is_err());
    }

    #[test]
    fn nakano_flatten_cases() {
        let zero = CurvatureTensor::zeros(2, 3);
        let m = nakano_flatten(&zero, &CMat::identity(2, 2)).unwrap();
        assert_eq!(max_abs_entry(m.matrix()), 0.0);

        let mut t = CurvatureTensor::zeros(1, 1);
        t.set(0, 0, 0, 0, c(0.7, 0.0));
        let h = CMat::from_element(1, 1, c(2.0, 0.0));
        let m = nakano_flatten(&t, &h).unwrap();
        assert!((m.matrix()[(0, 0)] - c(1.4, 0.0)).norm() < 1e-15);

        // product tensor c_α δ_αβ δ_ij with H = I
        let cs = [1.5, -0.5];
        let n = 2;
        let t = CurvatureTensor::from_fn(2, n, |a, b, i, j| {
            if a == b && i == j {
                c(cs[a], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let m = nakano_flatten(&t, &CMat::identity(2, 2)).unwrap();
        for p in 0..4 {
            for q in 0..4 {
                let expected = if p == q { cs[p / n] } else { 0.0 };
                assert!((m.matrix()[(p, q)] - c(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!(nakano_flatten(&t, &CMat::identity(3, 3)).is_err());
    }

    #[test]
    fn unitary_frame_orthonormalizes() {
        let h = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.3), c(0.5, -0.3), c(1.0, 0.0)]);
        let p = unitary_frame(&h).unwrap();
        let id = p.transpose() * &h * p.map(|z| z.conj());
        assert!((id - CMat::identity(2, 2)).norm() < 1e-12);
    }
}
