//! Small dense complex linear algebra.
//!
//! Matrices here are tiny (the background chains have at most a few dozen
//! states), so everything is dense and backed by `nalgebra`. On top of the
//! generic routines sit the spectral checks the models depend on: the
//! eigenvalues of `Λ − Qᵀ` (all in the open right half-plane) and of
//! `Λ(I − Pᵀ)` (one structural zero, the rest in the open right half-plane).

use nalgebra::{DMatrix, DVector, Schur, SVD};

use crate::error::{Error, Result, Warning};
use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest chain dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 64;

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues (sorted by real then imaginary part) with optional eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<C64>,
    pub right_vectors: Option<Vec<CVector>>,
    pub left_vectors: Option<Vec<CVector>>,
    /// `‖R‖∞·‖R⁻¹‖∞` for the right eigenvector matrix `R`; infinite when `R` is singular.
    pub condition: f64,
    pub warnings: Vec<Warning>,
}

impl Spectrum {
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, a) in self.values.iter().enumerate() {
            for b in &self.values[i + 1..] {
                gap = gap.min((a - b).norm());
            }
        }
        gap
    }
}

pub fn real_matrix(rows: &[Vec<f64>]) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    let m = CMatrix::from_fn(n, cols, |i, j| C64::new(rows[i][j], 0.0));
    check_finite(&m, "matrix")?;
    Ok(m)
}

pub fn real_vector(values: &[f64]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn diag(values: impl IntoIterator<Item = C64>) -> CMatrix {
    let v: Vec<C64> = values.into_iter().collect();
    CMatrix::from_diagonal(&CVector::from_vec(v))
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_one(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry modulus; used where vectors and matrices are compared alike.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn check_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_square(m: &CMatrix, what: &str) -> Result<usize> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if n > MAX_DIM {
        return Err(Error::DimensionMismatch(format!(
            "{what} dimension {n} exceeds cap {MAX_DIM}"
        )));
    }
    Ok(n)
}

fn cmp_eig(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Eigen-decomposition by complex Schur factorisation (Hessenberg reduction
/// followed by shifted QR) and back-substitution on the triangular factor.
pub fn eig(m: &CMatrix) -> Result<Spectrum> {
    let n = check_square(m, "eig input")?;
    check_finite(m, "eig input")?;

    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        Error::NonConvergence {
            iterations: SCHUR_MAX_ITER,
        },
    )?;
    let (q, t) = schur.unpack();
    let tiny = f64::EPSILON * norm_inf(&t).max(f64::MIN_POSITIVE);

    let mut pairs: Vec<(C64, CVector)> = (0..n)
        .map(|k| {
            let lambda = t[(k, k)];
            let mut x = CVector::zeros(n);
            x[k] = C64::new(1.0, 0.0);
            for j in (0..k).rev() {
                let mut acc = C64::new(0.0, 0.0);
                for l in j + 1..=k {
                    acc += t[(j, l)] * x[l];
                }
                let mut d = t[(j, j)] - lambda;
                if d.norm() < tiny {
                    d = C64::new(tiny, 0.0);
                }
                x[j] = -acc / d;
            }
            let v = &q * x;
            let scale = v.norm();
            (lambda, v / C64::new(scale, 0.0))
        })
        .collect();
    pairs.sort_by(|a, b| cmp_eig(&a.0, &b.0));

    let values: Vec<C64> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<CVector> = pairs.into_iter().map(|p| p.1).collect();
    let r = CMatrix::from_columns(&right);

    let (condition, left) = match r.clone().try_inverse() {
        Some(r_inv) => {
            let cond = norm_inf(&r) * norm_inf(&r_inv);
            let left = (0..n).map(|i| r_inv.row(i).transpose()).collect();
            (cond, Some(left))
        }
        None => (f64::INFINITY, None),
    };

    Ok(Spectrum {
        values,
        right_vectors: Some(right),
        left_vectors: left,
        condition,
        warnings: Vec::new(),
    })
}

/// LU solve with partial pivoting and one refinement step.
pub fn solve_linear(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let n = check_square(a, "system matrix")?;
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs matrix dimension {n}",
            b.len()
        )));
    }
    check_finite(a, "system matrix")?;
    if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }

    let scale = norm_inf(a);
    let lu = a.clone().lu();
    let threshold = 1e-12 * scale;
    let pivot = lu.u().diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if pivot.is_nan() || pivot < threshold || scale == 0.0 {
        return Err(Error::SingularMatrix { pivot, threshold });
    }
    let mut x = lu.solve(b).ok_or(Error::SingularMatrix { pivot, threshold })?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }

    let resid = vec_norm_inf(&(a * &x - b));
    let bound = 1e-10 * (scale * vec_norm_inf(&x) + vec_norm_inf(b));
    if resid > bound {
        return Err(Error::NumericalInstability(format!(
            "linear solve residual {resid:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok(x)
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    let n = check_square(a, "matrix")?;
    let scale = norm_inf(a);
    let lu = a.clone().lu();
    let threshold = 1e-12 * scale;
    let pivot = lu.u().diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if pivot.is_nan() || pivot < threshold || scale == 0.0 {
        return Err(Error::SingularMatrix { pivot, threshold });
    }
    lu.try_inverse()
        .filter(|inv| inv.nrows() == n)
        .ok_or(Error::SingularMatrix { pivot, threshold })
}

pub fn determinant(a: &CMatrix) -> C64 {
    if a.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    a.clone().lu().determinant()
}

/// Adjugate (transposed cofactor matrix), valid for singular input too.
pub fn adjugate(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if n == 1 {
        return CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    }
    CMatrix::from_fn(n, n, |i, j| {
        let minor = a.clone().remove_row(j).remove_column(i);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        determinant(&minor) * sign
    })
}

/// Result of a (possibly overdetermined) least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: CVector,
    pub condition: f64,
    pub residual: f64,
}

/// SVD-based least squares; rank deficiency is an error.
pub fn solve_least_squares(a: &CMatrix, b: &CVector) -> Result<LeastSquares> {
    let (rows, cols) = a.shape();
    if b.len() != rows || rows < cols || cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "least squares with {rows}x{cols} matrix and rhs of length {}",
            b.len()
        )));
    }
    check_finite(a, "least-squares matrix")?;
    let svd = SVD::new(a.clone(), true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cutoff = 1e-12 * sigma_max;
    let null_dim = svd.singular_values.iter().filter(|&&s| s <= cutoff).count();
    if null_dim > 0 || sigma_max == 0.0 {
        return Err(Error::SingularSystem {
            null_dim: null_dim.max(1),
        });
    }
    let x = svd
        .solve(b, cutoff)
        .map_err(|e| Error::NumericalInstability(e.to_string()))?;
    let residual = vec_norm_inf(&(a * &x - b));
    Ok(LeastSquares {
        x,
        condition: sigma_max / sigma_min,
        residual,
    })
}

fn check_rates(lambda: &[f64], n: usize) -> Result<()> {
    if lambda.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} rates for {n} states",
            lambda.len()
        )));
    }
    for (i, &l) in lambda.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter {
                field: format!("lambda[{i}]"),
                reason: format!("rate must be positive, got {l}"),
            });
        }
    }
    Ok(())
}

pub fn check_generator(q: &CMatrix) -> Result<()> {
    let n = check_square(q, "generator")?;
    check_finite(q, "generator")?;
    let scale = norm_inf(q).max(1.0);
    for i in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..n {
            let v = q[(i, j)];
            if v.im != 0.0 {
                return Err(Error::InvalidParameter {
                    field: format!("q[{i}][{j}]"),
                    reason: "generator entries must be real".into(),
                });
            }
            if i != j && v.re < 0.0 {
                return Err(Error::InvalidParameter {
                    field: format!("q[{i}][{j}]"),
                    reason: format!("off-diagonal rate must be nonnegative, got {}", v.re),
                });
            }
            row += v;
        }
        if row.norm() > 1e-10 * scale {
            return Err(Error::InvalidParameter {
                field: format!("q[{i}]"),
                reason: format!("generator row must sum to zero, got {}", row.re),
            });
        }
    }
    Ok(())
}

pub fn check_stochastic(p: &CMatrix) -> Result<()> {
    let n = check_square(p, "transition matrix")?;
    check_finite(p, "transition matrix")?;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let v = p[(i, j)];
            if v.im != 0.0 || v.re < 0.0 || v.re > 1.0 {
                return Err(Error::InvalidParameter {
                    field: format!("p[{i}][{j}]"),
                    reason: format!("transition probability must lie in [0,1], got {v}"),
                });
            }
            row += v.re;
        }
        if (row - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                field: format!("p[{i}]"),
                reason: format!("row must sum to one, got {row}"),
            });
        }
    }
    Ok(())
}

/// Eigenvalues `νᵢ` of `Λ − Qᵀ`, all of which must lie in the open right half-plane.
pub fn nu_eigenvalues(lambda: &[f64], q: &CMatrix) -> Result<Spectrum> {
    check_generator(q)?;
    check_rates(lambda, q.nrows())?;
    let m = diag(lambda.iter().map(|&l| C64::new(l, 0.0))) - q.transpose();
    let mut spec = eig(&m)?;
    if let Some(bad) = spec.values.iter().find(|v| v.re <= 1e-12) {
        return Err(Error::EigenvalueLocationViolation(format!(
            "eigenvalue {bad} of Λ − Qᵀ is not in Re(s) > 0"
        )));
    }
    let threshold = 1e-8 * norm_inf(&m);
    let gap = spec.min_gap();
    if gap < threshold {
        spec.warnings
            .push(Warning::NearDegenerateSpectrum { gap, threshold }.emit());
    }
    Ok(spec)
}

/// Zeros `μᵢ(η) = νᵢ + η` of `det((η − s)I + Λ − Qᵀ)`.
pub fn mu_of_eta(nu: &Spectrum, eta: C64) -> Spectrum {
    let mut out = nu.clone();
    for v in &mut out.values {
        *v += eta;
    }
    out
}

/// Eigenvalues `γ` of `Λ(I − Pᵀ)` with left eigenvectors; the structural zero is snapped to 0.
pub fn gamma_eigenvalues(lambda: &[f64], p: &CMatrix) -> Result<Spectrum> {
    check_stochastic(p)?;
    let n = p.nrows();
    check_rates(lambda, n)?;
    let lam = diag(lambda.iter().map(|&l| C64::new(l, 0.0)));
    let m = &lam * (CMatrix::identity(n, n) - p.transpose());
    let mut spec = eig(&m)?;

    let zeros: Vec<usize> = (0..n).filter(|&i| spec.values[i].norm() <= 1e-10).collect();
    if zeros.len() != 1 {
        return Err(Error::EigenvalueLocationViolation(format!(
            "Λ(I − Pᵀ) has {} eigenvalues at zero, expected exactly one",
            zeros.len()
        )));
    }
    spec.values[zeros[0]] = C64::new(0.0, 0.0);
    if let Some(bad) = (0..n)
        .filter(|&i| i != zeros[0])
        .map(|i| spec.values[i])
        .find(|v| v.re <= 1e-12)
    {
        return Err(Error::EigenvalueLocationViolation(format!(
            "nonzero eigenvalue {bad} of Λ(I − Pᵀ) is not in Re(s) > 0"
        )));
    }
    // Snapping can only move the zero to the front; keep the (Re, Im) order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_eig(&spec.values[a], &spec.values[b]));
    let permute = |v: &Vec<CVector>| order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    spec.right_vectors = spec.right_vectors.as_ref().map(permute);
    spec.left_vectors = spec.left_vectors.as_ref().map(permute);
    spec.values = order.iter().map(|&i| spec.values[i]).collect();
    Ok(spec)
}

/// Stationary distribution of a row-stochastic matrix.
pub fn stationary_distribution(p: &CMatrix) -> Result<CVector> {
    check_stochastic(p)?;
    let n = p.nrows();
    let mut a = (p - CMatrix::identity(n, n)).transpose();
    for j in 0..n {
        a[(n - 1, j)] = C64::new(1.0, 0.0);
    }
    let mut b = CVector::zeros(n);
    b[n - 1] = C64::new(1.0, 0.0);
    let x = solve_linear(&a, &b).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::Reducible,
        other => other,
    })?;
    let mut pi = CVector::from_iterator(n, x.iter().map(|z| C64::new(z.re.max(0.0), 0.0)));
    if x.iter().any(|z| z.re < -1e-10) {
        return Err(Error::Reducible);
    }
    let total: f64 = pi.iter().map(|z| z.re).sum();
    pi /= C64::new(total, 0.0);
    Ok(pi)
}

/// `M(z) = zI + Λ − Q` together with the eigenvalues of `Λ − Qᵀ`, so that
/// `(Mᵀ(z))⁻¹` can be formed repeatedly with the pole check done cheaply.
#[derive(Debug, Clone)]
pub struct ModulatedResolvent {
    lambda: Vec<f64>,
    q: CMatrix,
    pub nu: Spectrum,
}

impl ModulatedResolvent {
    pub fn new(lambda: &[f64], q: &CMatrix) -> Result<Self> {
        let nu = nu_eigenvalues(lambda, q)?;
        Ok(Self {
            lambda: lambda.to_vec(),
            q: q.clone(),
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `Mᵀ(z) = zI + Λ − Qᵀ`.
    pub fn mt(&self, z: C64) -> CMatrix {
        let n = self.dim();
        let mut m = -self.q.transpose();
        for i in 0..n {
            m[(i, i)] += z + self.lambda[i];
        }
        m
    }

    pub fn mt_inverse(&self, z: C64) -> Result<CMatrix> {
        for nu in &self.nu.values {
            if (z + nu).norm() < 1e-10 * (1.0 + nu.norm()) {
                return Err(Error::NearSingular {
                    z,
                    reason: format!("z is within 1e-10 of −ν = {}", -nu),
                });
            }
        }
        let m = self.mt(z);
        inverse(&m).map_err(|e| Error::NearSingular {
            z,
            reason: e.to_string(),
        })
    }

    /// `L(η − s) = ∏ᵢ(s − μᵢ(η)) · (Mᵀ(η − s))⁻¹`, built from the adjugate so it
    /// stays finite at the zeros `s = μᵢ(η)`.
    pub fn cofactor_l(&self, z: C64) -> CMatrix {
        let sign = if self.dim().is_multiple_of(2) { 1.0 } else { -1.0 };
        adjugate(&self.mt(z)) * C64::new(sign, 0.0)
    }
}

/// Inverse of `Mᵀ(z) = zI + Λ − Qᵀ`.
pub fn mt_inverse(lambda: &[f64], q: &CMatrix, z: C64) -> Result<CMatrix> {
    ModulatedResolvent::new(lambda, q)?.mt_inverse(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn assert_values(spec: &Spectrum, expected: &[f64], tol: f64) {
        assert_eq!(spec.values.len(), expected.len());
        for (v, e) in spec.values.iter().zip(expected) {
            assert!((v - c(*e)).norm() < tol, "{v} vs {e}");
        }
    }

    #[test]
    fn eig_two_by_two() {
        let m = real_matrix(&[vec![3.0, -3.0], vec![-2.0, 4.0]]).unwrap();
        let spec = eig(&m).unwrap();
        assert_values(&spec, &[1.0, 6.0], 1e-12);
        for (v, r) in spec.values.iter().zip(spec.right_vectors.as_ref().unwrap()) {
            let resid = vec_norm_inf(&(&m * r - r * *v));
            assert!(resid <= 1e-9 * norm_inf(&m));
        }
    }

    #[test]
    fn eig_identity_and_singular() {
        let spec = eig(&CMatrix::identity(3, 3)).unwrap();
        assert_values(&spec, &[1.0, 1.0, 1.0], 1e-14);
        let m = real_matrix(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        assert_values(&eig(&m).unwrap(), &[0.0, 1.0], 1e-14);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = real_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut bad = m.clone();
        bad[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert_eq!(eig(&bad).unwrap_err(), Error::NonFinite("eig input"));
    }

    #[test]
    fn left_vectors_are_left_eigenvectors() {
        let m = real_matrix(&[vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 3.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let spec = eig(&m).unwrap();
        for (v, y) in spec.values.iter().zip(spec.left_vectors.as_ref().unwrap()) {
            let lhs = y.transpose() * &m;
            let rhs = y.transpose() * *v;
            assert!(vec_norm_inf(&(lhs - rhs).transpose()) < 1e-10);
        }
    }

    #[test]
    fn solve_linear_examples() {
        let b = real_vector(&[1.0, 2.0]);
        assert_eq!(solve_linear(&CMatrix::identity(2, 2), &b).unwrap(), b);
        let a = real_matrix(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let x = solve_linear(&a, &real_vector(&[2.0, 2.0])).unwrap();
        assert!(vec_norm_inf(&(x - real_vector(&[1.0, 0.5]))) < 1e-15);
        let a = real_matrix(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let x = solve_linear(&a, &real_vector(&[3.0, 1.0])).unwrap();
        assert!(vec_norm_inf(&(x - real_vector(&[2.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn solve_linear_singular() {
        let a = real_matrix(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_linear(&a, &real_vector(&[1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn nu_examples() {
        let q = real_matrix(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let spec = nu_eigenvalues(&[2.0, 3.0], &q).unwrap();
        let s5 = 5f64.sqrt();
        assert_values(&spec, &[(7.0 - s5) / 2.0, (7.0 + s5) / 2.0], 1e-12);

        let spec = nu_eigenvalues(&[5.0], &real_matrix(&[vec![0.0]]).unwrap()).unwrap();
        assert_values(&spec, &[5.0], 1e-15);

        let q = real_matrix(&[vec![-2.0, 2.0], vec![3.0, -3.0]]).unwrap();
        assert_values(&nu_eigenvalues(&[1.0, 1.0], &q).unwrap(), &[1.0, 6.0], 1e-12);
    }

    #[test]
    fn nu_warns_on_repeated_eigenvalues() {
        let q = real_matrix(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let spec = nu_eigenvalues(&[2.0, 1.0], &q).unwrap();
        assert!(matches!(
            spec.warnings.as_slice(),
            [Warning::NearDegenerateSpectrum { .. }]
        ));
    }

    #[test]
    fn nu_rejects_bad_generator() {
        let q = real_matrix(&[vec![-1.0, 0.5], vec![1.0, -1.0]]).unwrap();
        assert!(matches!(
            nu_eigenvalues(&[1.0, 1.0], &q),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn mu_shift() {
        let spec = nu_eigenvalues(&[5.0], &real_matrix(&[vec![0.0]]).unwrap()).unwrap();
        let mu = mu_of_eta(&spec, C64::new(1.0, 2.0));
        assert_eq!(mu.values, vec![C64::new(6.0, 2.0)]);
        let q = real_matrix(&[vec![-2.0, 2.0], vec![3.0, -3.0]]).unwrap();
        let mu = mu_of_eta(&nu_eigenvalues(&[1.0, 1.0], &q).unwrap(), c(0.5));
        assert_values(&mu, &[1.5, 6.5], 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let p = real_matrix(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let spec = gamma_eigenvalues(&[2.0, 3.0], &p).unwrap();
        assert_eq!(spec.values[0], c(0.0));
        assert_values(&spec, &[0.0, 2.5], 1e-12);

        let spec = gamma_eigenvalues(&[4.0], &real_matrix(&[vec![1.0]]).unwrap()).unwrap();
        assert_eq!(spec.values, vec![c(0.0)]);

        let p = real_matrix(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_values(&gamma_eigenvalues(&[1.0, 1.0], &p).unwrap(), &[0.0, 0.3], 1e-12);
    }

    #[test]
    fn gamma_rejects_reducible() {
        let p = CMatrix::identity(2, 2);
        assert!(matches!(
            gamma_eigenvalues(&[1.0, 2.0], &p),
            Err(Error::EigenvalueLocationViolation(_))
        ));
    }

    #[test]
    fn stationary_examples() {
        let p = real_matrix(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert!(vec_norm_inf(&(pi - real_vector(&[0.5, 0.5]))) < 1e-15);

        let p = real_matrix(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert!(vec_norm_inf(&(&pi - real_vector(&[2.0 / 3.0, 1.0 / 3.0]))) < 1e-14);
        let resid = p.transpose() * &pi - &pi;
        assert!(vec_norm_inf(&resid) <= 1e-12);

        assert_eq!(
            stationary_distribution(&CMatrix::identity(2, 2)).unwrap_err(),
            Error::Reducible
        );
    }

    #[test]
    fn mt_inverse_examples() {
        let q0 = real_matrix(&[vec![0.0]]).unwrap();
        let inv = mt_inverse(&[2.0], &q0, c(1.0)).unwrap();
        assert!((inv[(0, 0)] - c(1.0 / 3.0)).norm() < 1e-15);

        let q = real_matrix(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let inv = mt_inverse(&[2.0, 3.0], &q, c(0.0)).unwrap();
        let expected =
            real_matrix(&[vec![4.0 / 11.0, 1.0 / 11.0], vec![1.0 / 11.0, 3.0 / 11.0]]).unwrap();
        assert!(max_abs(&(inv - expected)) < 1e-14);

        let nu = nu_eigenvalues(&[2.0, 3.0], &q).unwrap();
        assert!(matches!(
            mt_inverse(&[2.0, 3.0], &q, -nu.values[0]),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn cofactor_form_matches_inverse() {
        let q = real_matrix(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        let res = ModulatedResolvent::new(&[2.0, 3.0], &q).unwrap();
        let eta = C64::new(0.4, 0.0);
        let mu = mu_of_eta(&res.nu, eta);
        let s = C64::new(0.7, 0.3);
        let prod: C64 = mu.values.iter().map(|m| s - m).product();
        let lhs = res.cofactor_l(eta - s) / prod;
        let rhs = res.mt_inverse(eta - s).unwrap();
        assert!(max_abs(&(lhs - &rhs)) <= 1e-12 * max_abs(&rhs));
    }

    #[test]
    fn adjugate_of_singular_matrix() {
        let a = real_matrix(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let adj = adjugate(&a);
        let expected = real_matrix(&[vec![4.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        assert!(max_abs(&(adj - expected)) < 1e-14);
    }

    #[test]
    fn least_squares_overdetermined() {
        let a = real_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = real_vector(&[1.0, 2.0, 3.0]);
        let sol = solve_least_squares(&a, &b).unwrap();
        assert!(vec_norm_inf(&(sol.x - real_vector(&[1.0, 2.0]))) < 1e-12);
        let rank_def = real_matrix(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(
            solve_least_squares(&rank_def, &b).unwrap_err(),
            Error::SingularSystem { null_dim: 1 }
        );
    }
}
