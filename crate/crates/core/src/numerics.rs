//! Complex linear-algebra kernels shared by the solvers: Hermitian solves,
//! extremal eigenvalues, the unitary DFT and block-circulant helpers.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Numerical tolerances used across the crate.
#[derive(Debug, Clone, Copy)]
pub struct NumericConfig {
    /// Allowed `‖A − Aᴴ‖max / ‖A‖max` before a matrix is rejected as non-Hermitian.
    pub hermitian_tol: f64,
    /// Convergence threshold of the eigenvalue iteration.
    pub eig_tol: f64,
    /// Iteration cap of the eigenvalue iteration.
    pub eig_max_iter: usize,
    /// Condition number above which a real linear system counts as singular.
    pub max_condition: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            hermitian_tol: 1e-10,
            eig_tol: 1e-15,
            eig_max_iter: 100_000,
            max_condition: 1e12,
        }
    }
}

fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn check_finite(a: &ComplexMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Checks the Hermitian tolerance and returns `(A + Aᴴ)/2`.
pub fn symmetrize(a: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a)?;
    let adj = a.adjoint();
    let scale = max_abs(a);
    let asymmetry = max_abs(&(a - &adj));
    if asymmetry > tol * scale {
        return Err(Error::NotHermitian { asymmetry, scale });
    }
    Ok((a + adj) * Complex64::new(0.5, 0.0))
}

/// A Hermitian positive definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct HermitianPd {
    matrix: ComplexMatrix,
    chol: Cholesky<Complex64, Dyn>,
}

impl HermitianPd {
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        Self::with_config(a, &NumericConfig::default())
    }

    pub fn with_config(a: ComplexMatrix, cfg: &NumericConfig) -> Result<Self> {
        let matrix = symmetrize(&a, cfg.hermitian_tol)?;
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        // complex square roots never fail, so check the pivots explicitly
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| !(l[(i, i)].re > 0.0) || l[(i, i)].im.abs() > 1e-12 * l[(i, i)].re) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &ComplexVector) -> Result<ComplexVector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} vs matrix dimension {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(self.chol.solve(b))
    }

    pub fn solve_matrix(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows vs matrix dimension {}",
                b.nrows(),
                self.dim()
            )));
        }
        Ok(self.chol.solve(b))
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.chol.inverse()
    }

    /// `bᴴ A⁻¹ b`, real and positive for nonzero `b`.
    pub fn inverse_quadratic_form(&self, b: &ComplexVector) -> Result<f64> {
        let x = self.solve(b)?;
        Ok(b.dotc(&x).re)
    }
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{} vs rhs length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    HermitianPd::new(a.clone())?.solve(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Max,
    Min,
}

/// Largest or smallest eigenvalue of a Hermitian matrix.
pub fn extremal_eigenvalue(a: &ComplexMatrix, which: Extremal) -> Result<f64> {
    extremal_eigenvalue_with(a, which, &NumericConfig::default())
}

pub fn extremal_eigenvalue_with(
    a: &ComplexMatrix,
    which: Extremal,
    cfg: &NumericConfig,
) -> Result<f64> {
    let sym = symmetrize(a, cfg.hermitian_tol)?;
    let eig = SymmetricEigen::try_new(sym, cfg.eig_tol, cfg.eig_max_iter)
        .ok_or(Error::NoConvergence(cfg.eig_max_iter))?;
    let values = eig.eigenvalues.iter().copied();
    Ok(match which {
        Extremal::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Extremal::Min => values.fold(f64::INFINITY, f64::min),
    })
}

/// Unitary `K×K` DFT matrix with entries `e^{-j2πkn/K}/√K`.
pub fn dft_matrix(k: usize) -> ComplexMatrix {
    assert!(k >= 1, "DFT size must be positive");
    let scale = 1.0 / (k as f64).sqrt();
    ComplexMatrix::from_fn(k, k, |r, c| {
        // reduce the exponent first so large K keeps full phase accuracy
        let phase = -2.0 * PI * ((r * c) % k) as f64 / k as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Per-subcarrier channel `G(k) = Σ_ℓ H_ℓ e^{-j2πkℓ/K}`.
pub fn taps_to_freq(taps: &[ComplexMatrix], k: usize) -> Result<Vec<ComplexMatrix>> {
    let first = taps
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty tap list".into()))?;
    if taps.len() > k {
        return Err(Error::DimensionMismatch(format!(
            "{} taps exceed {} subcarriers",
            taps.len(),
            k
        )));
    }
    let (rows, cols) = first.shape();
    if taps.iter().any(|t| t.shape() != (rows, cols)) {
        return Err(Error::DimensionMismatch("taps differ in shape".into()));
    }
    Ok((0..k)
        .map(|sub| {
            let mut g = ComplexMatrix::zeros(rows, cols);
            for (l, tap) in taps.iter().enumerate() {
                let phase = -2.0 * PI * ((sub * l) % k) as f64 / k as f64;
                g += tap * Complex64::from_polar(1.0, phase);
            }
            g
        })
        .collect())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Stacked time-domain channel whose block `(r, c)` is `H_{(r−c) mod K}`
/// (zero for delays beyond the tap list).
pub fn block_circulant(taps: &[ComplexMatrix], k: usize) -> ComplexMatrix {
    let (rows, cols) = taps[0].shape();
    let mut out = ComplexMatrix::zeros(k * rows, k * cols);
    for r in 0..k {
        for c in 0..k {
            let delay = (r + k - c) % k;
            if let Some(tap) = taps.get(delay) {
                out.view_mut((r * rows, c * cols), (rows, cols)).copy_from(tap);
            }
        }
    }
    out
}

/// Solves a real square system, rejecting it when the 2-norm condition
/// number of the row- and column-equilibrated matrix exceeds
/// `max_condition`. Returns that condition number on failure.
pub fn solve_real(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_condition: f64,
) -> std::result::Result<DVector<f64>, f64> {
    let inv_max = |it: &mut dyn Iterator<Item = f64>| {
        let m = it.fold(0.0, |m: f64, x| m.max(x.abs()));
        if m > 0.0 && m.is_finite() { 1.0 / m } else { 1.0 }
    };
    let rows: Vec<f64> = (0..a.nrows()).map(|r| inv_max(&mut a.row(r).iter().copied())).collect();
    let scaled_rows = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * rows[r]);
    let cols: Vec<f64> = (0..a.ncols()).map(|c| inv_max(&mut scaled_rows.column(c).iter().copied())).collect();
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| scaled_rows[(r, c)] * cols[c]);

    let sv = scaled.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > max_condition {
        return Err(cond);
    }
    let rhs = DVector::from_fn(b.len(), |r, _| b[r] * rows[r]);
    let y = scaled.lu().solve(&rhs).ok_or(cond)?;
    Ok(DVector::from_fn(y.len(), |c, _| y[c] * cols[c]))
}

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{charpoly_eigenvalues, cofactor_inverse, random_hermitian_psd, random_hpd};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solve_identity_and_scaled() {
        let a = ComplexMatrix::identity(4, 4);
        let b = ComplexVector::from_vec((1..=4).map(|v| c64(v as f64, 0.0)).collect());
        let x = hermitian_solve(&a, &b).unwrap();
        assert_eq!(x, b);

        let a = ComplexMatrix::identity(2, 2) * c64(2.0, 0.0);
        let b = ComplexVector::from_vec(vec![c64(2.0, 0.0), c64(0.0, 2.0)]);
        let x = hermitian_solve(&a, &b).unwrap();
        assert_abs_diff_eq!(x[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1].im, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_matches_cofactor_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hpd(6, &mut rng);
        let b = ComplexVector::from_fn(6, |i, _| c64(i as f64 - 2.0, 0.5 * i as f64));
        let x = hermitian_solve(&a, &b).unwrap();
        let oracle = cofactor_inverse(&a) * &b;
        for (u, v) in x.iter().zip(oracle.iter()) {
            assert!((u - v).norm() <= 1e-8);
        }
    }

    #[test]
    fn solve_rejects_bad_input() {
        let a = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c64(1.0, 0.0), c64(-1.0, 0.0)]));
        let b = ComplexVector::from_element(2, c64(1.0, 0.0));
        assert!(matches!(hermitian_solve(&a, &b), Err(Error::NotPositiveDefinite)));
        let b3 = ComplexVector::from_element(3, c64(1.0, 0.0));
        assert!(matches!(
            hermitian_solve(&ComplexMatrix::identity(2, 2), &b3),
            Err(Error::DimensionMismatch(_))
        ));
        let mut skew = ComplexMatrix::identity(2, 2);
        skew[(0, 1)] = c64(1.0, 0.0);
        assert!(matches!(hermitian_solve(&skew, &b), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let i3 = ComplexMatrix::identity(3, 3);
        assert_abs_diff_eq!(extremal_eigenvalue(&i3, Extremal::Max).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(extremal_eigenvalue(&i3, Extremal::Min).unwrap(), 1.0, epsilon = 1e-14);
        let d = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![
            c64(1.0, 0.0),
            c64(2.0, 0.0),
            c64(3.0, 0.0),
        ]));
        assert_abs_diff_eq!(extremal_eigenvalue(&d, Extremal::Max).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(extremal_eigenvalue(&d, Extremal::Min).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigen_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian_psd(5, &mut rng);
        let roots = charpoly_eigenvalues(&a);
        let max = extremal_eigenvalue(&a, Extremal::Max).unwrap();
        let min = extremal_eigenvalue(&a, Extremal::Min).unwrap();
        assert!((max - roots.last().unwrap()).abs() <= 1e-8 * max.max(1.0));
        assert!((min - roots[0]).abs() <= 1e-8 * max.max(1.0));
    }

    #[test]
    fn dft_small_cases() {
        let w1 = dft_matrix(1);
        assert_eq!(w1[(0, 0)], c64(1.0, 0.0));
        let w2 = dft_matrix(2);
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(w2[(1, 1)].re, -s, epsilon = 1e-15);
        assert_abs_diff_eq!(w2[(1, 1)].im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w2[(0, 1)].re, s, epsilon = 1e-15);
        let w8 = dft_matrix(8);
        let p = &w8 * w8.adjoint();
        let eye = ComplexMatrix::identity(8, 8);
        assert!((p - eye).iter().all(|z| z.norm() <= 1e-12));
    }

    #[test]
    fn flat_and_single_tap_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = crate::oracles::random_matrix(3, 2, &mut rng);
        for g in taps_to_freq(std::slice::from_ref(&h), 4).unwrap() {
            assert_eq!(g, h);
        }
        let mut taps = vec![h.clone()];
        taps.extend((0..3).map(|_| ComplexMatrix::zeros(3, 2)));
        for g in taps_to_freq(&taps, 4).unwrap() {
            assert!((g - &h).iter().all(|z| z.norm() < 1e-15));
        }
        assert!(taps_to_freq(&taps, 3).is_err());
    }

    #[test]
    fn freq_channels_match_circulant_diagonalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nb, nu, l, k) = (3, 2, 3, 8);
        let taps: Vec<_> = (0..l).map(|_| crate::oracles::random_matrix(nb, nu, &mut rng)).collect();
        let w = dft_matrix(k);
        let psi_b = kron(&w, &ComplexMatrix::identity(nb, nb));
        let psi_u = kron(&w, &ComplexMatrix::identity(nu, nu));
        let diag = &psi_b * block_circulant(&taps, k) * psi_u.adjoint();
        let freq = taps_to_freq(&taps, k).unwrap();
        for r in 0..k {
            for c in 0..k {
                let block = diag.view((r * nb, c * nu), (nb, nu));
                if r == c {
                    assert!((block - &freq[r]).iter().all(|z| z.norm() <= 1e-10));
                } else {
                    assert!(block.iter().all(|z| z.norm() <= 1e-10));
                }
            }
        }
    }

    #[test]
    fn solve_real_ignores_scaling() {
        let a = DMatrix::from_row_slice(2, 2, &[1e-9, 2e-9, 3e7, 1e8]);
        let b = DVector::from_vec(vec![1e-9, 5e7]);
        let x = solve_real(&a, &b, 1e3).unwrap();
        // oracle: Cramer's rule
        let det = 1e-9 * 1e8 - 2e-9 * 3e7;
        let x0 = (1e-9 * 1e8 - 2e-9 * 5e7) / det;
        let x1 = (1e-9 * 5e7 - 3e7 * 1e-9) / det;
        assert!((x[0] - x0).abs() < 1e-12 && (x[1] - x1).abs() < 1e-12);
    }

    #[test]
    fn solve_real_flags_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(solve_real(&a, &b, 1e12).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_real(&a, &b, 1e12).unwrap();
        assert_abs_diff_eq!(x[1], 0.25, epsilon = 1e-15);
    }
}
