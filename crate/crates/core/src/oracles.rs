//! Brute-force reference computations used only by unit tests.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{ComplexMatrix, ComplexVector};

pub fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| random_complex(rng))
}

pub fn random_vector<R: Rng>(n: usize, rng: &mut R) -> ComplexVector {
    ComplexVector::from_fn(n, |_, _| random_complex(rng))
}

pub fn random_hermitian_psd<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = random_matrix(n, n, rng);
    &g * g.adjoint()
}

pub fn random_hpd<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
    random_hermitian_psd(n, rng) + ComplexMatrix::identity(n, n) * Complex64::new(0.5, 0.0)
}

fn minor(a: &ComplexMatrix, row: usize, col: usize) -> ComplexMatrix {
    let n = a.nrows();
    ComplexMatrix::from_fn(n - 1, n - 1, |r, c| {
        a[(if r < row { r } else { r + 1 }, if c < col { c } else { c + 1 })]
    })
}

/// Determinant by Laplace expansion along the first row.
pub fn laplace_det(a: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    (0..n)
        .map(|c| {
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            a[(0, c)] * laplace_det(&minor(a, 0, c)) * sign
        })
        .sum()
}

/// Inverse through the adjugate divided by the determinant.
pub fn cofactor_inverse(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.nrows();
    let det = laplace_det(a);
    ComplexMatrix::from_fn(n, n, |r, c| {
        let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
        laplace_det(&minor(a, c, r)) * sign / det
    })
}

/// Eigenvalues of a Hermitian matrix as the real roots of its characteristic
/// polynomial (Faddeev–LeVerrier coefficients, grid scan plus bisection).
pub fn charpoly_eigenvalues(a: &ComplexMatrix) -> Vec<f64> {
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let a = a / Complex64::new(scale, 0.0);
    // coeffs[k] multiplies x^k
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
    coeffs[n] = Complex64::new(1.0, 0.0);
    let eye = ComplexMatrix::identity(n, n);
    let mut m = ComplexMatrix::zeros(n, n);
    for k in 1..=n {
        m = &a * &m + &eye * coeffs[n - k + 1];
        coeffs[n - k] = -(&a * &m).trace() / Complex64::new(k as f64, 0.0);
    }
    let p: Vec<f64> = coeffs.iter().map(|c| c.re).collect();
    let eval = |x: f64| p.iter().rev().fold(0.0, |acc, c| acc * x + c);

    let steps = 400_000;
    let (lo, hi) = (-1.01, 1.01);
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_v = eval(lo);
    for s in 1..=steps {
        let x = lo + (hi - lo) * s as f64 / steps as f64;
        let v = eval(x);
        if v == 0.0 {
            roots.push(x);
        } else if prev_v != 0.0 && v.signum() != prev_v.signum() {
            let (mut a0, mut b0, mut fa) = (prev_x, x, prev_v);
            for _ in 0..200 {
                let mid = 0.5 * (a0 + b0);
                let fm = eval(mid);
                if fm == 0.0 {
                    a0 = mid;
                    b0 = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a0 = mid;
                    fa = fm;
                } else {
                    b0 = mid;
                }
            }
            roots.push(0.5 * (a0 + b0));
        }
        prev_x = x;
        prev_v = v;
    }
    roots.iter().map(|r| r * scale).collect()
}
