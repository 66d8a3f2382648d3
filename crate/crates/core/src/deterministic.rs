//! Closed-form uplink powers for homogeneous per-cell powers and targets,
//! obtained from an eigenvalue lower bound on each cell's minimum MMSE SINR.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ChannelSet;
use crate::numerics::{extremal_eigenvalue, solve_real, ComplexMatrix, Extremal, HermitianPd, NumericConfig};
use crate::sinr::PowerAllocation;

/// Largest eigenvalues of the projected channel quantities of every cell pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEigenQuantities {
    /// `A[i][j] = eig_M(H†_ii H_ij H_ijᴴ H†_iiᴴ)`.
    pub a: DMatrix<f64>,
    /// `B[i] = eig_M((H_iiᴴ H_ii)⁻¹)`.
    pub b: Vec<f64>,
    /// `C[i][j] = eig_M(H†_ii diag(H_ij H_ijᴴ) H†_iiᴴ)`.
    pub c: DMatrix<f64>,
}

/// Pseudo-inverse `(Hᴴ H)⁻¹ Hᴴ` and `(Hᴴ H)⁻¹` of a full-column-rank matrix.
fn pseudo_inverse(h: &ComplexMatrix, cell: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let gram = h.adjoint() * h;
    let emax = extremal_eigenvalue(&gram, Extremal::Max)?;
    let emin = extremal_eigenvalue(&gram, Extremal::Min)?;
    if !(emin > 1e-12 * emax) {
        return Err(Error::RankDeficient(cell));
    }
    let pd = HermitianPd::new(gram).map_err(|_| Error::RankDeficient(cell))?;
    Ok((pd.solve_matrix(&h.adjoint())?, pd.inverse()))
}

pub fn eigen_quantities(ch: &ChannelSet) -> Result<CellEigenQuantities> {
    let nc = ch.n_cells();
    let mut a = DMatrix::zeros(nc, nc);
    let mut c = DMatrix::zeros(nc, nc);
    let mut b = vec![0.0; nc];
    for i in 0..nc {
        let (pinv, gram_inv) = pseudo_inverse(ch.h(i, i), i)?;
        b[i] = extremal_eigenvalue(&gram_inv, Extremal::Max)?;
        for j in 0..nc {
            let hij = ch.h(i, j);
            let x = &pinv * hij;
            a[(i, j)] = extremal_eigenvalue(&(&x * x.adjoint()), Extremal::Max)?.max(0.0);
            let d = ComplexMatrix::from_diagonal(&(hij * hij.adjoint()).diagonal());
            c[(i, j)] = extremal_eigenvalue(&(&pinv * d * pinv.adjoint()), Extremal::Max)?.max(0.0);
        }
    }
    Ok(CellEigenQuantities { a, b, c })
}

/// Solves `λ = (1/α)(I − (1/α)ΓΩ)⁻¹Γb` restricted to the `active` cells.
pub fn solve_cell_system(q: &CellEigenQuantities, gamma: &[f64], alpha: f64, active: &[usize]) -> Result<Vec<f64>> {
    let n = active.len();
    let m = DMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (active[r], active[c]);
        let omega = if i == j {
            (1.0 - alpha) * q.c[(i, i)]
        } else {
            alpha * q.a[(i, j)] + (1.0 - alpha) * q.c[(i, j)]
        };
        let eye = if r == c { 1.0 } else { 0.0 };
        eye - gamma[i] * omega / alpha
    });
    let rhs = DVector::from_iterator(n, active.iter().map(|&i| gamma[i] * q.b[i] / alpha));
    let x = solve_real(&m, &rhs, NumericConfig::default().max_condition).map_err(Error::SingularSystem)?;
    Ok(x.iter().copied().collect())
}

/// Outcome of the negative-power repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    /// Per-cell powers, zero for removed cells.
    pub lambda: Vec<f64>,
    /// Cells switched off, in removal order.
    pub zeroed_cells: Vec<usize>,
    /// Whether the all-negative rule (absolute value) was applied.
    pub absolute_value_applied: bool,
}

/// Makes per-cell powers nonnegative. When every power is negative their
/// absolute values are taken; otherwise the cell with the largest power
/// (lowest index on ties) is switched off and `resolve` recomputes the
/// remaining cells, until no negative power is left.
pub fn repair_negative<F>(raw: Vec<f64>, mut resolve: F) -> Result<Repair>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    let n = raw.len();
    let mut active: Vec<usize> = (0..n).collect();
    let mut current = raw;
    let mut zeroed_cells = Vec::new();
    let mut absolute_value_applied = false;
    while !active.is_empty() && current.iter().any(|l| *l < 0.0) {
        if current.iter().all(|l| *l < 0.0) {
            current.iter_mut().for_each(|l| *l = l.abs());
            absolute_value_applied = true;
            break;
        }
        let mut pick = 0;
        for (p, l) in current.iter().enumerate() {
            if *l > current[pick] {
                pick = p;
            }
        }
        zeroed_cells.push(active.remove(pick));
        current = if active.is_empty() { Vec::new() } else { resolve(&active)? };
    }
    let mut lambda = vec![0.0; n];
    for (cell, l) in active.iter().zip(&current) {
        lambda[*cell] = *l;
    }
    Ok(Repair {
        lambda,
        zeroed_cells,
        absolute_value_applied,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSolution {
    /// Output of the first linear solve, before repair.
    pub raw_lambda: Vec<f64>,
    pub repair: Repair,
    /// Per-cell power broadcast to every user of the cell.
    pub power: PowerAllocation,
}

/// Homogeneous per-cell powers for per-cell targets `gamma` (linear).
pub fn solve_deterministic(ch: &ChannelSet, gamma: &[f64], alpha: f64) -> Result<DeterministicSolution> {
    let nc = ch.n_cells();
    if gamma.len() != nc {
        return Err(Error::DimensionMismatch(format!("{} targets for {nc} cells", gamma.len())));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Config(format!("target SINR must be positive, got {g}")));
    }
    let q = eigen_quantities(ch)?;
    let all: Vec<usize> = (0..nc).collect();
    let raw_lambda = solve_cell_system(&q, gamma, alpha, &all)?;
    let repair = repair_negative(raw_lambda.clone(), |active| solve_cell_system(&q, gamma, alpha, active))?;
    let nu = ch.n_users();
    let per_user = (0..nc * nu).map(|idx| repair.lambda[idx / nu]).collect();
    Ok(DeterministicSolution {
        raw_lambda,
        power: PowerAllocation::new(nc, nu, 1, per_user)?,
        repair,
    })
}
