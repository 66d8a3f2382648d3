//! Per-cell baseline without inter-cell coordination.
//!
//! Every base station designs its receive/transmit directions from its own
//! users only (the in-cell fixed point and MMSE combiners). Downlink powers
//! are then found by an outer loop in which each cell meets its targets
//! treating the interference and quantization noise caused by the other
//! cells' current precoders as fixed noise, after which that noise is
//! updated. Infeasible targets show up as diverging power.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comp_solver::{build_sigma, fixed_point_ul, mmse_combiner, relative_change, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::network::ChannelSet;
use crate::numerics::{c64, solve_real, ComplexVector, NumericConfig};
use crate::sinr::{dl_sinr, BeamformerSet, PowerAllocation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PercellConfig {
    /// Outer-loop stopping threshold on the largest relative change of τ.
    pub tol: f64,
    pub max_outer: usize,
    /// Settings of each cell's in-cell fixed point.
    pub inner: SolverConfig,
    /// Total downlink power beyond which the targets are declared infeasible.
    pub power_cap: f64,
}

impl Default for PercellConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 200,
            inner: SolverConfig::default(),
            power_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PercellSolution {
    /// In-cell uplink powers that define each cell's combiners.
    pub power: PowerAllocation,
    pub beamformers: BeamformerSet,
    /// `final_total_power` is the downlink power `α·Σ‖w‖²`; `achieved_sinr`
    /// holds the downlink SINRs.
    pub report: SolveReport,
}

pub fn percell_solve(ch: &ChannelSet, gamma: &[f64], alpha: f64, cfg: &PercellConfig) -> Result<PercellSolution> {
    let (nc, nu) = (ch.n_cells(), ch.n_users());
    let n = nc * nu;
    if gamma.len() != n {
        return Err(Error::DimensionMismatch(format!("{} targets for {n} users", gamma.len())));
    }

    let mut lambda = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..nc {
        let own = ch.single_cell(i);
        let g = &gamma[i * nu..(i + 1) * nu];
        let (p, _) = fixed_point_ul(&own, g, alpha, &cfg.inner)?;
        f.extend(mmse_combiner(&own, &p.lambda, alpha)?);
        lambda.extend(p.lambda);
    }

    let sigma = build_sigma(ch, &f, gamma, alpha);
    let norms: Vec<f64> = f.iter().map(|x| x.norm_squared()).collect();
    let max_condition = NumericConfig::default().max_condition;
    let block = |i: usize| sigma.view((i * nu, i * nu), (nu, nu)).into_owned();
    let blocks: Vec<DMatrix<f64>> = (0..nc).map(block).collect();

    let mut tau = vec![0.0; n];
    let mut totals = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_outer {
        rounds += 1;
        let mut next = vec![0.0; n];
        for i in 0..nc {
            // own-cell constraints with other cells' contributions frozen
            let rhs = DVector::from_fn(nu, |u, _| {
                let r = i * nu + u;
                1.0 - (0..n)
                    .filter(|c| c / nu != i)
                    .map(|c| sigma[(r, c)] * tau[c])
                    .sum::<f64>()
            });
            let x = solve_real(&blocks[i], &rhs, max_condition).map_err(Error::SingularSigma)?;
            for u in 0..nu {
                let t = x[u];
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Infeasible(format!(
                        "cell {i} cannot meet its targets against the current interference (round {rounds})"
                    )));
                }
                next[i * nu + u] = t;
            }
        }
        let total = alpha * next.iter().zip(&norms).map(|(t, q)| t * q).sum::<f64>();
        if !(total <= cfg.power_cap) {
            return Err(Error::Infeasible(format!(
                "downlink power {total:.3e} exceeds cap {:.3e} in round {rounds}",
                cfg.power_cap
            )));
        }
        totals.push(total);
        let change = relative_change(&tau, &next);
        tau = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Infeasible(format!(
            "per-cell powers still changing after {} rounds",
            cfg.max_outer
        )));
    }

    let w: Vec<ComplexVector> = f.iter().zip(&tau).map(|(f, t)| f * c64(t.sqrt(), 0.0)).collect();
    let achieved_sinr = dl_sinr(ch, &w, alpha)?;
    let report = SolveReport {
        converged,
        iterations: rounds,
        final_total_power: *totals.last().unwrap_or(&0.0),
        per_iteration_total_power: totals,
        achieved_sinr,
        duality_gap: None,
    };
    Ok(PercellSolution {
        power: PowerAllocation::new(nc, nu, 1, lambda)?,
        beamformers: BeamformerSet {
            n_cells: nc,
            n_users: nu,
            n_subcarriers: 1,
            combiners: f,
            precoders: w,
            tau,
        },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comp_solver::solve_icomp;
    use crate::network::rayleigh_channels;
    use crate::numerics::ComplexMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_cell_matches_joint_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = rayleigh_channels(1, 3, 8, 1, &mut rng);
        let gamma = [1.5, 2.0, 0.8];
        let joint = solve_icomp(&ch, &gamma, 0.9, &SolverConfig::default()).unwrap();
        let pc = percell_solve(&ch, &gamma, 0.9, &PercellConfig::default()).unwrap();
        for (a, b) in pc.power.lambda.iter().zip(&joint.power.lambda) {
            assert!(rel(*a, *b) < 1e-9);
        }
        for (a, b) in pc.beamformers.tau.iter().zip(&joint.beamformers.tau) {
            assert!(rel(*a, *b) < 1e-9);
        }
        assert!(rel(pc.report.final_total_power, joint.report.final_total_power) < 1e-9);
    }

    #[test]
    fn decoupled_cells_match_joint_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let full = rayleigh_channels(2, 2, 6, 1, &mut rng);
        let z = ComplexMatrix::zeros(6, 2);
        let ch = ChannelSet::narrowband(2, vec![full.h(0, 0).clone(), z.clone(), z, full.h(1, 1).clone()]).unwrap();
        let gamma = [1.2, 0.7, 2.5, 1.0];
        for alpha in [1.0, 0.85] {
            let joint = solve_icomp(&ch, &gamma, alpha, &SolverConfig::default()).unwrap();
            let pc = percell_solve(&ch, &gamma, alpha, &PercellConfig::default()).unwrap();
            for (a, b) in pc.power.lambda.iter().zip(&joint.power.lambda) {
                assert!(rel(*a, *b) < 1e-9);
            }
            assert!(rel(pc.report.final_total_power, joint.report.final_total_power) < 1e-9);
        }
    }

    #[test]
    fn never_beats_joint_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut compared = 0;
        for _ in 0..30 {
            let ch = rayleigh_channels(2, 2, 8, 1, &mut rng);
            let gamma: Vec<f64> = (0..4).map(|_| 10f64.powf(rng.random_range(-0.5..0.5))).collect();
            let alpha = 0.9;
            let (Ok(joint), Ok(pc)) = (
                solve_icomp(&ch, &gamma, alpha, &SolverConfig::default()),
                percell_solve(&ch, &gamma, alpha, &PercellConfig::default()),
            ) else {
                continue;
            };
            compared += 1;
            assert!(pc.report.final_total_power >= joint.report.final_total_power - 1e-9);
            for (s, g) in pc.report.achieved_sinr.iter().zip(&gamma) {
                assert!(rel(*s, *g) < 1e-6);
            }
        }
        assert!(compared > 10);
    }

    #[test]
    fn strong_interference_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = rayleigh_channels(2, 2, 2, 1, &mut rng);
        let r = percell_solve(&ch, &[100.0; 4], 0.9, &PercellConfig::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
