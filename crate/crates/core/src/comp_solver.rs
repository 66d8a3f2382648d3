//! Duality-based joint power control and beamforming for narrowband
//! multicell networks with quantized base stations.
//!
//! Uplink powers are found by the fixed-point iteration
//! `λ ← 1 / (α(1 + 1/γ)·hᴴ K⁻¹(Λ) h)`, combiners are the MMSE receivers at
//! that point, and downlink precoders are the combiners scaled so every
//! downlink SINR meets its target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ChannelSet;
use crate::numerics::{c64, solve_real, ComplexMatrix, ComplexVector, HermitianPd, NumericConfig};
use crate::sinr::{
    dl_sinr, k_matrix, mmse_combiners_and_sinr, received_power_diag, BeamformerSet, PowerAllocation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when the largest relative power change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Total power (noise-normalized) beyond which the targets are declared infeasible.
    pub power_cap: f64,
    /// Starting powers; all zero when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            power_cap: 1e6,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_total_power: f64,
    pub per_iteration_total_power: Vec<f64>,
    pub achieved_sinr: Vec<f64>,
    /// `|Σλ − α·Σ‖w‖²| / Σλ` when precoders were computed.
    pub duality_gap: Option<f64>,
}

/// Largest relative change between two iterates.
pub fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(o, n)| (n - o).abs() / o.max(1e-300))
        .fold(0.0, f64::max)
}

pub(crate) struct Trace {
    pub lambda: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub totals: Vec<f64>,
}

/// Jacobi fixed-point loop shared by every iterative solver. Stops once the
/// relative change is below `cfg.tol` and the extrapolated remaining error
/// below half of it.
pub(crate) fn iterate<F>(init: Vec<f64>, cfg: &SolverConfig, mut update: F) -> Result<Trace>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if let Some(index) = init.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::NegativePower {
            index,
            value: init[index],
        });
    }
    let mut lambda = init;
    let mut totals = Vec::new();
    let mut prev_step = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let next = update(&lambda)?;
        let total: f64 = next.iter().sum();
        if !total.is_finite() || total > cfg.power_cap {
            return Err(Error::Infeasible(format!(
                "total power {total:.3e} exceeds cap {:.3e} after {it} iterations",
                cfg.power_cap
            )));
        }
        let change = relative_change(&lambda, &next);
        // linear-rate estimate of the remaining distance to the fixed point,
        // from absolute steps so both terms share a scale
        let step = lambda.iter().zip(&next).map(|(o, n)| (n - o).abs()).fold(0.0, f64::max);
        let rate = if prev_step > 0.0 { step / prev_step } else { 1.0 };
        let remaining = if rate < 1.0 { change * rate / (1.0 - rate) } else { f64::INFINITY };
        prev_step = step;
        totals.push(total);
        lambda = next;
        // half the tolerance leaves room for error in the rate estimate
        if change < cfg.tol && (remaining < 0.5 * cfg.tol || change < 1e-3 * cfg.tol) {
            return Ok(Trace {
                lambda,
                converged: true,
                iterations: it,
                totals,
            });
        }
    }
    let growing = totals.len() >= 2 && totals[totals.len() - 1] > totals[totals.len() - 2];
    if growing {
        return Err(Error::Infeasible(format!(
            "power still growing after {} iterations",
            cfg.max_iter
        )));
    }
    Ok(Trace {
        lambda,
        converged: false,
        iterations: cfg.max_iter,
        totals,
    })
}

fn check_gamma(gamma: &[f64], n: usize) -> Result<()> {
    if gamma.len() != n {
        return Err(Error::DimensionMismatch(format!("{} targets for {n} users", gamma.len())));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Config(format!("target SINR must be positive, got {g}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("quantization gain must be in (0, 1], got {alpha}")))
    }
}

/// `K_i(Λ) = I + α·Σ λ h hᴴ + (1−α)·diag(H_i Λ H_iᴴ)` at BS `i`.
pub fn build_k(ch: &ChannelSet, i: usize, lambda: &[f64], alpha: f64) -> Result<HermitianPd> {
    if lambda.len() != ch.n_users_total() {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} users",
            lambda.len(),
            ch.n_users_total()
        )));
    }
    if let Some(index) = lambda.iter().position(|l| !(*l >= 0.0)) {
        return Err(Error::NegativePower {
            index,
            value: lambda[index],
        });
    }
    HermitianPd::new(k_matrix(ch, i, lambda, alpha, &received_power_diag(ch, i, lambda)))
}

/// One application of the power update to every user.
pub fn fixed_point_update(ch: &ChannelSet, gamma: &[f64], alpha: f64, lambda: &[f64]) -> Result<Vec<f64>> {
    let nu = ch.n_users();
    let mut out = vec![0.0; lambda.len()];
    for i in 0..ch.n_cells() {
        let q = if ch.n_users_total() < ch.n_antennas() {
            own_quadratic_forms(ch, i, lambda, alpha)?
        } else {
            let k = build_k(ch, i, lambda, alpha)?;
            (0..nu)
                .map(|u| k.inverse_quadratic_form(&ch.column(i, i, u)))
                .collect::<Result<Vec<f64>>>()?
        };
        for u in 0..nu {
            let idx = i * nu + u;
            out[idx] = 1.0 / (alpha * (1.0 + 1.0 / gamma[idx]) * q[u]);
        }
    }
    Ok(out)
}

/// `hᴴK_i⁻¹h` for the users of cell `i` in user space:
/// `K_i = D + α·HΛHᴴ` with diagonal `D`, so with `M = HᴴD⁻¹H` the forms are
/// the diagonal of `(I + α·MΛ)⁻¹M`.
pub(crate) fn own_quadratic_forms(ch: &ChannelSet, i: usize, lambda: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if let Some(index) = lambda.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::NegativePower {
            index,
            value: lambda[index],
        });
    }
    let (n, nu) = (ch.n_users_total(), ch.n_users());
    let d = received_power_diag(ch, i, lambda);
    let mut g = ch.stacked(i);
    for (m, dm) in d.iter().enumerate() {
        let s = 1.0 / (1.0 + (1.0 - alpha) * dm).sqrt();
        g.row_mut(m).scale_mut(s);
    }
    let m = g.adjoint() * &g;
    let a = ComplexMatrix::from_fn(n, n, |r, c| {
        let one = if r == c { 1.0 } else { 0.0 };
        c64(one, 0.0) + m[(r, c)] * (alpha * lambda[c])
    });
    let own = m.columns(i * nu, nu).into_owned();
    let x = a.lu().solve(&own).ok_or(Error::NotPositiveDefinite)?;
    let q: Vec<f64> = (0..nu).map(|u| x[(i * nu + u, u)].re).collect();
    if q.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(q)
}

/// Minimum-power uplink allocation meeting every target with MMSE receivers.
pub fn fixed_point_ul(
    ch: &ChannelSet,
    gamma: &[f64],
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<(PowerAllocation, SolveReport)> {
    let n = ch.n_users_total();
    check_gamma(gamma, n)?;
    check_alpha(alpha)?;
    let init = cfg.init.clone().unwrap_or_else(|| vec![0.0; n]);
    if init.len() != n {
        return Err(Error::DimensionMismatch(format!("{} initial powers for {n} users", init.len())));
    }
    let trace = iterate(init, cfg, |l| fixed_point_update(ch, gamma, alpha, l))?;
    let achieved_sinr = mmse_combiners_and_sinr(ch, &trace.lambda, alpha)?.1;
    let report = SolveReport {
        converged: trace.converged,
        iterations: trace.iterations,
        final_total_power: trace.lambda.iter().sum(),
        per_iteration_total_power: trace.totals,
        achieved_sinr,
        duality_gap: None,
    };
    Ok((
        PowerAllocation::new(ch.n_cells(), ch.n_users(), 1, trace.lambda)?,
        report,
    ))
}

/// MMSE combiners of every user for the given powers.
pub fn mmse_combiner(ch: &ChannelSet, lambda: &[f64], alpha: f64) -> Result<Vec<ComplexVector>> {
    Ok(mmse_combiners_and_sinr(ch, lambda, alpha)?.0)
}

/// Downlink constraint matrix `Σ` (rows: constrained user, columns: precoder).
pub fn build_sigma(ch: &ChannelSet, f: &[ComplexVector], gamma: &[f64], alpha: f64) -> DMatrix<f64> {
    let (nc, nu) = (ch.n_cells(), ch.n_users());
    let n = nc * nu;
    let a2 = alpha * alpha;
    let aq = alpha * (1.0 - alpha);
    DMatrix::from_fn(n, n, |r, c| {
        let (i, u) = (r / nu, r % nu);
        let j = c / nu;
        // channel from BS j to user (i, u)
        let h = ch.h(j, i).column(u);
        let fc = &f[c];
        let gain = h.dotc(fc).norm_sqr();
        let quant: f64 = aq * h.iter().zip(fc.iter()).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum::<f64>();
        if r == c {
            a2 / gamma[r] * gain - quant
        } else {
            -a2 * gain - quant
        }
    })
}

pub(crate) fn solve_tau(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = sigma.nrows();
    let tau = solve_real(sigma, &DVector::from_element(n, 1.0), NumericConfig::default().max_condition)
        .map_err(Error::SingularSigma)?;
    if let Some(index) = tau.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::NonPositiveTau {
            index,
            value: tau[index],
        });
    }
    Ok(tau.iter().copied().collect())
}

/// Downlink scaling `τ = Σ⁻¹·1` and precoders `w = √τ·f`.
pub fn dl_scaling(
    ch: &ChannelSet,
    f: &[ComplexVector],
    gamma: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, Vec<ComplexVector>)> {
    let n = ch.n_users_total();
    check_gamma(gamma, n)?;
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!("{} combiners for {n} users", f.len())));
    }
    let tau = solve_tau(&build_sigma(ch, f, gamma, alpha))?;
    let w = f.iter().zip(&tau).map(|(f, t)| f * c64(t.sqrt(), 0.0)).collect();
    Ok((tau, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintStatus {
    /// Met with equality (within tolerance).
    Active,
    /// Over-satisfied.
    Inactive,
    Violated,
}

/// Read-only audit of a candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionAudit {
    /// SINR of the MMSE receivers at the given uplink powers.
    pub ul_sinr: Vec<f64>,
    pub dl_sinr: Vec<f64>,
    /// Signed relative residuals `(SINR − γ)/γ`.
    pub ul_residual: Vec<f64>,
    pub dl_residual: Vec<f64>,
    pub ul_status: Vec<ConstraintStatus>,
    pub dl_status: Vec<ConstraintStatus>,
    pub total_ul_power: f64,
    pub total_dl_power: f64,
    pub duality_gap: Option<f64>,
}

impl SolutionAudit {
    pub fn max_abs_residual(&self) -> f64 {
        self.ul_residual
            .iter()
            .chain(&self.dl_residual)
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Tolerance used to classify constraints as active.
pub const ACTIVE_TOL: f64 = 1e-6;

pub(crate) fn classify(sinr: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<ConstraintStatus>) {
    sinr.iter()
        .zip(gamma)
        .map(|(s, g)| {
            let r = (s - g) / g;
            let status = if r.abs() <= ACTIVE_TOL {
                ConstraintStatus::Active
            } else if r > 0.0 {
                ConstraintStatus::Inactive
            } else {
                ConstraintStatus::Violated
            };
            (r, status)
        })
        .unzip()
}

pub(crate) fn duality_gap(ul_total: f64, dl_total: f64) -> Option<f64> {
    (ul_total > 0.0).then(|| (ul_total - dl_total).abs() / ul_total)
}

/// Recomputes SINRs, constraint residuals and the duality gap.
pub fn verify_solution(
    ch: &ChannelSet,
    lambda: &[f64],
    w: &[ComplexVector],
    gamma: &[f64],
    alpha: f64,
) -> Result<SolutionAudit> {
    check_gamma(gamma, ch.n_users_total())?;
    let ul = mmse_combiners_and_sinr(ch, lambda, alpha)?.1;
    let dl = dl_sinr(ch, w, alpha)?;
    let (ul_residual, ul_status) = classify(&ul, gamma);
    let (dl_residual, dl_status) = classify(&dl, gamma);
    let total_ul_power: f64 = lambda.iter().sum();
    let total_dl_power = alpha * w.iter().map(|x| x.norm_squared()).sum::<f64>();
    Ok(SolutionAudit {
        ul_sinr: ul,
        dl_sinr: dl,
        ul_residual,
        dl_residual,
        ul_status,
        dl_status,
        total_ul_power,
        total_dl_power,
        duality_gap: duality_gap(total_ul_power, total_dl_power),
    })
}

/// Powers, beamformers and report of a full joint solve.
#[derive(Debug, Clone)]
pub struct IcompSolution {
    pub power: PowerAllocation,
    pub beamformers: BeamformerSet,
    pub report: SolveReport,
    pub audit: SolutionAudit,
}

/// Uplink fixed point, MMSE combiners and downlink scaling in one call.
/// The report's `achieved_sinr` holds the downlink SINRs.
pub fn solve_icomp(ch: &ChannelSet, gamma: &[f64], alpha: f64, cfg: &SolverConfig) -> Result<IcompSolution> {
    let (power, mut report) = fixed_point_ul(ch, gamma, alpha, cfg)?;
    let f = mmse_combiner(ch, &power.lambda, alpha)?;
    let (tau, w) = dl_scaling(ch, &f, gamma, alpha)?;
    let audit = verify_solution(ch, &power.lambda, &w, gamma, alpha)?;
    report.achieved_sinr = audit.dl_sinr.clone();
    report.duality_gap = audit.duality_gap;
    Ok(IcompSolution {
        beamformers: BeamformerSet {
            n_cells: ch.n_cells(),
            n_users: ch.n_users(),
            n_subcarriers: 1,
            combiners: f,
            precoders: w,
            tau,
        },
        power,
        report,
        audit,
    })
}
