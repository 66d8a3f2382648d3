//! Wideband OFDM version of the joint solver. Quantization happens in the
//! time domain, so the quantization noise seen on one subcarrier depends on
//! the powers of every subcarrier.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::comp_solver::{classify, duality_gap, iterate, solve_tau, SolutionAudit, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::network::ChannelSet;
use crate::numerics::{c64, dft_matrix, ComplexMatrix, ComplexVector, HermitianPd};
use crate::quantization::time_domain_row_norms;
use crate::sinr::{k_matrix, mmse_user, ofdm_dl_sinr, ofdm_ul_sinr, project_time_diag, BeamformerSet, PowerAllocation};

/// Channels, targets and quantization gain of a wideband problem.
#[derive(Debug, Clone)]
pub struct OfdmProblem {
    taps: ChannelSet,
    freq: Vec<ChannelSet>,
    gamma: Vec<f64>,
    alpha: f64,
}

impl OfdmProblem {
    /// `gamma` is indexed `(k·N_c + i)·N_u + u`.
    pub fn new(taps: ChannelSet, n_subcarriers: usize, gamma: Vec<f64>, alpha: f64) -> Result<Self> {
        let freq = taps.to_frequency(n_subcarriers)?;
        Self::from_parts(taps, freq, gamma, alpha)
    }

    /// Builds a problem from taps and precomputed per-subcarrier channels,
    /// checking that both describe the same channel.
    pub fn from_parts(taps: ChannelSet, freq: Vec<ChannelSet>, gamma: Vec<f64>, alpha: f64) -> Result<Self> {
        let expected = taps.to_frequency(freq.len())?;
        for (a, b) in expected.iter().zip(&freq) {
            if a.n_cells() != b.n_cells() || a.n_users() != b.n_users() || a.n_antennas() != b.n_antennas() {
                return Err(Error::DimensionMismatch("frequency channels differ in shape from taps".into()));
            }
            for i in 0..a.n_cells() {
                for j in 0..a.n_cells() {
                    let scale = a.h(i, j).camax().max(1e-300);
                    if (a.h(i, j) - b.h(i, j)).camax() > 1e-10 * scale {
                        return Err(Error::DimensionMismatch(format!(
                            "frequency channel ({i},{j}) inconsistent with taps"
                        )));
                    }
                }
            }
        }
        let n = taps.n_users_total() * freq.len();
        if gamma.len() != n {
            return Err(Error::DimensionMismatch(format!("{} targets for {n} user-subcarriers", gamma.len())));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Config(format!("target SINR must be positive, got {g}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("quantization gain must be in (0, 1], got {alpha}")));
        }
        Ok(Self {
            taps,
            freq,
            gamma,
            alpha,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.freq.len()
    }

    pub fn n_cells(&self) -> usize {
        self.taps.n_cells()
    }

    pub fn n_users(&self) -> usize {
        self.taps.n_users()
    }

    pub fn n_antennas(&self) -> usize {
        self.taps.n_antennas()
    }

    pub fn n_total(&self) -> usize {
        self.taps.n_users_total() * self.freq.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn taps(&self) -> &ChannelSet {
        &self.taps
    }

    pub fn freq(&self) -> &[ChannelSet] {
        &self.freq
    }

    fn per_sub(&self) -> usize {
        self.taps.n_users_total()
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.n_total() {
            return Err(Error::DimensionMismatch(format!(
                "{} powers for {} user-subcarriers",
                lambda.len(),
                self.n_total()
            )));
        }
        match lambda.iter().position(|l| !(*l >= 0.0)) {
            Some(index) => Err(Error::NegativePower {
                index,
                value: lambda[index],
            }),
            None => Ok(()),
        }
    }

    /// Un-scaled time-domain received-power diagonal at BS `i`, projected
    /// back onto a subcarrier (identical for every subcarrier).
    fn projected_core(&self, i: usize, lambda: &[f64]) -> Vec<f64> {
        let (k, nc, nu, nb) = (self.n_subcarriers(), self.n_cells(), self.n_users(), self.n_antennas());
        let per_sub = self.per_sub();
        let mut core = vec![0.0; k * nb];
        for j in 0..nc {
            let blocks: Vec<ComplexMatrix> = self.freq.iter().map(|f| f.h(i, j).clone()).collect();
            let weights: Vec<Vec<f64>> = (0..k)
                .map(|s| lambda[s * per_sub + j * nu..s * per_sub + (j + 1) * nu].to_vec())
                .collect();
            time_domain_row_norms(&blocks, &weights, nb, &mut core);
        }
        project_time_diag(&core, k, nb)
    }

    fn k_bar_with(&self, i: usize, k: usize, lambda: &[f64], core: &[f64]) -> ComplexMatrix {
        let per_sub = self.per_sub();
        k_matrix(&self.freq[k], i, &lambda[k * per_sub..(k + 1) * per_sub], self.alpha, core)
    }

    /// `K̄_{i,k} = I + α·Σ λ(k) g gᴴ + (1−α)·Ψ(k)·D·Ψ(k)ᴴ` where `D` is the
    /// time-domain received-power diagonal at BS `i`.
    pub fn build_k_bar(&self, lambda: &[f64], i: usize, k: usize) -> Result<HermitianPd> {
        self.check_lambda(lambda)?;
        let core = self.projected_core(i, lambda);
        HermitianPd::new(self.k_bar_with(i, k, lambda, &core))
    }

    /// One application of the power update over every `(i, u, k)`.
    pub fn update(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check_lambda(lambda)?;
        let (k, nc, nu) = (self.n_subcarriers(), self.n_cells(), self.n_users());
        let per_sub = self.per_sub();
        let mut out = vec![0.0; lambda.len()];
        for i in 0..nc {
            // the diagonal couples all subcarriers; compute it once per sweep
            let core = self.projected_core(i, lambda);
            for s in 0..k {
                let kb = HermitianPd::new(self.k_bar_with(i, s, lambda, &core))?;
                for u in 0..nu {
                    let idx = s * per_sub + i * nu + u;
                    let q = kb.inverse_quadratic_form(&self.freq[s].column(i, i, u))?;
                    out[idx] = 1.0 / (self.alpha * (1.0 + 1.0 / self.gamma[idx]) * q);
                }
            }
        }
        Ok(out)
    }

    /// Minimum-power uplink allocation over users and subcarriers.
    pub fn fixed_point(&self, cfg: &SolverConfig) -> Result<(PowerAllocation, SolveReport)> {
        let init = cfg.init.clone().unwrap_or_else(|| vec![0.0; self.n_total()]);
        self.check_lambda(&init)?;
        let trace = iterate(init, cfg, |l| self.update(l))?;
        let achieved_sinr = self.mmse(&trace.lambda)?.1;
        let report = SolveReport {
            converged: trace.converged,
            iterations: trace.iterations,
            final_total_power: trace.lambda.iter().sum(),
            per_iteration_total_power: trace.totals,
            achieved_sinr,
            duality_gap: None,
        };
        Ok((
            PowerAllocation::new(self.n_cells(), self.n_users(), self.n_subcarriers(), trace.lambda)?,
            report,
        ))
    }

    fn mmse(&self, lambda: &[f64]) -> Result<(Vec<ComplexVector>, Vec<f64>)> {
        self.check_lambda(lambda)?;
        let (k, nc, nu) = (self.n_subcarriers(), self.n_cells(), self.n_users());
        let per_sub = self.per_sub();
        let mut f = vec![ComplexVector::zeros(0); lambda.len()];
        let mut s = vec![0.0; lambda.len()];
        for i in 0..nc {
            let core = self.projected_core(i, lambda);
            for sub in 0..k {
                let kb = self.k_bar_with(i, sub, lambda, &core);
                for u in 0..nu {
                    let idx = sub * per_sub + i * nu + u;
                    let (fu, su) = mmse_user(&kb, &self.freq[sub].column(i, i, u), lambda[idx], self.alpha)?;
                    f[idx] = fu;
                    s[idx] = su;
                }
            }
        }
        Ok((f, s))
    }

    /// MMSE combiners per `(i, u, k)`.
    pub fn mmse_combiner(&self, lambda: &[f64]) -> Result<Vec<ComplexVector>> {
        Ok(self.mmse(lambda)?.0)
    }

    /// SINR achieved by the MMSE combiners.
    pub fn mmse_sinr(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mmse(lambda)?.1)
    }

    /// Downlink constraint matrix over all `(i, u, k)`.
    pub fn build_sigma(&self, f: &[ComplexVector], structure: SigmaStructure) -> DMatrix<f64> {
        let (k, nu) = (self.n_subcarriers(), self.n_users());
        let per_sub = self.per_sub();
        let n = self.n_total();
        let a2 = self.alpha * self.alpha;
        let aq = self.alpha * (1.0 - self.alpha);
        let w = dft_matrix(k);
        // Σ_n |W[ℓ,n]|²|W[k,n]|²
        let coef = DMatrix::from_fn(k, k, |a, b| (0..k).map(|n| w[(a, n)].norm_sqr() * w[(b, n)].norm_sqr()).sum::<f64>());
        let overlap = |h: &ComplexVector, f: &ComplexVector| -> f64 {
            h.iter().zip(f.iter()).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum()
        };
        DMatrix::from_fn(n, n, |r, c| {
            let (sr, ir, ur) = (r / per_sub, (r % per_sub) / nu, r % nu);
            let (sc, jc) = (c / per_sub, (c % per_sub) / nu);
            let user_c = c % per_sub;
            // subcarrier-sr channel from BS jc to user (ir, ur)
            let h = self.freq[sr].h(jc, ir).column(ur).into_owned();
            let quant = match structure {
                SigmaStructure::Coupled => aq * coef[(sc, sr)] * overlap(&h, &f[c]),
                SigmaStructure::BlockDiagonal => {
                    if sc != sr {
                        return 0.0;
                    }
                    (0..k)
                        .map(|l| aq * coef[(l, sr)] * overlap(&h, &f[l * per_sub + user_c]))
                        .sum()
                }
            };
            let gain = if sc == sr { h.dotc(&f[c]).norm_sqr() } else { 0.0 };
            if r == c {
                a2 / self.gamma[r] * gain - quant
            } else {
                -a2 * gain - quant
            }
        })
    }

    /// Downlink scaling `τ = Σ⁻¹·1` and precoders `w = √τ·f`.
    pub fn dl_scaling(&self, f: &[ComplexVector], structure: SigmaStructure) -> Result<(Vec<f64>, Vec<ComplexVector>)> {
        if f.len() != self.n_total() {
            return Err(Error::DimensionMismatch(format!(
                "{} combiners for {} user-subcarriers",
                f.len(),
                self.n_total()
            )));
        }
        let tau = solve_tau(&self.build_sigma(f, structure))?;
        let w = f.iter().zip(&tau).map(|(f, t)| f * c64(t.sqrt(), 0.0)).collect();
        Ok((tau, w))
    }

    /// Recomputes SINRs, residuals and the wideband duality gap.
    pub fn verify(&self, lambda: &[f64], w: &[ComplexVector]) -> Result<SolutionAudit> {
        let (f, ul) = self.mmse(lambda)?;
        debug_assert_eq!(f.len(), lambda.len());
        let dl = ofdm_dl_sinr(&self.freq, w, self.alpha)?;
        let (ul_residual, ul_status) = classify(&ul, &self.gamma);
        let (dl_residual, dl_status) = classify(&dl, &self.gamma);
        let total_ul_power: f64 = lambda.iter().sum();
        let total_dl_power = self.alpha * w.iter().map(|x| x.norm_squared()).sum::<f64>();
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

    /// Fixed point, combiners and downlink scaling in one call.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<OfdmSolution> {
        let (power, mut report) = self.fixed_point(cfg)?;
        let f = self.mmse_combiner(&power.lambda)?;
        let (tau, w) = self.dl_scaling(&f, SigmaStructure::Coupled)?;
        let audit = self.verify(&power.lambda, &w)?;
        report.achieved_sinr = audit.dl_sinr.clone();
        report.duality_gap = audit.duality_gap;
        Ok(OfdmSolution {
            beamformers: BeamformerSet {
                n_cells: self.n_cells(),
                n_users: self.n_users(),
                n_subcarriers: self.n_subcarriers(),
                combiners: f,
                precoders: w,
                tau,
            },
            power,
            report,
            audit,
        })
    }

    /// Uplink SINR per `(i, u, k)` for arbitrary combiners.
    pub fn ul_sinr(&self, f: &[ComplexVector], lambda: &[f64]) -> Result<Vec<f64>> {
        ofdm_ul_sinr(&self.freq, f, lambda, self.alpha)
    }
}

/// Layout of the wideband downlink constraint system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SigmaStructure {
    /// Every precoder's quantization noise enters every subcarrier's
    /// constraint with its own scaling factor.
    #[default]
    Coupled,
    /// One block per subcarrier; the cross-subcarrier quantization terms of
    /// a user are lumped onto that user's scaling at the constrained
    /// subcarrier. Exact only when the scalings agree across subcarriers.
    BlockDiagonal,
}

#[derive(Debug, Clone)]
pub struct OfdmSolution {
    pub power: PowerAllocation,
    pub beamformers: BeamformerSet,
    pub report: SolveReport,
    pub audit: SolutionAudit,
}
