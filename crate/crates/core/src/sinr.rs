//! Exact uplink/downlink SINR evaluation under the additive quantization
//! noise model, narrowband and OFDM.
//!
//! Per-user quantities are indexed `(k·N_c + i)·N_u + u` (subcarrier `k`,
//! cell `i`, user `u`); narrowband problems have a single subcarrier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ChannelSet;
use crate::numerics::{c64, ComplexMatrix, ComplexVector, HermitianPd};
use crate::quantization::{dl_quant_cov, ofdm_dl_quant_cov_diag, ofdm_ul_quant_cov_diag, ul_quant_cov};

/// Nonnegative transmit powers in noise-normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub n_cells: usize,
    pub n_users: usize,
    pub n_subcarriers: usize,
    pub lambda: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(n_cells: usize, n_users: usize, n_subcarriers: usize, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != n_cells * n_users * n_subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "{} powers for {n_cells}x{n_users}x{n_subcarriers}",
                lambda.len()
            )));
        }
        if let Some(index) = lambda.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::NegativePower {
                index,
                value: lambda[index],
            });
        }
        Ok(Self {
            n_cells,
            n_users,
            n_subcarriers,
            lambda,
        })
    }

    pub fn index(&self, k: usize, i: usize, u: usize) -> usize {
        (k * self.n_cells + i) * self.n_users + u
    }

    pub fn get(&self, k: usize, i: usize, u: usize) -> f64 {
        self.lambda[self.index(k, i, u)]
    }

    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }
}

/// Combiners, precoders and the scaling linking them (`w = √τ·f`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub n_cells: usize,
    pub n_users: usize,
    pub n_subcarriers: usize,
    pub combiners: Vec<ComplexVector>,
    pub precoders: Vec<ComplexVector>,
    pub tau: Vec<f64>,
}

impl BeamformerSet {
    /// Total transmit power `α·Σ‖w‖²` of quantized precoders.
    pub fn dl_power(&self, alpha: f64) -> f64 {
        alpha * self.precoders.iter().map(|w| w.norm_squared()).sum::<f64>()
    }
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what}: got {got}, expected {expected}")))
    }
}

fn check_vectors(what: &str, v: &[ComplexVector], count: usize, dim: usize) -> Result<()> {
    check_len(what, v.len(), count)?;
    match v.iter().find(|x| x.len() != dim) {
        Some(x) => Err(Error::DimensionMismatch(format!(
            "{what}: vector of length {} for {dim} antennas",
            x.len()
        ))),
        None => Ok(()),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `Σ_m d_m |f_m|²`.
fn diag_form(d: &[f64], f: &ComplexVector) -> f64 {
    d.iter().zip(f.iter()).map(|(d, z)| d * z.norm_sqr()).sum()
}

/// SINR of every user with quantization-noise diagonal `quant[i]` at BS `i`.
fn ul_sinr_with(
    ch: &ChannelSet,
    f: &[ComplexVector],
    lambda: &[f64],
    alpha: f64,
    quant: &[Vec<f64>],
) -> Vec<f64> {
    let (nc, nu) = (ch.n_cells(), ch.n_users());
    let a2 = alpha * alpha;
    let mut out = vec![0.0; nc * nu];
    for i in 0..nc {
        for u in 0..nu {
            let fi = &f[i * nu + u];
            let mut signal = 0.0;
            let mut interference = 0.0;
            for j in 0..nc {
                let h = ch.h(i, j);
                for v in 0..nu {
                    let p = lambda[j * nu + v] * h.column(v).dotc(fi).norm_sqr();
                    if (j, v) == (i, u) {
                        signal = p;
                    } else {
                        interference += p;
                    }
                }
            }
            let den = a2 * interference + a2 * fi.norm_squared() + diag_form(&quant[i], fi);
            out[i * nu + u] = ratio(a2 * signal, den);
        }
    }
    out
}

/// Uplink SINR of every user for combiners `f` and powers `lambda`.
pub fn ul_sinr(ch: &ChannelSet, f: &[ComplexVector], lambda: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let n = ch.n_users_total();
    check_vectors("combiners", f, n, ch.n_antennas())?;
    check_len("powers", lambda.len(), n)?;
    let quant = (0..ch.n_cells())
        .map(|i| ul_quant_cov(&ch.stacked(i), lambda, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(ul_sinr_with(ch, f, lambda, alpha, &quant))
}

fn dl_sinr_with(ch: &ChannelSet, w: &[ComplexVector], alpha: f64, quant: &[Vec<f64>], quant_scale: f64) -> Vec<f64> {
    let (nc, nu) = (ch.n_cells(), ch.n_users());
    let a2 = alpha * alpha;
    let mut out = vec![0.0; nc * nu];
    for i in 0..nc {
        for u in 0..nu {
            let mut signal = 0.0;
            let mut interference = 0.0;
            let mut qn = 0.0;
            for j in 0..nc {
                let h = ch.h(j, i).column(u);
                for v in 0..nu {
                    let p = h.dotc(&w[j * nu + v]).norm_sqr();
                    if (j, v) == (i, u) {
                        signal = p;
                    } else {
                        interference += p;
                    }
                }
                qn += h.iter().zip(&quant[j]).map(|(z, d)| d * z.norm_sqr()).sum::<f64>();
            }
            out[i * nu + u] = ratio(a2 * signal, a2 * interference + quant_scale * qn + 1.0);
        }
    }
    out
}

/// Downlink SINR of every user for precoders `w` (the downlink channel is
/// the conjugate transpose of the stored uplink channel).
pub fn dl_sinr(ch: &ChannelSet, w: &[ComplexVector], alpha: f64) -> Result<Vec<f64>> {
    check_vectors("precoders", w, ch.n_users_total(), ch.n_antennas())?;
    let nu = ch.n_users();
    let quant: Vec<Vec<f64>> = (0..ch.n_cells())
        .map(|j| {
            let wj = ComplexMatrix::from_columns(&w[j * nu..(j + 1) * nu]);
            dl_quant_cov(&wj, alpha)
        })
        .collect();
    Ok(dl_sinr_with(ch, w, alpha, &quant, 1.0))
}

/// `I + α·Σ λ h hᴴ + (1−α)·diag(quant_core)` at BS `i`, where `quant_core`
/// is the un-scaled received-power diagonal.
pub(crate) fn k_matrix(ch: &ChannelSet, i: usize, lambda: &[f64], alpha: f64, quant_core: &[f64]) -> ComplexMatrix {
    let nb = ch.n_antennas();
    let nu = ch.n_users();
    let mut k = ComplexMatrix::identity(nb, nb);
    for j in 0..ch.n_cells() {
        let h = ch.h(i, j);
        // H diag(αλ) Hᴴ as one rank-N_u update
        let scaled = ComplexMatrix::from_fn(nb, nu, |r, v| h[(r, v)] * (alpha * lambda[j * nu + v]).sqrt());
        k += &scaled * scaled.adjoint();
    }
    for (m, d) in quant_core.iter().enumerate() {
        k[(m, m)] += c64((1.0 - alpha) * d, 0.0);
    }
    k
}

/// `diag(H_i Λ H_iᴴ)` at BS `i`.
pub(crate) fn received_power_diag(ch: &ChannelSet, i: usize, lambda: &[f64]) -> Vec<f64> {
    let nu = ch.n_users();
    let mut d = vec![0.0; ch.n_antennas()];
    for j in 0..ch.n_cells() {
        let h = ch.h(i, j);
        for v in 0..nu {
            let l = lambda[j * nu + v];
            for (m, z) in h.column(v).iter().enumerate() {
                d[m] += l * z.norm_sqr();
            }
        }
    }
    d
}

/// MMSE combiner `C_z⁻¹h` and the SINR it achieves, `α²λ·hᴴC_z⁻¹h`, for
/// user `(i, u)` given `K_i`. `C_z = α·K_i − α²λ h hᴴ`.
pub(crate) fn mmse_user(k: &ComplexMatrix, h: &ComplexVector, lambda_self: f64, alpha: f64) -> Result<(ComplexVector, f64)> {
    let cz = k * c64(alpha, 0.0) - h * h.adjoint() * c64(alpha * alpha * lambda_self, 0.0);
    let pd = HermitianPd::new(cz)?;
    let f = pd.solve(h)?;
    let sinr = alpha * alpha * lambda_self * h.dotc(&f).re;
    Ok((f, sinr))
}

/// SINR achieved by the MMSE combiner of every user.
pub fn mmse_ul_sinr(ch: &ChannelSet, lambda: &[f64], alpha: f64) -> Result<Vec<f64>> {
    Ok(mmse_combiners_and_sinr(ch, lambda, alpha)?.1)
}

pub(crate) fn mmse_combiners_and_sinr(
    ch: &ChannelSet,
    lambda: &[f64],
    alpha: f64,
) -> Result<(Vec<ComplexVector>, Vec<f64>)> {
    check_len("powers", lambda.len(), ch.n_users_total())?;
    if let Some(index) = lambda.iter().position(|l| !(*l >= 0.0)) {
        return Err(Error::NegativePower {
            index,
            value: lambda[index],
        });
    }
    let nu = ch.n_users();
    let mut f = Vec::with_capacity(lambda.len());
    let mut s = Vec::with_capacity(lambda.len());
    for i in 0..ch.n_cells() {
        let k = k_matrix(ch, i, lambda, alpha, &received_power_diag(ch, i, lambda));
        for u in 0..nu {
            let (fu, su) = mmse_user(&k, &ch.column(i, i, u), lambda[i * nu + u], alpha)?;
            f.push(fu);
            s.push(su);
        }
    }
    Ok((f, s))
}

/// Time-domain uplink quantization diagonal at every BS (`K·N_b` each,
/// time-major), scaled by `α(1−α)` and including the noise term.
pub(crate) fn ofdm_ul_quant_diags(freq: &[ChannelSet], lambda: &[f64], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let k = freq.len();
    let (nc, nu) = (freq[0].n_cells(), freq[0].n_users());
    let per_sub = nc * nu;
    (0..nc)
        .map(|i| {
            let g: Vec<Vec<ComplexMatrix>> = (0..nc)
                .map(|j| freq.iter().map(|f| f.h(i, j).clone()).collect())
                .collect();
            let l: Vec<Vec<Vec<f64>>> = (0..nc)
                .map(|j| {
                    (0..k)
                        .map(|s| lambda[s * per_sub + j * nu..s * per_sub + (j + 1) * nu].to_vec())
                        .collect()
                })
                .collect();
            ofdm_ul_quant_cov_diag(&g, &l, alpha, k)
        })
        .collect()
}

/// `diag(Ψ(k)·diag(d)·Ψ(k)ᴴ)` for a time-major diagonal `d` of length
/// `K·N_b`. Every DFT entry has modulus `1/√K`, so the result is the
/// average over time samples and does not depend on `k`.
pub(crate) fn project_time_diag(d: &[f64], k: usize, nb: usize) -> Vec<f64> {
    (0..nb)
        .map(|m| (0..k).map(|n| d[n * nb + m]).sum::<f64>() / k as f64)
        .collect()
}

fn check_ofdm(freq: &[ChannelSet]) -> Result<()> {
    let first = freq
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no subcarriers".into()))?;
    if freq.iter().any(|f| {
        f.n_cells() != first.n_cells() || f.n_users() != first.n_users() || f.n_antennas() != first.n_antennas()
    }) {
        return Err(Error::DimensionMismatch("subcarrier channel sets differ in shape".into()));
    }
    Ok(())
}

/// OFDM uplink SINR per `(i, u, k)` with per-subcarrier combiners.
pub fn ofdm_ul_sinr(freq: &[ChannelSet], f: &[ComplexVector], lambda: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_ofdm(freq)?;
    let k = freq.len();
    let per_sub = freq[0].n_users_total();
    let nb = freq[0].n_antennas();
    check_vectors("combiners", f, per_sub * k, nb)?;
    check_len("powers", lambda.len(), per_sub * k)?;
    let diags = ofdm_ul_quant_diags(freq, lambda, alpha)?;
    let projected: Vec<Vec<f64>> = diags.iter().map(|d| project_time_diag(d, k, nb)).collect();
    let mut out = Vec::with_capacity(per_sub * k);
    for (s, ch) in freq.iter().enumerate() {
        let range = s * per_sub..(s + 1) * per_sub;
        out.extend(ul_sinr_with(ch, &f[range.clone()], &lambda[range], alpha, &projected));
    }
    Ok(out)
}

/// Time-domain downlink quantization diagonal of every BS.
pub(crate) fn ofdm_dl_quant_diags(freq: &[ChannelSet], w: &[ComplexVector], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let (nc, nu) = (freq[0].n_cells(), freq[0].n_users());
    let per_sub = nc * nu;
    (0..nc)
        .map(|j| {
            let blocks: Vec<ComplexMatrix> = (0..freq.len())
                .map(|s| ComplexMatrix::from_columns(&w[s * per_sub + j * nu..s * per_sub + (j + 1) * nu]))
                .collect();
            ofdm_dl_quant_cov_diag(&blocks, alpha)
        })
        .collect()
}

/// OFDM downlink SINR per `(i, u, k)` with per-subcarrier precoders.
pub fn ofdm_dl_sinr(freq: &[ChannelSet], w: &[ComplexVector], alpha: f64) -> Result<Vec<f64>> {
    check_ofdm(freq)?;
    let k = freq.len();
    let per_sub = freq[0].n_users_total();
    let nb = freq[0].n_antennas();
    check_vectors("precoders", w, per_sub * k, nb)?;
    let diags = ofdm_dl_quant_diags(freq, w, alpha)?;
    let projected: Vec<Vec<f64>> = diags.iter().map(|d| project_time_diag(d, k, nb)).collect();
    let mut out = Vec::with_capacity(per_sub * k);
    for (s, ch) in freq.iter().enumerate() {
        out.extend(dl_sinr_with(ch, &w[s * per_sub..(s + 1) * per_sub], alpha, &projected, 1.0));
    }
    Ok(out)
}
