//! Self-checks run by the `validate` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::comp_solver::{solve_icomp, SolverConfig};
use crate::network::rayleigh_channels;
use crate::numerics::{block_circulant, c64, dft_matrix, extremal_eigenvalue, kron, taps_to_freq, ComplexMatrix, Extremal};
use crate::quantization::{lloyd_max_mse, quant_gain, Bits, BETA_TABLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Lloyd-Max distortion against the built-in table.
pub fn check_quantizer(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for b in 1..=5u32 {
        let mse = lloyd_max_mse(b, samples, seed + b as u64);
        let rel = (mse - BETA_TABLE[b as usize - 1]).abs() / BETA_TABLE[b as usize - 1];
        out.push(CheckResult::new(
            &format!("quantizer_{b}bit"),
            rel < 0.01,
            format!("measured {mse:.6}, table {}, relative error {rel:.2e}", BETA_TABLE[b as usize - 1]),
        ));
    }
    let closed = 1.0 - 2.0 / std::f64::consts::PI;
    let mse = lloyd_max_mse(1, samples, seed + 1);
    let rel = (mse - closed).abs() / closed;
    out.push(CheckResult::new(
        "quantizer_1bit_closed_form",
        rel < 0.005,
        format!("measured {mse:.6}, 1-2/pi = {closed:.6}, relative error {rel:.2e}"),
    ));
    out
}

/// Extremal eigenvalues of `U·diag(d)·Uᴴ` with a random unitary `U`.
pub fn check_eigen(trials: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let n = 2 + t % 7;
        let u = gaussian_matrix(n, n, &mut rng).qr().q();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let diag = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, d.iter().map(|x| c64(*x, 0.0))));
        let a = &u * diag * u.adjoint();
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        match (extremal_eigenvalue(&a, Extremal::Max), extremal_eigenvalue(&a, Extremal::Min)) {
            (Ok(hi), Ok(lo)) => worst = worst.max((hi - max).abs()).max((lo - min).abs()),
            _ => worst = f64::INFINITY,
        }
    }
    CheckResult::new("eigen", worst < 1e-10, format!("largest eigenvalue error {worst:.2e} over {trials} matrices"))
}

/// Zero duality gap and active downlink constraints on random instances.
pub fn check_duality(trials: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = quant_gain(Bits::Finite(3)).map(|q| q.alpha).unwrap_or(1.0);
    let (mut worst_gap, mut worst_res, mut solved): (f64, f64, usize) = (0.0, 0.0, 0);
    for _ in 0..trials {
        let ch = rayleigh_channels(2, 2, 8, 1, &mut rng);
        let gamma: Vec<f64> = (0..4).map(|_| 10f64.powf(rng.random_range(-0.5..0.5))).collect();
        if let Ok(s) = solve_icomp(&ch, &gamma, alpha, &SolverConfig::default()) {
            solved += 1;
            worst_gap = worst_gap.max(s.audit.duality_gap.unwrap_or(f64::INFINITY));
            worst_res = worst_res.max(s.audit.max_abs_residual());
        }
    }
    CheckResult::new(
        "duality",
        solved > 0 && worst_gap <= 1e-6 && worst_res <= 1e-6,
        format!("{solved}/{trials} solved, largest gap {worst_gap:.2e}, largest SINR residual {worst_res:.2e}"),
    )
}

/// DFT operators block-diagonalize the block-circulant channel.
pub fn check_block_circulant(trials: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (nb, nu) = (rng.random_range(1..5), rng.random_range(1..4));
        let k = rng.random_range(1..=8usize);
        let l = rng.random_range(1..=4usize.min(k));
        let taps: Vec<ComplexMatrix> = (0..l).map(|_| gaussian_matrix(nb, nu, &mut rng)).collect();
        let w = dft_matrix(k);
        let big = kron(&w, &ComplexMatrix::identity(nb, nb))
            * block_circulant(&taps, k)
            * kron(&w, &ComplexMatrix::identity(nu, nu)).adjoint();
        let Ok(freq) = taps_to_freq(&taps, k) else {
            worst = f64::INFINITY;
            continue;
        };
        for r in 0..k {
            for c in 0..k {
                let block = big.view((r * nb, c * nu), (nb, nu));
                let err = if r == c { (block - &freq[r]).camax() } else { block.camax() };
                worst = worst.max(err);
            }
        }
    }
    CheckResult::new("block_circulant", worst <= 1e-10, format!("largest block error {worst:.2e}"))
}

/// Every self-check with its default size.
pub fn run_self_checks(seed: u64) -> Vec<CheckResult> {
    let mut out = check_quantizer(1_000_000, seed);
    out.push(check_eigen(200, seed));
    out.push(check_duality(50, seed));
    out.push(check_block_circulant(50, seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_checks_pass() {
        assert!(check_eigen(20, 1).passed);
        assert!(check_duality(5, 1).passed);
        assert!(check_block_circulant(10, 1).passed);
    }
}
