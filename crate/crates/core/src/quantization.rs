//! Additive quantization noise model: quantization gain, quantization-noise
//! covariance diagonals and a Lloyd-Max scalar quantizer used to certify the
//! built-in distortion table.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, ComplexMatrix};

/// Relative distortion of the MMSE scalar quantizer of a unit Gaussian for
/// 1..=5 bits.
pub const BETA_TABLE: [f64; 5] = [0.3634, 0.1175, 0.03454, 0.009497, 0.002499];

/// ADC/DAC resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bits {
    Finite(u32),
    Infinite,
}

impl Bits {
    pub fn from_int(bits: i64) -> Result<Self> {
        if bits <= 0 || bits > u32::MAX as i64 {
            Err(Error::InvalidBits(bits))
        } else {
            Ok(Bits::Finite(bits as u32))
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bits::Finite(b) => write!(f, "{b}"),
            Bits::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Bits::Infinite),
            other => {
                let v: i64 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse bit depth '{s}'")))?;
                Bits::from_int(v)
            }
        }
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bits::Finite(b) => s.serialize_u32(*b),
            Bits::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Bits::from_int(v).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Quantization gain `alpha = 1 − beta` for a given resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub bits: Bits,
    pub alpha: f64,
    pub beta: f64,
}

pub fn quant_gain(bits: Bits) -> Result<QuantConfig> {
    let beta = match bits {
        Bits::Infinite => 0.0,
        Bits::Finite(0) => return Err(Error::InvalidBits(0)),
        Bits::Finite(b @ 1..=5) => BETA_TABLE[b as usize - 1],
        Bits::Finite(b) => PI * 3f64.sqrt() / 2.0 * 2f64.powi(-2 * b as i32),
    };
    Ok(QuantConfig {
        bits,
        alpha: 1.0 - beta,
        beta,
    })
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(a < X < b)` for a unit normal, evaluated in the tail that keeps precision.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * erfc(-a / SQRT_2) - 0.5 * erfc(b / SQRT_2)
    }
}

/// Lloyd-Max quantizer for a real unit-variance Gaussian.
#[derive(Debug, Clone)]
pub struct LloydMaxQuantizer {
    /// Decision thresholds between consecutive levels (`levels.len() - 1` of them).
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
}

impl LloydMaxQuantizer {
    /// Trains on the Gaussian density until no level moves more than `1e-9`.
    pub fn train(bits: u32) -> Self {
        assert!((1..=16).contains(&bits), "unsupported bit depth {bits}");
        let n = 1usize << bits;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut levels: Vec<f64> = (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        let mut thresholds = vec![0.0; n - 1];
        for _ in 0..1_000_000 {
            for (t, w) in thresholds.iter_mut().zip(levels.windows(2)) {
                *t = 0.5 * (w[0] + w[1]);
            }
            let mut max_move: f64 = 0.0;
            for (i, level) in levels.iter_mut().enumerate() {
                let lo = if i == 0 { f64::NEG_INFINITY } else { thresholds[i - 1] };
                let hi = if i == n - 1 { f64::INFINITY } else { thresholds[i] };
                let centroid = (std_normal_pdf(lo) - std_normal_pdf(hi)) / normal_mass(lo, hi);
                max_move = max_move.max((centroid - *level).abs());
                *level = centroid;
            }
            if max_move < 1e-9 {
                break;
            }
        }
        for (t, w) in thresholds.iter_mut().zip(levels.windows(2)) {
            *t = 0.5 * (w[0] + w[1]);
        }
        Self { thresholds, levels }
    }

    pub fn quantize(&self, x: f64) -> f64 {
        let idx = self.thresholds.partition_point(|&t| t < x);
        self.levels[idx]
    }

    /// Quantizes `x` assuming the input has standard deviation `sigma`.
    pub fn quantize_scaled(&self, x: f64, sigma: f64) -> f64 {
        sigma * self.quantize(x / sigma)
    }
}

/// Monte Carlo relative distortion `E|r − Q(r)|² / E|r|²` of the Lloyd-Max
/// quantizer applied to the real and imaginary parts of `CN(0,1)` samples.
pub fn lloyd_max_mse(bits: u32, sample_count: usize, seed: u64) -> f64 {
    let q = LloydMaxQuantizer::train(bits);
    let sigma = std::f64::consts::FRAC_1_SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut err, mut pow) = (0.0, 0.0);
    for _ in 0..sample_count {
        for _ in 0..2 {
            let x: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
            let e = x - q.quantize_scaled(x, sigma);
            err += e * e;
            pow += x * x;
        }
    }
    err / pow
}

fn check_powers(lambda: &[f64]) -> Result<()> {
    match lambda.iter().position(|&l| !(l >= 0.0) || !l.is_finite()) {
        Some(index) => Err(Error::NegativePower {
            index,
            value: lambda[index],
        }),
        None => Ok(()),
    }
}

/// Diagonal of `α(1−α)·diag(H Λ Hᴴ + I)` for the stacked uplink channel of
/// one base station (`H` is `N_b × N_cN_u`, one power per column).
pub fn ul_quant_cov(h: &ComplexMatrix, lambda: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if h.ncols() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} channel columns vs {} powers",
            h.ncols(),
            lambda.len()
        )));
    }
    check_powers(lambda)?;
    let scale = alpha * (1.0 - alpha);
    Ok((0..h.nrows())
        .map(|m| {
            let p: f64 = lambda
                .iter()
                .enumerate()
                .map(|(c, l)| l * h[(m, c)].norm_sqr())
                .sum();
            scale * (p + 1.0)
        })
        .collect())
}

/// Diagonal of `α(1−α)·diag(W Wᴴ)` for one base station's precoders.
pub fn dl_quant_cov(w: &ComplexMatrix, alpha: f64) -> Vec<f64> {
    let scale = alpha * (1.0 - alpha);
    w.row_iter()
        .map(|row| scale * row.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect()
}

/// Squared row norms of `Ψᴴ·blkdiag(X(0), …, X(K−1))` with `Ψ = W_DFT ⊗ I`,
/// laid out time-major (`n·rows + m`). Each `X(k)` is `rows × cols` and its
/// columns are weighted by `weights[k][col]`.
pub(crate) fn time_domain_row_norms(
    blocks: &[ComplexMatrix],
    weights: &[Vec<f64>],
    rows: usize,
    out: &mut [f64],
) {
    let k = blocks.len();
    let w = dft_matrix(k);
    for n in 0..k {
        for (sub, block) in blocks.iter().enumerate() {
            // |[W^H]_{n,sub}|^2
            let coef = w[(sub, n)].norm_sqr();
            for m in 0..rows {
                let s: f64 = block
                    .row(m)
                    .iter()
                    .zip(&weights[sub])
                    .map(|(z, wt)| wt * z.norm_sqr())
                    .sum();
                out[n * rows + m] += coef * s;
            }
        }
    }
}

/// Diagonal of the stacked OFDM uplink quantization covariance at one base
/// station. `freq[j][k]` is the frequency-domain channel from the users of
/// cell `j` at subcarrier `k`; `lambda[j][k]` holds their powers.
pub fn ofdm_ul_quant_cov_diag(
    freq: &[Vec<ComplexMatrix>],
    lambda: &[Vec<Vec<f64>>],
    alpha: f64,
    k: usize,
) -> Result<Vec<f64>> {
    let nb = freq
        .first()
        .and_then(|f| f.first())
        .map(|g| g.nrows())
        .ok_or_else(|| Error::DimensionMismatch("empty channel list".into()))?;
    if freq.len() != lambda.len() || freq.iter().any(|f| f.len() != k) || lambda.iter().any(|l| l.len() != k) {
        return Err(Error::DimensionMismatch("inconsistent subcarrier count".into()));
    }
    for per_cell in lambda {
        for l in per_cell {
            check_powers(l)?;
        }
    }
    let mut core = vec![0.0; k * nb];
    for (blocks, weights) in freq.iter().zip(lambda) {
        if blocks.iter().zip(weights).any(|(g, w)| g.ncols() != w.len() || g.nrows() != nb) {
            return Err(Error::DimensionMismatch("channel/power shape mismatch".into()));
        }
        time_domain_row_norms(blocks, weights, nb, &mut core);
    }
    let scale = alpha * (1.0 - alpha);
    Ok(core.into_iter().map(|d| scale * (d + 1.0)).collect())
}

/// Diagonal of `α(1−α)·diag(Ψᴴ W̲ W̲ᴴ Ψ)` for one base station's OFDM precoders.
pub fn ofdm_dl_quant_cov_diag(w: &[ComplexMatrix], alpha: f64) -> Result<Vec<f64>> {
    let k = w.len();
    let nb = w
        .first()
        .map(|m| m.nrows())
        .ok_or_else(|| Error::DimensionMismatch("empty precoder list".into()))?;
    if w.iter().any(|m| m.nrows() != nb) {
        return Err(Error::DimensionMismatch("precoder blocks differ in rows".into()));
    }
    let ones: Vec<Vec<f64>> = w.iter().map(|m| vec![1.0; m.ncols()]).collect();
    let mut core = vec![0.0; k * nb];
    time_domain_row_norms(w, &ones, nb, &mut core);
    let scale = alpha * (1.0 - alpha);
    Ok(core.into_iter().map(|d| scale * d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{block_circulant, c64, kron, taps_to_freq};
    use crate::oracles::random_matrix;
    use approx::assert_relative_eq;
    use rand_distr::StandardNormal;

    #[test]
    fn gain_values() {
        let inf = quant_gain(Bits::Infinite).unwrap();
        assert_eq!(inf.alpha, 1.0);
        assert_eq!(inf.beta, 0.0);
        let six = quant_gain(Bits::Finite(6)).unwrap();
        assert_relative_eq!(six.beta, PI * 3f64.sqrt() / 2.0 / 4096.0, max_relative = 1e-15);
        assert_relative_eq!(six.beta, 6.642e-4, max_relative = 1e-3);
        assert!(matches!(quant_gain(Bits::Finite(0)), Err(Error::InvalidBits(0))));
        assert!(matches!(Bits::from_int(-2), Err(Error::InvalidBits(-2))));
        for b in 1..=8 {
            let a0 = quant_gain(Bits::Finite(b)).unwrap();
            let a1 = quant_gain(Bits::Finite(b + 1)).unwrap();
            assert!(a1.alpha > a0.alpha);
            assert_eq!(a0.alpha, 1.0 - a0.beta);
        }
    }

    #[test]
    fn bits_parse_and_serde() {
        assert_eq!("inf".parse::<Bits>().unwrap(), Bits::Infinite);
        assert_eq!("3".parse::<Bits>().unwrap(), Bits::Finite(3));
        assert!("0".parse::<Bits>().is_err());
        let s = serde_json::to_string(&vec![Bits::Finite(2), Bits::Infinite]).unwrap();
        assert_eq!(s, "[2,\"inf\"]");
        let back: Vec<Bits> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![Bits::Finite(2), Bits::Infinite]);
    }

    #[test]
    fn trained_quantizer_matches_closed_forms() {
        // 1 bit: levels ±sqrt(2/π), distortion 1 − 2/π
        let q = LloydMaxQuantizer::train(1);
        assert_relative_eq!(q.levels[1], (2.0 / PI).sqrt(), max_relative = 1e-9);
        let q3 = LloydMaxQuantizer::train(3);
        assert_eq!(q3.levels.len(), 8);
        assert!(q3.levels.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lloyd_max_distortion_limits() {
        let d8 = lloyd_max_mse(8, 100_000, 1);
        assert!(d8 < 1e-4, "{d8}");
        let d1 = lloyd_max_mse(1, 200_000, 2);
        assert_relative_eq!(d1, 1.0 - 2.0 / PI, max_relative = 0.01);
        let d3 = lloyd_max_mse(3, 200_000, 3);
        assert_relative_eq!(d3, 0.03454, max_relative = 0.01);
    }

    #[test]
    fn ul_cov_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_matrix(4, 3, &mut rng);
        assert!(ul_quant_cov(&h, &[1.0, 2.0, 3.0], 1.0).unwrap().iter().all(|&v| v == 0.0));
        let alpha = 0.9;
        for v in ul_quant_cov(&h, &[0.0; 3], alpha).unwrap() {
            assert_relative_eq!(v, alpha * (1.0 - alpha), max_relative = 1e-15);
        }
        assert!(matches!(
            ul_quant_cov(&h, &[1.0, -1.0, 0.0], alpha),
            Err(Error::NegativePower { index: 1, .. })
        ));
    }

    #[test]
    fn ul_cov_linear_in_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_matrix(5, 4, &mut rng);
        let alpha = 0.88;
        let lam = [0.3, 1.2, 0.0, 2.5];
        let lam2: Vec<f64> = lam.iter().map(|l| 2.0 * l).collect();
        let c1 = ul_quant_cov(&h, &lam, alpha).unwrap();
        let c2 = ul_quant_cov(&h, &lam2, alpha).unwrap();
        let c0 = ul_quant_cov(&h, &[0.0; 4], alpha).unwrap();
        for m in 0..5 {
            assert_relative_eq!(c2[m] - c1[m], c1[m] - c0[m], max_relative = 1e-12);
        }
    }

    #[test]
    fn ul_cov_matches_quantizer_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (nb, users) = (4, 2);
        let h = random_matrix(nb, users, &mut rng);
        let lam = [1.5, 0.7];
        let bits = 3;
        let alpha = quant_gain(Bits::Finite(bits)).unwrap().alpha;
        let expected = ul_quant_cov(&h, &lam, alpha).unwrap();
        let q = LloydMaxQuantizer::train(bits);
        let var: Vec<f64> = (0..nb)
            .map(|m| lam.iter().enumerate().map(|(u, l)| l * h[(m, u)].norm_sqr()).sum::<f64>() + 1.0)
            .collect();
        let draws = 1_000_000;
        let mut acc = vec![0.0; nb];
        let g = |rng: &mut ChaCha8Rng| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        for _ in 0..draws {
            let s: Vec<_> = (0..users).map(|_| g(&mut rng)).collect();
            for m in 0..nb {
                let mut r = g(&mut rng);
                for u in 0..users {
                    r += h[(m, u)] * s[u] * lam[u].sqrt();
                }
                let sigma = (var[m] / 2.0).sqrt();
                let qr = c64(q.quantize_scaled(r.re, sigma), q.quantize_scaled(r.im, sigma));
                acc[m] += (qr - r * alpha).norm_sqr();
            }
        }
        for m in 0..nb {
            let mc = acc[m] / draws as f64;
            assert_relative_eq!(mc, expected[m], max_relative = 0.03);
        }
    }

    #[test]
    fn dl_cov_cases() {
        let w = ComplexMatrix::zeros(3, 2);
        assert!(dl_quant_cov(&w, 0.8).iter().all(|&v| v == 0.0));
        let w = ComplexMatrix::from_column_slice(2, 1, &[c64(1.0, 0.0), c64(0.0, 2.0)]);
        let alpha = 0.8;
        let d = dl_quant_cov(&w, alpha);
        assert_relative_eq!(d[0], alpha * (1.0 - alpha), max_relative = 1e-15);
        assert_relative_eq!(d[1], 4.0 * alpha * (1.0 - alpha), max_relative = 1e-15);
        assert!(dl_quant_cov(&w, 1.0).iter().all(|&v| v == 0.0));
    }

    fn dense_ul_diag(taps: &[Vec<ComplexMatrix>], lambda: &[Vec<Vec<f64>>], alpha: f64, k: usize) -> Vec<f64> {
        let nb = taps[0][0].nrows();
        let nu = taps[0][0].ncols();
        let w = dft_matrix(k);
        let psi_u = kron(&w, &ComplexMatrix::identity(nu, nu));
        let mut total = ComplexMatrix::identity(k * nb, k * nb);
        for (cell_taps, cell_lambda) in taps.iter().zip(lambda) {
            let hbar = block_circulant(cell_taps, k);
            let lam = ComplexMatrix::from_diagonal(&crate::numerics::ComplexVector::from_iterator(
                k * nu,
                cell_lambda.iter().flat_map(|l| l.iter().map(|&v| c64(v, 0.0))),
            ));
            total += &hbar * psi_u.adjoint() * lam * &psi_u * hbar.adjoint();
        }
        (0..k * nb).map(|m| alpha * (1.0 - alpha) * total[(m, m)].re).collect()
    }

    #[test]
    fn ofdm_ul_cov_reductions_and_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (nb, nu, k) = (3, 2, 4);
        let alpha = 0.9;
        // two cells, two taps, random powers
        let taps: Vec<Vec<ComplexMatrix>> =
            (0..2).map(|_| (0..2).map(|_| random_matrix(nb, nu, &mut rng)).collect()).collect();
        let lambda: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..k).map(|_| (0..nu).map(|_| rng.random::<f64>() * 2.0).collect()).collect())
            .collect();
        let freq: Vec<Vec<ComplexMatrix>> = taps.iter().map(|t| taps_to_freq(t, k).unwrap()).collect();
        let fast = ofdm_ul_quant_cov_diag(&freq, &lambda, alpha, k).unwrap();
        let dense = dense_ul_diag(&taps, &lambda, alpha, k);
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        assert!(ofdm_ul_quant_cov_diag(&freq, &lambda, 1.0, k).unwrap().iter().all(|&v| v == 0.0));

        // flat channel with uniform powers reduces to the narrowband diagonal
        let flat: Vec<Vec<ComplexMatrix>> = (0..2).map(|_| vec![random_matrix(nb, nu, &mut rng)]).collect();
        let uniform: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.5, 1.5]; k], vec![vec![2.0, 0.25]; k]];
        let freq: Vec<Vec<ComplexMatrix>> = flat.iter().map(|t| taps_to_freq(t, k).unwrap()).collect();
        let wide = ofdm_ul_quant_cov_diag(&freq, &uniform, alpha, k).unwrap();
        let stacked = ComplexMatrix::from_fn(nb, 2 * nu, |r, c| flat[c / nu][0][(r, c % nu)]);
        let narrow = ul_quant_cov(&stacked, &[0.5, 1.5, 2.0, 0.25], alpha).unwrap();
        for n in 0..k {
            for m in 0..nb {
                assert_relative_eq!(wide[n * nb + m], narrow[m], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ofdm_dl_cov_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (nb, nu, k) = (3, 2, 4);
        let alpha = 0.85;
        let zeros = vec![ComplexMatrix::zeros(nb, nu); k];
        assert!(ofdm_dl_quant_cov_diag(&zeros, alpha).unwrap().iter().all(|&v| v == 0.0));

        let single = vec![random_matrix(nb, nu, &mut rng)];
        let one = ofdm_dl_quant_cov_diag(&single, alpha).unwrap();
        let narrow = dl_quant_cov(&single[0], alpha);
        for (a, b) in one.iter().zip(&narrow) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }

        let blocks: Vec<ComplexMatrix> = (0..k).map(|_| random_matrix(nb, nu, &mut rng)).collect();
        let fast = ofdm_dl_quant_cov_diag(&blocks, alpha).unwrap();
        let mut wbar = ComplexMatrix::zeros(k * nb, k * nu);
        for (i, b) in blocks.iter().enumerate() {
            wbar.view_mut((i * nb, i * nu), (nb, nu)).copy_from(b);
        }
        let psi = kron(&dft_matrix(k), &ComplexMatrix::identity(nb, nb));
        let x = psi.adjoint() * &wbar;
        let dense = &x * x.adjoint();
        for m in 0..k * nb {
            let expected = alpha * (1.0 - alpha) * dense[(m, m)].re;
            assert!((fast[m] - expected).abs() <= 1e-10 * expected.max(1.0));
        }
    }
}
