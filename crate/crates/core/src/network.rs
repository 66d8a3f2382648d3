//! Scenario description, hexagonal geometry, large-scale fading and
//! noise-normalized Rayleigh channel generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{taps_to_freq, ComplexMatrix, ComplexVector};
use crate::quantization::Bits;

/// Power-delay profile of wideband taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DelayProfile {
    Uniform,
    #[default]
    Exponential,
}

impl DelayProfile {
    /// Tap powers summing to one.
    pub fn tap_powers(self, n_taps: usize) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            DelayProfile::Uniform => vec![1.0; n_taps],
            DelayProfile::Exponential => (0..n_taps).map(|l| (-(l as f64) / 2.0).exp()).collect(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Target SINR in dB, either one value for everybody or one per user
/// (cell-major) or per user and subcarrier (subcarrier-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSinr {
    Scalar(f64),
    PerUser(Vec<f64>),
}

impl Default for TargetSinr {
    fn default() -> Self {
        TargetSinr::Scalar(0.0)
    }
}

fn default_cells() -> usize {
    2
}
fn default_users() -> usize {
    2
}
fn default_antennas() -> usize {
    64
}
fn default_bits() -> Bits {
    Bits::Finite(3)
}
fn one() -> usize {
    1
}
fn default_isd() -> f64 {
    2000.0
}
fn default_min_dist() -> f64 {
    100.0
}
fn default_carrier() -> f64 {
    2.4e9
}
fn default_bandwidth() -> f64 {
    1e7
}
fn default_nf() -> f64 {
    5.0
}
fn default_shadowing() -> f64 {
    8.7
}
fn default_exponent() -> f64 {
    3.8
}
fn default_ref_distance() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    #[serde(default = "default_users")]
    pub n_users_per_cell: usize,
    #[serde(default = "default_antennas")]
    pub n_bs_antennas: usize,
    #[serde(default = "default_bits")]
    pub adc_dac_bits: Bits,
    #[serde(default = "one")]
    pub n_subcarriers: usize,
    #[serde(default = "one")]
    pub n_taps: usize,
    #[serde(default = "default_isd")]
    pub inter_site_distance: f64,
    #[serde(default = "default_min_dist")]
    pub min_bs_user_distance: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_nf")]
    pub noise_figure_db: f64,
    #[serde(default = "default_shadowing")]
    pub shadowing_sigma_db: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_ref_distance")]
    pub reference_distance: f64,
    #[serde(default)]
    pub delay_profile: DelayProfile,
    #[serde(default)]
    pub target_sinr_db: TargetSinr,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_cells: default_cells(),
            n_users_per_cell: default_users(),
            n_bs_antennas: default_antennas(),
            adc_dac_bits: default_bits(),
            n_subcarriers: 1,
            n_taps: 1,
            inter_site_distance: default_isd(),
            min_bs_user_distance: default_min_dist(),
            carrier_hz: default_carrier(),
            bandwidth_hz: default_bandwidth(),
            noise_figure_db: default_nf(),
            shadowing_sigma_db: default_shadowing(),
            pathloss_exponent: default_exponent(),
            reference_distance: default_ref_distance(),
            delay_profile: DelayProfile::default(),
            target_sinr_db: TargetSinr::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_cells", self.n_cells),
            ("n_users_per_cell", self.n_users_per_cell),
            ("n_bs_antennas", self.n_bs_antennas),
            ("n_subcarriers", self.n_subcarriers),
            ("n_taps", self.n_taps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_bs_antennas < self.n_users_per_cell {
            return Err(Error::Config(format!(
                "n_bs_antennas ({}) must be at least n_users_per_cell ({})",
                self.n_bs_antennas, self.n_users_per_cell
            )));
        }
        if self.n_bs_antennas < 4 * self.n_users_per_cell {
            log::warn!(
                "only {} antennas for {} users per cell",
                self.n_bs_antennas,
                self.n_users_per_cell
            );
        }
        if self.n_taps > self.n_subcarriers {
            return Err(Error::Config(format!(
                "n_taps ({}) exceeds n_subcarriers ({})",
                self.n_taps, self.n_subcarriers
            )));
        }
        let positive = [
            ("inter_site_distance", self.inter_site_distance),
            ("min_bs_user_distance", self.min_bs_user_distance),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("reference_distance", self.reference_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.shadowing_sigma_db >= 0.0) || !self.noise_figure_db.is_finite() || !self.pathloss_exponent.is_finite() {
            return Err(Error::Config("invalid fading parameters".into()));
        }
        // users must fit inside the hexagon away from its own BS
        if self.min_bs_user_distance >= self.inter_site_distance / 2.0 {
            return Err(Error::Config(
                "min_bs_user_distance must be below half the inter-site distance".into(),
            ));
        }
        self.gamma_linear()?;
        Ok(())
    }

    pub fn n_users_total(&self) -> usize {
        self.n_cells * self.n_users_per_cell
    }

    /// Linear targets indexed `(k·N_c + i)·N_u + u`.
    pub fn gamma_linear(&self) -> Result<Vec<f64>> {
        let per_sub = self.n_users_total();
        let total = per_sub * self.n_subcarriers;
        let db: Vec<f64> = match &self.target_sinr_db {
            TargetSinr::Scalar(g) => vec![*g; total],
            TargetSinr::PerUser(v) if v.len() == total => v.clone(),
            TargetSinr::PerUser(v) if v.len() == per_sub => {
                v.iter().cycle().take(total).copied().collect()
            }
            TargetSinr::PerUser(v) => {
                return Err(Error::Config(format!(
                    "target_sinr_db has {} entries, expected 1, {per_sub} or {total}",
                    v.len()
                )))
            }
        };
        if let Some(bad) = db.iter().find(|g| !g.is_finite()) {
            return Err(Error::Config(format!("non-finite target SINR {bad}")));
        }
        Ok(db.iter().map(|g| db_to_linear(*g)).collect())
    }

    pub fn pathloss(&self) -> PathlossModel {
        PathlossModel {
            reference_distance: self.reference_distance,
            carrier_hz: self.carrier_hz,
            exponent: self.pathloss_exponent,
            shadowing_sigma_db: self.shadowing_sigma_db,
        }
    }

    pub fn noise_power_dbm(&self) -> f64 {
        noise_power_dbm(self.bandwidth_hz, self.noise_figure_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Base station and user positions in meters; users are stored cell-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub base_stations: Vec<[f64; 2]>,
    pub users: Vec<[f64; 2]>,
    pub n_users_per_cell: usize,
}

impl Geometry {
    pub fn user(&self, cell: usize, user: usize) -> [f64; 2] {
        self.users[cell * self.n_users_per_cell + user]
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// First `n` sites of a hexagonal lattice with spacing `isd`, ordered by
/// distance from the origin and then by angle.
pub fn hex_sites(n: usize, isd: f64) -> Vec<[f64; 2]> {
    let mut radius = 0i64;
    while 3 * radius * (radius + 1) + 1 < n as i64 {
        radius += 1;
    }
    let mut sites: Vec<(i64, f64, [f64; 2])> = Vec::new();
    for q in -radius..=radius {
        for r in (-radius).max(-q - radius)..=radius.min(-q + radius) {
            let x = isd * (q as f64 + r as f64 / 2.0);
            let y = isd * (r as f64 * 3f64.sqrt() / 2.0);
            // hex distance squared in lattice units is an exact integer
            let d2 = q * q + q * r + r * r;
            let mut angle = y.atan2(x);
            if angle < -1e-12 {
                angle += 2.0 * std::f64::consts::PI;
            }
            sites.push((d2, angle.max(0.0), [x, y]));
        }
    }
    sites.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sites.into_iter().take(n).map(|s| s.2).collect()
}

/// Whether `p` lies in the hexagon centred at `c` whose edges face the six
/// neighbouring sites (apothem `isd/2`).
fn in_hexagon(p: [f64; 2], c: [f64; 2], isd: f64) -> bool {
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    (0..3).all(|s| {
        let theta = s as f64 * std::f64::consts::PI / 3.0;
        (dx * theta.cos() + dy * theta.sin()).abs() <= isd / 2.0
    })
}

pub fn build_geometry<R: Rng>(scenario: &Scenario, rng: &mut R) -> Geometry {
    let isd = scenario.inter_site_distance;
    let base_stations = hex_sites(scenario.n_cells, isd);
    let half_w = isd / 2.0;
    let half_h = isd / 3f64.sqrt();
    let mut users = Vec::with_capacity(scenario.n_users_total());
    for &bs in &base_stations {
        for _ in 0..scenario.n_users_per_cell {
            loop {
                let p = [
                    bs[0] + rng.random_range(-half_w..=half_w),
                    bs[1] + rng.random_range(-half_h..=half_h),
                ];
                if in_hexagon(p, bs, isd)
                    && base_stations
                        .iter()
                        .all(|&b| distance(p, b) >= scenario.min_bs_user_distance)
                {
                    users.push(p);
                    break;
                }
            }
        }
    }
    Geometry {
        base_stations,
        users,
        n_users_per_cell: scenario.n_users_per_cell,
    }
}

/// Free-space path loss in dB at distance `d` meters and carrier `f` Hz.
pub fn free_space_pathloss_db(d: f64, f: f64) -> f64 {
    20.0 * d.log10() + 20.0 * f.log10() - 147.55
}

/// Log-distance path loss anchored at the free-space loss of a reference distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossModel {
    pub reference_distance: f64,
    pub carrier_hz: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
}

impl PathlossModel {
    /// Gain in dB without shadowing; distances below the reference are clamped.
    pub fn mean_gain_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.reference_distance);
        -(free_space_pathloss_db(self.reference_distance, self.carrier_hz)
            + 10.0 * self.exponent * (d / self.reference_distance).log10())
    }
}

/// Link gain in dB (negative path loss) including one shadowing draw.
pub fn link_gain_db<R: Rng>(distance_m: f64, model: &PathlossModel, rng: &mut R) -> f64 {
    let shadow: f64 = rng.sample(StandardNormal);
    model.mean_gain_db(distance_m) - model.shadowing_sigma_db * shadow
}

/// Thermal noise power in dBm over `bandwidth_hz`.
pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Noise-normalized channels between every base station and every user.
///
/// The matrix for pair `(i, j)` holds the uplink channel observed at BS `i`
/// from the users of cell `j` (`N_b × N_u`, one matrix per tap). The
/// downlink channel from BS `i` to user `(j, u)` is the conjugate transpose
/// of column `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    n_cells: usize,
    n_users: usize,
    n_antennas: usize,
    n_taps: usize,
    taps: Vec<ComplexMatrix>,
}

impl ChannelSet {
    /// `taps` indexed `(i·N_c + j)·L + ℓ`.
    pub fn new(n_cells: usize, n_taps: usize, taps: Vec<ComplexMatrix>) -> Result<Self> {
        if n_cells == 0 || n_taps == 0 || taps.len() != n_cells * n_cells * n_taps {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for {n_cells} cells and {n_taps} taps",
                taps.len()
            )));
        }
        let (n_antennas, n_users) = taps[0].shape();
        if n_antennas == 0 || n_users == 0 || taps.iter().any(|t| t.shape() != (n_antennas, n_users)) {
            return Err(Error::DimensionMismatch("channel matrices differ in shape".into()));
        }
        if taps
            .iter()
            .any(|t| t.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            n_cells,
            n_users,
            n_antennas,
            n_taps,
            taps,
        })
    }

    /// Flat channels indexed `i·N_c + j`.
    pub fn narrowband(n_cells: usize, h: Vec<ComplexMatrix>) -> Result<Self> {
        Self::new(n_cells, 1, h)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn n_users_total(&self) -> usize {
        self.n_cells * self.n_users
    }

    pub fn is_narrowband(&self) -> bool {
        self.n_taps == 1
    }

    pub fn tap(&self, i: usize, j: usize, l: usize) -> &ComplexMatrix {
        &self.taps[(i * self.n_cells + j) * self.n_taps + l]
    }

    pub fn taps(&self, i: usize, j: usize) -> &[ComplexMatrix] {
        let start = (i * self.n_cells + j) * self.n_taps;
        &self.taps[start..start + self.n_taps]
    }

    /// Flat channel `H_{i,j}` (first tap).
    pub fn h(&self, i: usize, j: usize) -> &ComplexMatrix {
        self.tap(i, j, 0)
    }

    /// Uplink channel at BS `i` from user `u` of cell `j`.
    pub fn column(&self, i: usize, j: usize, u: usize) -> ComplexVector {
        self.h(i, j).column(u).into_owned()
    }

    /// Downlink channel row from BS `i` to user `u` of cell `j`.
    pub fn dl_row(&self, i: usize, j: usize, u: usize) -> ComplexVector {
        self.column(i, j, u).conjugate()
    }

    /// `[H_{i,0} … H_{i,N_c−1}]`, all users as seen by BS `i`.
    pub fn stacked(&self, i: usize) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n_antennas, self.n_users_total());
        for j in 0..self.n_cells {
            out.columns_mut(j * self.n_users, self.n_users).copy_from(self.h(i, j));
        }
        out
    }

    /// Per-subcarrier flat channel sets.
    pub fn to_frequency(&self, n_subcarriers: usize) -> Result<Vec<ChannelSet>> {
        let pairs: Vec<Vec<ComplexMatrix>> = (0..self.n_cells * self.n_cells)
            .map(|p| taps_to_freq(&self.taps[p * self.n_taps..(p + 1) * self.n_taps], n_subcarriers))
            .collect::<Result<_>>()?;
        (0..n_subcarriers)
            .map(|k| ChannelSet::narrowband(self.n_cells, pairs.iter().map(|g| g[k].clone()).collect()))
            .collect()
    }

    /// Copy with every matrix multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> ChannelSet {
        let mut out = self.clone();
        for t in &mut out.taps {
            *t *= num_complex::Complex64::new(scale, 0.0);
        }
        out
    }

    /// Channel set restricted to one cell (its own BS and users).
    pub fn single_cell(&self, i: usize) -> ChannelSet {
        ChannelSet {
            n_cells: 1,
            n_users: self.n_users,
            n_antennas: self.n_antennas,
            n_taps: self.n_taps,
            taps: self.taps(i, i).to_vec(),
        }
    }
}

/// Draws geometry and channels for `scenario` from `rng`.
pub fn draw_channels<R: Rng>(scenario: &Scenario, rng: &mut R) -> Result<(Geometry, ChannelSet)> {
    scenario.validate()?;
    let geometry = build_geometry(scenario, rng);
    let model = scenario.pathloss();
    let noise_dbm = scenario.noise_power_dbm();
    let profile = scenario.delay_profile.tap_powers(scenario.n_taps);
    let (nc, nu, nb) = (scenario.n_cells, scenario.n_users_per_cell, scenario.n_bs_antennas);
    let mut taps = Vec::with_capacity(nc * nc * scenario.n_taps);
    for i in 0..nc {
        let bs = geometry.base_stations[i];
        for j in 0..nc {
            let scales: Vec<f64> = (0..nu)
                .map(|u| {
                    let gain = link_gain_db(distance(bs, geometry.user(j, u)), &model, rng);
                    db_to_linear(gain - noise_dbm).sqrt()
                })
                .collect();
            for &p in &profile {
                let amp = p.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
                taps.push(ComplexMatrix::from_fn(nb, nu, |_, u| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    num_complex::Complex64::new(re, im) * (amp * scales[u])
                }));
            }
        }
    }
    Ok((geometry, ChannelSet::new(nc, scenario.n_taps, taps)?))
}

/// Geometry and channels for the scenario's own seed.
pub fn generate(scenario: &Scenario) -> Result<(Geometry, ChannelSet)> {
    draw_channels(scenario, &mut ChaCha8Rng::seed_from_u64(scenario.seed))
}

/// Unit-gain Rayleigh channels (no path loss), useful for property tests.
pub fn rayleigh_channels<R: Rng>(
    n_cells: usize,
    n_users: usize,
    n_antennas: usize,
    n_taps: usize,
    rng: &mut R,
) -> ChannelSet {
    let profile = DelayProfile::Exponential.tap_powers(n_taps);
    let mut taps = Vec::with_capacity(n_cells * n_cells * n_taps);
    for _ in 0..n_cells * n_cells {
        for &p in &profile {
            let amp = (p / 2.0).sqrt();
            taps.push(ComplexMatrix::from_fn(n_antennas, n_users, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                num_complex::Complex64::new(re * amp, im * amp)
            }));
        }
    }
    ChannelSet::new(n_cells, n_taps, taps).expect("consistent shapes")
}
