//! Experiment configuration, Monte Carlo runner and output files.

mod records;
mod stats;
pub mod validate;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comp_solver::{solve_icomp, SolveReport, SolverConfig};
use crate::deterministic::solve_deterministic;
use crate::error::{Error, Result};
use crate::network::{draw_channels, linear_to_db, ChannelSet, Scenario, TargetSinr};
use crate::ofdm::OfdmProblem;
use crate::percell::{percell_solve, PercellConfig};
use crate::quantization::{quant_gain, Bits};
use crate::sinr::mmse_ul_sinr;

pub use records::{read_records, to_json_line, to_json_pretty, write_records, TrialRecord};
pub use stats::{summarize_cdf, summarize_power_sweep, write_cdf_csv, write_power_sweep_csv, CdfRow, PowerSweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Icomp,
    Dcomp,
    Percell,
    OfdmIcomp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Icomp, Algorithm::Dcomp, Algorithm::Percell, Algorithm::OfdmIcomp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Icomp => "icomp",
            Algorithm::Dcomp => "dcomp",
            Algorithm::Percell => "percell",
            Algorithm::OfdmIcomp => "ofdm_icomp",
        }
    }

    pub fn is_wideband(self) -> bool {
        self == Algorithm::OfdmIcomp
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected icomp, dcomp, percell or ofdm_icomp)")))
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Icomp]
}
fn default_trials() -> usize {
    200
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Bit depths to compare; the scenario's own depth when absent.
    #[serde(default)]
    pub bits: Option<Vec<Bits>>,
    /// Target SINRs in dB, each broadcast to every user; the scenario's
    /// targets when absent.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub trial_seed_base: u64,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub percell: PercellConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            algorithms: default_algorithms(),
            bits: None,
            sweep: None,
            n_trials: default_trials(),
            output_dir: default_output_dir(),
            trial_seed_base: 0,
            workers: None,
            solver: SolverConfig::default(),
            percell: PercellConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must name at least one solver".into()));
        }
        if let Some(bits) = &self.bits {
            if bits.is_empty() {
                return Err(Error::Config("bits must not be empty".into()));
            }
            for b in bits {
                quant_gain(*b).map_err(|e| Error::Config(format!("bits: {e}")))?;
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(Error::Config("sweep must not be empty".into()));
            }
            if let Some(g) = sweep.iter().find(|g| !g.is_finite()) {
                return Err(Error::Config(format!("sweep value {g} is not finite")));
            }
        }
        if self.scenario.n_taps > 1 {
            if let Some(a) = self.algorithms.iter().find(|a| !a.is_wideband()) {
                return Err(Error::Config(format!(
                    "{a} needs a flat channel (n_taps = 1), got n_taps = {}",
                    self.scenario.n_taps
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn bit_list(&self) -> Vec<Bits> {
        self.bits.clone().unwrap_or_else(|| vec![self.scenario.adc_dac_bits])
    }

    /// `None` stands for the scenario's own targets.
    fn gamma_list(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.iter().map(|g| Some(*g)).collect(),
            None => match self.scenario.target_sinr_db {
                TargetSinr::Scalar(g) => vec![Some(g)],
                TargetSinr::PerUser(_) => vec![None],
            },
        }
    }
}

/// Result of one algorithm on one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Solver report; `achieved_sinr` holds the downlink SINRs for icomp,
    /// percell and ofdm_icomp and the uplink ones for dcomp.
    pub report: SolveReport,
    /// The quantity the algorithm minimizes: uplink power for icomp, dcomp
    /// and ofdm_icomp, downlink power for percell.
    pub total_power: f64,
    pub total_ul_power: Option<f64>,
    pub total_dl_power: Option<f64>,
    pub zeroed_cells: Vec<usize>,
}

/// Runs one algorithm on one channel draw. `gamma` holds linear targets for
/// every user (and subcarrier, subcarrier-major, for ofdm_icomp).
pub fn solve_algorithm(
    algorithm: Algorithm,
    ch: &ChannelSet,
    n_subcarriers: usize,
    gamma: &[f64],
    alpha: f64,
    solver: &SolverConfig,
    percell: &PercellConfig,
) -> Result<TrialOutcome> {
    let n = ch.n_users_total();
    if !algorithm.is_wideband() && !ch.is_narrowband() {
        return Err(Error::Config(format!("{algorithm} needs a flat channel")));
    }
    let narrow = || -> Result<&[f64]> {
        gamma
            .get(..n)
            .ok_or_else(|| Error::DimensionMismatch(format!("{} targets for {n} users", gamma.len())))
    };
    match algorithm {
        Algorithm::Icomp => {
            let s = solve_icomp(ch, narrow()?, alpha, solver)?;
            Ok(TrialOutcome {
                report: s.report,
                total_power: s.audit.total_ul_power,
                total_ul_power: Some(s.audit.total_ul_power),
                total_dl_power: Some(s.audit.total_dl_power),
                zeroed_cells: Vec::new(),
            })
        }
        Algorithm::Dcomp => {
            let g = narrow()?;
            let nu = ch.n_users();
            // homogeneous per-cell power must serve the cell's hardest target
            let per_cell: Vec<f64> = g.chunks(nu).map(|c| c.iter().copied().fold(0.0, f64::max)).collect();
            let s = solve_deterministic(ch, &per_cell, alpha)?;
            let sinr = mmse_ul_sinr(ch, &s.power.lambda, alpha)?;
            let total = s.power.total();
            Ok(TrialOutcome {
                report: SolveReport {
                    converged: true,
                    iterations: 1 + s.repair.zeroed_cells.len(),
                    final_total_power: total,
                    per_iteration_total_power: vec![total],
                    achieved_sinr: sinr,
                    duality_gap: None,
                },
                total_power: total,
                total_ul_power: Some(total),
                total_dl_power: None,
                zeroed_cells: s.repair.zeroed_cells,
            })
        }
        Algorithm::Percell => {
            let s = percell_solve(ch, narrow()?, alpha, percell)?;
            Ok(TrialOutcome {
                total_power: s.report.final_total_power,
                total_ul_power: None,
                total_dl_power: Some(s.report.final_total_power),
                report: s.report,
                zeroed_cells: Vec::new(),
            })
        }
        Algorithm::OfdmIcomp => {
            let problem = OfdmProblem::new(ch.clone(), n_subcarriers, gamma.to_vec(), alpha)?;
            let s = problem.solve(solver)?;
            Ok(TrialOutcome {
                report: s.report,
                total_power: s.audit.total_ul_power,
                total_ul_power: Some(s.audit.total_ul_power),
                total_dl_power: Some(s.audit.total_dl_power),
                zeroed_cells: Vec::new(),
            })
        }
    }
}

fn power_dbm(p: f64) -> Option<f64> {
    // channels carry 1/noise, so solver powers are already in mW
    (p > 0.0 && p.is_finite()).then(|| linear_to_db(p))
}

fn sinr_db(s: f64) -> Option<f64> {
    (s > 0.0 && s.is_finite()).then(|| linear_to_db(s))
}

/// One algorithm on the channels of trial 0 (seed `trial_seed_base`) at
/// the first configured bit depth and target.
pub fn solve_single(config: &ExperimentConfig) -> Result<TrialOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.trial_seed_base);
    let (_, ch) = draw_channels(&config.scenario, &mut rng)?;
    let alpha = quant_gain(config.bit_list()[0])?.alpha;
    let mut scenario = config.scenario.clone();
    if let Some(g) = config.gamma_list()[0] {
        scenario.target_sinr_db = TargetSinr::Scalar(g);
    }
    solve_algorithm(
        config.algorithms[0],
        &ch,
        scenario.n_subcarriers,
        &scenario.gamma_linear()?,
        alpha,
        &config.solver,
        &config.percell,
    )
}

/// Every record of trial `trial`, ordered by bit depth, target and algorithm.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<TrialRecord>> {
    let seed = config.trial_seed_base.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, ch) = draw_channels(&config.scenario, &mut rng)?;
    let k = config.scenario.n_subcarriers;
    let mut out = Vec::new();
    for bits in config.bit_list() {
        let alpha = quant_gain(bits)?.alpha;
        for gamma_db in config.gamma_list() {
            let mut scenario = config.scenario.clone();
            if let Some(g) = gamma_db {
                scenario.target_sinr_db = TargetSinr::Scalar(g);
            }
            let gamma = scenario.gamma_linear()?;
            for &algorithm in &config.algorithms {
                let result = solve_algorithm(algorithm, &ch, k, &gamma, alpha, &config.solver, &config.percell);
                let mut record = TrialRecord {
                    trial,
                    seed,
                    algorithm,
                    bits,
                    gamma_db,
                    converged: false,
                    iterations: 0,
                    total_power: None,
                    total_power_dbm: None,
                    total_ul_power: None,
                    total_dl_power: None,
                    achieved_sinr_db: Vec::new(),
                    zeroed_cells: Vec::new(),
                    error: None,
                };
                match result {
                    Ok(o) => {
                        record.converged = o.report.converged;
                        record.iterations = o.report.iterations;
                        record.total_power = Some(o.total_power);
                        record.total_power_dbm = power_dbm(o.total_power);
                        record.total_ul_power = o.total_ul_power;
                        record.total_dl_power = o.total_dl_power;
                        record.achieved_sinr_db = o.report.achieved_sinr.iter().map(|s| sinr_db(*s)).collect();
                        record.zeroed_cells = o.zeroed_cells;
                    }
                    Err(e @ (Error::Config(_) | Error::DimensionMismatch(_))) => return Err(e),
                    Err(e) => record.error = Some(e.to_string()),
                }
                out.push(record);
            }
        }
    }
    Ok(out)
}

/// Runs every trial (concurrently) and returns the records ordered by
/// trial, then bit depth, target and algorithm as configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let work = || -> Result<Vec<TrialRecord>> {
        let per_trial: Vec<Vec<TrialRecord>> = (0..config.n_trials)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect::<Result<_>>()?;
        Ok(per_trial.into_iter().flatten().collect())
    };
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Run-level facts stored next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub n_records: usize,
    pub n_converged: usize,
    pub noise_power_dbm: f64,
    pub power_unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub records: PathBuf,
    pub cdf: PathBuf,
    pub power_sweep: PathBuf,
    pub metadata: PathBuf,
}

/// Writes `records.jsonl`, `cdf.csv`, `power_sweep.csv` and `metadata.json`
/// into `config.output_dir`.
pub fn write_outputs(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<OutputPaths> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let paths = OutputPaths {
        records: dir.join("records.jsonl"),
        cdf: dir.join("cdf.csv"),
        power_sweep: dir.join("power_sweep.csv"),
        metadata: dir.join("metadata.json"),
    };
    write_records(&paths.records, records)?;
    write_cdf_csv(&paths.cdf, &summarize_cdf(records))?;
    write_power_sweep_csv(&paths.power_sweep, &summarize_power_sweep(records))?;
    let meta = RunMetadata {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        n_records: records.len(),
        n_converged: records.iter().filter(|r| r.converged).count(),
        noise_power_dbm: config.scenario.noise_power_dbm(),
        power_unit: "mW (noise folded into the channel)".to_string(),
    };
    let mut text = records::to_json_pretty(&meta)?;
    text.push('\n');
    std::fs::write(&paths.metadata, text)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithms: Vec<Algorithm>) -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario {
                n_bs_antennas: 8,
                ..Scenario::default()
            },
            algorithms,
            n_trials: 3,
            trial_seed_base: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn parses_nested_toml() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            algorithms = ["icomp", "percell"]
            bits = [2, 3, "inf"]
            sweep = [-5.0, 0.0, 5.0]
            n_trials = 4
            trial_seed_base = 9
            [scenario]
            n_bs_antennas = 16
            shadowing_sigma_db = 6.0
            [solver]
            tol = 1e-9
            "#,
        )
        .unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::Icomp, Algorithm::Percell]);
        assert_eq!(cfg.bits.as_ref().unwrap()[2], Bits::Infinite);
        assert_eq!(cfg.scenario.n_bs_antennas, 16);
        assert_eq!(cfg.scenario.n_cells, 2);
        assert_eq!(cfg.solver.tol, 1e-9);
        assert_eq!(cfg.solver.max_iter, 10_000);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_errors_name_the_problem() {
        let e = ExperimentConfig::from_toml_str("n_trials = 2\n[scenario]\nn_cels = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("n_cels"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        let e = ExperimentConfig::from_toml_str("n_trials = 0").unwrap_err();
        assert!(e.to_string().contains("n_trials"));
        let e = ExperimentConfig::from_toml_str("algorithms = [\"fast\"]").unwrap_err();
        assert!(e.to_string().contains("fast"));
        let e = ExperimentConfig::from_toml_str("[scenario]\nn_taps = 2\nn_subcarriers = 4").unwrap_err();
        assert!(e.to_string().contains("n_taps"));
    }

    #[test]
    fn records_ordered_and_complete() {
        let mut cfg = small(vec![Algorithm::Icomp, Algorithm::Dcomp, Algorithm::Percell]);
        cfg.sweep = Some(vec![0.0, 3.0]);
        cfg.bits = Some(vec![Bits::Finite(2), Bits::Infinite]);
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 3 * 2 * 2 * 3);
        assert_eq!(recs[0].trial, 0);
        assert_eq!(recs[0].seed, 11);
        assert_eq!(recs[0].algorithm, Algorithm::Icomp);
        assert_eq!(recs[1].algorithm, Algorithm::Dcomp);
        assert_eq!(recs[3].gamma_db, Some(3.0));
        assert_eq!(recs[6].bits, Bits::Infinite);
        assert_eq!(recs.last().unwrap().trial, 2);
        for r in &recs {
            if r.converged {
                assert_eq!(r.achieved_sinr_db.len(), 4);
                assert!(r.error.is_none());
            }
        }
    }

    #[test]
    fn single_trial_is_rerunnable() {
        let cfg = small(vec![Algorithm::Icomp]);
        let all = run_experiment(&cfg).unwrap();
        let alone = run_trial(&cfg, 2).unwrap();
        assert_eq!(all[2], alone[0]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = small(vec![Algorithm::Icomp, Algorithm::Percell]);
        let a = run_experiment(&cfg).unwrap();
        cfg.workers = Some(1);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_targets_are_recorded() {
        let mut cfg = small(vec![Algorithm::Icomp]);
        cfg.scenario.n_bs_antennas = 2;
        cfg.sweep = Some(vec![40.0]);
        cfg.solver.power_cap = 1e3;
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| !r.converged && r.error.is_some() && r.total_power.is_none()));
    }

    #[test]
    fn wideband_trial() {
        let mut cfg = small(vec![Algorithm::OfdmIcomp]);
        cfg.scenario.n_subcarriers = 4;
        cfg.scenario.n_taps = 2;
        cfg.n_trials = 1;
        let recs = run_experiment(&cfg).unwrap();
        assert!(recs[0].converged, "{:?}", recs[0].error);
        assert_eq!(recs[0].achieved_sinr_db.len(), 16);
        for s in &recs[0].achieved_sinr_db {
            assert!(s.unwrap().abs() < 1e-4);
        }
    }
}
