use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, TrialRecord};
use crate::error::Result;
use crate::network::linear_to_db;
use crate::quantization::Bits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub algorithm: Algorithm,
    /// `-inf` for users left without power.
    pub sinr_db: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepRow {
    pub algorithm: Algorithm,
    pub bits: Bits,
    pub gamma_db: Option<f64>,
    /// Power statistics over converged trials only, in dBm; absent when no
    /// trial converged.
    pub mean_total_power_dbm: Option<f64>,
    pub p5: Option<f64>,
    pub p95: Option<f64>,
    pub infeasible_fraction: f64,
}

/// Empirical CDF of every user's achieved SINR over converged records, one
/// step per distinct value.
pub fn summarize_cdf(records: &[TrialRecord]) -> Vec<CdfRow> {
    let mut rows = Vec::new();
    for algorithm in Algorithm::ALL {
        let mut values: Vec<f64> = records
            .iter()
            .filter(|r| r.algorithm == algorithm && r.converged)
            .flat_map(|r| r.achieved_sinr_db.iter().map(|s| s.unwrap_or(f64::NEG_INFINITY)))
            .collect();
        if values.is_empty() {
            continue;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        for (idx, v) in values.iter().enumerate() {
            let last_of_run = values.get(idx + 1).is_none_or(|next| next != v);
            if last_of_run {
                rows.push(CdfRow {
                    algorithm,
                    sinr_db: *v,
                    cdf: (idx + 1) as f64 / n,
                });
            }
        }
    }
    rows
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn to_dbm(p: f64) -> Option<f64> {
    (p > 0.0 && p.is_finite()).then(|| linear_to_db(p))
}

fn bits_rank(b: Bits) -> u32 {
    match b {
        Bits::Finite(b) => b,
        Bits::Infinite => u32::MAX,
    }
}

/// Power statistics per algorithm, bit depth and target. Percentiles are
/// taken on linear power and reported in dBm.
pub fn summarize_power_sweep(records: &[TrialRecord]) -> Vec<PowerSweepRow> {
    let mut keys: Vec<(Algorithm, Bits, Option<f64>)> = Vec::new();
    for r in records {
        let key = (r.algorithm, r.bits, r.gamma_db);
        if !keys.iter().any(|k| k.0 == key.0 && k.1 == key.1 && k.2.map(f64::to_bits) == key.2.map(f64::to_bits)) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(bits_rank(a.1).cmp(&bits_rank(b.1)))
            .then(match (a.2, b.2) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (x, y) => x.is_some().cmp(&y.is_some()),
            })
    });
    keys.into_iter()
        .map(|(algorithm, bits, gamma_db)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| {
                    r.algorithm == algorithm && r.bits == bits && r.gamma_db.map(f64::to_bits) == gamma_db.map(f64::to_bits)
                })
                .collect();
            let mut powers: Vec<f64> = group
                .iter()
                .filter(|r| r.converged)
                .filter_map(|r| r.total_power)
                .collect();
            powers.sort_by(f64::total_cmp);
            let infeasible = group.iter().filter(|r| !r.converged).count();
            let (mean, p5, p95) = if powers.is_empty() {
                (None, None, None)
            } else {
                let mean = powers.iter().sum::<f64>() / powers.len() as f64;
                (to_dbm(mean), to_dbm(percentile(&powers, 0.05)), to_dbm(percentile(&powers, 0.95)))
            };
            PowerSweepRow {
                algorithm,
                bits,
                gamma_db,
                mean_total_power_dbm: mean,
                p5,
                p95,
                infeasible_fraction: infeasible as f64 / group.len() as f64,
            }
        })
        .collect()
}

/// 17 significant digits; empty for missing values.
fn fmt_float(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) if v.is_nan() => "nan".into(),
        Some(v) if v > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => String::new(),
    }
}

pub fn write_cdf_csv(path: &Path, rows: &[CdfRow]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "algorithm,sinr_db,cdf")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.algorithm, fmt_float(Some(r.sinr_db)), fmt_float(Some(r.cdf)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_sweep_csv(path: &Path, rows: &[PowerSweepRow]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "algorithm,bits,gamma_db,mean_total_power_dbm,p5,p95,infeasible_fraction")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.algorithm,
            r.bits,
            fmt_float(r.gamma_db),
            fmt_float(r.mean_total_power_dbm),
            fmt_float(r.p5),
            fmt_float(r.p95),
            fmt_float(Some(r.infeasible_fraction))
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(algorithm: Algorithm, gamma_db: f64, power: Option<f64>, sinr: Vec<Option<f64>>) -> TrialRecord {
        TrialRecord {
            trial: 0,
            seed: 0,
            algorithm,
            bits: Bits::Finite(3),
            gamma_db: Some(gamma_db),
            converged: power.is_some(),
            iterations: 1,
            total_power: power,
            total_power_dbm: power.map(linear_to_db),
            total_ul_power: power,
            total_dl_power: None,
            achieved_sinr_db: sinr,
            zeroed_cells: vec![],
            error: None,
        }
    }

    #[test]
    fn step_at_target() {
        let r = rec(Algorithm::Icomp, 2.0, Some(1.0), vec![Some(2.0); 4]);
        let rows = summarize_cdf(&[r]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sinr_db, 2.0);
        assert_eq!(rows[0].cdf, 1.0);
    }

    #[test]
    fn empty_inputs() {
        assert!(summarize_cdf(&[]).is_empty());
        assert!(summarize_power_sweep(&[]).is_empty());
    }

    #[test]
    fn infeasible_never_averaged() {
        let recs = vec![
            rec(Algorithm::Percell, 5.0, None, vec![]),
            rec(Algorithm::Percell, 5.0, None, vec![]),
            rec(Algorithm::Percell, 0.0, Some(10.0), vec![Some(0.0)]),
            rec(Algorithm::Percell, 0.0, None, vec![Some(-50.0)]),
        ];
        let rows = summarize_power_sweep(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].gamma_db, Some(0.0));
        assert_eq!(rows[0].infeasible_fraction, 0.5);
        assert!((rows[0].mean_total_power_dbm.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(rows[1].infeasible_fraction, 1.0);
        assert!(rows[1].mean_total_power_dbm.is_none() && rows[1].p5.is_none() && rows[1].p95.is_none());
        let cdf = summarize_cdf(&recs);
        assert_eq!(cdf.len(), 1);
        assert_eq!(cdf[0].sinr_db, 0.0);
    }

    #[test]
    fn percentiles_and_mean_in_dbm() {
        let recs: Vec<_> = (1..=21).map(|p| rec(Algorithm::Icomp, 0.0, Some(p as f64), vec![])).collect();
        let row = &summarize_power_sweep(&recs)[0];
        assert!((row.mean_total_power_dbm.unwrap() - linear_to_db(11.0)).abs() < 1e-12);
        assert!((row.p5.unwrap() - linear_to_db(2.0)).abs() < 1e-12);
        assert!((row.p95.unwrap() - linear_to_db(20.0)).abs() < 1e-12);
    }

    #[test]
    fn unserved_users_at_minus_infinity() {
        let r = rec(Algorithm::Dcomp, 0.0, Some(1.0), vec![None, Some(1.0)]);
        let rows = summarize_cdf(&[r]);
        assert_eq!(rows[0].sinr_db, f64::NEG_INFINITY);
        assert_eq!(rows[0].cdf, 0.5);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let recs = vec![rec(Algorithm::Icomp, 0.0, Some(0.1), vec![]), rec(Algorithm::Icomp, 1.0, None, vec![])];
        write_power_sweep_csv(&path, &summarize_power_sweep(&recs)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "algorithm,bits,gamma_db,mean_total_power_dbm,p5,p95,infeasible_fraction");
        assert_eq!(
            lines[1],
            "icomp,3,0.0000000000000000e0,-1.0000000000000000e1,-1.0000000000000000e1,-1.0000000000000000e1,0.0000000000000000e0"
        );
        assert_eq!(lines[2], "icomp,3,1.0000000000000000e0,,,,1.0000000000000000e0");
    }

    fn cdf_at(rows: &[CdfRow], x: f64) -> f64 {
        rows.iter().filter(|r| r.sinr_db <= x).map(|r| r.cdf).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn cdf_monotone_and_order_free(a in proptest::collection::vec(proptest::collection::vec(-20.0..20.0f64, 1..5), 1..6),
                                       b in proptest::collection::vec(proptest::collection::vec(-20.0..20.0f64, 1..5), 1..6)) {
            let mk = |v: &Vec<Vec<f64>>| -> Vec<TrialRecord> {
                v.iter().map(|s| rec(Algorithm::Icomp, 0.0, Some(1.0), s.iter().map(|x| Some(x.round())).collect())).collect()
            };
            let (ra, rb) = (mk(&a), mk(&b));
            let mut all = ra.clone();
            all.extend(rb.iter().cloned());
            let rows = summarize_cdf(&all);
            for pair in rows.windows(2) {
                prop_assert!(pair[0].sinr_db < pair[1].sinr_db);
                prop_assert!(pair[0].cdf <= pair[1].cdf);
            }
            prop_assert_eq!(rows.last().unwrap().cdf, 1.0);
            let mut reversed = rb;
            reversed.extend(ra.iter().cloned());
            prop_assert_eq!(summarize_cdf(&reversed), rows.clone());
            // merged CDF is the count-weighted mix of the parts
            let (na, nb) = (a.iter().map(Vec::len).sum::<usize>() as f64, b.iter().map(Vec::len).sum::<usize>() as f64);
            let (ca, cb) = (summarize_cdf(&ra), summarize_cdf(&mk(&b)));
            for x in -21..21 {
                let x = x as f64;
                let mixed = (na * cdf_at(&ca, x) + nb * cdf_at(&cb, x)) / (na + nb);
                prop_assert!((cdf_at(&rows, x) - mixed).abs() < 1e-12);
            }
        }
    }
}
