use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Algorithm;
use crate::error::{Error, Result};
use crate::quantization::Bits;

/// One algorithm on one channel draw at one bit depth and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub bits: Bits,
    /// Broadcast target in dB; `None` when the scenario's per-user targets
    /// were used.
    pub gamma_db: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Minimized total power in noise-normalized units (mW).
    pub total_power: Option<f64>,
    pub total_power_dbm: Option<f64>,
    pub total_ul_power: Option<f64>,
    pub total_dl_power: Option<f64>,
    /// `None` for users left without power.
    pub achieved_sinr_db: Vec<Option<f64>>,
    pub zeroed_cells: Vec<usize>,
    pub error: Option<String>,
}

/// JSON formatter printing every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Indented form of [`to_json_line`], same digits.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(indent_json(&to_json_line(value)?))
}

fn indent_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len() * 2);
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let newline = |out: &mut String, depth: usize| {
        out.push('\n');
        out.push_str(&"  ".repeat(depth));
    };
    for c in s.chars() {
        if in_str {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                out.push(c);
            }
            '{' | '[' => {
                depth += 1;
                out.push(c);
                newline(&mut out, depth);
            }
            '}' | ']' => {
                depth -= 1;
                newline(&mut out, depth);
                out.push(c);
            }
            ',' => {
                out.push(c);
                newline(&mut out, depth);
            }
            ':' => out.push_str(": "),
            _ => out.push(c),
        }
    }
    out
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(w, "{}", to_json_line(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(total: f64, sinr: Vec<Option<f64>>) -> TrialRecord {
        TrialRecord {
            trial: 3,
            seed: u64::MAX,
            algorithm: Algorithm::Dcomp,
            bits: Bits::Infinite,
            gamma_db: Some(-2.5),
            converged: true,
            iterations: 2,
            total_power: Some(total),
            total_power_dbm: Some(10.0 * total.log10()),
            total_ul_power: Some(total),
            total_dl_power: None,
            achieved_sinr_db: sinr,
            zeroed_cells: vec![1],
            error: Some("a \"quoted\" note".into()),
        }
    }

    #[test]
    fn seventeen_digits() {
        let line = to_json_line(&record(0.1, vec![Some(1.0 / 3.0), None])).unwrap();
        assert!(line.contains("\"total_power\":1.0000000000000001e-1"), "{line}");
        assert!(line.contains("3.3333333333333331e-1"), "{line}");
        assert!(line.contains("null"));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn pretty_form_parses_back() {
        let r = record(2.0, vec![Some(0.5)]);
        let pretty = to_json_pretty(&r).unwrap();
        assert!(pretty.contains("\n  \"trial\": 3"));
        let back: TrialRecord = serde_json::from_str(&pretty).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let recs = vec![record(1.5, vec![]), record(3e-7, vec![Some(-1e-300), None])];
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn lossless(total in any::<f64>().prop_filter("finite", |x| x.is_finite()),
                    s in proptest::collection::vec(proptest::option::of(-1e300..1e300f64), 0..6)) {
            let r = record(total, s);
            let back: TrialRecord = serde_json::from_str(&to_json_line(&r).unwrap()).unwrap();
            prop_assert_eq!(back.total_power.unwrap().to_bits(), total.to_bits());
            prop_assert_eq!(back.achieved_sinr_db, r.achieved_sinr_db);
        }
    }
}
