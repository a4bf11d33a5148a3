//! Metric CSV: one row per record, floats with 17 significant digits so
//! every value parses back to the same bits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::metrics::MetricRecord;

pub const CSV_HEADER: &str = "iter,algo,loss,grad_norm_sq_mean,grad_norm_sq_avg,consensus_err,gamma,seed";

fn row(r: &MetricRecord) -> String {
    format!(
        "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.t,
        r.algorithm.name(),
        r.loss_mean_model,
        r.grad_norm_sq_mean_model,
        r.grad_norm_sq_avg,
        r.consensus_err,
        r.gamma,
        r.seed
    )
}

/// Header, then each trajectory's records in order.
pub fn write_csv<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for t in trajectories {
        for r in &t.records {
            writeln!(out, "{}", row(r))?;
        }
    }
    out.flush()
}

pub fn csv_string(trajectories: &[Trajectory]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for t in trajectories {
        for r in &t.records {
            let _ = writeln!(s, "{}", row(r));
        }
    }
    s
}

pub fn write_csv_file(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let io_err = |e| Error::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(std::io::BufWriter::new(file), trajectories).map_err(io_err)
}

/// Reads rows written by [`write_csv`]. The header must match exactly.
pub fn parse_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => return Err(Error::InvalidArgument(format!("unexpected CSV header `{h}`"))),
        None => return Err(Error::InvalidArgument("empty CSV".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::InvalidArgument(format!("CSV line {}: {what}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(bad(&format!("expected 8 fields, found {}", fields.len())));
            }
            let float = |k: usize| fields[k].parse::<f64>().map_err(|_| bad(&format!("bad number `{}`", fields[k])));
            Ok(MetricRecord {
                t: fields[0].parse().map_err(|_| bad("bad iteration"))?,
                algorithm: fields[1].parse().map_err(|_| bad("bad algorithm"))?,
                loss_mean_model: float(2)?,
                grad_norm_sq_mean_model: float(3)?,
                grad_norm_sq_avg: float(4)?,
                consensus_err: float(5)?,
                gamma: float(6)?,
                seed: fields[7].parse().map_err(|_| bad("bad seed"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Algorithm;

    fn record(t: usize, loss: f64) -> MetricRecord {
        MetricRecord {
            t,
            loss_mean_model: loss,
            grad_norm_sq_mean_model: 1.0 / 3.0,
            grad_norm_sq_avg: 2.5e-300,
            consensus_err: 0.0,
            gamma: 0.1,
            algorithm: Algorithm::Dpsgd,
            seed: u64::MAX,
        }
    }

    #[test]
    fn row_format() {
        assert_eq!(
            row(&record(7, 1.0)),
            "7,dpsgd,1.0000000000000000e0,3.3333333333333331e-1,2.5000000000000000e-300,0.0000000000000000e0,1.0000000000000001e-1,18446744073709551615"
        );
    }

    #[test]
    fn round_trips_bits() {
        let values = [std::f64::consts::PI, 1e-310, 0.1 + 0.2, 123456.789e200];
        let records: Vec<_> = values.iter().enumerate().map(|(t, &v)| record(t, v)).collect();
        let text = std::iter::once(CSV_HEADER.to_string())
            .chain(records.iter().map(row))
            .collect::<Vec<_>>()
            .join("\n");
        let back = parse_csv(&text).unwrap();
        assert_eq!(back, records);
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a.loss_mean_model.to_bits(), b.loss_mean_model.to_bits());
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("iter,algo").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,d2,1,2")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,sgd,1,2,3,4,5,6")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,d2,x,2,3,4,5,6")).is_err());
        assert_eq!(parse_csv(&format!("{CSV_HEADER}\n")).unwrap(), vec![]);
    }
}
