use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub samples: usize,
    /// Cumulative learner time, absent when timing is not recorded.
    pub seconds: Option<f64>,
    pub rmse: f64,
}

/// Learning-curve measurements of one learner on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub algorithm: String,
    pub seed: u64,
    pub rank: Option<usize>,
    pub lambda: f64,
    /// Remaining configuration as `key=value` pairs joined by `;`.
    pub extra: String,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    algo: String,
    seed: u64,
    samples: usize,
    seconds: Option<f64>,
    rmse: f64,
    r: Option<usize>,
    lambda: f64,
    extra: String,
}

impl EvalReport {
    pub fn new(algorithm: impl Into<String>, seed: u64, rank: Option<usize>, lambda: f64, extra: impl Into<String>) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            rank,
            lambda,
            extra: extra.into(),
            checkpoints: Vec::new(),
        }
    }

    pub fn push(&mut self, samples: usize, seconds: Option<f64>, rmse: f64) {
        self.checkpoints.push(Checkpoint { samples, seconds, rmse });
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.rmse)
    }

    /// Checkpoints must be non-decreasing in samples and in seconds.
    pub fn is_monotone(&self) -> bool {
        self.checkpoints.windows(2).all(|w| {
            w[0].samples <= w[1].samples
                && match (w[0].seconds, w[1].seconds) {
                    (Some(a), Some(b)) => a <= b,
                    _ => true,
                }
        })
    }

    /// One row per checkpoint: `algo,seed,samples,seconds,rmse,r,lambda,extra`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        if self.checkpoints.is_empty() {
            w.write_record(["algo", "seed", "samples", "seconds", "rmse", "r", "lambda", "extra"])?;
        }
        for c in &self.checkpoints {
            w.serialize(Row {
                algo: self.algorithm.clone(),
                seed: self.seed,
                samples: c.samples,
                seconds: c.seconds,
                rmse: c.rmse,
                r: self.rank,
                lambda: self.lambda,
                extra: self.extra.clone(),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ReportError> {
        let mut rd = csv::Reader::from_reader(input);
        let mut report: Option<EvalReport> = None;
        for row in rd.deserialize() {
            let row: Row = row?;
            let rep = report.get_or_insert_with(|| EvalReport::new(row.algo.clone(), row.seed, row.r, row.lambda, row.extra.clone()));
            if rep.algorithm != row.algo || rep.seed != row.seed || rep.rank != row.r || rep.extra != row.extra {
                return Err(ReportError::Inconsistent("rows describe different runs".into()));
            }
            rep.push(row.samples, row.seconds, row.rmse);
        }
        report.ok_or_else(|| ReportError::Inconsistent("no rows".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut rep = EvalReport::new("tlstd", 7, Some(50), 0.0, "k=1;beta=running_average");
        rep.push(0, None, 12.5);
        rep.push(100, None, 3.25);
        rep.push(150, None, 0.1 + 0.2);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("algo,seed,samples,seconds,rmse,r,lambda,extra\n"));
        assert!(text.contains("tlstd,7,0,,12.5,50,0.0,k=1;beta=running_average"));
        assert_eq!(EvalReport::read_csv(buf.as_slice()).unwrap(), rep);
    }

    #[test]
    fn empty_report_has_header() {
        let rep = EvalReport::new("td", 1, None, 0.9, "");
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "algo,seed,samples,seconds,rmse,r,lambda,extra\n");
    }

    #[test]
    fn monotone_check() {
        let mut rep = EvalReport::new("td", 1, None, 0.0, "");
        rep.push(10, Some(0.5), 1.0);
        rep.push(20, Some(0.7), 1.0);
        assert!(rep.is_monotone());
        rep.push(30, Some(0.6), 1.0);
        assert!(!rep.is_monotone());
    }
}
