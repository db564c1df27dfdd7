use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One completed training epoch. Error rates are fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_err: f64,
    pub theta: f64,
    pub lr: f64,
    pub val_err: Option<f64>,
}

/// Test error of `k`-pass averaging: `errors` misclassified out of `total`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestError {
    pub k: usize,
    pub errors: usize,
    pub total: usize,
}

impl TestError {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.total as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.rate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochMetrics>,
    pub test: Vec<TestError>,
}

impl MetricsLog {
    /// `epoch,loss,train_err,theta,lr` and, when any epoch was validated,
    /// a trailing `val_err` column.
    pub fn epochs_csv(&self) -> String {
        let with_val = self.epochs.iter().any(|r| r.val_err.is_some());
        let mut out = String::from("epoch,loss,train_err,theta,lr");
        out.push_str(if with_val { ",val_err\n" } else { "\n" });
        for r in &self.epochs {
            let _ = write!(out, "{},{},{},{},{}", r.epoch, r.loss, r.train_err, r.theta, r.lr);
            if with_val {
                let _ = write!(out, ",{}", r.val_err.map(|v| v.to_string()).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }

    /// `k,test_err` with the error in percent to two decimals, plus the
    /// exact counts.
    pub fn test_csv(&self) -> String {
        let mut out = String::from("k,test_err,errors,total\n");
        for t in &self.test {
            let _ = writeln!(out, "{},{:.2},{},{}", t.k, t.percent(), t.errors, t.total);
        }
        out
    }

    /// Error rates laid out as a row per `k`-test column:
    ///
    /// ```text
    /// tests       1 test  2 tests ...
    /// error (%)     2.21     2.15 ...
    /// ```
    pub fn test_table(&self) -> String {
        let header: Vec<String> =
            self.test.iter().map(|t| if t.k == 1 { "1 test".to_string() } else { format!("{} tests", t.k) }).collect();
        let width = header.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<10}", "tests");
        for h in &header {
            let _ = write!(out, " {h:>width$}");
        }
        let _ = write!(out, "\n{:<10}", "error (%)");
        for t in &self.test {
            let _ = write!(out, " {:>width$.2}", t.percent());
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::checkpoint("note.metrics", e.to_string()))
    }
}
