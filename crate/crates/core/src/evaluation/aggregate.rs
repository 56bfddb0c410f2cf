use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;
use crate::trainer::RunRecord;

use super::mcnemar::mcnemar_test;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    /// Sample standard deviation over √n; zero for a single value.
    pub stderr: f64,
}

pub fn mean_stderr(values: &[f64]) -> MeanStderr {
    let n = values.len();
    if n == 0 {
        return MeanStderr {
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanStderr { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanStderr {
        mean,
        stderr: (var / n as f64).sqrt(),
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Mean test accuracy over the inclusive, 1-based epoch range `[lo, hi]`.
pub fn window_accuracy(record: &RunRecord, lo: usize, hi: usize) -> Result<f64> {
    if lo == 0 || lo > hi || hi > record.num_epochs() {
        return Err(Error::invalid(format!(
            "window [{lo}, {hi}] is empty or outside the {} recorded epochs",
            record.num_epochs()
        )));
    }
    let slice = &record.epochs[lo - 1..hi];
    Ok(slice.iter().map(|e| e.test_accuracy).sum::<f64>() / slice.len() as f64)
}

/// Which epoch ranges get summarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportWindows {
    /// Early-stopping window, inclusive and 1-based.
    pub early: (usize, usize),
    /// Length of the final-stage window that ends at the last epoch.
    pub final_len: usize,
}

impl Default for ReportWindows {
    fn default() -> Self {
        ReportWindows {
            early: (21, 30),
            final_len: 10,
        }
    }
}

impl ReportWindows {
    pub fn final_stage(&self, epochs: usize) -> (usize, usize) {
        (epochs.saturating_sub(self.final_len.max(1)) + 1, epochs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochComparison {
    pub epoch: usize,
    pub flat: MeanStderr,
    pub hc: MeanStderr,
    /// Median over seed pairs of the per-epoch McNemar p-value.
    pub p_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub method: String,
    pub kind: String,
    pub window: [usize; 2],
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub epochs: Vec<EpochComparison>,
    pub windows: Vec<WindowSummary>,
}

impl ComparisonReport {
    pub fn window(&self, method: &str, kind: &str) -> Option<&WindowSummary> {
        self.windows
            .iter()
            .find(|w| w.method == method && w.kind == kind)
    }

    /// `epoch,flat_mean,flat_stderr,hc_mean,hc_stderr,p_median`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "flat_mean", "flat_stderr", "hc_mean", "hc_stderr", "p_median"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.flat.mean.to_string(),
                e.flat.stderr.to_string(),
                e.hc.mean.to_string(),
                e.hc.stderr.to_string(),
                e.p_median.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Window mean ± stderr over runs.
fn summarize(records: &[RunRecord], method: &str, kind: &str, window: (usize, usize)) -> Result<WindowSummary> {
    let accs = records
        .iter()
        .map(|r| window_accuracy(r, window.0, window.1))
        .collect::<Result<Vec<_>>>()?;
    let s = mean_stderr(&accs);
    Ok(WindowSummary {
        method: method.into(),
        kind: kind.into(),
        window: [window.0, window.1],
        mean: s.mean,
        stderr: s.stderr,
    })
}

/// Per-epoch mean ± stderr for both methods, median McNemar p over seed pairs
/// (`flat[i]` is paired with `hc[i]`), and windowed summaries.
pub fn aggregate_runs(
    flat: &[RunRecord],
    hc: &[RunRecord],
    windows: &ReportWindows,
) -> Result<ComparisonReport> {
    if flat.len() < 2 || flat.len() != hc.len() {
        return Err(Error::invalid(format!(
            "need the same number (>= 2) of FLAT and HC runs, got {} and {}",
            flat.len(),
            hc.len()
        )));
    }
    let epochs = flat[0].num_epochs();
    if epochs == 0 {
        return Err(Error::invalid("records contain no epochs"));
    }
    for r in flat.iter().chain(hc) {
        if r.num_epochs() != epochs || r.correctness.len() != epochs {
            return Err(Error::invalid(format!(
                "misaligned records: {} epochs ({} bitmaps) vs {epochs}",
                r.num_epochs(),
                r.correctness.len()
            )));
        }
    }

    let mut rows = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let accs = |rs: &[RunRecord]| rs.iter().map(|r| r.epochs[e].test_accuracy).collect::<Vec<_>>();
        let p_values = flat
            .iter()
            .zip(hc)
            .map(|(f, h)| mcnemar_test(&h.correctness[e], &f.correctness[e]).map(|m| m.p_value))
            .collect::<Result<Vec<_>>>()?;
        rows.push(EpochComparison {
            epoch: e + 1,
            flat: mean_stderr(&accs(flat)),
            hc: mean_stderr(&accs(hc)),
            p_median: median(&p_values),
        });
    }

    let final_stage = windows.final_stage(epochs);
    let mut summaries = Vec::with_capacity(4);
    for (kind, win) in [("final", final_stage), ("early", windows.early)] {
        summaries.push(summarize(flat, "flat", kind, win)?);
        summaries.push(summarize(hc, "hc", kind, win)?);
    }
    Ok(ComparisonReport {
        epochs: rows,
        windows: summaries,
    })
}

/// Counts with true classes on rows and predictions on columns.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<Matrix<f64>> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = Matrix::zeros(k, k);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::LabelOutOfRange {
                label: t.max(p),
                num_classes: k,
            });
        }
        m[(t, p)] += 1.0;
    }
    Ok(m)
}
