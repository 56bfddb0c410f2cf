//! Paired comparison of FLAT and HC runs.

mod aggregate;
mod mcnemar;

pub use aggregate::{
    aggregate_runs, confusion_matrix, mean_stderr, median, window_accuracy, ComparisonReport,
    EpochComparison, MeanStderr, ReportWindows, WindowSummary,
};
pub use mcnemar::{
    binomial_two_sided, chi_square_survival_1df, mcnemar_from_counts, mcnemar_test, McNemar,
    McNemarMethod, PairedOutcome, EXACT_BELOW,
};
