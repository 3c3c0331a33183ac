//! Trial metrics, the omnibus tests used to compare conditions, and
//! classifier scoring.

mod metrics;
mod report;
pub mod special;
mod stats;

pub use metrics::{compute_metrics, MetricsError, TrialMetrics};
pub use report::{build_report, Observation, Report, SummaryRow, TestRow, METRICS};
pub use stats::{
    cronbach_alpha, describe, f1_score, ks_uniform, kruskal_wallis, mean, median, mid_ranks, one_way_anova,
    variance, Anova, Confusion, Describe, KruskalWallis, KsTest, StatsError,
};
