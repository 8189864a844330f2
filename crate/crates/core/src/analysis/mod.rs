//! Statistical checks on descriptors: KDE density, correlations, OOD
//! scoring, level sets, Vendi diversity and training-dynamics trends.

mod dynamics;
mod kde;
mod level_sets;
mod ood;
pub mod stats;

pub use dynamics::{dynamics_log_summary, series_trend, Dip, DynamicsSummary, SeriesTrend, DIP_WINDOW};
pub use kde::{density_scaling_correlation, kde_density, scott_bandwidth, Correlation, KdeEstimate, LatentBox};
pub use level_sets::{level_set_stats, vendi_score, LevelSetBinning, LevelSetRow};
pub use ood::{ood_report, OodReport, ScoreSummary};
pub use stats::{auroc, pearson, rank_sum, spearman, RankSum};
