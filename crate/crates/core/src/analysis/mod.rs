//! Entropy-gap measurement, the high-rate index law, R–D sweeps, BD-rate,
//! and the property experiments built on them.

mod bdrate;
mod entropy;
pub mod experiments;
mod highrate;
mod pchip;
mod sweep;

pub use bdrate::{bd_log_ratio, bd_rate, bd_rate_with, RDCurve, RDPoint, BD_SUBINTERVALS};
pub use entropy::{
    conditional_entropy_gap, entropy_gap, entropy_gap_of_pmf, plugin_entropy_bits, total_variation,
    ConditionalGapReport, IndexHistogram, LabeledStream, StreamGap,
};
pub use highrate::{high_rate_predicted_pmf, standard_normal_log_density, HighRatePrediction};
pub use pchip::{pchip_interpolate, Pchip};
pub use sweep::{
    entropy_report, evaluate, make_dataset, rd_sweep, rd_sweep_on, read_rd_csv, write_entropy_csv, write_rd_csv,
    Dataset, EntropyRow, SweepConfig, SweepPoint, SweepResult, RD_CSV_HEADER,
};
