//! Monte Carlo campaigns, benchmarks and their CSV outputs.

pub mod campaigns;
pub mod spec;
pub mod summary;

pub use campaigns::{
    run_asymptotics, run_baseline_compare, run_bench, run_consistency, run_normality, McSummary, NormalityReport,
};
pub use spec::{CampaignSpec, Experiment};
pub use summary::{aggregate, CellSummary, RunRecord, TimingRecord, TimingSummary};
