//! Pretraining, downstream training, evaluation and run aggregation.

mod config;
mod data;
mod downstream;
mod pretrain;
mod report;

pub use config::{parse_assignment, DataConfig, RunConfig, RunMode, SplitSettings};
pub use data::{downstream_view, labeled_views, load_clips, load_labeled, stack, LabeledViews};
pub use downstream::{evaluate, load_downstream_data, train_downstream, train_downstream_on, DownstreamData};
pub use pretrain::{embedding_std, pretrain, pretrain_clips, pretrain_steps_per_epoch, view_pair};
pub use report::{aggregate_runs, mean_std, Aggregate, EpochRecord, MeanStd, RunReport, Timing};
