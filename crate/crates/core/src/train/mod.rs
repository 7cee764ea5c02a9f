//! Optimisers, learning-rate schedules, dynamic batching, parameter EMA,
//! early stopping and the two training loops.

mod batching;
mod config;
mod early;
mod ema;
mod metrics;
mod mol;
mod node;
mod optim;
mod pipeline;
mod schedule;

pub use batching::{dynamic_batch, BatchCaps, DynamicBatcher, ItemSize};
pub use config::{CommonConfig, MolTrainConfig, NodeTrainConfig};
pub use early::{early_stop, EarlyStopper, StopDecision, StopMode};
pub use ema::ParamEma;
pub use metrics::{MetricRow, MetricsWriter, METRICS_HEADER};
pub use mol::{denoise_accuracy, epoch_order, evaluate_mols, mol_model_config, model_input, train_mol, MolItem, MolRun, MolStepStats, MolStream, MolTrainer};
pub use node::{
    eval_visibility, evaluate_nodes, is_labelled_slot, node_model_config, node_splits, train_node, train_node_on, train_visibility, NodeItem, NodeItemKind,
    NodeRun, NodeSplits, NodeStepStats, NodeStream, NodeTrainer,
};
pub use optim::{collect_grads, OptimConfig, OptimFamily, Optimizer};
pub use pipeline::{run_pipeline, PipelineConfig};
pub use schedule::{lr_at, ScheduleConfig};
