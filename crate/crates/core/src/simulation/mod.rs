//! The active-learning loop, a phantom data pool, and the oracle predictor
//! that stands in for a trained segmentation network.

mod compare;
mod config;
mod oracle;
mod phantom;
mod run;

pub use compare::{compare_strategies, compare_with_runs, count_to_target, AggregatePoint, ComparisonReport, StrategyCurve};
pub use config::{InitMode, OracleParams, PhantomParams, SimulationConfig};
pub use oracle::{box_blur, familiarity, EnsembleKind, OraclePredictor, Predictor};
pub use phantom::{generate_phantom_pool, phantom_id, ItemState, Lesion, PoolItem};
pub use run::{ensemble_kind, run_active_learning, simulate, IterationRecord, RunLog};
