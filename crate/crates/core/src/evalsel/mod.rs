//! Mask metrics, per-set reports and the representative image selection
//! session.

mod metrics;
mod selection;

pub use metrics::{
    confusion, evaluate, evaluate_set, f_beta, mae, precision_recall, Confusion, EvalReport, EvalResult, MetricSummary,
    DEFAULT_BETA_SQ,
};
pub use selection::{selection_init, selection_score, Decision, ScoredPool, SelectionEvent, SelectionSession};
