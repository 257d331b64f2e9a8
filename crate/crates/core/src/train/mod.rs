//! Training loops, metrics and the method comparison harness.

mod compare;
mod metrics;
mod regressor;
mod router;

pub use compare::{
    compare_methods, interleave, CompareInputs, ComparisonReport, Method, MethodReport, Table, TableColumn,
    STREAM_BLOCK, TABLE_ROWS,
};
pub use metrics::{accuracy, mee, measure_test_time, router_accuracy, Timing, TIMING_REPEATS};
pub use regressor::{train_model, Curves, TrainHyper, TrainRun};
pub use router::{train_router, RouterRun};
