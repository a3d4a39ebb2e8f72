//! Simulation and algorithm library for fine-grained distributed sorting.

pub mod harness;
pub mod median_tree;
pub mod mergemin;
pub mod nanosort;
pub mod netsim;
pub mod pivot;

pub use harness::{gen_records, run_graysort, RunConfig, RunReport};
pub use nanosort::{SortConfig, SortRecord, VerifyReport};
pub use netsim::{CostModel, NetConfig, NodeId, SimTime, Topology, Trace};
pub use pivot::{Key, PivotSet, Strategy};
