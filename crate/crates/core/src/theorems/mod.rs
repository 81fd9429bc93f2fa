//! Theorem-level drivers: comparison checks, extremal reflected solutions,
//! a priori estimate diagnostics and the uniform penalization bound.

pub mod comparison;
pub mod estimates;
pub mod extremal;
pub mod prop7;

pub use comparison::{
    check_data_ordering, compare_increments, compare_rbsde, driver_ordering_violation,
    ComparisonVerdict,
};
pub use estimates::{estimate_diagnostic, EstimateDiagnostic, EstimateId, EstimateInput};
pub use extremal::{extremal_reflected, Side};
pub use prop7::{dominating_solution, proposition7_bound, Prop7Report};
