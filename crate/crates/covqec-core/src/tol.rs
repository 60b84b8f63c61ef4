//! Centralized numerical tolerances and iteration caps.
//!
//! Every module reads its thresholds from here so a tolerance change is a
//! one-line edit. The values are deliberately conservative for double
//! precision at the dense dimensions this crate targets (up to ~2^12).

/// Structural contracts: trace preservation, isometry defect, CPTP checks.
pub const STRUCT_TOL: f64 = 1e-10;

/// Metric-level certifications: distances, fidelities, chain inequalities.
pub const NUM_TOL: f64 = 1e-7;

/// Interior-point termination: duality gap and feasibility residuals.
pub const SDP_TOL: f64 = 1e-7;

/// Structure fits, e.g. recognizing a dephasing channel from its action.
pub const FIT_TOL: f64 = 1e-7;

/// Iteration cap shared by the interior-point solver and scalar searches.
pub const ITER_MAX: usize = 200;

/// Hermiticity gate: max entrywise |A - A^dag| accepted for a hermitian tag.
pub const HERM_TOL: f64 = 1e-12;

/// Dense materialization cap; operations that would densify a larger square
/// operator return an error instead of exhausting memory.
pub const DENSE_DIM_CAP: usize = 1 << 12;
