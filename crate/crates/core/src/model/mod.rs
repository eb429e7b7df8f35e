//! Model structure, parameters, and probability evaluation.

pub mod eval;
pub mod params;
pub mod spec;
pub mod validate;

pub use eval::{
    cell_probability, expected_frequencies, forward_backward, joint_pattern_table,
    log_cell_probability, pattern_distribution, EvalError, ExpectedTable, ForwardBackward,
    JointTable, Posterior,
};
pub use params::{ParameterDocument, ParameterSet, ParamsError};
pub use spec::{
    Block, CellRef, ConstraintSet, Dims, Fix, ModelSpec, ModelSpecBuilder, RowClass, RowRef,
    SpecError,
};
pub use validate::{validate, Violation};
