//! Sketch domain model: primitives, constraints, dimensions and parameter packing.

mod constraint;
mod json;
mod primitive;

pub use constraint::{
    angle_between, is_legal, measure_dimension, residual_arity, validate_constraint, validate_sequence,
    ConstraintInstance, ConstraintKind, ConstraintSequence, MAX_CONSTRAINTS,
};
pub use json::SketchDocument;
pub use primitive::{
    arc_sweep, dof_of_primitive, pack_parameters, unpack_parameters, Canvas, ParamIndex, Primitive,
    PrimitiveKind, Sketch, MAX_PRIMITIVES,
};
