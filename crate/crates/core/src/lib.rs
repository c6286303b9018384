//! Nonsmooth bracket-generating controllability.
//!
//! Formal iterated brackets, set-valued Lie brackets of vector fields with
//! limited regularity, multi-flow compositions, certification of the
//! L-infinity bracket-generating condition and constructive steering.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bracket;
pub mod controllability;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod hull;
pub mod lie;
pub mod multiflow;

pub use bracket::{analyze, parse_formal_bracket, BracketAnalysis, FormalBracket, Regularity, Side};
pub use error::{Error, Result};
pub use field::{builtin_system, numeric_jacobian, Binding, BoundSystem, VectorField, VectorFieldSystem};
pub use lie::{check_antisymmetry, clarke_jacobian_estimate, classical_bracket, set_valued_bracket, BracketPolytope, SamplingConfig};
pub use flow::{flow, flow_inverse, FlowConfig, FlowMethod};
pub use multiflow::{control_word, parse_family, psi, replay, sigma, steering_map, BracketTerm, ControlWord, Segment, SteeringParams};
pub use controllability::{certify_bracket_generating, fit_holder_exponent, reachable_cloud, steer, CertStatus, Certificate, SteeringResult};
