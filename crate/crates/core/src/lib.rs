//! Fuel-optimal heavy-duty vehicle platooning: road and vehicle models,
//! platoon control, cooperative look-ahead planning, merge optimization and
//! fleet coordination.

// negated comparisons below deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case_study;
pub mod clac;
pub mod control;
pub mod error;
pub mod fleet;
pub mod merge;
pub mod road;
pub mod scenario;
pub mod vehicle;

pub use error::{PlatoonError, Result};
