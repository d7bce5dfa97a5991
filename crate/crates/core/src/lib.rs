#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod estimation;
pub mod ins;
pub mod lie;
pub mod pipeline;
pub mod simulator;
pub mod units;
