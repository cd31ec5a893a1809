//! Averaged-model simulator for a grid-connected PEM electrolyzer: stack
//! electrical model, PWM rectifier and optional buck stage, cascaded dq
//! control with a PLL, and a small engine-generator grid with a
//! power-holding supervisor.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod converter;
pub mod engine;
pub mod error;
pub mod frames;
pub mod grid;
pub mod stack;

mod numeric;

pub use error::{Error, Result};
