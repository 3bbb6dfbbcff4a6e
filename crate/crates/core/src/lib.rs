//! Legendre Memory Unit language models with implicit self-attention.
//!
//! The crate provides the LTI memory in three interchangeable backends
//! (ZOH state space, O(q) Runge-Kutta, FFT convolution), the implicit
//! self-attention block with its reduced-order path, a small trainable
//! autoregressive model, and FLOP accounting that checks analytic cost
//! formulas against instrumented counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod costmodel;
pub mod data;
pub mod error;
pub mod lmu;
pub mod model;
pub mod numerics;
pub mod powerlaw;
pub mod training;

pub use error::{Error, Result};
