//! KAM iteration for quasiperiodically forced circle flows
//! `θ̇ = ρ̃ + f(θ, φ)`, `φ̇ = ω = (1, α)`.

// `!(x > y)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arithmetic;
pub mod dynamics;
pub mod homological;
pub mod interval;
pub mod kamflow;
pub mod spectral;
