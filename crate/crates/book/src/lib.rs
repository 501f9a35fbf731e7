//! Compiles and runs the listings in the guide under `book/` as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/near-field.md")]
pub mod near_field {}

#[doc = include_str!("../../../book/src/far-field.md")]
pub mod far_field {}

#[doc = include_str!("../../../book/src/system-model.md")]
pub mod system_model {}

#[doc = include_str!("../../../book/src/power-allocation.md")]
pub mod power_allocation {}

#[doc = include_str!("../../../book/src/reflection-coefficients.md")]
pub mod reflection_coefficients {}

#[doc = include_str!("../../../book/src/alternating-optimization.md")]
pub mod alternating_optimization {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
