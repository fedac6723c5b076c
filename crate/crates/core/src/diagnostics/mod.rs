//! Chain metrics and brute-force oracles for small models.

mod metrics;
mod quadrature;
mod transition;

pub use aux_test::*;
pub use metrics::*;
pub use quadrature::*;
pub use transition::*;
