//! Oracles shared by the integration suites. Each one recomputes a quantity
//! from its definition, independently of the code under test.
#![allow(dead_code)]

pub mod criteria;
pub mod grad_suite;
pub mod gradcheck;
pub mod metrics_oracle;
pub mod supcon_oracle;
