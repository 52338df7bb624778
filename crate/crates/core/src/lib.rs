//! Finite-state nonlinear Markov chains: chains whose transition matrix
//! `P_mu` depends on the current law `mu` of the process, so that the law
//! evolves by `mu_{n+1} = mu_n P_{mu_n}`.
//!
//! The crate covers
//!
//! * k-step kernels along the law flow and their ergodicity coefficients
//!   ([`coefficients`]),
//! * the resulting total-variation convergence bounds ([`bounds`]),
//! * invariant measures and empirical bound checks ([`invariant`]),
//! * law-of-large-numbers experiments on simulated paths ([`montecarlo`]),
//! * a four-state example chain where one-step conditions fail but
//!   three-step conditions hold ([`casestudy`]).
//!
//! ```
//! use nlmarkov::{casestudy::build_example, coefficients::{estimate_coefficients, SearchConfig, Regime}};
//!
//! let chain = build_example(0.5).unwrap();
//! let cfg = SearchConfig { resolution: 4, samples: 0, ..Default::default() };
//! let report = estimate_coefficients(&chain.handle(), 3, &cfg).unwrap();
//! assert_eq!(report.regime, Regime::Exponential);
//! assert!((report.alpha_k - 0.75).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod casestudy;
pub mod coefficients;
mod error;
pub mod invariant;
pub mod kernel;
pub mod kernel_file;
pub mod measure;
pub mod montecarlo;
pub mod output;
mod quadrature;

pub use error::{Error, Result};
pub use kernel::{AffineKernel, KernelHandle, StochasticMatrix};
pub use measure::{tv_distance, Distribution};
pub use quadrature::integrate;
