//! Simulated panels, the static principal-component baseline and the Monte
//! Carlo PMSE harness.
//!
//! Randomness: every replication owns a ChaCha8 generator seeded with
//! [`derive_seed`]`(base_seed, dgp, T, m, replication)`. Within a replication,
//! stream 0 draws the model parameters, stream 1 the factor (or VAR)
//! innovations and stream 2 the idiosyncratic noise, so results do not depend
//! on execution order or thread count.

pub mod dgp;
pub mod monte_carlo;
pub mod sw;

pub use dgp::{gen_dfm1, gen_dfm2, gen_varma, generate, DgpKind, DgpSpec, Overrides, SimulatedPanel};
pub use monte_carlo::{derive_seed, run_monte_carlo, MethodSpec, MonteCarloConfig, MonteCarloReport};
pub use sw::{sw_baseline_forecast, StaticFactorModel};
