//! Toolkit for the discrete anisotropic p(k)-Laplacian Dirichlet problem
//!
//! ```text
//!   -Δ( |Δu(k-1)|^{p(k-1)-2} Δu(k-1) ) = λ f_k(u(k)),   k = 1..T,
//!    u(0) = u(T+1) = 0,
//! ```
//!
//! where `Δu(k) = u(k+1) - u(k)` and every exponent satisfies `p(k) > 1`.
//!
//! The crate is organized around the variational structure of the problem:
//!
//! * [`problem`] — instance types: state vectors with explicit boundary
//!   entries, per-index exponent maps, nonlinearity families `(f_k, F_k)`.
//! * [`energy`] — the energy `Φ`, the potential `Ψ`, the functional
//!   `J_λ = Φ - λΨ`, its weak gradient, the strong (difference-equation)
//!   residual, and the tridiagonal Hessian.
//! * [`theory`] — closed-form constants and admissible λ-intervals
//!   (asymptotic quotient estimates, embedding bounds, sublevel radii).
//! * [`solver`] — damped Newton with deflation, negativity probes, the
//!   sublevel cascade that extracts sequences of small-norm solutions, and
//!   seeded multistart.
//! * [`gallery`] — built-in instance families, including an oscillating
//!   nonlinearity built on factorial scales whose evaluation requires the
//!   exact wide-exponent arithmetic in [`wide`].
//! * [`report`] — schema-versioned, deterministic JSON/CSV report types.
//!
//! Batch operations (multistart, λ-sweeps, sampling checks) run in parallel
//! via rayon when the `parallel` feature (default) is enabled; every batch
//! API also takes a runtime switch so the sequential path stays available
//! for benchmarking and debugging. Results are merged deterministically, so
//! reports are byte-identical for a fixed seed either way.

pub mod config;
pub mod energy;
pub mod exec;
pub mod gallery;
pub mod problem;
pub mod report;
pub mod solver;
pub mod theory;
pub mod wide;

pub use config::{load_instance, load_run_config, RunConfig};
pub use energy::{hessian, phi_psi, strong_residual, verify_coercivity, weak_gradient};
pub use problem::{ExponentMap, NonlinearityFamily, ProblemInstance, StateVector};
pub use solver::{cascade, multistart, newton_solve, probe_negativity};
pub use wide::WideFloat;
