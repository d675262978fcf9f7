//! Variational solutions of Hamilton-Jacobi equations.
//!
//! The crate computes minimax ("variational") solutions of
//! `∂u/∂t + H(t, x, ∂u/∂x) = 0` and of two-time systems by tracking the
//! Lagrangian front of characteristics and selecting among its branches
//! with discrete generating families. Around that core it offers the
//! geometric probes used to study commuting Hamiltonians: Poisson,
//! time-dependent, multi-time and contact brackets, the commutator isotopy
//! and its generating Hamiltonian, the `c(1)`, `c(μ)` and `γ` invariants of
//! generating families, and a Lax-Oleinik oracle for convex problems.
//!
//! Everything is one-dimensional in space (`x`, `p` scalar).

pub mod expr;
pub mod flow;
pub mod front;
pub mod gfqi;
pub mod grid;
pub mod ham;
pub mod solve;

pub use expr::{parse_expression, Expr, Var};
pub use ham::{Coords, GradientMode, Hamiltonian, PhasePoint};
