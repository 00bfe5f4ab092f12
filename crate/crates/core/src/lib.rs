//! Finite-dimensional eventum mechanics.
//!
//! A classical-quantum world is a Hilbert space `K ⊗ L` where `K` carries a
//! preferred basis of classical labels. A unitary `U` on `K ⊗ L` is
//! *compatible* with the world when it maps the predictables
//! `A = diag(K) ⊗ B(L)` into themselves in the Heisenberg picture, which
//! forces a block structure `U_{x,f(x)}` governed by a map `f` on labels.
//!
//! The crate is organised bottom-up:
//!
//! * [`matcore`]: dense complex matrices, tensor products, pinching, partial
//!   traces and isometry completion.
//! * [`vnalg`]: commutants, bicommutants and centres of finite matrix
//!   algebras.
//! * [`eventum`]: compatible models, block analysis, Heisenberg and
//!   Schrödinger steps, trajectory sampling and alternative worlds.
//! * [`embed`]: embedding of a Kraus family into a system, apparatus and
//!   environment-chain model.
//! * [`models`]: worked models (Geiger counter, autonomous worlds, the qubit
//!   chain shift).
//! * [`io`]: the versioned JSON file formats shared with the command line.

pub mod embed;
pub mod error;
pub mod eventum;
pub mod io;
pub mod matcore;
pub mod models;
pub mod random;
pub mod vnalg;

pub use error::{Error, Result};
pub use matcore::{CMat, C64};

/// Numeric tolerances used throughout the crate.
pub mod tol {
    /// Identities that hold exactly by construction.
    pub const EXACT: f64 = 1e-12;
    /// Identities obtained from a solve or a derived construction.
    pub const SOLVED: f64 = 1e-10;
    /// Blocks with Frobenius norm at or below this are treated as zero, and
    /// compatibility residuals must stay below it.
    pub const ZERO_BLOCK: f64 = 1e-9;
    /// Branches whose probability falls below this are dropped.
    pub const PRUNE: f64 = 1e-14;
    /// Singular values below this span a nullspace.
    pub const NULLSPACE: f64 = 1e-10;
}
