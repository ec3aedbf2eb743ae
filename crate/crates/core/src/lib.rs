//! Finite decomposability of linear maps between matrix algebras.
//!
//! A map `φ: M_d → M_h` is decomposable with respect to a sequence of
//! *-maps `(φ_k)` on `M_d` when `φ = Σ_k ψ_k∘φ_k` for completely positive
//! `ψ_k`. This crate decides membership numerically at the Choi level,
//! emits re-verifiable certificates or dual witnesses, tests the cone
//! criterion `Γ_n⁺`, and builds the dilations implied by a decomposition.

pub mod decomp;
pub mod dilation;
pub mod error;
pub mod gamma;
pub mod linalg;
pub mod sdpa;
pub mod seq;
pub mod superop;

pub use error::{Error, Result};
