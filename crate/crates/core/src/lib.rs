//! Computational kernel for torus-symmetric Calabi-Yau structures and
//! special Lagrangian torus fibrations.
//!
//! The crate is organised around a small exact exterior-algebra core
//! ([`forms`]) shared by four consumers:
//!
//! * [`cartan`] — the linear-algebra side of the Cartan test for the flag
//!   subspaces `h_k` of the SU(n) coframe reduction, reproducing the
//!   dimension counts behind the isometric embedding theorems.
//! * [`ansatz`] — assembly and verification of the torus-action ansatz:
//!   builds the pair (Ω, ω) from a base grid of (W⁻¹, α) fields and checks
//!   the structure equations and algebraic identities pointwise.
//! * [`evolve`] — staged RK4 integration of the evolution system that
//!   extends initial data (W₀, θ₀, ω₀) in the moment-map directions.
//! * [`fibration`] — period matrix, fiber and moduli-space metrics, fiber
//!   volume and the semi-flat volume function Φ of the T²-symmetric
//!   special Lagrangian fibration.
//!
//! The exterior-algebra and dense linear-algebra layers are generic over
//! the real scalar via [`scalar::Real`]; the crate root re-exports `f64`
//! aliases which every numerical module uses.

pub mod ansatz;
pub mod cartan;
pub mod evolve;
pub mod fibration;
pub mod forms;
pub mod grid;
pub mod linalg;
pub mod sampling;
pub mod scalar;

/// Complex scalar used by all double-precision numerics.
pub type C64 = num_complex::Complex<f64>;

/// Degree-k alternating form on R^d with `f64` complex coefficients.
pub type AltForm = forms::AltFormOf<f64>;

/// Real d×d matrix acting on column vectors of R^d, `f64` entries.
pub type LinearMap = forms::LinearMapOf<f64>;

pub use ansatz::{AnsatzState, ResidualReport};
pub use cartan::{PolarReport, SuStructure};
pub use evolve::{EvolutionConfig, Trajectory};
pub use fibration::FibrationGeometry;
pub use grid::BaseGrid;
