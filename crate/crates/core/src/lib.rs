//! Numerics for the asymmetric simple exclusion process (ASEP) on the
//! nonnegative integers with an open boundary at the origin.
//!
//! Particles hop right at rate `p` and left at rate `q = 1 - p`, subject to
//! exclusion; site 0 exchanges particles with a reservoir (injection at rate
//! `alpha` when empty, ejection at rate `beta` when occupied). The crate
//! provides:
//!
//! - [`bethe`]: contour-integral transition probabilities for the closed
//!   half-line process, as a sum over signed permutations, in both the time
//!   and Laplace domains;
//! - [`tasep`]: determinant transition probabilities for the totally
//!   asymmetric case `p = 1`, the resolvent shift identity that makes the
//!   open-boundary kernels explicit there, and closed-form occupation-count
//!   probabilities;
//! - [`open_solver`]: Laplace-domain block solvers for the open-boundary
//!   process (general tri-diagonal system plus the triangular recursions for
//!   one-sided reservoir coupling), single-particle hitting laws, and
//!   time-domain recovery;
//! - [`ssep`]: the symmetric case — occupation correlations, reservoir
//!   current statistics and their long-time asymptotics, and the Fredholm
//!   kernel identities behind the second-moment constant;
//! - [`laplace`]: numerical inverse Laplace transforms (Talbot and
//!   Gaver-Stehfest) and a forward transform for sampled series;
//! - [`oracle`]: the exact finite-state Markov generator and its
//!   uniformized matrix exponential, the ground truth every closed form is
//!   tested against;
//! - [`mc`]: a Gillespie simulator with reproducible parallel seeding and
//!   statistical estimators;
//! - [`verify`]: the acceptance suite wiring all of the above together.

pub mod bethe;
pub mod error;
pub mod laplace;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod open_solver;
pub mod oracle;
pub mod ssep;
pub mod tasep;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    Configuration, ConfigSpace, LatticeTruncation, QuadratureSpec, Rates, SignedPermutation,
};
