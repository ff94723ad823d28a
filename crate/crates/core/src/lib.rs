//! ATT estimation under an interactive-fixed-effects model for untreated
//! potential outcomes.
//!
//! The untreated outcome of unit `i` in period `t` is
//! `Y_it(0) = θ_t + ξ_i + λ_i F_t + X_i'β_t + W_i'α + U_it`. Differencing out
//! `ξ_i` and `λ_i` with the first two periods leaves a linear system in which
//! the time-invariant-effect covariates `W` instrument `Y_2 - Y_1`. The crate
//! estimates that system by linear GMM and recovers `ATT_t` for every period
//! after the first two.

pub mod alt;
pub mod att;
pub mod comparators;
pub mod error;
pub mod gmm;
pub mod inference;
pub mod io;
pub mod panel;
pub mod rc;
pub mod simulation;

pub use att::{AttPoint, AttSeries};
pub use error::{Error, Result};
pub use gmm::{GmmFit, MomentSystem, UnitBlock};
pub use panel::{ModelSpec, PanelDataset};
