//! Next-symbol prediction for hidden Markov models and renewal processes via
//! universal probability assignments.
//!
//! A sequential probability assignment `Q` with small redundancy against a
//! model class is turned into a predictor by averaging its conditionals over
//! every suffix of the observed path. The crate provides
//!
//! - [`models`]: exact HMMs and renewal laws with their oracle conditionals,
//! - [`assignments`]: add-one assignments and the joint HMM assignment,
//! - [`marginal`]: exact marginalization of the joint assignment over hidden
//!   paths via transition/emission count statistics,
//! - [`predictor`]: the averaged predictors,
//! - [`infolab`]: exact small-instance information quantities,
//! - [`bench`]: risk sweeps, worst-case search and reports.

pub mod assignments;
pub mod bench;
pub mod cli;
pub mod dist;
pub mod error;
pub mod infolab;
pub mod marginal;
pub mod math;
pub mod modelfile;
pub mod models;
pub mod nml;
pub mod predictor;
pub mod seeding;

pub use dist::PredictiveDist;
pub use error::{Error, Result};
pub use models::{HmmParams, Model, RenewalLaw};
