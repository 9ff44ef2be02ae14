//! Two-layer deep generative models over binary data, trained layer by
//! layer, with exact likelihoods and best-latent-marginal upper bounds for
//! small latent layers.
//!
//! The crate is organised bottom-up: [`numerics`] and [`datasets`] provide
//! log-space arithmetic and the two benchmark datasets; [`rbm`] and [`nets`]
//! are the layer models; [`blm`] bounds what any prior over the latent layer
//! can achieve for a fixed decoder; [`deepmodel`] composes a decoder with a
//! top RBM; [`harness`] runs random searches and compares model families.
//!
//! ```
//! use deepgen::datasets::{gen_tea, split, SplitSpec};
//! use deepgen::rbm::{cd_k_train, Rbm, RBM_INIT_SIGMA};
//! use deepgen::numerics::{RngState, DEFAULT_ENUM_LIMIT};
//!
//! let tea = gen_tea();
//! let parts = split(&tea, SplitSpec::thirds(tea.len(), 0))?;
//! let init = Rbm::random(100, 8, RBM_INIT_SIGMA, &mut RngState::new(1).rng());
//! let rbm = cd_k_train(&init, &parts.train, 1, 0.02, 50, RngState::new(2))?;
//! let ll = rbm.exact_ll(&parts.valid, DEFAULT_ENUM_LIMIT)?;
//! assert!(ll > -69.32);
//! # Ok::<(), deepgen::Error>(())
//! ```

pub mod blm;
pub mod datasets;
pub mod deepmodel;
pub mod error;
pub mod harness;
pub mod model_io;
pub mod nets;
pub mod numerics;
pub mod rbm;

pub use error::{Error, Result};
