//! Charge-sensitivity toolkit for a two-mode (three-island) transmon.
//!
//! Energies are in GHz (energy / h), frequencies in GHz or MHz as named,
//! offset charges in Cooper-pair units.

mod error;
pub mod lm;
pub mod locator;
pub mod noise;
pub mod quad;
pub mod ramsey;
pub mod tight_binding;
pub mod hamiltonian;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
