pub mod asymptotics;
pub mod bvn;
pub mod copula;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod io;
pub mod joint;
pub mod lattice;
pub mod marginal;
pub mod markov;
pub mod optim;
pub mod panel;
pub mod quad;
pub mod rect;
pub mod report;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod transform;

pub use error::{Error, ObsId, Result};
