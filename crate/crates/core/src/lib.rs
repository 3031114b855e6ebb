pub mod covering;
pub mod envgen;
pub mod error;
pub mod expectile;
pub mod experiment;
pub mod fed;
pub mod io;
pub mod mdp;
pub mod metrics;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/covering.md")]
    mod covering {}
    #[doc = include_str!("../../../book/src/robust-operator.md")]
    mod robust_operator {}
    #[doc = include_str!("../../../book/src/federation.md")]
    mod federation {}
    #[doc = include_str!("../../../book/src/expectile.md")]
    mod expectile {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
