pub mod calibrate;
pub mod counterfactual;
pub mod economy;
pub mod error;
pub mod fixtures;
pub mod index;
pub mod linearize;
pub mod metrics;
pub mod network;
pub mod solver;
pub mod suite;

pub use economy::{CarbonRegime, SectorTaxonomy, SteadyState, SteadyStateReport, WorldEconomy};
pub use error::{Error, Result};
pub use index::Dimensions;
pub use network::{domar_weights, leontief_inverse, ShareMatrices};
pub use solver::{solve, CbamMode, HatSolution, PolicyScenario};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/economy.md")]
    pub mod economy {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    pub mod calibration {}
    #[doc = include_str!("../../../book/src/solving.md")]
    pub mod solving {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/linearization.md")]
    pub mod linearization {}
    #[doc = include_str!("../../../book/src/counterfactuals.md")]
    pub mod counterfactuals {}
    #[doc = include_str!("../../../book/src/suite.md")]
    pub mod suite {}
}
