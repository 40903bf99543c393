//! Entropies, the kinetic formulation and the localized Besov bound.

pub mod entropy;
pub mod measure;
pub mod refined;

pub use entropy::{default_basis, entropy_production, production_battery, Entropy, Mode, ProductionReport};
pub use measure::{
    kinetic_density, kinetic_measure, kinetic_measure_from, mollify_chi, AngularGrid, KineticDensity,
    KineticMeasure,
};
pub use refined::{refined_besov_check, RefinedReport, RefinedSetup, TestBump};
