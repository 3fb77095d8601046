//! Rules that are valid only for restricted classes of e-value vectors,
//! with a Monte Carlo harness to check them.

pub mod calibrator;
pub mod montecarlo;
pub mod rules;

pub use calibrator::{Calibrator, CalibratorShape, MarginalModel};
pub use montecarlo::{
    estimate, exact_permutation_tail, full_support_admissibility_check,
    incomparability_witnesses, simulate, AdmissibilityCheck, AdmissibilityVerdict, Estimate,
    Incomparability, Rule, Sampler, SimulationReport, SimulationVerdict, Witness,
};
pub use rules::{
    calibrated_merge, exchangeable_merge, identical_merge, mixture_merge, product_merge,
    IdenticalMerge, MixtureComponent, MixtureTerm, SecondMomentBound,
};
