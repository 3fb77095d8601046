pub mod distribution;
pub mod domination;
pub mod error;
pub mod grid;
pub mod lp;
pub mod merge;
pub mod oracle;
pub mod subclasses;
pub mod tolerances;
pub mod transport;
pub mod weights;
