//! Temporary build scaffold; full module set lands incrementally.
pub mod data;
pub mod dsp;
pub mod epoching;
pub mod rf;
pub mod rng;
pub mod slda;
pub use data::{ClassLabel, DataError, EpochSet, EventList, Onset, Recording, SplitPlan};
pub use rf::RfModel;
pub use slda::SldaModel;
