pub mod statcore;
pub mod trialgen;
pub mod modelspec;
pub mod mi;
pub mod analyze;
pub mod harness;
