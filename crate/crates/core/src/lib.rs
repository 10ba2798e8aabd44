pub mod channel;
pub mod error;
pub mod decoder;
pub mod learner;
pub mod testbed;
pub mod cli;
