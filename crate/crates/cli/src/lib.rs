//! User-facing surface of the tracker: sequence ingestion, synthetic
//! fixture generation, run orchestration, and the oracle self-test.

pub mod config;
pub mod run;
pub mod selftest;
pub mod sequence;
pub mod synth;

pub use sequence::SequenceSpec;
pub use synth::SynthParams;
