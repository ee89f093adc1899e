//! Arrival sequencing at a shared vertiport when reported ETAs may be false.
//!
//! The crate computes separation-feasible schedules from reported ETAs
//! ([`schedule`]), screens and transforms reports with a tunable rule
//! ([`rules`]), models self-interested and malicious falsification inside
//! surveillance-consistent intervals ([`adversary`]), tunes the rule against
//! both threats ([`coordinator`]) and runs the seven-case study and
//! sensitivity sweeps ([`experiments`]). [`report`] holds the CSV and
//! manifest writers used by the `seqshield` binary.

pub mod adversary;
pub mod cli;
pub mod coordinator;
pub mod error;
pub mod experiments;
pub mod report;
pub mod rules;
pub mod scenario;
pub mod schedule;

pub use error::{Error, Result};
pub use rules::RuleParams;
pub use scenario::{DeviationVector, ReportVector, Scenario, Vehicle};
pub use schedule::Schedule;
