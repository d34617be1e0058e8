//! Core library for analyzing probabilistic timed graph transformation
//! systems (PTGTS) against probabilistic metric temporal graph conditions
//! (PMTGL).
//!
//! The pipeline built from these modules reduces a PMTGL query on a PTGTS to
//! a min/max reachability analysis on a tree-shaped probabilistic timed
//! automaton:
//!
//! * [`graph`] — typed attributed graphs, injective morphisms, matching;
//! * [`logic`] — graph conditions, metric temporal graph conditions, and a
//!   reference monitor over recorded timed paths;
//! * [`gts`] — PTGT rules, DPO rewriting, and tree-shaped state spaces;
//! * [`pta`] — DBM zones, PTA construction, and exact digital-clocks
//!   reachability probabilities;
//! * [`history`] — folding paths into graphs with history and encoding
//!   temporal conditions as history conditions;
//! * [`solver`] — linear-arithmetic satisfiability (Fourier–Motzkin),
//!   location labeling, and SMT-LIB 2 export.

pub mod graph;
pub mod gts;
pub mod history;
pub mod logic;
pub mod pta;
pub mod rational;
pub mod solver;

pub use rational::Rat;
