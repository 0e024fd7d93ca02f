//! Experience-driven configuration suggestion for machine-learning tasks.
//!
//! Historical runs are canonicalized into short sentences, a language model
//! distills them into guidelines offline, and online it is asked once for
//! configurations of a new task, given the most similar past tasks and the
//! guidelines. Lookup-table benchmarks and baselines evaluate the result.

pub mod bench;
pub mod canonical;
pub mod config;
pub mod discretize;
pub mod elicitation;
pub mod error;
pub mod io;
pub mod llm;
pub mod pool;
pub mod retrieval;
pub mod rng;
pub mod session;
pub mod space;
pub mod suggestion;
pub mod synthetic;

pub use error::{Error, ParseError, Result};
pub use space::{
    Direction, DiscreteSolution, DiscreteValue, ExperienceRecord, Level, ParamValue, ParameterDef,
    Solution, SolutionSpace, Task,
};
