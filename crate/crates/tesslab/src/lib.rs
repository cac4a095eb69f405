//! Monte Carlo experiments, artifact output and the `tess-lab` command line
//! for the estimators of `tesslab-core`.

pub mod cli;
pub mod io;
pub mod mcengine;
