//! Audio front end, file formats and command-line tools around
//! [`mgff_core`].

pub mod cli;
pub mod error;
pub mod fbank;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod toy;
pub mod wav;
pub mod weights;

pub use error::{Error, Result};
pub use mgff_core;
