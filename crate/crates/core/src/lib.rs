//! Learns dictionaries of sub-pixel target signatures from bag-level labels
//! and scores spectra against them.
//!
//! The training data is weak: positive bags are only known to contain at
//! least one instance of some target, negative bags to contain none, and no
//! instance-level labels or target count are given. Training alternates
//! between picking each bag's best representative instance for every
//! candidate signature, assigning each positive bag to the signature that
//! explains it best, dropping signatures no bag selects, and refreshing each
//! signature with a closed-form update in whitened space. The learned
//! dictionary drives ACE or SMF detection, evaluated by ROC curves normalized
//! to a false-alarm-rate cutoff.
//!
//! Modules:
//! - [`data`]: instances, bags, spectral libraries, CSV formats
//! - [`whitening`]: background statistics, whitening/de-whitening
//! - [`detectors`]: ACE and SMF statistics, dictionary fusion, batch scoring
//! - [`learner`]: dictionary training (initialization, updates, pruning)
//! - [`simulator`]: mixed-pixel dataset generation with ground truth
//! - [`evaluation`]: ROC curves and normalized area under the curve
//! - [`cli`]: the `mtmi` command-line interface

pub mod cli;
pub mod data;
pub mod detectors;
mod error;
pub mod evaluation;
pub mod learner;
pub mod simulator;
mod textio;
mod vecmath;
pub mod whitening;

pub use error::{Error, Result};
