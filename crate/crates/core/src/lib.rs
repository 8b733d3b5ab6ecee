//! Personalized blood-glucose forecasting at desk scale: multimodal
//! preprocessing, a from-scratch Bi-GRU network trained with shrinkage loss
//! under a leave-one-subject-out-then-fine-tune protocol, adverse-event
//! metrics, and a synthetic T1D cohort generator for controlled experiments.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod nn;
pub mod preprocess;
pub mod protocols;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{EventLabel, GlucoseSeries, SubjectLog, Timestamp, Window, WindowSet};
