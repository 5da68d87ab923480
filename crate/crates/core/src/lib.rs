//! Abductive hypothesis scoring.
//!
//! Narrative records are grouped per observation pair into multi-hypothesis
//! samples, each hypothesis is encoded as a triad `[O1; H; O2]` and pooled into
//! a feature vector, a bidirectional LSTM runs across the hypotheses of a sample
//! so every score sees its competitors, and training minimises a joint softmax
//! focal loss over groups that each hold one correct hypothesis plus all wrong
//! ones.
//!
//! ```
//! use abduct_core::loss::{sample_loss, LossConfig};
//!
//! let result = sample_loss(&[1.0, 0.0, -1.0], &[1, 1, 0], &LossConfig::default()).unwrap();
//! assert!(result.loss > 0.0);
//! assert_eq!(result.grad.len(), 3);
//! ```

pub mod corpus;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod interaction;
pub mod loss;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
