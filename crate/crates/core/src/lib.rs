//! Twelve-lead ECG synthesis from one or two asynchronous leads.
//!
//! The crate bundles everything needed to train and check the generator at
//! desk scale:
//!
//! - [`signal`]: lead identities, records, windowing and the asynchronous
//!   Lead I / Lead II pair that the model consumes.
//! - [`synth`]: a sum-of-Gaussians twelve-lead generator with MI-like and
//!   AF-like morphologies and artifact injection.
//! - [`dataset`]: record files, manifests and stratified splits.
//! - [`nn`]: the small differentiable layer set, Adam and focal loss.
//! - [`model`]: style, mapping, generator and discriminator networks, their
//!   four objectives, the adversarial training loop and synthesis.
//! - [`quality`]: R-peak detection and amplitude / position errors.
//! - [`classifier`]: a 1-D ResNet18, lead-variant datasets and AUROC/AUPRC
//!   with bootstrap intervals.
//! - [`plot`]: SVG overlays of original and generated leads.
//! - [`cli`]: the `leadsynth` command-line pipelines.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod model;
pub mod nn;
pub mod plot;
pub mod quality;
pub mod signal;
pub mod synth;

pub use signal::{AsyncLeadPair, EcgRecord, Label, LeadId};
