//! Causal graphical normalizing flows.
//!
//! A flow is trained by maximum likelihood on observational data over a
//! user-supplied causal DAG. Its inverse acts as a structural causal model,
//! so interventional and counterfactual queries reduce to abduction (run the
//! flow forward), action (clamp the treatment) and prediction (run it back).

pub mod counterfactual;
pub mod dag;
pub mod flow;
pub mod numeric;
pub mod synth;
pub mod trainer;
