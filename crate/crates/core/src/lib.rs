//! Trace-grounded evaluation toolkit for tool-using agents.
//!
//! The crate has two halves that meet in the middle:
//!
//! * **Agentic side**: canonical JSONL trajectories ([`trace`]), a seeded
//!   synthetic environment that plants known violations ([`synth`]), rubric
//!   judges that recover them ([`judge`]), and outcome-conditioned statistics
//!   over the resulting flags ([`stats`]).
//! * **Static side**: a from-scratch text pipeline (TF-IDF, logistic
//!   regression) plus the standard post-hoc explainers: exact linear SHAP,
//!   LIME, partial dependence, and a rank-stability protocol ([`xai`]).
//!
//! [`bridge`] connects the halves by treating rubric flags as features of an
//! outcome model and explaining that model with the static machinery, so both
//! paradigms can be read side by side. [`packet`] wraps any explanation in a
//! self-describing, verifiable envelope, and [`report`] renders results as
//! Markdown, CSV, or JSON.

pub mod bridge;
pub mod convention;
pub mod judge;
pub mod packet;
pub mod report;
pub mod stats;
pub mod synth;
pub mod trace;
pub mod xai;
