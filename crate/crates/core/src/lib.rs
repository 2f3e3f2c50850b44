//! Seedable experiment engine for gridworld agents with a global-workspace
//! slot memory and a self-model, trained by behavior cloning and probed with
//! post-training lesions, noise titrations and access/metacognition markers.

pub mod agents;
pub mod envs;
pub mod harness;
pub mod interventions;
pub mod markers;
pub mod numerics;
pub mod rng;
pub mod stats;
pub mod training;
