//! Deictic image mapping for move-effect systems.

pub mod config;
pub mod deictic;
pub mod env;
pub mod experiment;
pub mod geometry;
pub mod homomorphism;
pub mod learner;
pub mod nn;
pub mod scalar;

pub use geometry::{GridTransform, Image, Pose};
pub use scalar::Scalar;

pub type ImageF32 = Image<f32>;
pub type ImageF64 = Image<f64>;
pub type PatchF32 = deictic::Patch<f32>;
pub type PatchF64 = deictic::Patch<f64>;
pub type ObservationF32 = env::Observation<f32>;
pub type ObservationF64 = env::Observation<f64>;
pub type ParametersF32 = nn::Parameters<f32>;
pub type ParametersF64 = nn::Parameters<f64>;
pub type DeicticAgentF32 = learner::DeicticAgent<f32>;
pub type DeicticAgentF64 = learner::DeicticAgent<f64>;
pub type DqnAgentF32 = learner::DqnAgent<f32>;
pub type DqnAgentF64 = learner::DqnAgent<f64>;
