//! Braid-based motion planning for mixing agents in a bounded region.

pub mod algebra;
pub mod controllers;
pub mod geometry;
pub mod mapping;
pub mod sim;
pub mod tracking;

pub type Vec2 = nalgebra::Vector2<f64>;
