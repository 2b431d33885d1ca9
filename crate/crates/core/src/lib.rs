pub mod continuum;
pub mod degree_graph;
pub mod error;
pub mod experiments;
pub mod fullstack_sim;
pub mod game;
pub mod mean_field;
pub mod state_space;
pub mod stochastic_sim;

pub use error::{Error, Result};
