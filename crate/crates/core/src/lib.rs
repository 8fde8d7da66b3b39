pub mod harness;
pub mod literal;
pub mod model;
pub mod patch;
pub mod selector;
pub mod pipeline;
pub mod tutor;
pub mod handout;
