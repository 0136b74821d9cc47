pub mod algorithms;
pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod datagen;
pub mod env;
pub mod nn;
