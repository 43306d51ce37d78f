pub mod analysis;
pub mod archive;
pub mod cli;
pub mod config;
pub mod evolution;
pub mod gait;
pub mod genome;
pub mod phenotype;
pub mod seeding;
pub mod simulator;
