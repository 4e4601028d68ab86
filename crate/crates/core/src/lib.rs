pub mod annotation;
pub mod cli;
pub mod corpus;
pub mod generator;
pub mod jsonl;
pub mod knowledge;
pub mod manifest;
pub mod metrics;
pub mod sequencing;
