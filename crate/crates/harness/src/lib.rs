pub mod annotate;
pub mod bench;
pub mod cli;
pub mod corpus;
pub mod transform;
