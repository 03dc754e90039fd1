pub mod ir;
pub mod loader;
pub mod cfg;
pub mod state;
pub mod symbolic;
pub mod exec;
pub mod corpus;
pub mod report;
