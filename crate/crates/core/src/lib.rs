pub mod beam;
pub mod em;
pub mod features;
pub mod harness;
pub mod leaf;
pub mod lmnet;
pub mod radar;
pub mod rng;
