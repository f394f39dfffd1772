pub mod autodiff;
pub mod data;
pub mod eval;
pub mod kernels;
pub mod networks;
pub mod pipeline;
pub mod rng;
pub mod training;
pub mod transport;
