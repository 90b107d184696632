pub mod bch;
pub mod bits;
pub mod channel;
pub mod crkg;
pub mod error;
pub mod forwarding;
pub mod frame;
pub mod harness;
pub mod polar;
pub mod qkd;
pub mod randomness;
pub mod report;
pub mod scenario;
pub mod simplified;
pub mod timing;
pub mod toeplitz;
