pub mod conv;
pub mod elementwise;
pub mod matmul;
pub mod norm;
pub mod reduce;
pub mod resample;
pub mod shape;
pub mod softmax;
