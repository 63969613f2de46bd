pub mod conv;
pub mod elementwise;
pub mod gemm;
pub mod layout;
pub mod matmul;
pub mod reduce;
