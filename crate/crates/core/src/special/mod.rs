//! Special functions: Bessel functions of the first kind and their zeros,
//! Mathieu functions, plus the small numerical kernels they rest on.

pub mod bessel;
pub mod mathieu;
pub mod quadrature;
pub mod roots;
pub mod tridiag;
