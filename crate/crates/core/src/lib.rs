//! Operator-level verification of quantum circuits through matrix product
//! operators, plus noise modelling, error mitigation and depth estimates.

pub mod circuit;
pub mod sim;
pub mod tensor;
pub mod io;
pub mod mpo;
pub mod verifier;
pub mod noise;
pub mod qem;
pub mod depth;
pub mod cli;
