//! External interfaces: the binary tensor container, JSON run configuration,
//! and grayscale (PGM) rendering.

pub mod config;
pub mod pgm;
pub mod tensor_file;
