//! Parameter-extraction protocols.

pub mod kappa;
pub mod kerr;
pub mod lsq;
pub mod multimode;
pub mod peaks;
