//! Verification toolkit for a probabilistic mixed-choice multiparty
//! session calculus.

pub mod check;
pub mod ctxlts;
pub mod generate;
pub mod reduce;
pub mod rational;
pub mod surface;
pub mod subtype;
pub mod syntax;
pub mod synth;
pub mod typemeta;

pub use rational::{parse_probability, rational_from_decimal, Rational, RationalError};
pub use syntax::*;
