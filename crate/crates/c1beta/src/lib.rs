//! Convex integration for `C^{1,β}` isometric immersions of the 2-disk.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod corrugation;
pub mod error;
pub mod field;
pub mod mollifier;
pub mod pipeline;
pub mod schedule;
pub mod stage_corrugate;
pub mod stage_nash;
pub mod transform;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/mollifier.md")]
    mod mollifier {}
    #[doc = include_str!("../../../book/src/corrugation.md")]
    mod corrugation {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/conformal.md")]
    mod conformal {}
    #[doc = include_str!("../../../book/src/stages.md")]
    mod stages {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    mod schedule {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
