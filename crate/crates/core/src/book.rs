//! The guide's code listings, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/walkthrough.md")]
pub mod walkthrough {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/maxsat.md")]
pub mod maxsat {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
