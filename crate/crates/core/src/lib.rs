//! Turning sequential plans into flexible partial-order plans.
//!
//! The pipeline runs order generalization ([`eog`]), block deordering
//! ([`bdpo`]), block substitution ([`substitution`], [`fibs`]) and
//! reduction of redundant blocks. [`maxsat`] solves minimum reordering
//! exactly for small plans.

pub mod bdpo;
pub mod closure;
pub mod corpus;
pub mod eog;
pub mod error;
pub mod facts;
pub mod fibs;
pub mod generate;
pub mod maxsat;
pub mod plan_file;
pub mod pop;
pub mod sas;
pub mod subplanner;
pub mod substitution;
pub mod task;
pub mod validation;

#[cfg(test)]
mod testutil;

#[cfg(doctest)]
mod book;
