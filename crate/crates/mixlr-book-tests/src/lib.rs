//! mdbook cannot run a book's code blocks against crate dependencies, so
//! this crate includes each chapter as a module's documentation and lets
//! `cargo test --doc` execute every snippet. One module per chapter keeps
//! failures attributable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/generalization.md")]
pub mod generalization {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
