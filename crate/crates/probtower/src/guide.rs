//! The guide chapters, compiled from the book so every snippet stays honest.
//!
//! Each module below embeds one chapter of the book under `book/src`. The
//! Rust fences in those chapters run as doc-tests, which keeps the prose
//! and the library from drifting apart: a chapter that stops compiling
//! fails `cargo test`.

#[doc = include_str!("../../../book/src/ch00_introduction.md")]
pub mod ch00_introduction {}

#[doc = include_str!("../../../book/src/ch01_spaces.md")]
pub mod ch01_spaces {}

#[doc = include_str!("../../../book/src/ch02_morphisms.md")]
pub mod ch02_morphisms {}

#[doc = include_str!("../../../book/src/ch03_towers.md")]
pub mod ch03_towers {}

#[doc = include_str!("../../../book/src/ch04_generic.md")]
pub mod ch04_generic {}

#[doc = include_str!("../../../book/src/ch05_homogeneity.md")]
pub mod ch05_homogeneity {}

#[doc = include_str!("../../../book/src/ch06_extension.md")]
pub mod ch06_extension {}

#[doc = include_str!("../../../book/src/ch07_valuesets.md")]
pub mod ch07_valuesets {}

#[doc = include_str!("../../../book/src/ch08_cli.md")]
pub mod ch08_cli {}
