// mdbook cannot run Rust snippets against a workspace crate, so every chapter
// is pulled in as the docs of an empty module and `cargo test --doc` runs the
// code blocks. One module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/games.md")]
pub mod games {}
#[doc = include_str!("src/iterations.md")]
pub mod iterations {}
#[doc = include_str!("src/equilibria.md")]
pub mod equilibria {}
#[doc = include_str!("src/networks.md")]
pub mod networks {}
#[doc = include_str!("src/applications.md")]
pub mod applications {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}

#[doc = include_str!("../README.md")]
pub mod readme {}
