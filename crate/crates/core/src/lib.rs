//! Spectral triples on the ball trees of a nonarchimedean local field.
//!
//! A local field `F` with ramification index `e` and residue degree `f` over
//! `Q_p` is modelled combinatorially: elements are digit strings over the
//! alphabet `{0, .., p^f - 1}` and balls are digit prefixes. On top of that
//! model the crate builds
//!
//! - finite windows of the ball trees of the ring of integers `R` and of `F`
//!   ([`tree`]),
//! - the forward derivative `D`, its weighted adjoint, `D*D`, multiplication
//!   representations and commutators ([`operators`]),
//! - the q-hypergeometric function `1phi1(0; q; q, z)` whose roots are the
//!   eigenvalues of the reduced operator, with certified root enclosures
//!   ([`qspecial`]),
//! - the full spectrum with multiplicities, Schatten traces and zeta values
//!   ([`spectrum`]),
//! - Lipschitz and spectral seminorms of test functions ([`seminorms`]),
//! - and JSON/CSV renderings of whole runs ([`output`]).

pub mod error;
pub mod field;
pub mod linalg;
pub mod operators;
pub mod output;
pub mod qspecial;
pub mod seminorms;
pub mod spectrum;
pub mod testfn;
pub mod tree;

pub use error::{Error, Result};
pub use field::{count_g, count_g_f64, Center, FieldParams, LgCoords, Valuation};
pub use operators::{DepthClosure, SparseOperator};
pub use qspecial::{BracketRule, QSeriesContext, RootTable};
pub use spectrum::{SpectrumEntry, SpectrumTable, ZetaValue};
pub use testfn::TestFunction;
pub use tree::{TreeWindow, WeightedVector};
