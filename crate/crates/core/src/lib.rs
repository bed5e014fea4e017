//! Exact combinatorics of commutators.
//!
//! This crate decides whether a word is a commutator — in a free group `F_r`
//! or in a free product `G1 * G2` of two finite groups — and counts commutator
//! conjugacy classes by word length, comparing exact counts against closed-form
//! main terms. A modular-group layer maps integer matrices in `SL_2(Z)` onto
//! words over `Z/2 * Z/3` so the same decision machinery classifies matrices,
//! and a scanner collects Fricke trace triples from commutator witness pairs.
//!
//! Module map:
//! - [`freewords`]: free-group letters and words, reduction, cyclic reduction,
//!   canonical conjugacy representatives, exact word counts.
//! - [`commfree`]: the `A B C A^-1 B^-1 C^-1` commutator shape in `F_r` —
//!   decision with machine-verified witnesses, enumeration, class counting,
//!   and the asymptotic main term.
//! - [`counting`]: arithmetic pipeline — trivial-abelianization word counts
//!   `c_k` by dynamic programming, primitive counts and class counts by
//!   Möbius inversion, a Chebyshev-style constant-term computation, and a
//!   saddle-point asymptotic for `c_{2m}`.
//! - [`freeprod`]: finite group tables, free-product normal forms, the nine
//!   commutator shapes for `G1 * G2`, decision and class counting, and
//!   closed-path cross-checks on complete graphs.
//! - [`modular`]: `SL_2(Z)` generator decomposition, the bridge to
//!   `Z/2 * Z/3`, a mod-12 commutator-subgroup character, the Fricke trace
//!   identity, and Markoff-surface scanning.
//! - [`harness`]: verification drivers that compare exact values against
//!   formulas and emit deterministic JSON/CSV reports.

pub mod commfree;
pub mod counting;
pub mod freeprod;
pub mod freewords;
pub mod harness;
pub mod modular;

pub(crate) mod rotation;
