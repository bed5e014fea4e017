//! Commutators in a free product `G1 * G2` of two finite groups.
//!
//! Elements are alternating normal-form words over the nonidentity elements
//! of the factors. A fully cyclically reduced word is a commutator exactly
//! when one of its rotations matches one of nine shapes, built from subwords
//! `A`, `B`, `C` (odd length, endpoints in one factor) and single factor
//! letters with side conditions (conjugacy of a letter pair, or letter
//! products collapsing to the identity):
//!
//! 1. a single `G1` letter that is a commutator within `G1`;
//! 2. the same with `G2`;
//! 3. `A a1 A^-1 a2^-1` with `a1, a2` conjugate in the other factor;
//! 4. `a1 A a2^-1 A^-1` with `a1, a2` conjugate in the other factor;
//! 5. `A B A^-1 B^-1`;
//! 6. `A a1 B a2 A^-1 a3 B^-1 a4` with `a4 a3 a2 a1 = 1`;
//! 7. `a1 A a2 B a3 A^-1 a4 B^-1` with `a4 a3 a2 a1 = 1`;
//! 8. `A a1 B b1 C a2 A^-1 b2 B^-1 a3 C^-1 b3` with
//!    `a3 a2 a1 = b3 b2 b1 = 1`;
//! 9. `b1 A a1 B b2 C a2 A^-1 b3 B^-1 a3 C^-1` with
//!    `a3 a2 a1 = b3 b2 b1 = 1`.
//!
//! Shapes 3 and 4 are implemented with the second `A` occurrence inverted
//! (the reading under which a verified commutator witness exists and every
//! match has trivial abelianization); the variant with a literal repeated `A`
//! is available behind [`FormReading::PrintedLiteral`] for comparison reports.
//! Every shape is also matched with the roles of the two factors swapped.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Errors for finite-group tables and free-product words.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("multiplication table must be square and nonempty (order {order}, row {row} has {len} entries)")]
    Shape { order: usize, row: usize, len: usize },
    #[error("table entry [{i}][{j}] = {got} is outside 0..{order}")]
    EntryRange { i: usize, j: usize, got: usize, order: usize },
    #[error("index 0 is not a two-sided identity (fails at {at})")]
    Identity { at: usize },
    #[error("multiplication is not associative at ({i}, {j}, {k})")]
    NotAssociative { i: usize, j: usize, k: usize },
    #[error("element {0} has no inverse")]
    NoInverse(usize),
    #[error("names list has {got} entries for a group of order {order}")]
    NamesLength { got: usize, order: usize },
    #[error("element index {elem} is invalid for factor {factor} of order {order}")]
    BadElem { factor: u8, elem: usize, order: usize },
    #[error("identity letters are not allowed in free-product words")]
    IdentityLetter,
    #[error("cannot parse free-product token {0:?}: expected `1:i`, `2:j`, or an element name")]
    BadToken(String),
    #[error("token {0:?} names elements in both factors; use `1:i`/`2:j` to disambiguate")]
    AmbiguousToken(String),
    #[error("cyclic factor order must be at least {min} (got {got})")]
    FactorOrder { got: u64, min: u64 },
    #[error("length {0} is not a positive multiple of 4")]
    LengthNotMultipleOf4(u64),
    #[error("main term is defined only for lengths divisible by 4 (got {0})")]
    MainTermUndefined(u64),
    #[error("closed-path parameters need m >= 2 and n >= 1 (got m = {m}, n = {n})")]
    PathParams { m: u64, n: u64 },
    #[error("bad group JSON: {0}")]
    Json(String),
}

/// A finite group as a multiplication table with the identity at index 0.
/// Construction validates the group axioms and precomputes inverses,
/// conjugacy, the derived subgroup, and the set of commutators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroupTable {
    order: usize,
    mult: Vec<Vec<usize>>,
    names: Vec<String>,
    inv: Vec<usize>,
    conjugate: Vec<Vec<bool>>,
    commutator: Vec<bool>,
    in_derived: Vec<bool>,
}

impl FiniteGroupTable {
    /// Validate a raw table (and optional element names) into a group.
    pub fn new(mult: Vec<Vec<usize>>, names: Option<Vec<String>>) -> Result<Self, GroupError> {
        let order = mult.len();
        if order == 0 {
            return Err(GroupError::Shape { order, row: 0, len: 0 });
        }
        for (row, r) in mult.iter().enumerate() {
            if r.len() != order {
                return Err(GroupError::Shape { order, row, len: r.len() });
            }
            for (j, &v) in r.iter().enumerate() {
                if v >= order {
                    return Err(GroupError::EntryRange { i: row, j, got: v, order });
                }
            }
        }
        for i in 0..order {
            if mult[0][i] != i || mult[i][0] != i {
                return Err(GroupError::Identity { at: i });
            }
        }
        for i in 0..order {
            for j in 0..order {
                for k in 0..order {
                    if mult[mult[i][j]][k] != mult[i][mult[j][k]] {
                        return Err(GroupError::NotAssociative { i, j, k });
                    }
                }
            }
        }
        let mut inv = vec![usize::MAX; order];
        for i in 0..order {
            for j in 0..order {
                if mult[i][j] == 0 && mult[j][i] == 0 {
                    inv[i] = j;
                }
            }
            if inv[i] == usize::MAX {
                return Err(GroupError::NoInverse(i));
            }
        }
        let names = match names {
            Some(n) if n.len() != order => {
                return Err(GroupError::NamesLength { got: n.len(), order })
            }
            Some(n) => n,
            None => (0..order).map(|i| if i == 0 { "1".into() } else { format!("g{i}") }).collect(),
        };
        // Conjugacy by brute force over all conjugators.
        let mut conjugate = vec![vec![false; order]; order];
        for i in 0..order {
            for g in 0..order {
                let j = mult[mult[g][i]][inv[g]];
                conjugate[i][j] = true;
            }
        }
        // Commutators by brute force over all pairs.
        let mut commutator = vec![false; order];
        for g in 0..order {
            for h in 0..order {
                let c = mult[mult[mult[g][h]][inv[g]]][inv[h]];
                commutator[c] = true;
            }
        }
        // Derived subgroup: closure of the commutator set under the product.
        let mut in_derived = vec![false; order];
        in_derived[0] = true;
        let mut frontier: Vec<usize> =
            (0..order).filter(|&i| commutator[i]).collect();
        for &c in &frontier {
            in_derived[c] = true;
        }
        while let Some(g) = frontier.pop() {
            for c in 0..order {
                if commutator[c] {
                    let p = mult[g][c];
                    if !in_derived[p] {
                        in_derived[p] = true;
                        frontier.push(p);
                    }
                }
            }
        }
        Ok(FiniteGroupTable { order, mult, names, inv, conjugate, commutator, in_derived })
    }

    /// The cyclic group `Z/n` with default names `1, g1, g2, ...` or the
    /// given ones.
    pub fn cyclic(n: u64, names: Option<Vec<String>>) -> Result<Self, GroupError> {
        if n < 2 {
            return Err(GroupError::FactorOrder { got: n, min: 2 });
        }
        let n = n as usize;
        let mult = (0..n).map(|i| (0..n).map(|j| (i + j) % n).collect()).collect();
        FiniteGroupTable::new(mult, names)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mul(&self, i: usize, j: usize) -> usize {
        self.mult[i][j]
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inv[i]
    }

    pub fn are_conjugate(&self, i: usize, j: usize) -> bool {
        self.conjugate[i][j]
    }

    /// Is `i` equal to `[g, h]` for some `g, h` in this group?
    pub fn is_factor_commutator(&self, i: usize) -> bool {
        self.commutator[i]
    }

    /// Is `i` in the derived subgroup (trivial image in the abelianization)?
    pub fn is_in_derived(&self, i: usize) -> bool {
        self.in_derived[i]
    }

    /// Least element index conjugate to `i` (canonical conjugacy key).
    pub fn conjugacy_class_rep(&self, i: usize) -> usize {
        (0..self.order).find(|&j| self.conjugate[i][j]).expect("class is nonempty")
    }

    /// Some `g` with `g i g^-1 = j`, if the two are conjugate.
    pub fn conjugator(&self, i: usize, j: usize) -> Option<usize> {
        (0..self.order).find(|&g| self.mult[self.mult[g][i]][self.inv[g]] == j)
    }

    /// A pair `(g, h)` with `[g, h] = i`, if `i` is a commutator.
    pub fn commutator_pair(&self, i: usize) -> Option<(usize, usize)> {
        for g in 0..self.order {
            for h in 0..self.order {
                let c = self.mult[self.mult[self.mult[g][h]][self.inv[g]]][self.inv[h]];
                if c == i {
                    return Some((g, h));
                }
            }
        }
        None
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Element index for a name, if present.
    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Parse `{"order": n, "table": [[int]], "names": [str]?}`.
    /// The identity must be index 0 (validated).
    pub fn from_json(value: &serde_json::Value) -> Result<Self, GroupError> {
        let obj = value.as_object().ok_or_else(|| GroupError::Json("expected an object".into()))?;
        let order = obj
            .get("order")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| GroupError::Json("missing integer field \"order\"".into()))?
            as usize;
        let table = obj
            .get("table")
            .and_then(|v| v.as_array())
            .ok_or_else(|| GroupError::Json("missing array field \"table\"".into()))?;
        let mut mult = Vec::with_capacity(table.len());
        for row in table {
            let row = row
                .as_array()
                .ok_or_else(|| GroupError::Json("table rows must be arrays".into()))?;
            let mut out = Vec::with_capacity(row.len());
            for v in row {
                let v = v
                    .as_u64()
                    .ok_or_else(|| GroupError::Json("table entries must be integers".into()))?;
                out.push(v as usize);
            }
            mult.push(out);
        }
        if mult.len() != order {
            return Err(GroupError::Json(format!(
                "\"order\" is {order} but the table has {} rows",
                mult.len()
            )));
        }
        let names = match obj.get("names") {
            None => None,
            Some(v) => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| GroupError::Json("\"names\" must be an array".into()))?;
                let mut out = Vec::with_capacity(arr.len());
                for n in arr {
                    out.push(
                        n.as_str()
                            .ok_or_else(|| GroupError::Json("names must be strings".into()))?
                            .to_string(),
                    );
                }
                Some(out)
            }
        };
        FiniteGroupTable::new(mult, names)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "order": self.order,
            "table": self.mult,
            "names": self.names,
        })
    }
}

/// `Z/2 * Z/q`: the factor tables of the Hecke-type presentation
/// `<s, r : s^2 = r^q = 1>`, named `s` and `r, r2, ...`. Requires `q >= 3`.
pub fn hecke_group(q: u64) -> Result<(FiniteGroupTable, FiniteGroupTable), GroupError> {
    if q < 3 {
        return Err(GroupError::FactorOrder { got: q, min: 3 });
    }
    let g1 = FiniteGroupTable::cyclic(2, Some(vec!["1".into(), "s".into()]))?;
    let names = (0..q)
        .map(|i| match i {
            0 => "1".to_string(),
            1 => "r".to_string(),
            i => format!("r{i}"),
        })
        .collect();
    let g2 = FiniteGroupTable::cyclic(q, Some(names))?;
    Ok((g1, g2))
}

/// Which free factor a letter lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    One,
    Two,
}

impl Factor {
    pub fn other(self) -> Factor {
        match self {
            Factor::One => Factor::Two,
            Factor::Two => Factor::One,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Factor::One => 1,
            Factor::Two => 2,
        }
    }
}

/// One letter of the free product: a nonidentity element of one factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FPLetter {
    pub factor: Factor,
    pub elem: usize,
}

/// A normal-form word: adjacent letters in different factors, no identity
/// letters. The empty word is the identity of the free product.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FPWord {
    letters: Vec<FPLetter>,
}

impl FPWord {
    pub fn empty() -> FPWord {
        FPWord { letters: Vec::new() }
    }

    pub fn letters(&self) -> &[FPLetter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

// Debug prints `1:i`/`2:j` tokens; named rendering needs the tables and
// lives in FreeProduct::render.
impl fmt::Debug for FPWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "ε");
        }
        let tokens: Vec<String> = self
            .letters
            .iter()
            .map(|l| format!("{}:{}", l.factor.index(), l.elem))
            .collect();
        write!(f, "{}", tokens.join("."))
    }
}

/// Which textual reading of shapes 3 and 4 to match.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormReading {
    /// Second `A` occurrence inverted (`A a1 A^-1 a2^-1` / `a1 A a2^-1 A^-1`).
    /// This is the reading with a machine-verifiable witness and is the
    /// default everywhere.
    Corrected,
    /// Second `A` occurrence as printed, not inverted (`A a1 A a2^-1` /
    /// `a1 A a2^-1 A`). Diagnostic only: it accepts words with nontrivial
    /// abelianization, which cannot be commutators.
    PrintedLiteral,
}

/// A successful shape match. Subwords that a shape does not use are empty;
/// `alphas`/`betas` hold the single factor letters in reading order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WicksFormFP {
    pub form_id: u8,
    pub a: FPWord,
    pub b: FPWord,
    pub c: FPWord,
    pub alphas: Vec<FPLetter>,
    pub betas: Vec<FPLetter>,
}

/// A certified witness: `[u, v]` normalizes exactly to the accepted word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FPCommutatorWitness {
    pub u: FPWord,
    pub v: FPWord,
}

/// Outcome of a positive commutator decision.
#[derive(Clone, Debug)]
pub struct FPAcceptance {
    /// The rotation of the fully cyclically reduced core that matched
    /// (0 = the core as produced by cyclic reduction).
    pub rotation: usize,
    /// The match itself; `None` only for the empty word.
    pub form: Option<WicksFormFP>,
    /// Verified witness; shapes 6–9 provide none (no constructive pairing is
    /// implemented for them — the decision stands on the shape theorem).
    pub witness: Option<FPCommutatorWitness>,
}

/// Exact class count at one length for `G1 * G2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FPCountReport {
    pub k: u64,
    /// Conjugacy classes of accepted words of length `k`.
    pub exact_count: BigInt,
    /// Number of accepted words themselves (start-letter convention fixed to
    /// the first factor), before conjugacy dedup.
    pub accepted_words: BigInt,
    /// `(1/192) [ (n1-1)(n2-2)^2 + (n1-2)^2 (n2-1) ] k^2
    ///  (n1-1)^(k/4-1) (n2-1)^(k/4-1)` for `4 | k`, else 0.
    pub main_term: BigRational,
    /// `exact_count / main_term` when the main term is nonzero.
    pub ratio: Option<f64>,
    /// Words (not classes) matching each shape id 1–9 at some rotation;
    /// overlaps are counted in every shape they match.
    pub per_form_counts: [u64; 9],
}

/// The closed-path cross-check bundle for one length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrivialProductReport {
    pub k: u64,
    /// Enumerated words whose per-factor letter products are both the
    /// identity (the closed-path condition).
    pub enumerated: BigInt,
    /// Enumerated words whose per-factor letter products lie in the factor
    /// derived subgroups (trivial abelianization; equals `enumerated` when
    /// both factors are abelian).
    pub enumerated_trivial_ab: BigInt,
    /// Product of per-factor based closed-walk counts
    /// `((m-1)^(k/2) + (m-1)(-1)^(k/2)) / m` (eigenvalue formula).
    pub eigenvalue_count: BigInt,
    /// The claimed closed form `(n1-1)^(k/2-1) (n2-1)^(k/2-1)`.
    pub closed_form: BigInt,
}

/// The free product `G1 * G2`, carrying both factor tables.
#[derive(Clone, Debug)]
pub struct FreeProduct {
    pub g1: FiniteGroupTable,
    pub g2: FiniteGroupTable,
}

impl FreeProduct {
    pub fn new(g1: FiniteGroupTable, g2: FiniteGroupTable) -> FreeProduct {
        FreeProduct { g1, g2 }
    }

    pub fn factor(&self, f: Factor) -> &FiniteGroupTable {
        match f {
            Factor::One => &self.g1,
            Factor::Two => &self.g2,
        }
    }

    fn check_letter(&self, l: FPLetter) -> Result<(), GroupError> {
        let order = self.factor(l.factor).order();
        if l.elem == 0 || l.elem >= order {
            if l.elem == 0 {
                return Err(GroupError::IdentityLetter);
            }
            return Err(GroupError::BadElem { factor: l.factor.index(), elem: l.elem, order });
        }
        Ok(())
    }

    /// Normal form of a raw letter sequence: adjacent same-factor letters are
    /// multiplied through the tables, identity results dropped, to a fixpoint.
    pub fn normalize(&self, raw: &[FPLetter]) -> Result<FPWord, GroupError> {
        let mut out: Vec<FPLetter> = Vec::with_capacity(raw.len());
        for &l in raw {
            self.check_letter(l)?;
            self.push_normalized(&mut out, l);
        }
        Ok(FPWord { letters: out })
    }

    fn push_normalized(&self, out: &mut Vec<FPLetter>, l: FPLetter) {
        match out.last() {
            Some(&last) if last.factor == l.factor => {
                let merged = self.factor(l.factor).mul(last.elem, l.elem);
                out.pop();
                if merged != 0 {
                    // The merged letter may in turn merge with the new last
                    // letter's factor only if... the previous letter is in
                    // the other factor by the normal-form invariant, so one
                    // merge suffices.
                    out.push(FPLetter { factor: l.factor, elem: merged });
                }
            }
            _ => out.push(l),
        }
    }

    /// Product of two normal-form words (normalized at the seam).
    pub fn concat(&self, u: &FPWord, v: &FPWord) -> FPWord {
        let mut out = u.letters.clone();
        for &l in &v.letters {
            self.push_normalized(&mut out, l);
        }
        FPWord { letters: out }
    }

    /// Group inverse of a normal-form word.
    pub fn inverse(&self, w: &FPWord) -> FPWord {
        let letters = w
            .letters
            .iter()
            .rev()
            .map(|&l| FPLetter { factor: l.factor, elem: self.factor(l.factor).inverse(l.elem) })
            .collect();
        FPWord { letters }
    }

    /// `g w g^-1`, normalized.
    pub fn conjugated(&self, w: &FPWord, g: &FPWord) -> FPWord {
        self.concat(&self.concat(g, w), &self.inverse(g))
    }

    /// `[u, v] = u v u^-1 v^-1`, normalized.
    pub fn commutator(&self, u: &FPWord, v: &FPWord) -> FPWord {
        self.concat(
            &self.concat(u, v),
            &self.concat(&self.inverse(u), &self.inverse(v)),
        )
    }

    /// Split `w` into a fully cyclically reduced core and a conjugator:
    /// `w = conjugator * core * conjugator^-1`. While the first and last
    /// letters share a factor (odd length >= 3), the first letter `x` is
    /// peeled off, the last letter is replaced by `last * x` (dropped if the
    /// identity), and `x` is appended to the conjugator.
    pub fn cyclic_reduce(&self, w: &FPWord) -> (FPWord, FPWord) {
        let mut core: Vec<FPLetter> = w.letters.clone();
        let mut conj: Vec<FPLetter> = Vec::new();
        while core.len() > 1 {
            let first = core[0];
            let last = *core.last().expect("nonempty");
            if first.factor != last.factor {
                break;
            }
            core.remove(0);
            core.pop();
            conj.push(first);
            let merged = self.factor(first.factor).mul(last.elem, first.elem);
            if merged != 0 {
                core.push(FPLetter { factor: first.factor, elem: merged });
            }
        }
        let conj = self.normalize(&conj).expect("conjugator letters were validated");
        (FPWord { letters: core }, conj)
    }

    /// Canonical conjugacy representative of a fully cyclically reduced word.
    ///
    /// Length 0: itself. Length 1: the least element index in the letter's
    /// factor conjugacy class (letters of the same factor are conjugate in
    /// the free product exactly when conjugate in the factor). Length >= 2:
    /// rotate to start in the first factor, then take the least rotation
    /// among alternation-preserving (even) rotations, comparing letter pairs
    /// lexicographically.
    pub fn class_rep(&self, cyc: &FPWord) -> FPWord {
        match cyc.len() {
            0 => FPWord::empty(),
            1 => {
                let l = cyc.letters[0];
                let rep = self.factor(l.factor).conjugacy_class_rep(l.elem);
                FPWord { letters: vec![FPLetter { factor: l.factor, elem: rep }] }
            }
            _ => {
                let mut letters = cyc.letters.clone();
                if letters[0].factor == Factor::Two {
                    letters.rotate_left(1);
                }
                debug_assert!(letters.len() % 2 == 0);
                let pairs: Vec<(FPLetter, FPLetter)> =
                    letters.chunks(2).map(|p| (p[0], p[1])).collect();
                let idx = crate::rotation::least_rotation_index(&pairs);
                letters.rotate_left(2 * idx);
                FPWord { letters }
            }
        }
    }

    /// Render a word with element names (`s.r.r2`), falling back to
    /// `factor:index` tokens for unnamed elements.
    pub fn render(&self, w: &FPWord) -> String {
        if w.is_empty() {
            return "ε".to_string();
        }
        w.letters
            .iter()
            .map(|l| self.factor(l.factor).name(l.elem).to_string())
            .collect::<Vec<_>>()
            .join(".")
    }

    /// Parse dot-separated tokens into raw letters. Tokens are `1:i` / `2:j`
    /// (element index in factor 1/2) or element names; a single uppercase
    /// token whose lowercase form is a name means that element's inverse.
    /// The empty string is the empty word.
    pub fn parse_letters(&self, text: &str) -> Result<Vec<FPLetter>, GroupError> {
        let text = text.trim();
        if text.is_empty() || text == "ε" {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for token in text.split('.') {
            out.push(self.parse_token(token)?);
        }
        Ok(out)
    }

    fn parse_token(&self, token: &str) -> Result<FPLetter, GroupError> {
        let token = token.trim();
        if let Some((f, e)) = token.split_once(':') {
            let factor = match f {
                "1" => Factor::One,
                "2" => Factor::Two,
                _ => return Err(GroupError::BadToken(token.to_string())),
            };
            let elem: usize =
                e.parse().map_err(|_| GroupError::BadToken(token.to_string()))?;
            let l = FPLetter { factor, elem };
            self.check_letter(l)?;
            return Ok(l);
        }
        let lookup = |name: &str| -> Result<Option<FPLetter>, GroupError> {
            let one = self.g1.index_of_name(name);
            let two = self.g2.index_of_name(name);
            match (one, two) {
                (Some(_), Some(_)) => Err(GroupError::AmbiguousToken(name.to_string())),
                (Some(e), None) => Ok(Some(FPLetter { factor: Factor::One, elem: e })),
                (None, Some(e)) => Ok(Some(FPLetter { factor: Factor::Two, elem: e })),
                (None, None) => Ok(None),
            }
        };
        if let Some(l) = lookup(token)? {
            self.check_letter(l)?;
            return Ok(l);
        }
        // Single uppercase token: inverse of the lowercase-named element.
        if token.chars().count() == 1 && token.chars().all(|c| c.is_ascii_uppercase()) {
            let lower = token.to_ascii_lowercase();
            if let Some(l) = lookup(&lower)? {
                self.check_letter(l)?;
                let inv = self.factor(l.factor).inverse(l.elem);
                let l = FPLetter { factor: l.factor, elem: inv };
                self.check_letter(l)?;
                return Ok(l);
            }
        }
        Err(GroupError::BadToken(token.to_string()))
    }

    /// Image triviality in `G1^ab x G2^ab`: the ordered product of each
    /// factor's letters must land in that factor's derived subgroup.
    pub fn has_trivial_abelianization(&self, w: &FPWord) -> bool {
        let mut p1 = 0usize;
        let mut p2 = 0usize;
        for &l in &w.letters {
            match l.factor {
                Factor::One => p1 = self.g1.mul(p1, l.elem),
                Factor::Two => p2 = self.g2.mul(p2, l.elem),
            }
        }
        self.g1.is_in_derived(p1) && self.g2.is_in_derived(p2)
    }

    /// The ordered per-factor letter products `(in G1, in G2)`.
    pub fn factor_products(&self, w: &FPWord) -> (usize, usize) {
        let mut p1 = 0usize;
        let mut p2 = 0usize;
        for &l in &w.letters {
            match l.factor {
                Factor::One => p1 = self.g1.mul(p1, l.elem),
                Factor::Two => p2 = self.g2.mul(p2, l.elem),
            }
        }
        (p1, p2)
    }
}

/// Check `w[at .. at+len]` == inverse of `w[src .. src+len]` (reversed, each
/// letter inverted in its factor).
fn subword_is_inverse(fp: &FreeProduct, w: &[FPLetter], at: usize, src: usize, len: usize) -> bool {
    (0..len).all(|i| {
        let x = w[at + i];
        let y = w[src + len - 1 - i];
        x.factor == y.factor && x.elem == fp.factor(y.factor).inverse(y.elem)
    })
}

fn slice_word(w: &[FPLetter], start: usize, end: usize) -> FPWord {
    FPWord { letters: w[start..end].to_vec() }
}

impl FreeProduct {
    /// All shape matches of `c` exactly as written (no rotation applied).
    /// `c` must be fully cyclically reduced. Both factor-role assignments are
    /// tried; matches are returned in shape-id order.
    pub fn match_wicks_forms(&self, c: &FPWord, reading: FormReading) -> Vec<WicksFormFP> {
        let w = c.letters();
        let n = w.len();
        let mut out = Vec::new();
        if n == 1 {
            let l = w[0];
            if self.factor(l.factor).is_factor_commutator(l.elem) {
                let form_id = if l.factor == Factor::One { 1 } else { 2 };
                out.push(WicksFormFP {
                    form_id,
                    a: FPWord::empty(),
                    b: FPWord::empty(),
                    c: FPWord::empty(),
                    alphas: vec![l],
                    betas: Vec::new(),
                });
            }
            return out;
        }
        if n == 0 || n % 4 != 0 {
            // All multi-letter shapes have length 2|A|+2, 2|A|+2|B| or larger
            // with odd part lengths — always a positive multiple of 4.
            return out;
        }
        self.match_form3(w, n, reading, &mut out);
        self.match_form4(w, n, reading, &mut out);
        self.match_form5(w, n, &mut out);
        self.match_form67(w, n, &mut out);
        self.match_form89(w, n, &mut out);
        out.sort_by_key(|m| m.form_id);
        out
    }

    /// `A a1 A^-1 a2^-1` (corrected) or `A a1 A a2^-1` (printed literal),
    /// with `a1` conjugate to `a2` in the non-anchor factor.
    fn match_form3(&self, w: &[FPLetter], n: usize, reading: FormReading, out: &mut Vec<WicksFormFP>) {
        let l = n / 2 - 1; // |A|, odd because 4 | n
        let second_ok = match reading {
            FormReading::Corrected => subword_is_inverse(self, w, l + 1, 0, l),
            FormReading::PrintedLiteral => (0..l).all(|i| w[l + 1 + i] == w[i]),
        };
        if !second_ok {
            return;
        }
        let a1 = w[l];
        let last = w[n - 1];
        let table = self.factor(a1.factor);
        let a2 = table.inverse(last.elem);
        if table.are_conjugate(a1.elem, a2) {
            out.push(WicksFormFP {
                form_id: 3,
                a: slice_word(w, 0, l),
                b: FPWord::empty(),
                c: FPWord::empty(),
                alphas: vec![a1, FPLetter { factor: a1.factor, elem: a2 }],
                betas: Vec::new(),
            });
        }
    }

    /// `a1 A a2^-1 A^-1` (corrected) or `a1 A a2^-1 A` (printed literal).
    fn match_form4(&self, w: &[FPLetter], n: usize, reading: FormReading, out: &mut Vec<WicksFormFP>) {
        let l = n / 2 - 1;
        let second_ok = match reading {
            FormReading::Corrected => subword_is_inverse(self, w, n - l, 1, l),
            FormReading::PrintedLiteral => (0..l).all(|i| w[n - l + i] == w[1 + i]),
        };
        if !second_ok {
            return;
        }
        let a1 = w[0];
        let mid = w[l + 1];
        let table = self.factor(a1.factor);
        debug_assert_eq!(a1.factor, mid.factor);
        let a2 = table.inverse(mid.elem);
        if table.are_conjugate(a1.elem, a2) {
            out.push(WicksFormFP {
                form_id: 4,
                a: slice_word(w, 1, 1 + l),
                b: FPWord::empty(),
                c: FPWord::empty(),
                alphas: vec![a1, FPLetter { factor: a1.factor, elem: a2 }],
                betas: Vec::new(),
            });
        }
    }

    /// `A B A^-1 B^-1` with `|A|, |B|` odd.
    fn match_form5(&self, w: &[FPLetter], n: usize, out: &mut Vec<WicksFormFP>) {
        let half = n / 2;
        for i in (1..half).step_by(2) {
            let j = half - i;
            if j % 2 == 0 {
                continue;
            }
            if subword_is_inverse(self, w, half, 0, i)
                && subword_is_inverse(self, w, n - j, i, j)
            {
                out.push(WicksFormFP {
                    form_id: 5,
                    a: slice_word(w, 0, i),
                    b: slice_word(w, i, half),
                    c: FPWord::empty(),
                    alphas: Vec::new(),
                    betas: Vec::new(),
                });
            }
        }
    }

    /// Shape 6: `A a1 B a2 A^-1 a3 B^-1 a4`, and shape 7: its rotation
    /// starting at the single letter, `a1 A a2 B a3 A^-1 a4 B^-1`; in both,
    /// the product `a4 a3 a2 a1` must be the identity.
    fn match_form67(&self, w: &[FPLetter], n: usize, out: &mut Vec<WicksFormFP>) {
        if n < 8 {
            return;
        }
        // Shape 6: choose odd |A| = i, |B| = j with 2i + 2j + 4 = n.
        for i in (1..n).step_by(2) {
            let rest = n as i64 - 2 * i as i64 - 4;
            if rest < 2 {
                break;
            }
            let j = (rest / 2) as usize;
            if j % 2 == 0 {
                continue;
            }
            // Positions: A [0,i), a1 i, B [i+1, i+1+j), a2 i+j+1,
            // A^-1 [i+j+2, 2i+j+2), a3 2i+j+2, B^-1 [2i+j+3, n-1), a4 n-1.
            if subword_is_inverse(self, w, i + j + 2, 0, i)
                && subword_is_inverse(self, w, 2 * i + j + 3, i + 1, j)
            {
                let alphas = [w[i], w[i + j + 1], w[2 * i + j + 2], w[n - 1]];
                if self.greek_product_trivial(&alphas) {
                    out.push(WicksFormFP {
                        form_id: 6,
                        a: slice_word(w, 0, i),
                        b: slice_word(w, i + 1, i + 1 + j),
                        c: FPWord::empty(),
                        alphas: alphas.to_vec(),
                        betas: Vec::new(),
                    });
                }
            }
            // Shape 7 with the same (i, j): a1 0, A [1, 1+i), a2 1+i,
            // B [2+i, 2+i+j), a3 2+i+j, A^-1 [3+i+j, 3+2i+j), a4 3+2i+j,
            // B^-1 [4+2i+j, n).
            if subword_is_inverse(self, w, 3 + i + j, 1, i)
                && subword_is_inverse(self, w, 4 + 2 * i + j, 2 + i, j)
            {
                let alphas = [w[0], w[1 + i], w[2 + i + j], w[3 + 2 * i + j]];
                if self.greek_product_trivial(&alphas) {
                    out.push(WicksFormFP {
                        form_id: 7,
                        a: slice_word(w, 1, 1 + i),
                        b: slice_word(w, 2 + i, 2 + i + j),
                        c: FPWord::empty(),
                        alphas: alphas.to_vec(),
                        betas: Vec::new(),
                    });
                }
            }
        }
    }

    /// Shape 8: `A a1 B b1 C a2 A^-1 b2 B^-1 a3 C^-1 b3`, and shape 9: its
    /// rotation starting at the trailing letter,
    /// `b1 A a1 B b2 C a2 A^-1 b3 B^-1 a3 C^-1`; the `a` and `b` letter
    /// triples must each multiply (in reading order, rightmost first) to the
    /// identity.
    fn match_form89(&self, w: &[FPLetter], n: usize, out: &mut Vec<WicksFormFP>) {
        if n < 12 {
            return;
        }
        for i in (1..n).step_by(2) {
            for j in (1..n).step_by(2) {
                let rest = n as i64 - 2 * (i + j) as i64 - 6;
                if rest < 2 {
                    break;
                }
                let l = rest as usize / 2;
                if l % 2 == 0 {
                    continue;
                }
                // Shape 8 positions: A [0,i), a1 i, B [i+1, i+1+j), b1 i+j+1,
                // C [i+j+2, i+j+2+l), a2 i+j+l+2, A^-1 [i+j+l+3, 2i+j+l+3),
                // b2 2i+j+l+3, B^-1 [2i+j+l+4, 2i+2j+l+4), a3 2i+2j+l+4,
                // C^-1 [2i+2j+l+5, n-1), b3 n-1.
                if subword_is_inverse(self, w, i + j + l + 3, 0, i)
                    && subword_is_inverse(self, w, 2 * i + j + l + 4, i + 1, j)
                    && subword_is_inverse(self, w, 2 * i + 2 * j + l + 5, i + j + 2, l)
                {
                    let alphas = [w[i], w[i + j + l + 2], w[2 * i + 2 * j + l + 4]];
                    let betas = [w[i + j + 1], w[2 * i + j + l + 3], w[n - 1]];
                    if self.greek_product_trivial(&alphas) && self.greek_product_trivial(&betas) {
                        out.push(WicksFormFP {
                            form_id: 8,
                            a: slice_word(w, 0, i),
                            b: slice_word(w, i + 1, i + 1 + j),
                            c: slice_word(w, i + j + 2, i + j + 2 + l),
                            alphas: alphas.to_vec(),
                            betas: betas.to_vec(),
                        });
                    }
                }
                // Shape 9 positions: b1 0, A [1, 1+i), a1 1+i,
                // B [2+i, 2+i+j), b2 2+i+j, C [3+i+j, 3+i+j+l), a2 3+i+j+l,
                // A^-1 [4+i+j+l, 4+2i+j+l), b3 4+2i+j+l,
                // B^-1 [5+2i+j+l, 5+2i+2j+l), a3 5+2i+2j+l, C^-1 [n-l, n).
                if subword_is_inverse(self, w, 4 + i + j + l, 1, i)
                    && subword_is_inverse(self, w, 5 + 2 * i + j + l, 2 + i, j)
                    && subword_is_inverse(self, w, n - l, 3 + i + j, l)
                {
                    let alphas = [w[1 + i], w[3 + i + j + l], w[5 + 2 * i + 2 * j + l]];
                    let betas = [w[0], w[2 + i + j], w[4 + 2 * i + j + l]];
                    if self.greek_product_trivial(&alphas) && self.greek_product_trivial(&betas) {
                        out.push(WicksFormFP {
                            form_id: 9,
                            a: slice_word(w, 1, 1 + i),
                            b: slice_word(w, 2 + i, 2 + i + j),
                            c: slice_word(w, 3 + i + j, 3 + i + j + l),
                            alphas: alphas.to_vec(),
                            betas: betas.to_vec(),
                        });
                    }
                }
            }
        }
    }

    /// Is the product `g_m ... g_2 g_1` (rightmost letter first in reading
    /// order, i.e. `letters[last] * ... * letters[0]`) the identity? All
    /// letters share a factor by construction.
    fn greek_product_trivial(&self, letters: &[FPLetter]) -> bool {
        let table = self.factor(letters[0].factor);
        debug_assert!(letters.iter().all(|l| l.factor == letters[0].factor));
        let mut p = 0usize;
        for &l in letters.iter().rev() {
            p = table.mul(p, l.elem);
        }
        p == 0
    }
}

impl FreeProduct {
    /// Decide whether `w` (any normal-form word) is a commutator. Accepts in
    /// shape-id order at the first matching rotation of the fully cyclically
    /// reduced core. For shapes 1–5 the returned witness `(u, v)` satisfies
    /// `normalize([u, v]) == normalize(w)` exactly (checked before
    /// returning); shapes 6–9 carry no witness.
    pub fn is_commutator(&self, w: &FPWord) -> Option<FPAcceptance> {
        let (core, conj) = self.cyclic_reduce(w);
        if core.is_empty() {
            // The identity is [1, 1].
            return Some(FPAcceptance {
                rotation: 0,
                form: None,
                witness: Some(FPCommutatorWitness { u: FPWord::empty(), v: FPWord::empty() }),
            });
        }
        let n = core.len();
        for t in 0..n {
            let mut rot = core.letters.clone();
            rot.rotate_left(t);
            let rot = FPWord { letters: rot };
            let matches = self.match_wicks_forms(&rot, FormReading::Corrected);
            let Some(form) = matches.into_iter().next() else { continue };
            // w = conj * core * conj^-1 and core = prefix * rot * prefix^-1
            // for prefix = core[..t], so g = conj * prefix conjugates rot
            // back onto w.
            let prefix = FPWord { letters: core.letters[..t].to_vec() };
            let g = self.concat(&conj, &prefix);
            let witness = self.build_witness(&form, &rot).map(|(u0, v0)| {
                let u = self.conjugated(&u0, &g);
                let v = self.conjugated(&v0, &g);
                let check = self.commutator(&u, &v);
                let target = self.normalize(w.letters()).expect("input was a valid word");
                assert_eq!(check, target, "witness failed to reproduce the input word");
                FPCommutatorWitness { u, v }
            });
            return Some(FPAcceptance { rotation: t, form: Some(form), witness });
        }
        None
    }

    /// Uncertified witness pair for a shape match against `rot` itself.
    fn build_witness(&self, form: &WicksFormFP, rot: &FPWord) -> Option<(FPWord, FPWord)> {
        match form.form_id {
            1 | 2 => {
                let l = form.alphas[0];
                let (g, h) = self.factor(l.factor).commutator_pair(l.elem)?;
                let letter = |e: usize| {
                    if e == 0 {
                        FPWord::empty()
                    } else {
                        FPWord { letters: vec![FPLetter { factor: l.factor, elem: e }] }
                    }
                };
                Some((letter(g), letter(h)))
            }
            3 => {
                // [A a1 A^-1, g A^-1] = A a1 A^-1 a2^-1 when g a1 g^-1 = a2.
                let a1 = form.alphas[0];
                let a2 = form.alphas[1];
                let table = self.factor(a1.factor);
                let g = table.conjugator(a1.elem, a2.elem)?;
                let a_inv = self.inverse(&form.a);
                let u = self.concat(
                    &self.concat(&form.a, &FPWord { letters: vec![a1] }),
                    &a_inv,
                );
                let g_word = if g == 0 {
                    FPWord::empty()
                } else {
                    FPWord { letters: vec![FPLetter { factor: a1.factor, elem: g }] }
                };
                let v = self.concat(&g_word, &a_inv);
                Some((u, v))
            }
            4 => {
                // [a1, A g] = a1 A a2^-1 A^-1 when g a1 g^-1 = a2.
                let a1 = form.alphas[0];
                let a2 = form.alphas[1];
                let table = self.factor(a1.factor);
                let g = table.conjugator(a1.elem, a2.elem)?;
                let u = FPWord { letters: vec![a1] };
                let g_word = if g == 0 {
                    FPWord::empty()
                } else {
                    FPWord { letters: vec![FPLetter { factor: a1.factor, elem: g }] }
                };
                let v = self.concat(&form.a, &g_word);
                Some((u, v))
            }
            5 => Some((form.a.clone(), form.b.clone())),
            _ => {
                let _ = rot;
                None
            }
        }
    }

    /// All shape ids (1–9) matched by any rotation of a fully cyclically
    /// reduced word, under the given reading.
    pub fn matched_form_ids(&self, core: &FPWord, reading: FormReading) -> BTreeSet<u8> {
        let mut ids = BTreeSet::new();
        let n = core.len();
        if n == 0 {
            return ids;
        }
        for t in 0..n {
            let mut rot = core.letters.clone();
            rot.rotate_left(t);
            for m in self.match_wicks_forms(&FPWord { letters: rot }, reading) {
                ids.insert(m.form_id);
            }
        }
        ids
    }

    /// Visit every fully cyclically reduced word of length `k` once, up to
    /// the start convention: for even `k >= 2` the words alternate
    /// `G1 G2 G1 G2 ...` (each conjugacy class of length `k` meets this set
    /// in its even rotations); `k == 1` visits single letters of both
    /// factors; `k == 0` visits the empty word; odd `k >= 3` visits nothing
    /// (no such word is fully cyclically reduced).
    pub fn for_each_cyclic_word(&self, k: u64, mut visit: impl FnMut(&FPWord)) {
        match k {
            0 => visit(&FPWord::empty()),
            1 => {
                for e in 1..self.g1.order() {
                    visit(&FPWord { letters: vec![FPLetter { factor: Factor::One, elem: e }] });
                }
                for e in 1..self.g2.order() {
                    visit(&FPWord { letters: vec![FPLetter { factor: Factor::Two, elem: e }] });
                }
            }
            k if k % 2 == 1 => {}
            k => {
                let half = (k / 2) as usize;
                let n1 = self.g1.order();
                let n2 = self.g2.order();
                if n1 < 2 || n2 < 2 {
                    return;
                }
                // Odometer over (G1 choice, G2 choice) per position pair.
                let mut digits = vec![1usize; 2 * half];
                let limits: Vec<usize> =
                    (0..2 * half).map(|i| if i % 2 == 0 { n1 } else { n2 }).collect();
                loop {
                    let letters: Vec<FPLetter> = digits
                        .iter()
                        .enumerate()
                        .map(|(i, &e)| FPLetter {
                            factor: if i % 2 == 0 { Factor::One } else { Factor::Two },
                            elem: e,
                        })
                        .collect();
                    visit(&FPWord { letters });
                    let mut pos = 2 * half;
                    loop {
                        if pos == 0 {
                            return;
                        }
                        pos -= 1;
                        digits[pos] += 1;
                        if digits[pos] < limits[pos] {
                            break;
                        }
                        digits[pos] = 1;
                    }
                }
            }
        }
    }

    /// Materialized [`FreeProduct::for_each_cyclic_word`].
    pub fn enumerate_cyclic_words(&self, k: u64) -> Vec<FPWord> {
        let mut out = Vec::new();
        self.for_each_cyclic_word(k, |w| out.push(w.clone()));
        out
    }
}

/// `(1/192) [ (n1-1)(n2-2)^2 + (n1-2)^2 (n2-1) ] k^2 (n1-1)^(k/4-1)
/// (n2-1)^(k/4-1)` — the predicted leading count of commutator classes of
/// length `k` (defined for `k` divisible by 4; `k = 0` gives 0).
pub fn theorem2_main_term(
    g1: &FiniteGroupTable,
    g2: &FiniteGroupTable,
    k: u64,
) -> Result<BigRational, GroupError> {
    if k % 4 != 0 {
        return Err(GroupError::MainTermUndefined(k));
    }
    if k == 0 {
        return Ok(BigRational::zero());
    }
    let n1 = BigInt::from(g1.order());
    let n2 = BigInt::from(g2.order());
    let one = BigInt::one();
    let bracket = (&n1 - &one) * (&n2 - 2) * (&n2 - 2) + (&n1 - 2) * (&n1 - 2) * (&n2 - &one);
    let e = (k / 4 - 1) as u32;
    let growth = (&n1 - &one).pow(e) * (&n2 - &one).pow(e);
    let num = bracket * BigInt::from(k) * BigInt::from(k) * growth;
    Ok(BigRational::new(num, BigInt::from(192)))
}

/// Closed walks of length `n` on the complete graph `K_m` (no immediate
/// standing still; steps go to any of the other `m - 1` vertices):
/// `(m-1)^n + (m-1)(-1)^n` in total over all start vertices, or that divided
/// by `m` when `basepointed` (walks from a fixed vertex back to itself).
pub fn count_closed_paths_complete(m: u64, n: u64, basepointed: bool) -> Result<BigInt, GroupError> {
    if m < 2 || n < 1 {
        return Err(GroupError::PathParams { m, n });
    }
    let mm = BigInt::from(m - 1);
    let sign = if n % 2 == 0 { BigInt::one() } else { -BigInt::one() };
    let total = mm.pow(n as u32) + BigInt::from(m - 1) * sign;
    if basepointed {
        let (q, r) = num_integer::Integer::div_rem(&total, &BigInt::from(m));
        debug_assert!(r.is_zero());
        Ok(q)
    } else {
        Ok(total)
    }
}

/// Enumerate the alternating `G1`-start words of length `k` (`4 | k`,
/// `k > 0`) whose per-factor letter products are the identity, and compare
/// against the eigenvalue-based walk count and the claimed closed form.
/// The two enumerated statistics and the eigenvalue product are exact; the
/// closed form is reported as-is and may disagree.
pub fn count_trivial_product_words(
    fp: &FreeProduct,
    k: u64,
) -> Result<TrivialProductReport, GroupError> {
    if k == 0 || k % 4 != 0 {
        return Err(GroupError::LengthNotMultipleOf4(k));
    }
    let mut closed = BigInt::zero();
    let mut trivial_ab = BigInt::zero();
    fp.for_each_cyclic_word(k, |w| {
        let (p1, p2) = fp.factor_products(w);
        if p1 == 0 && p2 == 0 {
            closed += 1;
        }
        if fp.g1.is_in_derived(p1) && fp.g2.is_in_derived(p2) {
            trivial_ab += 1;
        }
    });
    let half = k / 2;
    let eigen = count_closed_paths_complete(fp.g1.order() as u64, half, true)?
        * count_closed_paths_complete(fp.g2.order() as u64, half, true)?;
    let e = (half - 1) as u32;
    let closed_form = BigInt::from(fp.g1.order() as u64 - 1).pow(e)
        * BigInt::from(fp.g2.order() as u64 - 1).pow(e);
    Ok(TrivialProductReport {
        k,
        enumerated: closed,
        enumerated_trivial_ab: trivial_ab,
        eigenvalue_count: eigen,
        closed_form,
    })
}

/// Count conjugacy classes of commutators of length exactly `k` in
/// `G1 * G2`, with the shape census and main-term comparison.
pub fn count_commutator_classes_fp(fp: &FreeProduct, k: u64) -> Result<FPCountReport, GroupError> {
    let words = fp.enumerate_cyclic_words(k);
    // Shard deterministically by word index; merge preserves order.
    let chunk = 256usize.max(words.len() / (8 * rayon::current_num_threads().max(1)) + 1);
    let shards: Vec<(BTreeSet<FPWord>, [u64; 9], u64)> = words
        .par_chunks(chunk)
        .map(|ws| {
            let mut reps = BTreeSet::new();
            let mut per_form = [0u64; 9];
            let mut accepted = 0u64;
            for w in ws {
                let ids = fp.matched_form_ids(w, FormReading::Corrected);
                let ok = if w.is_empty() {
                    true // the identity is a commutator
                } else {
                    !ids.is_empty()
                };
                for id in &ids {
                    per_form[(*id - 1) as usize] += 1;
                }
                if ok {
                    accepted += 1;
                    reps.insert(fp.class_rep(w));
                }
            }
            (reps, per_form, accepted)
        })
        .collect();
    let mut reps = BTreeSet::new();
    let mut per_form_counts = [0u64; 9];
    let mut accepted_words = 0u64;
    for (r, pf, a) in shards {
        reps.extend(r);
        for i in 0..9 {
            per_form_counts[i] += pf[i];
        }
        accepted_words += a;
    }
    let exact_count = BigInt::from(reps.len());
    let main_term = if k % 4 == 0 {
        theorem2_main_term(&fp.g1, &fp.g2, k)?
    } else {
        BigRational::zero()
    };
    let ratio = if main_term.is_zero() {
        None
    } else {
        (BigRational::from(exact_count.clone()) / &main_term).to_f64()
    };
    Ok(FPCountReport {
        k,
        exact_count,
        accepted_words: BigInt::from(accepted_words),
        main_term,
        ratio,
        per_form_counts,
    })
}

/// Canonical representatives of every commutator class `[u, v]` with
/// `|u|, |v| <= max_witness_len` in normal form. Complete for classes of
/// length at most `2 * max_witness_len`.
pub fn forward_commutator_oracle_fp(fp: &FreeProduct, max_witness_len: u64) -> BTreeSet<FPWord> {
    let mut words: Vec<FPWord> = vec![FPWord::empty()];
    // Grow normal-form words length by length: append one letter of the
    // factor opposite the current last letter (or either factor if empty).
    let mut frontier = words.clone();
    for _ in 0..max_witness_len {
        let mut next = Vec::new();
        for w in &frontier {
            for factor in [Factor::One, Factor::Two] {
                if let Some(last) = w.letters().last() {
                    if last.factor == factor {
                        continue;
                    }
                }
                for e in 1..fp.factor(factor).order() {
                    let mut letters = w.letters().to_vec();
                    letters.push(FPLetter { factor, elem: e });
                    next.push(FPWord { letters });
                }
            }
        }
        words.extend(next.iter().cloned());
        frontier = next;
    }
    words
        .par_iter()
        .map(|u| {
            let mut local = BTreeSet::new();
            for v in &words {
                let c = fp.commutator(u, v);
                let (core, _) = fp.cyclic_reduce(&c);
                local.insert(fp.class_rep(&core));
            }
            local
        })
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z2z3() -> FreeProduct {
        let (g1, g2) = hecke_group(3).unwrap();
        FreeProduct::new(g1, g2)
    }

    fn w(fp: &FreeProduct, text: &str) -> FPWord {
        fp.normalize(&fp.parse_letters(text).unwrap()).unwrap()
    }

    /// S3 as a table: identity, (12), (13), (23), (123), (132), with
    /// permutations composed right-to-left.
    fn sym3() -> FiniteGroupTable {
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [1, 0, 2],
            [2, 1, 0],
            [0, 2, 1],
            [1, 2, 0],
            [2, 0, 1],
        ];
        let compose = |p: [usize; 3], q: [usize; 3]| [p[q[0]], p[q[1]], p[q[2]]];
        let index = |p: [usize; 3]| perms.iter().position(|&x| x == p).unwrap();
        let table = perms
            .iter()
            .map(|&p| perms.iter().map(|&q| index(compose(p, q))).collect())
            .collect();
        FiniteGroupTable::new(
            table,
            Some(
                ["1", "t12", "t13", "t23", "c123", "c132"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
        )
        .unwrap()
    }

    #[test]
    fn table_validation_rejects_broken_tables() {
        // Identity not at index 0.
        let bad = vec![vec![1, 0], vec![0, 1]];
        assert!(matches!(
            FiniteGroupTable::new(bad, None),
            Err(GroupError::Identity { .. })
        ));
        // Non-associative magma with identity: 3 elements, x*x = y, y*x = x,
        // x*y = x breaks (x x) x = y x = x vs x (x x) = x y = x ... craft a
        // genuinely non-associative one instead.
        let bad = vec![
            vec![0, 1, 2],
            vec![1, 2, 2],
            vec![2, 2, 0],
        ];
        assert!(matches!(
            FiniteGroupTable::new(bad, None),
            Err(GroupError::NotAssociative { .. }) | Err(GroupError::NoInverse(_))
        ));
        // Entry out of range.
        let bad = vec![vec![0, 1], vec![1, 7]];
        assert!(matches!(
            FiniteGroupTable::new(bad, None),
            Err(GroupError::EntryRange { .. })
        ));
    }

    #[test]
    fn cyclic_group_basics() {
        let g = FiniteGroupTable::cyclic(3, None).unwrap();
        assert_eq!(g.order(), 3);
        assert_eq!(g.mul(1, 2), 0);
        assert_eq!(g.inverse(1), 2);
        // Abelian: conjugacy is equality, no nontrivial commutators.
        assert!(!g.are_conjugate(1, 2));
        assert!(g.are_conjugate(1, 1));
        assert!(!g.is_factor_commutator(1));
        assert!(g.is_factor_commutator(0));
        assert!(g.is_in_derived(0) && !g.is_in_derived(1));
    }

    #[test]
    fn symmetric_group_has_commutator_three_cycles() {
        let s3 = sym3();
        // 3-cycles form one conjugacy class and are commutators.
        assert!(s3.are_conjugate(4, 5));
        assert!(s3.is_factor_commutator(4));
        assert!(s3.is_factor_commutator(5));
        // Transpositions are not commutators (derived subgroup is A3).
        assert!(!s3.is_factor_commutator(1));
        assert!(s3.is_in_derived(4));
        assert!(!s3.is_in_derived(2));
        let (g, h) = s3.commutator_pair(4).unwrap();
        let c = s3.mul(s3.mul(s3.mul(g, h), s3.inverse(g)), s3.inverse(h));
        assert_eq!(c, 4);
    }

    #[test]
    fn normalize_merges_and_cancels() {
        let fp = z2z3();
        assert_eq!(w(&fp, "r.r"), w(&fp, "r2"));
        assert!(w(&fp, "r.r2").is_empty());
        // A cancellation that cascades across the seam.
        let raw = fp.parse_letters("s.r.r2.s").unwrap();
        assert!(fp.normalize(&raw).unwrap().is_empty());
        // Uppercase alias: R is the inverse of r.
        assert_eq!(w(&fp, "s.r.s.R"), w(&fp, "s.r.s.r2"));
        // Identity letters are rejected outright.
        assert!(matches!(
            fp.parse_letters("1:0"),
            Err(GroupError::IdentityLetter)
        ));
        assert!(matches!(
            fp.parse_letters("q"),
            Err(GroupError::BadToken(_))
        ));
    }

    #[test]
    fn parse_rejects_cross_factor_ambiguity() {
        let g1 = FiniteGroupTable::cyclic(2, Some(vec!["1".into(), "x".into()])).unwrap();
        let g2 = FiniteGroupTable::cyclic(3, Some(vec!["1".into(), "x".into(), "y".into()]))
            .unwrap();
        let fp = FreeProduct::new(g1, g2);
        assert!(matches!(
            fp.parse_letters("x"),
            Err(GroupError::AmbiguousToken(_))
        ));
        // Explicit factor tokens still work.
        assert_eq!(fp.parse_letters("1:1").unwrap().len(), 1);
    }

    #[test]
    fn cyclic_reduce_peels_matching_ends() {
        let fp = z2z3();
        let (core, conj) = fp.cyclic_reduce(&w(&fp, "r.s.r"));
        assert_eq!(core, w(&fp, "s.r2"));
        assert_eq!(conj, w(&fp, "r"));
        let (core, conj) = fp.cyclic_reduce(&w(&fp, "r.s.r2"));
        assert_eq!(core, w(&fp, "s"));
        assert_eq!(conj, w(&fp, "r"));
        // Already reduced words are untouched.
        let (core, conj) = fp.cyclic_reduce(&w(&fp, "s.r"));
        assert_eq!(core, w(&fp, "s.r"));
        assert!(conj.is_empty());
    }

    #[test]
    fn cyclic_reduce_round_trips() {
        let fp = z2z3();
        for k in 0..=6u64 {
            for word in fp.enumerate_cyclic_words(k) {
                for g_text in ["", "s", "r", "s.r", "r2.s", "s.r.s"] {
                    let g = w(&fp, g_text);
                    let conjed = fp.conjugated(&word, &g);
                    let (core, conj) = fp.cyclic_reduce(&conjed);
                    let back = fp.conjugated(&core, &conj);
                    assert_eq!(back, conjed);
                    // The core's ends are in different factors (or len <= 1).
                    if core.len() > 1 {
                        assert_ne!(
                            core.letters()[0].factor,
                            core.letters()[core.len() - 1].factor
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn class_rep_identifies_rotations_and_factor_conjugates() {
        let fp = z2z3();
        let a = w(&fp, "s.r.s.r2");
        let b = w(&fp, "s.r2.s.r");
        assert_eq!(fp.class_rep(&a), fp.class_rep(&b));
        assert_ne!(fp.class_rep(&a), fp.class_rep(&w(&fp, "s.r.s.r")));
        // Single letters: conjugacy inside the factor decides.
        let s3 = sym3();
        let z2 = FiniteGroupTable::cyclic(2, None).unwrap();
        let fp2 = FreeProduct::new(s3, z2);
        let c123 = FPWord { letters: vec![FPLetter { factor: Factor::One, elem: 4 }] };
        let c132 = FPWord { letters: vec![FPLetter { factor: Factor::One, elem: 5 }] };
        assert_eq!(fp2.class_rep(&c123), fp2.class_rep(&c132));
        // Reps always start in the first factor for even length.
        let odd_start = w(&fp, "r.s.r2.s");
        assert_eq!(fp.class_rep(&odd_start).letters()[0].factor, Factor::One);
    }

    #[test]
    fn shape3_frozen_acceptance() {
        let fp = z2z3();
        // [s, r] = s r s^-1 r^-1 = s.r.s.r2: as written this fits shape 3
        // (A = s, a1 = r, a2 = r), shape 4 (a1 = s, A = r, a2 = s), and
        // shape 5 (A = s, B = r) all at once; the decision reports the
        // lowest id.
        let word = w(&fp, "s.r.s.r2");
        let forms = fp.match_wicks_forms(&word, FormReading::Corrected);
        let ids: Vec<u8> = forms.iter().map(|f| f.form_id).collect();
        assert_eq!(ids, vec![3, 4, 5]);
        assert_eq!(forms[0].a, w(&fp, "s"));
        let acc = fp.is_commutator(&word).expect("is a commutator");
        assert_eq!(acc.form.as_ref().unwrap().form_id, 3);
        let witness = acc.witness.expect("shape 3 carries a witness");
        assert_eq!(fp.commutator(&witness.u, &witness.v), word);
    }

    #[test]
    fn literal_reading_differs_on_frozen_word() {
        let fp = z2z3();
        let word = w(&fp, "s.r.s.r");
        // Under the corrected reading this word is not a commutator (and
        // indeed its abelianization is r^2, nontrivial).
        assert!(fp.is_commutator(&word).is_none());
        assert!(!fp.has_trivial_abelianization(&word));
        // Under the literal reading, shape 4 would match as written.
        let forms = fp.match_wicks_forms(&word, FormReading::PrintedLiteral);
        assert!(forms.iter().any(|f| f.form_id == 4));
        let corrected = fp.match_wicks_forms(&word, FormReading::Corrected);
        assert!(corrected.is_empty());
    }

    #[test]
    fn longer_shape3_instance() {
        let fp = z2z3();
        // (s r s) r (s r2 s) r2 with A = s.r.s.
        let word = w(&fp, "s.r.s.r.s.r2.s.r2");
        let forms = fp.match_wicks_forms(&word, FormReading::Corrected);
        assert!(forms.iter().any(|f| f.form_id == 3 && f.a == w(&fp, "s.r.s")));
        let acc = fp.is_commutator(&word).expect("is a commutator");
        assert!(acc.witness.is_some());
    }

    #[test]
    fn single_letter_shapes() {
        let s3 = sym3();
        let z2 = FiniteGroupTable::cyclic(2, None).unwrap();
        let fp = FreeProduct::new(s3.clone(), z2.clone());
        let c123 = FPWord { letters: vec![FPLetter { factor: Factor::One, elem: 4 }] };
        let acc = fp.is_commutator(&c123).expect("3-cycles are commutators");
        assert_eq!(acc.form.as_ref().unwrap().form_id, 1);
        let witness = acc.witness.unwrap();
        assert_eq!(fp.commutator(&witness.u, &witness.v), c123);
        // Transpositions are not commutators anywhere.
        let t12 = FPWord { letters: vec![FPLetter { factor: Factor::One, elem: 1 }] };
        assert!(fp.is_commutator(&t12).is_none());
        // Swapped roles: S3 as the second factor gives shape 2.
        let fp2 = FreeProduct::new(z2, s3);
        let c123_b = FPWord { letters: vec![FPLetter { factor: Factor::Two, elem: 4 }] };
        let acc = fp2.is_commutator(&c123_b).expect("3-cycles are commutators");
        assert_eq!(acc.form.as_ref().unwrap().form_id, 2);
        // The empty word is the trivial commutator.
        let acc = fp.is_commutator(&FPWord::empty()).unwrap();
        assert!(acc.form.is_none());
        assert_eq!(acc.witness.unwrap().u, FPWord::empty());
    }

    #[test]
    fn decision_is_rotation_and_conjugation_invariant() {
        let fp = z2z3();
        for word in fp.enumerate_cyclic_words(8) {
            let base = fp.is_commutator(&word).is_some();
            for g_text in ["s", "r", "r.s", "s.r2"] {
                let g = w(&fp, g_text);
                let conjed = fp.conjugated(&word, &g);
                assert_eq!(fp.is_commutator(&conjed).is_some(), base);
            }
        }
    }

    #[test]
    fn accepted_words_have_trivial_abelianization() {
        let fp = z2z3();
        for k in [1u64, 2, 4, 6, 8] {
            for word in fp.enumerate_cyclic_words(k) {
                if fp.is_commutator(&word).is_some() {
                    assert!(fp.has_trivial_abelianization(&word), "{word:?}");
                }
            }
        }
    }

    #[test]
    fn count_report_frozen_values() {
        let fp = z2z3();
        let report = count_commutator_classes_fp(&fp, 4).unwrap();
        assert_eq!(report.exact_count, BigInt::from(1));
        assert_eq!(report.accepted_words, BigInt::from(2));
        assert_eq!(report.main_term, BigRational::new(BigInt::from(1), BigInt::from(12)));
        assert!((report.ratio.unwrap() - 12.0).abs() < 1e-12);
        for k in [2u64, 6, 10] {
            let report = count_commutator_classes_fp(&fp, k).unwrap();
            assert_eq!(report.exact_count, BigInt::from(0), "k = {k}");
        }
        // Length 0: the identity class, zero main term.
        let report = count_commutator_classes_fp(&fp, 0).unwrap();
        assert_eq!(report.exact_count, BigInt::from(1));
        assert!(report.main_term.is_zero());
        assert!(report.ratio.is_none());
        // Length 1: no single-letter commutators when both factors are
        // abelian.
        let report = count_commutator_classes_fp(&fp, 1).unwrap();
        assert_eq!(report.exact_count, BigInt::from(0));
    }

    #[test]
    fn per_form_counts_cover_accepted_words() {
        let fp = z2z3();
        for k in [4u64, 8, 12] {
            let report = count_commutator_classes_fp(&fp, k).unwrap();
            let total: u64 = report.per_form_counts.iter().sum();
            let accepted: u64 = report.accepted_words.to_u64().unwrap();
            assert!(total >= accepted, "k = {k}: {total} < {accepted}");
        }
    }

    #[test]
    fn main_term_frozen_values() {
        let (z2, z3) = hecke_group(3).unwrap();
        let v = theorem2_main_term(&z2, &z3, 24).unwrap();
        assert_eq!(v, BigRational::from(BigInt::from(96)));
        let v = theorem2_main_term(&z2, &z3, 4).unwrap();
        assert_eq!(v, BigRational::new(BigInt::from(1), BigInt::from(12)));
        let z2b = FiniteGroupTable::cyclic(2, None).unwrap();
        let v = theorem2_main_term(&z2, &z2b, 8).unwrap();
        assert!(v.is_zero());
        assert!(theorem2_main_term(&z2, &z3, 6).is_err());
        assert!(theorem2_main_term(&z2, &z3, 0).unwrap().is_zero());
    }

    #[test]
    fn closed_path_counts() {
        // Brute-force walks on K_m against the eigenvalue formula.
        for m in 2u64..=5 {
            for n in 1u64..=7 {
                let mut total = 0u64;
                let mut based = 0u64;
                // Walks: sequences of vertices v_0 .. v_n, adjacent distinct,
                // v_n = v_0.
                let mut stack = vec![(0usize, Vec::new())];
                let m_us = m as usize;
                while let Some((depth, path)) = stack.pop() {
                    if depth == n as usize {
                        let path: &Vec<usize> = &path;
                        if path.last() == path.first() {
                            total += 1;
                            if path[0] == 0 {
                                based += 1;
                            }
                        }
                        continue;
                    }
                    if path.is_empty() {
                        for v in 0..m_us {
                            stack.push((depth, vec![v]));
                        }
                        // Re-process at same depth with a start vertex.
                        continue;
                    }
                    let last = *path.last().unwrap();
                    for v in 0..m_us {
                        if v != last {
                            let mut p = path.clone();
                            p.push(v);
                            stack.push((depth + 1, p));
                        }
                    }
                }
                assert_eq!(
                    count_closed_paths_complete(m, n, false).unwrap(),
                    BigInt::from(total),
                    "m = {m}, n = {n}"
                );
                assert_eq!(
                    count_closed_paths_complete(m, n, true).unwrap(),
                    BigInt::from(based),
                    "based m = {m}, n = {n}"
                );
            }
        }
        assert!(count_closed_paths_complete(1, 3, false).is_err());
        assert!(count_closed_paths_complete(3, 0, true).is_err());
    }

    #[test]
    fn trivial_product_report_agreement_and_divergence() {
        let fp = z2z3();
        // k = 4: everything agrees.
        let rep = count_trivial_product_words(&fp, 4).unwrap();
        assert_eq!(rep.enumerated, BigInt::from(2));
        assert_eq!(rep.enumerated_trivial_ab, BigInt::from(2));
        assert_eq!(rep.eigenvalue_count, BigInt::from(2));
        assert_eq!(rep.closed_form, BigInt::from(2));
        // k = 8: the enumeration and the eigenvalue count agree; the closed
        // form does not (6 vs 8), and the report says so honestly.
        let rep = count_trivial_product_words(&fp, 8).unwrap();
        assert_eq!(rep.enumerated, BigInt::from(6));
        assert_eq!(rep.eigenvalue_count, BigInt::from(6));
        assert_eq!(rep.closed_form, BigInt::from(8));
        assert!(count_trivial_product_words(&fp, 6).is_err());
    }

    #[test]
    fn forward_oracle_members_are_accepted() {
        let fp = z2z3();
        let oracle = forward_commutator_oracle_fp(&fp, 3);
        assert!(oracle.contains(&FPWord::empty()));
        for rep in &oracle {
            assert!(fp.is_commutator(rep).is_some(), "{rep:?}");
        }
        // The length-4 commutator class shows up already at witness length 3.
        assert!(oracle.contains(&fp.class_rep(&w(&fp, "s.r.s.r2"))));
    }

    #[test]
    fn hecke_group_construction() {
        assert!(hecke_group(2).is_err());
        let (g1, g2) = hecke_group(5).unwrap();
        assert_eq!(g1.order(), 2);
        assert_eq!(g2.order(), 5);
        assert_eq!(g1.name(1), "s");
        assert_eq!(g2.name(1), "r");
        assert_eq!(g2.name(3), "r3");
    }

    #[test]
    fn group_json_round_trip() {
        let s3 = sym3();
        let json = s3.to_json();
        let back = FiniteGroupTable::from_json(&json).unwrap();
        assert_eq!(back, s3);
        // Malformed inputs.
        assert!(FiniteGroupTable::from_json(&serde_json::json!({"order": 2})).is_err());
        assert!(FiniteGroupTable::from_json(&serde_json::json!({
            "order": 3,
            "table": [[0, 1], [1, 0]]
        }))
        .is_err());
    }

    #[test]
    fn enumeration_shapes_and_sizes() {
        let fp = z2z3();
        assert_eq!(fp.enumerate_cyclic_words(0).len(), 1);
        assert_eq!(fp.enumerate_cyclic_words(1).len(), 3);
        assert_eq!(fp.enumerate_cyclic_words(2).len(), 2);
        assert_eq!(fp.enumerate_cyclic_words(3).len(), 0);
        assert_eq!(fp.enumerate_cyclic_words(4).len(), 4);
        assert_eq!(fp.enumerate_cyclic_words(8).len(), 16);
        let (g1, g2) = (FiniteGroupTable::cyclic(3, None).unwrap(), sym3());
        let fp = FreeProduct::new(g1, g2);
        // (3-1)^2 * (6-1)^2 words of length 4.
        assert_eq!(fp.enumerate_cyclic_words(4).len(), 100);
    }
}
