//! Words in a free group `F_r`: letters, free and cyclic reduction, canonical
//! conjugacy-class representatives, abelianization, and exact counts of
//! reduced and cyclically reduced words.
//!
//! Text format: generators are `a`-`z`, inverses are `A`-`Z`; the rank is an
//! explicit parameter and every letter must use a generator index below it.
//! The total order on letters is generator index ascending with the positive
//! letter before its inverse (`a < A < b < B < ...`); canonical class
//! representatives are least rotations under this order.

use crate::rotation::least_rotation_index;
use num_bigint::BigInt;
use num_traits::One;
use std::fmt;
use thiserror::Error;

/// Largest supported rank (one generator per ASCII letter).
pub const MAX_RANK: u8 = 26;

/// Errors for word parsing, construction, and counting.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordError {
    /// A character outside `[a-zA-Z]`.
    #[error("invalid word character {0:?}: expected a-z (generator) or A-Z (inverse)")]
    BadChar(char),
    /// A letter whose generator index is not below the ambient rank.
    #[error("letter {letter:?} needs rank at least {needed}, but the rank is {rank}")]
    RankExceeded { letter: char, needed: u8, rank: u8 },
    /// A rank outside `1..=26` (counting operations require at least 2).
    #[error("rank {got} is outside the supported range {min}..={max}")]
    BadRank { got: u8, min: u8, max: u8 },
    /// A word that must be freely reduced contains a cancelling pair.
    #[error("word is not freely reduced: letters at positions {pos} and {next} cancel", next = pos + 1)]
    NotReduced { pos: usize },
    /// A word that must be cyclically reduced has mutually inverse endpoints.
    #[error("word is not cyclically reduced: first and last letters cancel")]
    NotCyclicallyReduced,
    /// A count that is only defined from some minimum length.
    #[error("length {got} is below the minimum {min} for this count")]
    LengthTooSmall { min: u64, got: u64 },
}

/// One letter of `F_r`: a generator `x_i` or its inverse.
///
/// Packed as `2 * gen + (1 if inverse)`, so the derived order is exactly the
/// canonical letter order `a < A < b < B < ...`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u8);

impl Letter {
    /// The letter for generator `gen` (0-based), inverted if `inverse`.
    ///
    /// Panics if `gen >= 26`; use [`Letter::from_char`] for validated input.
    pub fn new(gen: u8, inverse: bool) -> Letter {
        assert!(gen < MAX_RANK, "generator index {gen} out of range");
        Letter(gen * 2 + u8::from(inverse))
    }

    /// 0-based generator index.
    pub fn gen(self) -> u8 {
        self.0 / 2
    }

    /// True for `x_i^-1` letters.
    pub fn is_inverse(self) -> bool {
        self.0 % 2 == 1
    }

    /// +1 for a generator, -1 for an inverse.
    pub fn sign(self) -> i64 {
        if self.is_inverse() {
            -1
        } else {
            1
        }
    }

    /// The mutually inverse letter.
    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }

    /// Position in the canonical letter order, in `0..2r`.
    pub fn code(self) -> u8 {
        self.0
    }

    /// Inverse of [`Letter::code`]. Panics if `code >= 52`.
    pub fn from_code(code: u8) -> Letter {
        assert!(code < 2 * MAX_RANK, "letter code {code} out of range");
        Letter(code)
    }

    /// All `2r` letters of rank `r`, in canonical order.
    pub fn alphabet(rank: u8) -> impl Iterator<Item = Letter> {
        (0..2 * rank).map(Letter)
    }

    /// Parse one character (`a`-`z` generator, `A`-`Z` inverse).
    pub fn from_char(ch: char) -> Result<Letter, WordError> {
        match ch {
            'a'..='z' => Ok(Letter::new(ch as u8 - b'a', false)),
            'A'..='Z' => Ok(Letter::new(ch as u8 - b'A', true)),
            _ => Err(WordError::BadChar(ch)),
        }
    }

    /// The character form used by [`fmt::Display`].
    pub fn to_char(self) -> char {
        let base = if self.is_inverse() { b'A' } else { b'a' };
        (base + self.gen()) as char
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

fn check_rank(rank: u8) -> Result<(), WordError> {
    if (1..=MAX_RANK).contains(&rank) {
        Ok(())
    } else {
        Err(WordError::BadRank { got: rank, min: 1, max: MAX_RANK })
    }
}

fn check_counting_rank(rank: u8) -> Result<(), WordError> {
    if (2..=MAX_RANK).contains(&rank) {
        Ok(())
    } else {
        Err(WordError::BadRank { got: rank, min: 2, max: MAX_RANK })
    }
}

fn check_letters(letters: &[Letter], rank: u8) -> Result<(), WordError> {
    for &l in letters {
        if l.gen() >= rank {
            return Err(WordError::RankExceeded {
                letter: l.to_char(),
                needed: l.gen() + 1,
                rank,
            });
        }
    }
    Ok(())
}

/// Parse a string into letters, validating every generator index against the
/// rank but imposing no reducedness condition.
pub fn parse_letters(text: &str, rank: u8) -> Result<Vec<Letter>, WordError> {
    check_rank(rank)?;
    let letters = text.chars().map(Letter::from_char).collect::<Result<Vec<_>, _>>()?;
    check_letters(&letters, rank)?;
    Ok(letters)
}

/// A freely reduced word in `F_r`. The empty word is the identity.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word {
    letters: Vec<Letter>,
    rank: u8,
}

impl Word {
    /// The identity of `F_rank`.
    pub fn empty(rank: u8) -> Word {
        Word { letters: Vec::new(), rank }
    }

    /// Wrap a letter sequence that must already be freely reduced.
    pub fn from_reduced(letters: Vec<Letter>, rank: u8) -> Result<Word, WordError> {
        check_rank(rank)?;
        check_letters(&letters, rank)?;
        for (pos, pair) in letters.windows(2).enumerate() {
            if pair[0] == pair[1].inverse() {
                return Err(WordError::NotReduced { pos });
            }
        }
        Ok(Word { letters, rank })
    }

    /// Parse a string that must already be freely reduced.
    pub fn parse(text: &str, rank: u8) -> Result<Word, WordError> {
        Word::from_reduced(parse_letters(text, rank)?, rank)
    }

    pub fn rank(&self) -> u8 {
        self.rank
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// The group inverse (reverse the letters and invert each).
    pub fn inverse(&self) -> Word {
        let letters = self.letters.iter().rev().map(|l| l.inverse()).collect();
        // Reversal of a reduced word is reduced.
        Word { letters, rank: self.rank }
    }

    /// The product of two reduced words, reduced at the seam.
    pub fn concat(&self, other: &Word) -> Word {
        let rank = self.rank.max(other.rank);
        let mut letters = self.letters.clone();
        for &l in &other.letters {
            if letters.last() == Some(&l.inverse()) {
                letters.pop();
            } else {
                letters.push(l);
            }
        }
        Word { letters, rank }
    }

    /// `g * self * g^-1`, reduced.
    pub fn conjugated_by(&self, g: &Word) -> Word {
        g.concat(self).concat(&g.inverse())
    }

    /// `[u, v] = u v u^-1 v^-1`, reduced.
    pub fn commutator(u: &Word, v: &Word) -> Word {
        u.concat(v).concat(&u.inverse()).concat(&v.inverse())
    }

    /// The reduced subword `self[range]` (any contiguous slice of a reduced
    /// word is reduced).
    pub fn subword(&self, start: usize, end: usize) -> Word {
        Word { letters: self.letters[start..end].to_vec(), rank: self.rank }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            // Explicit marker so the identity is visible in reports.
            return write!(f, "ε");
        }
        for l in &self.letters {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Freely reduce an arbitrary letter sequence (stack cancellation).
///
/// Idempotent; the result represents the same group element.
pub fn free_reduce(raw: &[Letter], rank: u8) -> Result<Word, WordError> {
    check_rank(rank)?;
    check_letters(raw, rank)?;
    let mut letters: Vec<Letter> = Vec::with_capacity(raw.len());
    for &l in raw {
        if letters.last() == Some(&l.inverse()) {
            letters.pop();
        } else {
            letters.push(l);
        }
    }
    Ok(Word { letters, rank })
}

/// A cyclically reduced word: reduced, and the first and last letters are not
/// mutually inverse (vacuous for length <= 1). These are the minimal-length
/// representatives of their conjugacy class.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CyclicWord {
    word: Word,
}

impl CyclicWord {
    /// Wrap a word, verifying the cyclic-reducedness invariant.
    pub fn new(word: Word) -> Result<CyclicWord, WordError> {
        if word.len() >= 2 {
            let first = word.letters[0];
            let last = *word.letters.last().expect("nonempty");
            if first == last.inverse() {
                return Err(WordError::NotCyclicallyReduced);
            }
        }
        Ok(CyclicWord { word })
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn letters(&self) -> &[Letter] {
        self.word.letters()
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn rank(&self) -> u8 {
        self.word.rank()
    }

    /// The rotation starting at position `t` (a cyclic conjugate; rotations
    /// of a cyclically reduced word are cyclically reduced).
    pub fn rotation(&self, t: usize) -> CyclicWord {
        let n = self.len();
        if n == 0 {
            return self.clone();
        }
        let t = t % n;
        let mut letters = Vec::with_capacity(n);
        letters.extend_from_slice(&self.word.letters[t..]);
        letters.extend_from_slice(&self.word.letters[..t]);
        CyclicWord { word: Word { letters, rank: self.rank() } }
    }

    /// All rotations, starting with the word itself.
    pub fn rotations(&self) -> impl Iterator<Item = CyclicWord> + '_ {
        let n = self.len().max(1);
        (0..n).map(move |t| self.rotation(t))
    }
}

impl fmt::Display for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.word)
    }
}

impl fmt::Debug for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.word)
    }
}

/// Canonical key of a conjugacy class: the least rotation of a cyclically
/// reduced word under the canonical letter order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassRep {
    cyc: CyclicWord,
}

impl ClassRep {
    pub fn cyc(&self) -> &CyclicWord {
        &self.cyc
    }

    pub fn word(&self) -> &Word {
        self.cyc.word()
    }

    pub fn len(&self) -> usize {
        self.cyc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cyc.is_empty()
    }
}

impl fmt::Display for ClassRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cyc)
    }
}

impl fmt::Debug for ClassRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cyc)
    }
}

/// Split a reduced word into its cyclically reduced core and a conjugator:
/// `w = conjugator * core * conjugator^-1` exactly.
pub fn cyclic_reduce(w: &Word) -> (CyclicWord, Word) {
    let ls = w.letters();
    let mut i = 0;
    let mut j = ls.len();
    while j - i >= 2 && ls[i] == ls[j - 1].inverse() {
        i += 1;
        j -= 1;
    }
    let conjugator = w.subword(0, i);
    let core = w.subword(i, j);
    let cyc = CyclicWord::new(core).expect("peeling terminates on a cyclically reduced core");
    (cyc, conjugator)
}

/// The least rotation of `c`: equal for two cyclic words exactly when they are
/// conjugate in `F_r`.
pub fn canonical_rep(c: &CyclicWord) -> ClassRep {
    let k = least_rotation_index(c.letters());
    ClassRep { cyc: c.rotation(k) }
}

/// Exponent-sum vector of a word (image in `Z^r`).
pub type AbVector = Vec<i64>;

/// Abelianization: entry `i` is the signed count of generator `i`.
/// Additive across concatenation (reduction never changes exponent sums).
pub fn abelianize(w: &Word) -> AbVector {
    abelianize_letters(w.letters(), w.rank())
}

/// Abelianization of a raw letter sequence.
pub fn abelianize_letters(letters: &[Letter], rank: u8) -> AbVector {
    let mut counts = vec![0i64; rank as usize];
    for &l in letters {
        counts[l.gen() as usize] += l.sign();
    }
    counts
}

fn big(n: i64) -> BigInt {
    BigInt::from(n)
}

/// `(2r-1)^e` as an exact integer.
fn growth_pow(r: u8, e: u64) -> BigInt {
    big(2 * i64::from(r) - 1).pow(e.try_into().expect("exponent fits u32"))
}

/// Number of freely reduced words of length `n` in `F_r`:
/// `2r (2r-1)^(n-1)` for `n >= 1`, and 1 for `n = 0`.
pub fn count_reduced(r: u8, n: u64) -> Result<BigInt, WordError> {
    check_counting_rank(r)?;
    if n == 0 {
        return Ok(BigInt::one());
    }
    Ok(big(2 * i64::from(r)) * growth_pow(r, n - 1))
}

/// Number of cyclically reduced words of length `n` in `F_r`:
/// `(2r-1)^n + (r-1)(-1)^n + r` for `n >= 1`, and 1 for `n = 0` (the identity
/// counts as its own cyclically reduced class representative).
pub fn count_cyclically_reduced(r: u8, n: u64) -> Result<BigInt, WordError> {
    check_counting_rank(r)?;
    if n == 0 {
        return Ok(BigInt::one());
    }
    let sign = if n % 2 == 0 { 1 } else { -1 };
    Ok(growth_pow(r, n) + big((i64::from(r) - 1) * sign) + big(i64::from(r)))
}

/// Number of freely reduced words of length `n >= 2` that begin with `s1` and
/// end with `s2`, by the three-case closed form:
///
/// - `s2 = s1^-1`: `a_n / 2r` with `a_n = (2r-1)^(n-1) - (r-1)(-1)^n - r`
///   (so `a_1 = a_2 = 0`);
/// - `s2 = s1`:    `b_n / 2r` with `b_n = (2r-1)^(n-1) - (r-1)(-1)^n + r`
///   (so `b_1 = b_2 = 2r`);
/// - otherwise:    `((2r-1)^(n-1) + (-1)^n) / 2r`.
///
/// Summing over all `(s1, s2)` recovers `2r (2r-1)^(n-1)`.
pub fn count_endpoint_pairs(r: u8, n: u64, s1: Letter, s2: Letter) -> Result<BigInt, WordError> {
    check_counting_rank(r)?;
    check_letters(&[s1, s2], r)?;
    if n < 2 {
        return Err(WordError::LengthTooSmall { min: 2, got: n });
    }
    let two_r = big(2 * i64::from(r));
    let sign = big(if n % 2 == 0 { 1 } else { -1 });
    let base = growth_pow(r, n - 1) - (big(i64::from(r) - 1)) * &sign;
    let numerator = if s2 == s1.inverse() {
        base - big(i64::from(r))
    } else if s2 == s1 {
        base + big(i64::from(r))
    } else {
        // base - (r-1)sign + ... simplifies to (2r-1)^(n-1) + (-1)^n here.
        growth_pow(r, n - 1) + sign
    };
    let (q, rem) = num_integer::Integer::div_rem(&numerator, &two_r);
    debug_assert!(num_traits::Zero::is_zero(&rem), "endpoint count not divisible by 2r");
    Ok(q)
}

/// Visit every freely reduced word of length `n` over rank `r`, in
/// lexicographic order of the letter codes. The callback receives the letter
/// buffer for the duration of the call.
pub fn for_each_reduced(r: u8, n: u64, mut visit: impl FnMut(&[Letter])) {
    let n = n as usize;
    let mut buf: Vec<Letter> = Vec::with_capacity(n);
    descend_reduced(r, n, &mut buf, &mut |letters: &[Letter]| visit(letters), &mut |_| true);
}

/// Visit every cyclically reduced word of length `n` over rank `r`, in
/// lexicographic order.
pub fn for_each_cyclically_reduced(r: u8, n: u64, mut visit: impl FnMut(&[Letter])) {
    let n = n as usize;
    let mut buf: Vec<Letter> = Vec::with_capacity(n);
    let mut accept = |letters: &[Letter]| {
        letters.len() < 2 || letters[0] != letters[letters.len() - 1].inverse()
    };
    descend_reduced(r, n, &mut buf, &mut |letters: &[Letter]| visit(letters), &mut accept);
}

fn descend_reduced(
    r: u8,
    n: usize,
    buf: &mut Vec<Letter>,
    visit: &mut impl FnMut(&[Letter]),
    accept: &mut impl FnMut(&[Letter]) -> bool,
) {
    if buf.len() == n {
        if accept(buf) {
            visit(buf);
        }
        return;
    }
    for l in Letter::alphabet(r) {
        if buf.last() == Some(&l.inverse()) {
            continue;
        }
        buf.push(l);
        descend_reduced(r, n, buf, visit, accept);
        buf.pop();
    }
}

/// All cyclically reduced words of length `n`, in lexicographic order.
/// (Materialized convenience form of [`for_each_cyclically_reduced`].)
pub fn enumerate_cyclically_reduced(r: u8, n: u64) -> Vec<CyclicWord> {
    let mut out = Vec::new();
    for_each_cyclically_reduced(r, n, |letters| {
        let word = Word { letters: letters.to_vec(), rank: r };
        out.push(CyclicWord { word });
    });
    out
}
