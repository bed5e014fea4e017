//! Commutators in a free group, decided through the canonical shape
//! `A B C A^-1 B^-1 C^-1`.
//!
//! A cyclically reduced word is a commutator exactly when one of its cyclic
//! rotations factors as `A B C A^-1 B^-1 C^-1` with zero cancellation. This
//! module finds such factorizations, turns them into self-certifying witness
//! pairs (`[U, V]` re-reduced and compared to the input before acceptance),
//! enumerates all words of this shape by direct construction, counts their
//! conjugacy classes, and evaluates the quadratic main term that the class
//! count tracks asymptotically.

use crate::freewords::{
    canonical_rep, cyclic_reduce, ClassRep, CyclicWord, Letter, Word, WordError,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Errors for the shape machinery.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CommutatorError {
    /// Words of this length/rank do not fit the 128-bit packed key used for
    /// deduplication.
    #[error("rank {r} length {k} exceeds packed-word capacity ({bits} bits per letter, 128-bit keys)")]
    Capacity { r: u8, k: u64, bits: u32 },
    /// The main term is defined only for even lengths.
    #[error("main term is defined only for even lengths (got {0})")]
    OddLength(u64),
    #[error(transparent)]
    Word(#[from] WordError),
}

/// A factorization witness: the input word is literally `a b c a^-1 b^-1 c^-1`
/// (concatenation without any cancellation).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WicksTripleFree {
    pub a: Word,
    pub b: Word,
    pub c: Word,
}

impl WicksTripleFree {
    /// Lengths `(|A|, |B|, |C|)`.
    pub fn partition(&self) -> (usize, usize, usize) {
        (self.a.len(), self.b.len(), self.c.len())
    }
}

/// A certified commutator presentation: `[u, v]` reduces exactly to the
/// accepted word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommutatorWitness {
    pub u: Word,
    pub v: Word,
}

/// Exact class count at one length, alongside the main term it tracks.
#[derive(Clone, Debug, PartialEq)]
pub struct CountReport {
    /// Word length (even; odd lengths produce the zero report).
    pub k: u64,
    /// Number of distinct conjugacy classes among shape words of length `k`.
    pub exact_count: BigInt,
    /// `(2r-2)^2 (2r-1)^(k/2-1) k^2 / (96 r)` as an exact rational.
    pub main_term: BigRational,
    /// `exact_count / main_term` when the main term is nonzero.
    pub ratio: Option<f64>,
    /// Number of distinct shape words (before conjugacy dedup).
    pub wicks_word_count: BigInt,
}

fn ratio_of(exact: &BigInt, main: &BigRational) -> Option<f64> {
    if main.is_zero() {
        return None;
    }
    let q = BigRational::from(exact.clone()) / main;
    q.to_f64()
}

/// All factorizations of `c` as a literal concatenation
/// `A B C A^-1 B^-1 C^-1` (empty parts allowed, no rotation applied).
/// Odd-length input has none. An empty result means `c` itself — as written —
/// is not of the shape; rotations may still be (see [`is_commutator_free`]).
pub fn find_wicks_decompositions(c: &CyclicWord) -> Vec<WicksTripleFree> {
    let n = c.len();
    let ls = c.letters();
    let mut out = Vec::new();
    if n % 2 != 0 {
        return out;
    }
    let x = n / 2;
    // The second half must be inv(A) inv(B) inv(C) where A, B, C split the
    // first half at (n1, n1+n2); compare letter by letter, no allocation.
    for n1 in 0..=x {
        for n2 in 0..=(x - n1) {
            let n3 = x - n1 - n2;
            let ok_a = (0..n1).all(|i| ls[x + i] == ls[n1 - 1 - i].inverse());
            if !ok_a {
                continue;
            }
            let ok_b = (0..n2).all(|i| ls[x + n1 + i] == ls[n1 + n2 - 1 - i].inverse());
            if !ok_b {
                continue;
            }
            let ok_c = (0..n3).all(|i| ls[x + n1 + n2 + i] == ls[x - 1 - i].inverse());
            if !ok_c {
                continue;
            }
            out.push(WicksTripleFree {
                a: c.word().subword(0, n1),
                b: c.word().subword(n1, n1 + n2),
                c: c.word().subword(n1 + n2, x),
            });
        }
    }
    out
}

/// Decide whether `w` is a commutator. Cyclically reduces `w`, then tries
/// every rotation of the core against [`find_wicks_decompositions`]. On a hit,
/// builds the witness `(U, V) = (A·B, C·A^-1)` — for which `[U, V]` expands
/// literally to `A B C A^-1 B^-1 C^-1` — conjugates it back to `w`, and
/// machine-verifies `[U, V] = w` by free reduction before returning it.
pub fn is_commutator_free(w: &Word) -> Option<CommutatorWitness> {
    let (cyc, conj) = cyclic_reduce(w);
    let n = cyc.len();
    for t in 0..n.max(1) {
        let rot = cyc.rotation(t);
        let decs = find_wicks_decompositions(&rot);
        let Some(dec) = decs.first() else { continue };
        let u0 = dec.a.concat(&dec.b);
        let v0 = dec.c.concat(&dec.a.inverse());
        // w = g · rot · g^-1 where g = conjugator · (rotated-off prefix).
        let prefix = cyc.word().subword(0, t);
        let g = conj.concat(&prefix);
        let u = u0.conjugated_by(&g);
        let v = v0.conjugated_by(&g);
        let expanded = Word::commutator(&u, &v);
        assert_eq!(
            &expanded, w,
            "witness self-check failed for {w} (rotation {t}, parts {:?})",
            dec.partition()
        );
        return Some(CommutatorWitness { u, v });
    }
    None
}

fn bits_per_letter(r: u8) -> u32 {
    (2 * u32::from(r)).next_power_of_two().trailing_zeros()
}

fn check_capacity(r: u8, k: u64) -> Result<u32, CommutatorError> {
    let bits = bits_per_letter(r);
    if u64::from(bits) * k > 128 {
        return Err(CommutatorError::Capacity { r, k, bits });
    }
    Ok(bits)
}

fn pack(letters: &[Letter], bits: u32) -> u128 {
    letters
        .iter()
        .fold(0u128, |acc, l| (acc << bits) | u128::from(l.code()))
}

fn unpack(key: u128, len: usize, bits: u32, rank: u8) -> Vec<Letter> {
    let mask = (1u128 << bits) - 1;
    let mut letters = vec![Letter::from_code(0); len];
    let mut k = key;
    for slot in letters.iter_mut().rev() {
        let code = (k & mask) as u8;
        debug_assert!(code < 2 * rank);
        *slot = Letter::from_code(code);
        k >>= bits;
    }
    letters
}

/// Is the letter sequence reduced and cyclically reduced?
fn is_cyclic_word(seq: &[Letter]) -> bool {
    let n = seq.len();
    if n == 0 {
        return true;
    }
    seq.windows(2).all(|p| p[0] != p[1].inverse()) && seq[0] != seq[n - 1].inverse()
}

/// The packed set of all distinct length-`k` shape words, built directly:
/// every reduced first half `H` of length `k/2`, every split of `H` into
/// `(A, B, C)` (empty parts allowed), full word `A B C A^-1 B^-1 C^-1` kept
/// when the literal concatenation is reduced and cyclically reduced.
/// Deduplicated across splits and halves. Never filters all `(2r-1)^k` words.
fn wicks_packed_set(r: u8, k: u64) -> Result<BTreeSet<u128>, CommutatorError> {
    let bits = check_capacity(r, k)?;
    let mut set = BTreeSet::new();
    if k % 2 != 0 {
        return Ok(set);
    }
    if k == 0 {
        set.insert(0); // the empty word
        return Ok(set);
    }
    let x = (k / 2) as usize;
    // Shard by the first letter of the first half; each shard enumerates its
    // reduced halves depth-first and tests every split. Shard sets are merged
    // as a set union, so the result is independent of scheduling.
    let shards: Vec<BTreeSet<u128>> = (0..2 * r)
        .into_par_iter()
        .map(|first| {
            let mut local = BTreeSet::new();
            let mut half = vec![Letter::from_code(first); x];
            descend_halves(r, x, 1, &mut half, &mut |h| {
                collect_splits(h, x, bits, &mut local);
            });
            local
        })
        .collect();
    for shard in shards {
        set.extend(shard);
    }
    Ok(set)
}

fn descend_halves(
    r: u8,
    x: usize,
    depth: usize,
    half: &mut Vec<Letter>,
    visit: &mut impl FnMut(&[Letter]),
) {
    if depth == x {
        visit(half);
        return;
    }
    for l in Letter::alphabet(r) {
        if half[depth - 1] == l.inverse() {
            continue;
        }
        half[depth] = l;
        descend_halves(r, x, depth + 1, half, visit);
    }
}

fn collect_splits(half: &[Letter], x: usize, bits: u32, out: &mut BTreeSet<u128>) {
    let mut word = vec![Letter::from_code(0); 2 * x];
    word[..x].copy_from_slice(half);
    for n1 in 0..=x {
        for n2 in 0..=(x - n1) {
            // Second half: inv(A) inv(B) inv(C) for the split (n1, n2, n3).
            let mut pos = x;
            for i in (0..n1).rev() {
                word[pos] = half[i].inverse();
                pos += 1;
            }
            for i in (n1..n1 + n2).rev() {
                word[pos] = half[i].inverse();
                pos += 1;
            }
            for i in (n1 + n2..x).rev() {
                word[pos] = half[i].inverse();
                pos += 1;
            }
            if is_cyclic_word(&word) {
                out.insert(pack(&word, bits));
            }
        }
    }
}

/// All distinct length-`k` shape words, in lexicographic order.
/// Odd `k` yields nothing; `k = 0` yields the empty word.
pub fn enumerate_wicks_commutators(r: u8, k: u64) -> Result<Vec<CyclicWord>, CommutatorError> {
    let bits = check_capacity(r, k)?;
    let set = wicks_packed_set(r, k)?;
    Ok(set
        .iter()
        .map(|&key| {
            let letters = unpack(key, k as usize, bits, r);
            let word = Word::from_reduced(letters, r).expect("constructed words are reduced");
            CyclicWord::new(word).expect("constructed words are cyclically reduced")
        })
        .collect())
}

/// Quadratic main term for the number of commutator conjugacy classes of
/// length `k`: `(2r-2)^2 (2r-1)^(k/2-1) k^2 / (96 r)`, as an exact rational.
/// Defined for even `k` only.
pub fn theorem1_main_term(r: u8, k: u64) -> Result<BigRational, CommutatorError> {
    if k % 2 != 0 {
        return Err(CommutatorError::OddLength(k));
    }
    if k == 0 {
        return Ok(BigRational::zero());
    }
    let r_i = i64::from(r);
    let growth = BigInt::from(2 * r_i - 1).pow((k / 2 - 1).try_into().expect("fits"));
    let numerator =
        BigInt::from((2 * r_i - 2) * (2 * r_i - 2)) * growth * BigInt::from(k) * BigInt::from(k);
    let denominator = BigInt::from(96 * r_i);
    Ok(BigRational::new(numerator, denominator))
}

/// Count distinct shape words of length `k` and their conjugacy classes, and
/// compare the class count to the main term. Odd `k` produces the zero report
/// (no shape word has odd length); `k = 0` counts the identity class.
pub fn count_commutator_classes_free(r: u8, k: u64) -> Result<CountReport, CommutatorError> {
    let bits = check_capacity(r, k)?;
    let words = wicks_packed_set(r, k)?;
    let wicks_word_count = BigInt::from(words.len());

    // Conjugacy dedup: canonical (least) rotation of each word, packed again.
    let keys: Vec<u128> = words.into_iter().collect();
    let classes: BTreeSet<u128> = keys
        .par_chunks(4096)
        .map(|chunk| {
            let mut local = BTreeSet::new();
            for &key in chunk {
                let letters = unpack(key, k as usize, bits, r);
                let idx = crate::rotation::least_rotation_index(&letters);
                let mut canonical = Vec::with_capacity(letters.len());
                canonical.extend_from_slice(&letters[idx..]);
                canonical.extend_from_slice(&letters[..idx]);
                local.insert(pack(&canonical, bits));
            }
            local
        })
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        });

    let exact_count = BigInt::from(classes.len());
    let main_term = if k % 2 == 0 {
        theorem1_main_term(r, k)?
    } else {
        BigRational::zero()
    };
    let ratio = ratio_of(&exact_count, &main_term);
    Ok(CountReport { k, exact_count, main_term, ratio, wicks_word_count })
}

/// Ground-truth commutator classes from the witness side: reduce `[U, V]` for
/// every pair of reduced words with `|U|, |V| <= max_witness_len` and collect
/// the canonical class representatives. Independent of the shape machinery;
/// used as the completeness oracle. The class set is complete for classes of
/// length up to `2 * max_witness_len` (a shape word of length `2X` has the
/// witness `(A·B, C·A^-1)` of lengths at most `X`).
pub fn forward_commutator_oracle(r: u8, max_witness_len: u64) -> BTreeSet<ClassRep> {
    let mut words: Vec<Word> = vec![Word::empty(r)];
    for n in 1..=max_witness_len {
        crate::freewords::for_each_reduced(r, n, |letters| {
            words.push(
                Word::from_reduced(letters.to_vec(), r).expect("enumerated words are reduced"),
            );
        });
    }
    words
        .par_iter()
        .map(|u| {
            let mut local = BTreeSet::new();
            for v in &words {
                let c = Word::commutator(u, v);
                let (cyc, _) = cyclic_reduce(&c);
                local.insert(canonical_rep(&cyc));
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
    use crate::freewords::{abelianize, enumerate_cyclically_reduced};

    fn w(text: &str) -> Word {
        Word::parse(text, 2).expect("parse")
    }

    fn cw(text: &str) -> CyclicWord {
        CyclicWord::new(w(text)).expect("cyclically reduced")
    }

    #[test]
    fn decomposition_examples() {
        let decs = find_wicks_decompositions(&cw("abAB"));
        assert!(decs
            .iter()
            .any(|d| d.a == w("a") && d.b == w("b") && d.c.is_empty()));

        let decs = find_wicks_decompositions(&cw("aabAAB"));
        assert!(decs
            .iter()
            .any(|d| d.a == w("aa") && d.b == w("b") && d.c.is_empty()));

        assert!(find_wicks_decompositions(&cw("abab")).is_empty());
        assert!(find_wicks_decompositions(&cw("aba")).is_empty(), "odd length");
    }

    #[test]
    fn decision_examples() {
        let witness = is_commutator_free(&w("abAB")).expect("commutator");
        assert_eq!(Word::commutator(&witness.u, &witness.v), w("abAB"));

        let empty = Word::empty(2);
        let witness = is_commutator_free(&empty).expect("identity is [1,1]");
        assert!(witness.u.is_empty() && witness.v.is_empty());

        // A commutator of a free group is never a proper power.
        assert!(is_commutator_free(&w("abABabAB")).is_none());

        // Conjugates of commutators are commutators; witness still exact.
        let conj = w("abAB").conjugated_by(&w("bb"));
        let witness = is_commutator_free(&conj).expect("conjugate accepted");
        assert_eq!(Word::commutator(&witness.u, &witness.v), conj);
    }

    #[test]
    fn enumeration_known_sizes() {
        assert_eq!(enumerate_wicks_commutators(2, 4).unwrap().len(), 8);
        assert!(enumerate_wicks_commutators(2, 2).unwrap().is_empty());
        let e = enumerate_wicks_commutators(2, 0).unwrap();
        assert_eq!(e.len(), 1);
        assert!(e[0].is_empty());
        assert!(enumerate_wicks_commutators(2, 5).unwrap().is_empty());
    }

    #[test]
    fn enumeration_matches_filtering_at_k4() {
        // Oracle equivalence: direct construction vs filtering every
        // cyclically reduced word through the factorization search.
        let filtered: Vec<CyclicWord> = enumerate_cyclically_reduced(2, 4)
            .into_iter()
            .filter(|c| !find_wicks_decompositions(c).is_empty())
            .collect();
        let constructed = enumerate_wicks_commutators(2, 4).unwrap();
        assert_eq!(constructed.len(), filtered.len());
        let a: Vec<String> = constructed.iter().map(|c| c.to_string()).collect();
        let b: Vec<String> = filtered.iter().map(|c| c.to_string()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn enumeration_matches_filtering_up_to_k8() {
        for k in [6u64, 8] {
            let filtered: BTreeSet<String> = enumerate_cyclically_reduced(2, k)
                .into_iter()
                .filter(|c| !find_wicks_decompositions(c).is_empty())
                .map(|c| c.to_string())
                .collect();
            let constructed: BTreeSet<String> = enumerate_wicks_commutators(2, k)
                .unwrap()
                .into_iter()
                .map(|c| c.to_string())
                .collect();
            assert_eq!(constructed, filtered, "k={k}");
        }
    }

    #[test]
    fn main_term_values() {
        assert_eq!(theorem1_main_term(2, 4).unwrap(), BigRational::from(BigInt::from(1)));
        assert_eq!(theorem1_main_term(2, 0).unwrap(), BigRational::zero());
        assert_eq!(theorem1_main_term(3, 6).unwrap(), BigRational::from(BigInt::from(50)));
        assert_eq!(theorem1_main_term(2, 3), Err(CommutatorError::OddLength(3)));
    }

    #[test]
    fn count_report_small_values() {
        let rep = count_commutator_classes_free(2, 4).unwrap();
        assert_eq!(rep.exact_count, BigInt::from(2));
        assert_eq!(rep.wicks_word_count, BigInt::from(8));
        assert_eq!(rep.ratio, Some(2.0));

        let rep = count_commutator_classes_free(2, 2).unwrap();
        assert_eq!(rep.exact_count, BigInt::from(0));
        assert_eq!(rep.wicks_word_count, BigInt::from(0));

        let rep = count_commutator_classes_free(2, 0).unwrap();
        assert_eq!(rep.exact_count, BigInt::from(1));
        assert_eq!(rep.main_term, BigRational::zero());
        assert_eq!(rep.ratio, None);

        // Odd length: zero-valued report, not an error.
        let rep = count_commutator_classes_free(2, 7).unwrap();
        assert_eq!(rep.exact_count, BigInt::from(0));
        assert_eq!(rep.main_term, BigRational::zero());
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(
            count_commutator_classes_free(2, 100),
            Err(CommutatorError::Capacity { .. })
        ));
    }

    #[test]
    fn forward_oracle_small() {
        let oracle = forward_commutator_oracle(2, 1);
        // Identity plus both length-4 classes ([a,b]-type and [b,a]-type).
        assert!(oracle.iter().any(|c| c.is_empty()));
        let of_len4: Vec<String> =
            oracle.iter().filter(|c| c.len() == 4).map(|c| c.to_string()).collect();
        assert_eq!(of_len4.len(), 2);
        // Every oracle member is accepted by the decision (soundness).
        for class in &oracle {
            assert!(
                is_commutator_free(class.word()).is_some(),
                "oracle class {class} rejected"
            );
        }
    }

    #[test]
    fn accepted_words_have_zero_abelianization_small() {
        for k in [0u64, 2, 4, 6] {
            for word in enumerate_wicks_commutators(2, k).unwrap() {
                assert!(abelianize(word.word()).iter().all(|&e| e == 0));
            }
        }
    }

    #[test]
    fn rotation_invariance_of_decision_small() {
        for k in [4u64, 6] {
            for c in enumerate_cyclically_reduced(2, k) {
                let accepted = is_commutator_free(c.word()).is_some();
                for rot in c.rotations() {
                    assert_eq!(
                        is_commutator_free(rot.word()).is_some(),
                        accepted,
                        "rotation of {c} disagrees"
                    );
                }
            }
        }
    }

    #[test]
    fn witness_formula_identity_symbolic() {
        // (AB)(CA^-1)(AB)^-1(CA^-1)^-1 = A B C A^-1 B^-1 C^-1 as free words,
        // checked over a grid of part words (including empty parts).
        let parts = ["", "a", "b", "AB", "ba", "bb"];
        for pa in parts {
            for pb in parts {
                for pc in parts {
                    let a = w(pa);
                    let b = w(pb);
                    let c = w(pc);
                    let u = a.concat(&b);
                    let v = c.concat(&a.inverse());
                    let lhs = Word::commutator(&u, &v);
                    let rhs = a
                        .concat(&b)
                        .concat(&c)
                        .concat(&a.inverse())
                        .concat(&b.inverse())
                        .concat(&c.inverse());
                    assert_eq!(lhs, rhs, "A={pa} B={pb} C={pc}");
                }
            }
        }
    }
}
