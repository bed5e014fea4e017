//! The modular group: `SL2(Z)` matrices, decomposition into the generators
//! `S = [[0,-1],[1,0]]` and `T = [[1,1],[0,1]]`, the bridge to the free
//! product `Z/2 * Z/3` (so the free-product commutator decision applies to
//! `PSL2(Z)`), the mod-12 character cutting out the commutator subgroup, the
//! trace identity `tr[A,B] = x^2 + y^2 + z^2 - xyz - 2` for
//! `(x, y, z) = (tr A, tr B, tr AB)`, and a deterministic, resumable scan
//! for commutator traces of Markoff-type triples.

use crate::freeprod::{FPLetter, FPWord, Factor, FreeProduct, hecke_group};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModularError {
    #[error("matrix has determinant {0}, expected 1")]
    NotUnimodular(BigInt),
    #[error("cannot parse matrix from {0:?}: expected four integers \"a b c d\"")]
    ParseMatrix(String),
    #[error("scan state mismatch: {0}")]
    ScanState(String),
    #[error("scan output {path}: {message}")]
    ScanOutput { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An element of `SL2(Z)`; the determinant is validated on construction.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mat2 {
    a: BigInt,
    b: BigInt,
    c: BigInt,
    d: BigInt,
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

impl Mat2 {
    pub fn new(a: BigInt, b: BigInt, c: BigInt, d: BigInt) -> Result<Mat2, ModularError> {
        let det = &a * &d - &b * &c;
        if !det.is_one() {
            return Err(ModularError::NotUnimodular(det));
        }
        Ok(Mat2 { a, b, c, d })
    }

    fn new_unchecked(a: BigInt, b: BigInt, c: BigInt, d: BigInt) -> Mat2 {
        debug_assert!((&a * &d - &b * &c).is_one());
        Mat2 { a, b, c, d }
    }

    pub fn from_i64(a: i64, b: i64, c: i64, d: i64) -> Result<Mat2, ModularError> {
        Mat2::new(BigInt::from(a), BigInt::from(b), BigInt::from(c), BigInt::from(d))
    }

    pub fn identity() -> Mat2 {
        Mat2::from_i64(1, 0, 0, 1).expect("identity is unimodular")
    }

    /// `S = [[0, -1], [1, 0]]` (order 4; `S^2 = -I`).
    pub fn s() -> Mat2 {
        Mat2::from_i64(0, -1, 1, 0).expect("S is unimodular")
    }

    /// `T = [[1, 1], [0, 1]]`.
    pub fn t() -> Mat2 {
        Mat2::from_i64(1, 1, 0, 1).expect("T is unimodular")
    }

    /// `R = S T` (order 6 in `SL2`; order 3 in `PSL2`).
    pub fn r() -> Mat2 {
        Mat2::s().mul(&Mat2::t())
    }

    pub fn entries(&self) -> (&BigInt, &BigInt, &BigInt, &BigInt) {
        (&self.a, &self.b, &self.c, &self.d)
    }

    /// Parse four whitespace-separated integers, row-major.
    pub fn parse(text: &str) -> Result<Mat2, ModularError> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(ModularError::ParseMatrix(text.to_string()));
        }
        let mut vals = Vec::with_capacity(4);
        for p in parts {
            let v: BigInt =
                p.parse().map_err(|_| ModularError::ParseMatrix(text.to_string()))?;
            vals.push(v);
        }
        let d = vals.pop().unwrap();
        let c = vals.pop().unwrap();
        let b = vals.pop().unwrap();
        let a = vals.pop().unwrap();
        Mat2::new(a, b, c, d)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new_unchecked(
            &self.a * &o.a + &self.b * &o.c,
            &self.a * &o.b + &self.b * &o.d,
            &self.c * &o.a + &self.d * &o.c,
            &self.c * &o.b + &self.d * &o.d,
        )
    }

    pub fn inverse(&self) -> Mat2 {
        Mat2::new_unchecked(self.d.clone(), -&self.b, -&self.c, self.a.clone())
    }

    pub fn neg(&self) -> Mat2 {
        Mat2 { a: -&self.a, b: -&self.b, c: -&self.c, d: -&self.d }
    }

    pub fn trace(&self) -> BigInt {
        &self.a + &self.d
    }

    /// The sign-normalized representative of `{M, -M}`: the one whose first
    /// nonzero entry (in order a, b, c, d) is positive.
    pub fn psl2_normalized(&self) -> Mat2 {
        for v in [&self.a, &self.b, &self.c, &self.d] {
            if v.is_positive() {
                return self.clone();
            }
            if v.is_negative() {
                return self.neg();
            }
        }
        self.clone()
    }

    /// Equality in `PSL2(Z)` (up to sign).
    pub fn psl2_eq(&self, o: &Mat2) -> bool {
        self.psl2_normalized() == o.psl2_normalized()
    }
}

/// Generator alphabet for decomposition words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GenLetter {
    S,
    T,
    TInv,
}

/// A word in `S`, `T`, `T^-1`. Displays with run-compressed powers
/// (`S T^3 S T^-2`); the empty word prints `ε`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenWord {
    letters: Vec<GenLetter>,
}

impl GenWord {
    pub fn new(letters: Vec<GenLetter>) -> GenWord {
        GenWord { letters }
    }

    pub fn empty() -> GenWord {
        GenWord { letters: Vec::new() }
    }

    pub fn letters(&self) -> &[GenLetter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Multiply the letters out, left to right. Runs of `T`/`T^-1` are
    /// applied in one step each, so huge powers of `T` stay cheap.
    pub fn eval(&self) -> Mat2 {
        let mut m = Mat2::identity();
        let mut i = 0;
        while i < self.letters.len() {
            let l = self.letters[i];
            match l {
                GenLetter::S => {
                    // M * S = [[b, -a], [d, -c]].
                    m = Mat2::new_unchecked(
                        m.b.clone(),
                        -&m.a,
                        m.d.clone(),
                        -&m.c,
                    );
                    i += 1;
                }
                GenLetter::T | GenLetter::TInv => {
                    let mut run = 0i64;
                    while i < self.letters.len() && self.letters[i] == l {
                        run += 1;
                        i += 1;
                    }
                    let k = if l == GenLetter::T { BigInt::from(run) } else { BigInt::from(-run) };
                    // M * T^k = [[a, a k + b], [c, c k + d]].
                    m = Mat2::new_unchecked(
                        m.a.clone(),
                        &m.a * &k + &m.b,
                        m.c.clone(),
                        &m.c * &k + &m.d,
                    );
                }
            }
        }
        m
    }
}

impl fmt::Display for GenWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "ε");
        }
        let mut parts: Vec<String> = Vec::new();
        let mut i = 0;
        while i < self.letters.len() {
            let l = self.letters[i];
            let mut run = 0usize;
            while i < self.letters.len() && self.letters[i] == l {
                run += 1;
                i += 1;
            }
            match (l, run) {
                (GenLetter::S, n) => {
                    for _ in 0..n {
                        parts.push("S".to_string());
                    }
                }
                (GenLetter::T, 1) => parts.push("T".to_string()),
                (GenLetter::T, n) => parts.push(format!("T^{n}")),
                (GenLetter::TInv, 1) => parts.push("T^-1".to_string()),
                (GenLetter::TInv, n) => parts.push(format!("T^-{n}")),
            }
        }
        write!(f, "{}", parts.join(" "))
    }
}

fn push_t_power(letters: &mut Vec<GenLetter>, q: &BigInt) {
    let n = q.abs().to_u64().expect("run length fits in u64");
    let letter = if q.is_negative() { GenLetter::TInv } else { GenLetter::T };
    for _ in 0..n {
        letters.push(letter);
    }
}

/// Write `M` as a word in `S`, `T`, `T^-1` evaluating to `M` exactly (not
/// just up to sign). Euclidean reduction on the bottom row: right-multiply
/// by `T^q` with `q` minimizing `|d + q c|` (ties resolved toward the floor
/// quotient), then by `S` to swap the roles of `c` and `d`; once `c = 0` the
/// remaining `±T^b` is cleared, and a trailing `S S` (`= -I`) fixes the sign
/// if needed.
pub fn decompose_st(m: &Mat2) -> GenWord {
    enum Applied {
        TPow(BigInt),
        S,
    }
    let mut n = m.clone();
    let mut applied: Vec<Applied> = Vec::new();
    while !n.c.is_zero() {
        // Pick q with |d + q c| minimal.
        let qf = (-&n.d).div_floor(&n.c);
        let qc = &qf + 1i64;
        let r0 = (&n.d + &qf * &n.c).abs();
        let r1 = (&n.d + &qc * &n.c).abs();
        let q = if r1 < r0 { qc } else { qf };
        if !q.is_zero() {
            n = Mat2::new_unchecked(
                n.a.clone(),
                &n.a * &q + &n.b,
                n.c.clone(),
                &n.c * &q + &n.d,
            );
            applied.push(Applied::TPow(q));
        }
        // N * S swaps the bottom row to (d, -c).
        n = Mat2::new_unchecked(n.b.clone(), -&n.a, n.d.clone(), -&n.c);
        applied.push(Applied::S);
    }
    // Now n = [[e, b], [0, e]] with e = ±1; clear b with T^(-e b).
    let q = -(&n.a * &n.b);
    if !q.is_zero() {
        applied.push(Applied::TPow(q));
    }
    // M * (applied product) = ±I, so M = ± (applied product)^-1: reverse and
    // invert, writing S^-1 as S (correct up to sign, fixed below).
    let mut letters: Vec<GenLetter> = Vec::new();
    for op in applied.iter().rev() {
        match op {
            Applied::TPow(q) => push_t_power(&mut letters, &(-q)),
            Applied::S => letters.push(GenLetter::S),
        }
    }
    let word = GenWord::new(letters);
    let val = word.eval();
    if &val == m {
        return word;
    }
    let mut letters = word.letters;
    letters.push(GenLetter::S);
    letters.push(GenLetter::S);
    let word = GenWord::new(letters);
    debug_assert_eq!(word.eval(), *m, "decomposition failed to reproduce the matrix");
    word
}

fn modular_free_product() -> &'static FreeProduct {
    static FP: OnceLock<FreeProduct> = OnceLock::new();
    FP.get_or_init(|| {
        let (g1, g2) = hecke_group(3).expect("q = 3 is valid");
        FreeProduct::new(g1, g2)
    })
}

/// The free product `Z/2 * Z/3` that `PSL2(Z)` is identified with
/// (`s` the image of `S`, `r` the image of `S T`).
pub fn psl2_free_product() -> FreeProduct {
    modular_free_product().clone()
}

/// Image of `M` in `Z/2 * Z/3` under `S -> s`, `T -> s r`, `T^-1 -> r^2 s`,
/// in normal form. Well defined on `PSL2(Z)`.
pub fn to_free_product_word(m: &Mat2) -> FPWord {
    let fp = modular_free_product();
    let word = decompose_st(m);
    let s = FPLetter { factor: Factor::One, elem: 1 };
    let r = FPLetter { factor: Factor::Two, elem: 1 };
    let r2 = FPLetter { factor: Factor::Two, elem: 2 };
    let mut raw: Vec<FPLetter> = Vec::with_capacity(2 * word.len());
    for &l in word.letters() {
        match l {
            GenLetter::S => raw.push(s),
            GenLetter::T => {
                raw.push(s);
                raw.push(r);
            }
            GenLetter::TInv => {
                raw.push(r2);
                raw.push(s);
            }
        }
    }
    fp.normalize(&raw).expect("letters are valid by construction")
}

/// Is the image of `M` a commutator in `PSL2(Z)`?
pub fn is_commutator_psl2(m: &Mat2) -> bool {
    let fp = modular_free_product();
    fp.is_commutator(&to_free_product_word(m)).is_some()
}

/// The mod-12 character: for `M = [[a, b], [c, d]]`,
/// `chi(M) = (1 - c^2)(b d + 3 (c - 1) d + c + 3) + c (a + d - 3) mod 12`.
/// It is a homomorphism onto `Z/12`, and `chi(M) = 0` exactly when `M` lies
/// in the commutator subgroup of `SL2(Z)`.
pub fn chi(m: &Mat2) -> u8 {
    let twelve = BigInt::from(12);
    let red = |v: &BigInt| v.mod_floor(&twelve).to_i64().expect("residue fits");
    let (a, b, c, d) = (red(&m.a), red(&m.b), red(&m.c), red(&m.d));
    let val = (1 - c * c) * (b * d + 3 * (c - 1) * d + c + 3) + c * (a + d - 3);
    val.rem_euclid(12) as u8
}

/// Is `M` in the commutator subgroup of `SL2(Z)`? (`chi(M) = 0`.)
pub fn in_commutator_subgroup_sl2(m: &Mat2) -> bool {
    chi(m) == 0
}

/// Is the image of `M` in the commutator subgroup of `PSL2(Z)`?
/// (`chi(M) = 0` or `chi(-M) = 0`.)
pub fn in_commutator_subgroup_psl2(m: &Mat2) -> bool {
    chi(m) == 0 || chi(&m.neg()) == 0
}

/// `x^2 + y^2 + z^2 - x y z - 2`.
pub fn markoff_eval(x: &BigInt, y: &BigInt, z: &BigInt) -> BigInt {
    x * x + y * y + z * z - x * y * z - BigInt::from(2)
}

/// The trace data of a pair: `x = tr A`, `y = tr B`, `z = tr AB`, and
/// `t = tr [A, B]`, which always equals `markoff_eval(x, y, z)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceTriple {
    pub x: BigInt,
    pub y: BigInt,
    pub z: BigInt,
    pub t: BigInt,
}

/// Compute the trace triple of `(A, B)` and verify the trace identity
/// `tr [A, B] = x^2 + y^2 + z^2 - x y z - 2` exactly.
pub fn trace_identity_check(a: &Mat2, b: &Mat2) -> TraceTriple {
    let x = a.trace();
    let y = b.trace();
    let z = a.mul(b).trace();
    let comm = a.mul(b).mul(&a.inverse()).mul(&b.inverse());
    let t = comm.trace();
    assert_eq!(
        markoff_eval(&x, &y, &z),
        t,
        "trace identity violated — matrix arithmetic is broken"
    );
    TraceTriple { x, y, z, t }
}

/// A seeded random word in `S`, `T`, `T^-1` of the given length.
pub fn random_gen_word(rng: &mut impl Rng, len: usize) -> GenWord {
    let letters = (0..len)
        .map(|_| match rng.gen_range(0..3u8) {
            0 => GenLetter::S,
            1 => GenLetter::T,
            _ => GenLetter::TInv,
        })
        .collect();
    GenWord::new(letters)
}

/// Parameters of a Markoff trace scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkoffScanConfig {
    /// Witness words over `S`, `T`, `T^-1` up to this length.
    pub max_word_len: u32,
    /// Keep triples with `|tr [A, B]| <= trace_bound`.
    pub trace_bound: u64,
    /// JSONL output path. A fresh scan truncates it; a resumed scan appends.
    pub out: PathBuf,
}

/// Completion summary of a scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkoffScanSummary {
    pub matrices: u64,
    pub pairs_total: u64,
    pub pairs_skipped: u64,
    pub triples_emitted: u64,
    pub resumed: bool,
}

fn big_to_json(v: &BigInt) -> serde_json::Value {
    match v.to_i64() {
        Some(x) if x.abs() <= (1 << 53) => serde_json::Value::from(x),
        _ => serde_json::Value::from(v.to_string()),
    }
}

fn json_to_big(v: &serde_json::Value) -> Option<BigInt> {
    if let Some(x) = v.as_i64() {
        return Some(BigInt::from(x));
    }
    v.as_str().and_then(|s| s.parse().ok())
}

fn io_err(path: &Path, source: std::io::Error) -> ModularError {
    ModularError::Io { path: path.to_path_buf(), source }
}

/// Scan all ordered pairs of distinct `PSL2(Z)` elements reachable by words
/// of length at most `max_word_len`, and append every new triple
/// `(tr A, tr B, tr AB)` whose commutator trace is within the bound as a
/// JSONL row `{x, y, z, T, witnessA, witnessB}`. Traces are taken from
/// sign-normalized representatives. The scan is deterministic (matrices in
/// first-discovery order over length-then-lexicographic word enumeration,
/// pairs in row-major order) and resumable: progress is persisted to a
/// `<out>.state.json` sidecar, and an interrupted scan picks up at the next
/// unprocessed pair block. One writer at a time; a `<out>.lock` file guards
/// against concurrent scans.
pub fn markoff_scan(config: &MarkoffScanConfig) -> Result<MarkoffScanSummary, ModularError> {
    let state_path = sidecar(&config.out, "state.json");
    let lock_path = sidecar(&config.out, "lock");
    match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(ModularError::ScanState(format!(
                "lock file {} exists; another scan may be running (delete it if not)",
                lock_path.display()
            )));
        }
        Err(e) => return Err(io_err(&lock_path, e)),
    }
    let result = markoff_scan_locked(config, &state_path);
    let _ = fs::remove_file(&lock_path);
    result
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

fn markoff_scan_locked(
    config: &MarkoffScanConfig,
    state_path: &Path,
) -> Result<MarkoffScanSummary, ModularError> {
    // Distinct PSL2 elements in first-discovery order, with their first
    // witness word (enumeration: lengths ascending, letters S < T < T^-1).
    let mut seen_mats: BTreeSet<Mat2> = BTreeSet::new();
    let mut mats: Vec<(Mat2, GenWord)> = Vec::new();
    let mut layer: Vec<GenWord> = vec![GenWord::empty()];
    for len in 0..=config.max_word_len {
        if len > 0 {
            let mut next = Vec::with_capacity(layer.len() * 3);
            for w in &layer {
                for l in [GenLetter::S, GenLetter::T, GenLetter::TInv] {
                    let mut letters = w.letters().to_vec();
                    letters.push(l);
                    next.push(GenWord::new(letters));
                }
            }
            layer = next;
        }
        for w in &layer {
            let m = w.eval().psl2_normalized();
            if seen_mats.insert(m.clone()) {
                mats.push((m, w.clone()));
            }
        }
    }
    let n = mats.len() as u64;
    let pairs_total = n * n;

    // Resume bookkeeping.
    let mut pairs_done: u64 = 0;
    let mut resumed = false;
    if state_path.exists() {
        let text = fs::read_to_string(state_path).map_err(|e| io_err(state_path, e))?;
        let state: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ModularError::ScanState(format!("unreadable state file: {e}")))?;
        let want_len = state.get("max_word_len").and_then(|v| v.as_u64());
        let want_bound = state.get("trace_bound").and_then(|v| v.as_u64());
        if want_len != Some(config.max_word_len as u64)
            || want_bound != Some(config.trace_bound)
        {
            return Err(ModularError::ScanState(format!(
                "state file {} was written for different parameters; \
                 remove it (and the output) to start over",
                state_path.display()
            )));
        }
        pairs_done = state.get("pairs_done").and_then(|v| v.as_u64()).unwrap_or(0);
        resumed = true;
    }

    // Seed the dedup set from rows already emitted (resume), or truncate.
    let mut seen_triples: BTreeSet<(BigInt, BigInt, BigInt, BigInt)> = BTreeSet::new();
    if resumed && config.out.exists() {
        let file = fs::File::open(&config.out).map_err(|e| io_err(&config.out, e))?;
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| io_err(&config.out, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: serde_json::Value = serde_json::from_str(&line).map_err(|e| {
                ModularError::ScanOutput {
                    path: config.out.clone(),
                    message: format!("corrupt row: {e}"),
                }
            })?;
            let get = |k: &str| row.get(k).and_then(json_to_big);
            match (get("x"), get("y"), get("z"), get("T")) {
                (Some(x), Some(y), Some(z), Some(t)) => {
                    seen_triples.insert((x, y, z, t));
                }
                _ => {
                    return Err(ModularError::ScanOutput {
                        path: config.out.clone(),
                        message: "row missing x/y/z/T".to_string(),
                    })
                }
            }
        }
    } else {
        pairs_done = 0;
        resumed = false;
    }
    let mut out = fs::OpenOptions::new()
        .create(true)
        .append(resumed)
        .truncate(!resumed)
        .write(true)
        .open(&config.out)
        .map_err(|e| io_err(&config.out, e))?;

    let bound = BigInt::from(config.trace_bound);
    let pairs_skipped = pairs_done;
    let mut triples_emitted = 0u64;
    // Process remaining pairs in deterministic row-major order, one A-row at
    // a time; rows are computed in parallel over B but merged in order.
    while pairs_done < pairs_total {
        let i = (pairs_done / n) as usize;
        let j_start = (pairs_done % n) as usize;
        let (a, wa) = &mats[i];
        let row: Vec<(BigInt, BigInt, BigInt, BigInt)> = mats[j_start..]
            .par_iter()
            .map(|(b, _)| {
                let x = a.trace();
                let y = b.trace();
                let z = a.mul(b).trace();
                let t = markoff_eval(&x, &y, &z);
                (x, y, z, t)
            })
            .collect();
        for (offset, (x, y, z, t)) in row.into_iter().enumerate() {
            if t.abs() <= bound && seen_triples.insert((x.clone(), y.clone(), z.clone(), t.clone()))
            {
                let wb = &mats[j_start + offset].1;
                let row = serde_json::json!({
                    "x": big_to_json(&x),
                    "y": big_to_json(&y),
                    "z": big_to_json(&z),
                    "T": big_to_json(&t),
                    "witnessA": wa.to_string(),
                    "witnessB": wb.to_string(),
                });
                writeln!(out, "{row}").map_err(|e| io_err(&config.out, e))?;
                triples_emitted += 1;
            }
        }
        pairs_done += (n as usize - j_start) as u64;
        write_scan_state(state_path, config, pairs_done)?;
    }
    out.flush().map_err(|e| io_err(&config.out, e))?;
    write_scan_state(state_path, config, pairs_done)?;
    Ok(MarkoffScanSummary {
        matrices: n,
        pairs_total,
        pairs_skipped,
        triples_emitted,
        resumed,
    })
}

fn write_scan_state(
    state_path: &Path,
    config: &MarkoffScanConfig,
    pairs_done: u64,
) -> Result<(), ModularError> {
    let state = serde_json::json!({
        "max_word_len": config.max_word_len,
        "trace_bound": config.trace_bound,
        "pairs_done": pairs_done,
    });
    let tmp = state_path.with_extension("json.tmp");
    fs::write(&tmp, format!("{state}\n")).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, state_path).map_err(|e| io_err(state_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generator_relations() {
        let s = Mat2::s();
        let t = Mat2::t();
        let neg_i = Mat2::identity().neg();
        assert_eq!(s.mul(&s), neg_i);
        let r = Mat2::r();
        assert_eq!(r.mul(&r).mul(&r), neg_i);
        assert_eq!(s.mul(&s.inverse()), Mat2::identity());
        assert_eq!(t.mul(&t.inverse()), Mat2::identity());
        assert!(Mat2::from_i64(1, 2, 3, 4).is_err());
    }

    #[test]
    fn eval_handles_runs() {
        let w = GenWord::new(vec![GenLetter::T; 5]);
        assert_eq!(w.eval(), Mat2::from_i64(1, 5, 0, 1).unwrap());
        let w = GenWord::new(vec![GenLetter::TInv; 3]);
        assert_eq!(w.eval(), Mat2::from_i64(1, -3, 0, 1).unwrap());
        let w = GenWord::new(vec![GenLetter::S, GenLetter::T, GenLetter::S]);
        assert_eq!(w.eval(), Mat2::s().mul(&Mat2::t()).mul(&Mat2::s()));
        assert_eq!(GenWord::empty().eval(), Mat2::identity());
    }

    #[test]
    fn display_compresses_runs() {
        let w = GenWord::new(vec![
            GenLetter::S,
            GenLetter::T,
            GenLetter::T,
            GenLetter::T,
            GenLetter::S,
            GenLetter::TInv,
            GenLetter::TInv,
        ]);
        assert_eq!(w.to_string(), "S T^3 S T^-2");
        assert_eq!(GenWord::empty().to_string(), "ε");
    }

    #[test]
    fn decompose_frozen_cases() {
        for m in [
            Mat2::identity(),
            Mat2::identity().neg(),
            Mat2::s(),
            Mat2::t(),
            Mat2::t().inverse(),
            Mat2::t().mul(&Mat2::t()),
            Mat2::r(),
            Mat2::from_i64(2, 1, 1, 1).unwrap(),
            Mat2::from_i64(17, 12, 24, 17).unwrap(),
        ] {
            let w = decompose_st(&m);
            assert_eq!(w.eval(), m, "decomposition of {m}");
        }
        // T^2 decomposes to exactly two T letters.
        let w = decompose_st(&Mat2::t().mul(&Mat2::t()));
        assert_eq!(w.letters(), &[GenLetter::T, GenLetter::T]);
    }

    #[test]
    fn decompose_round_trips_random_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let len = rng.gen_range(0..=30);
            let w = random_gen_word(&mut rng, len);
            let m = w.eval();
            let back = decompose_st(&m);
            assert_eq!(back.eval(), m, "word {w}");
        }
    }

    #[test]
    fn free_product_bridge() {
        let fp = psl2_free_product();
        // T^2 maps to the normal form s r s r.
        let word = to_free_product_word(&Mat2::t().mul(&Mat2::t()));
        let expect = fp.normalize(&fp.parse_letters("s.r.s.r").unwrap()).unwrap();
        assert_eq!(word, expect);
        // S maps to s, and the identity to the empty word.
        let word = to_free_product_word(&Mat2::s());
        assert_eq!(fp.render(&word), "s");
        assert!(to_free_product_word(&Mat2::identity()).is_empty());
        // -I maps to the empty word too (the bridge lives on PSL2).
        assert!(to_free_product_word(&Mat2::identity().neg()).is_empty());
    }

    #[test]
    fn bridge_is_a_homomorphism_up_to_sign() {
        let fp = psl2_free_product();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let len_wa = rng.gen_range(0..=10);
            let wa = random_gen_word(&mut rng, len_wa);
            let len_wb = rng.gen_range(0..=10);
            let wb = random_gen_word(&mut rng, len_wb);
            let (ma, mb) = (wa.eval(), wb.eval());
            let lhs = to_free_product_word(&ma.mul(&mb));
            let rhs = fp.concat(&to_free_product_word(&ma), &to_free_product_word(&mb));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn chi_frozen_values() {
        assert_eq!(chi(&Mat2::identity()), 0);
        assert_eq!(chi(&Mat2::t()), 1);
        assert_eq!(chi(&Mat2::s()), 9);
        // chi(T^k) = k mod 12.
        let mut m = Mat2::identity();
        for k in 0..24u8 {
            assert_eq!(chi(&m), k % 12);
            m = m.mul(&Mat2::t());
        }
    }

    #[test]
    fn chi_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let len_a = rng.gen_range(0..=12);
            let a = random_gen_word(&mut rng, len_a).eval();
            let len_b = rng.gen_range(0..=12);
            let b = random_gen_word(&mut rng, len_b).eval();
            assert_eq!(chi(&a.mul(&b)), (chi(&a) + chi(&b)) % 12);
        }
    }

    #[test]
    fn chi_detects_commutator_subgroup_via_abelianization() {
        let fp = psl2_free_product();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let len_m = rng.gen_range(0..=10);
            let m = random_gen_word(&mut rng, len_m).eval();
            let in_sub = in_commutator_subgroup_psl2(&m);
            let ab_trivial = fp.has_trivial_abelianization(&to_free_product_word(&m));
            assert_eq!(in_sub, ab_trivial, "matrix {m}");
        }
        // Commutators of random matrices always land in the subgroup.
        for _ in 0..100 {
            let len_a = rng.gen_range(0..=8);
            let a = random_gen_word(&mut rng, len_a).eval();
            let len_b = rng.gen_range(0..=8);
            let b = random_gen_word(&mut rng, len_b).eval();
            let c = a.mul(&b).mul(&a.inverse()).mul(&b.inverse());
            assert!(in_commutator_subgroup_sl2(&c));
            assert!(is_commutator_psl2(&c));
        }
    }

    #[test]
    fn commutator_decision_examples() {
        // T is not in the commutator subgroup, let alone a commutator.
        assert!(!in_commutator_subgroup_psl2(&Mat2::t()));
        assert!(!is_commutator_psl2(&Mat2::t()));
        // The identity is a commutator.
        assert!(is_commutator_psl2(&Mat2::identity()));
        // [T, S T^-1 S] is a commutator by construction.
        let a = Mat2::t();
        let b = Mat2::s().mul(&Mat2::t().inverse()).mul(&Mat2::s());
        let c = a.mul(&b).mul(&a.inverse()).mul(&b.inverse());
        assert!(is_commutator_psl2(&c));
    }

    #[test]
    fn trace_identity_frozen_values() {
        let t = Mat2::t();
        let tt = Mat2::from_i64(1, 0, 1, 1).unwrap();
        let triple = trace_identity_check(&t, &tt);
        assert_eq!(triple.x, BigInt::from(2));
        assert_eq!(triple.y, BigInt::from(2));
        assert_eq!(triple.z, BigInt::from(3));
        assert_eq!(triple.t, BigInt::from(3));
        let triple = trace_identity_check(&Mat2::s(), &Mat2::t());
        assert_eq!(triple.x, BigInt::from(0));
        assert_eq!(triple.y, BigInt::from(2));
        assert_eq!(triple.z, BigInt::from(1));
        assert_eq!(triple.t, BigInt::from(3));
    }

    #[test]
    fn trace_identity_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let len_a = rng.gen_range(0..=15);
            let a = random_gen_word(&mut rng, len_a).eval();
            let len_b = rng.gen_range(0..=15);
            let b = random_gen_word(&mut rng, len_b).eval();
            // The call itself asserts the identity.
            let triple = trace_identity_check(&a, &b);
            assert_eq!(markoff_eval(&triple.x, &triple.y, &triple.z), triple.t);
        }
    }

    #[test]
    fn markoff_eval_frozen_values() {
        let v = |x: i64, y: i64, z: i64| {
            markoff_eval(&BigInt::from(x), &BigInt::from(y), &BigInt::from(z))
        };
        assert_eq!(v(0, 0, 0), BigInt::from(-2));
        assert_eq!(v(3, 3, 3), BigInt::from(-2));
        assert_eq!(v(2, 2, 3), BigInt::from(3));
    }

    #[test]
    fn psl2_normalization() {
        let m = Mat2::from_i64(-1, 0, -1, -1).unwrap();
        assert_eq!(m.psl2_normalized(), Mat2::from_i64(1, 0, 1, 1).unwrap());
        assert!(m.psl2_eq(&Mat2::from_i64(1, 0, 1, 1).unwrap()));
        // First nonzero may sit past leading zeros.
        let m = Mat2::from_i64(0, -1, 1, 0).unwrap();
        assert_eq!(m.psl2_normalized(), Mat2::from_i64(0, 1, -1, 0).unwrap());
    }

    #[test]
    fn matrix_parse() {
        let m = Mat2::parse("2 1 1 1").unwrap();
        assert_eq!(m, Mat2::from_i64(2, 1, 1, 1).unwrap());
        assert!(Mat2::parse("1 0 0").is_err());
        assert!(Mat2::parse("2 0 0 2").is_err());
        assert!(Mat2::parse("a b c d").is_err());
    }

    #[test]
    fn markoff_scan_finds_the_base_triple() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("scan.jsonl");
        let config =
            MarkoffScanConfig { max_word_len: 3, trace_bound: 10, out: out.clone() };
        let summary = markoff_scan(&config).unwrap();
        assert!(!summary.resumed);
        assert!(summary.triples_emitted > 0);
        let text = fs::read_to_string(&out).unwrap();
        let mut found = false;
        for line in text.lines() {
            let row: serde_json::Value = serde_json::from_str(line).unwrap();
            if row["x"] == serde_json::json!(2)
                && row["y"] == serde_json::json!(2)
                && row["z"] == serde_json::json!(3)
            {
                assert_eq!(row["T"], serde_json::json!(3));
                found = true;
            }
        }
        assert!(found, "triple (2, 2, 3) missing from:\n{text}");
        // Re-running with the same parameters resumes and adds nothing.
        let summary2 = markoff_scan(&config).unwrap();
        assert!(summary2.resumed);
        assert_eq!(summary2.triples_emitted, 0);
        assert_eq!(fs::read_to_string(&out).unwrap(), text);
        // Different parameters against the same state file are refused.
        let bad = MarkoffScanConfig { max_word_len: 4, trace_bound: 10, out: out.clone() };
        assert!(matches!(markoff_scan(&bad), Err(ModularError::ScanState(_))));
    }

    #[test]
    fn markoff_scan_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a.jsonl");
        let out2 = dir.path().join("b.jsonl");
        for out in [&out1, &out2] {
            let config =
                MarkoffScanConfig { max_word_len: 3, trace_bound: 6, out: out.clone() };
            markoff_scan(&config).unwrap();
        }
        assert_eq!(
            fs::read_to_string(&out1).unwrap(),
            fs::read_to_string(&out2).unwrap()
        );
    }

    #[test]
    fn markoff_scan_lock_guards_concurrent_runs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("scan.jsonl");
        let lock = dir.path().join("scan.jsonl.lock");
        fs::write(&lock, "").unwrap();
        let config = MarkoffScanConfig { max_word_len: 2, trace_bound: 5, out };
        assert!(matches!(markoff_scan(&config), Err(ModularError::ScanState(_))));
    }
}
