//! Verification harness: runs the named checks, collects typed records,
//! and renders deterministic JSON/CSV reports. Reports are byte-identical
//! across thread counts: records are produced in a fixed order, ratios are
//! emitted as fixed six-decimal strings, statuses are decided by exact
//! integer/rational comparisons (or by comparisons of the already-rounded
//! decimal strings where the quantity is inherently floating point), and
//! wall-clock times go only to the append-only log, never into reports.

use crate::commfree::{count_commutator_classes_free, CommutatorError};
use crate::counting::{
    ck, classes_trivial_ab, classes_trivial_ab_breakdown, rivin_ct, rivin_numeric_check,
    sharp_asymptotic, CountingError,
};
use crate::freeprod::{
    count_closed_paths_complete, count_trivial_product_words, hecke_group, FreeProduct,
    GroupError,
};
use crate::freewords::{count_endpoint_pairs, for_each_reduced, Letter, WordError};
use crate::modular::{
    chi, decompose_st, in_commutator_subgroup_psl2, psl2_free_product, random_gen_word,
    to_free_product_word, trace_identity_check, ModularError,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as IoWrite;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown verification id {0:?}")]
    UnknownTheorem(String),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error(transparent)]
    Commutator(#[from] CommutatorError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Output format for reports and series tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Global run options shared by the command-line surface.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, threads: None, out: None, format: ReportFormat::Json }
    }
}

/// Install the global worker pool. Call once, before any parallel work.
pub fn configure_threads(threads: Option<usize>) -> Result<(), HarnessError> {
    let Some(n) = threads else { return Ok(()) };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Threads(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Flag,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Flag => write!(f, "flag"),
        }
    }
}

/// One verification row. `ratio` is pre-rounded to six decimals so that
/// emitted reports never depend on runtime float formatting choices;
/// `wall_ms` is captured for the log only and is excluded from reports.
#[derive(Clone, Debug)]
pub struct VerificationRecord {
    pub theorem: String,
    pub k: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub exact: String,
    pub formula: String,
    pub ratio: Option<String>,
    pub status: Status,
    pub note: String,
    pub wall_ms: u128,
}

fn ratio6(x: f64) -> String {
    format!("{x:.6}")
}

fn rational_ratio6(exact: &BigInt, main: &BigRational) -> Option<String> {
    if main.is_zero() {
        return None;
    }
    (BigRational::from(exact.clone()) / main).to_f64().map(ratio6)
}

fn inputs_of(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Exact deviation `|exact/main - 1|` as a rational; `None` for a zero main
/// term.
fn exact_deviation(exact: &BigInt, main: &BigRational) -> Option<BigRational> {
    if main.is_zero() {
        return None;
    }
    Some((BigRational::from(exact.clone()) / main - BigRational::one()).abs())
}

/// Parse a six-decimal string into exact millionths, for status decisions on
/// already-rounded values.
fn micro_units(s: &str) -> Option<i64> {
    let neg = s.starts_with('-');
    let s = s.trim_start_matches('-');
    let (int, frac) = s.split_once('.')?;
    if frac.len() != 6 {
        return None;
    }
    let v = int.parse::<i64>().ok()? * 1_000_000 + frac.parse::<i64>().ok()?;
    Some(if neg { -v } else { v })
}

/// The supported verification ids, in report order.
pub const THEOREM_IDS: [&str; 9] = [
    "T1.1",
    "six-average",
    "T1.3",
    "Lemma2.1",
    "Eq1",
    "paths",
    "sharp",
    "rivin-ct",
    "chi",
];

/// Tunable inputs for the drivers; every field has a sensible default.
#[derive(Clone, Debug)]
pub struct VerifyParams {
    /// Free-group rank for the free checks.
    pub rank: u8,
    /// Override the length list where a driver sweeps lengths.
    pub ks: Option<Vec<u64>>,
    /// Upper bound for small-`n` sweeps (endpoint counts, walk counts).
    pub max_n: u64,
    /// Sample count for the seeded matrix sweeps.
    pub samples: u64,
    /// Seed for the seeded matrix sweeps.
    pub seed: u64,
    /// Second-factor order for the free-product checks (`Z/2 * Z/q`).
    pub q: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams { rank: 2, ks: None, max_n: 10, samples: 1000, seed: 0, q: 3 }
    }
}

/// Run one named verification.
pub fn run_verification(
    id: &str,
    params: &VerifyParams,
) -> Result<Vec<VerificationRecord>, HarnessError> {
    match id {
        "T1.1" => verify_free_main_term(params),
        "six-average" => verify_six_average(params),
        "T1.3" => verify_fp_main_term(params),
        "Lemma2.1" => verify_endpoint_counts(params),
        "Eq1" => verify_class_count_orders(params),
        "paths" => verify_paths(params),
        "sharp" => verify_sharp(params),
        "rivin-ct" => verify_rivin_ct(params),
        "chi" => verify_chi(params),
        other => Err(HarnessError::UnknownTheorem(other.to_string())),
    }
}

/// Run every verification in report order.
pub fn run_all(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let mut out = Vec::new();
    for id in THEOREM_IDS {
        out.extend(run_verification(id, params)?);
    }
    Ok(out)
}

fn verify_free_main_term(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = params.rank;
    let ks = params.ks.clone().unwrap_or_else(|| vec![4, 8, 12, 16, 20]);
    let mut records = Vec::new();
    let mut deviations: Vec<(u64, BigRational)> = Vec::new();
    for &k in &ks {
        let start = Instant::now();
        let report = count_commutator_classes_free(r, k)?;
        let dev = exact_deviation(&report.exact_count, &report.main_term);
        records.push(VerificationRecord {
            theorem: "T1.1".into(),
            k: Some(k),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: report.exact_count.to_string(),
            formula: report.main_term.to_string(),
            ratio: rational_ratio6(&report.exact_count, &report.main_term),
            status: Status::Pass,
            note: String::new(),
            wall_ms: start.elapsed().as_millis(),
        });
        if let Some(d) = dev {
            deviations.push((k, d));
        }
    }
    // Trend: |exact/main - 1| strictly decreasing along the sweep, decided on
    // exact rationals.
    let monotone = deviations.windows(2).all(|w| w[1].1 < w[0].1);
    let status = if monotone && deviations.len() >= 2 { Status::Pass } else { Status::Flag };
    records.push(VerificationRecord {
        theorem: "T1.1".into(),
        k: ks.last().copied(),
        inputs: inputs_of(&[("r", r.to_string()), ("check", "trend".into())]),
        exact: deviations
            .iter()
            .map(|(k, d)| format!("k={k}:{}", ratio6(d.to_f64().unwrap_or(f64::NAN))))
            .collect::<Vec<_>>()
            .join(" "),
        formula: "strictly decreasing".into(),
        ratio: None,
        status,
        note: "deviation |exact/main - 1| along the length sweep".into(),
        wall_ms: 0,
    });
    Ok(records)
}

fn verify_six_average(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = params.rank;
    let ks = params.ks.clone().unwrap_or_else(|| vec![4, 8, 12, 16, 20]);
    let mut records = Vec::new();
    let mut averages: Vec<(u64, BigRational)> = Vec::new();
    for &k in &ks {
        let start = Instant::now();
        let report = count_commutator_classes_free(r, k)?;
        let avg = if report.exact_count.is_zero() {
            None
        } else {
            Some(BigRational::new(report.wicks_word_count.clone(), report.exact_count.clone()))
        };
        records.push(VerificationRecord {
            theorem: "six-average".into(),
            k: Some(k),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: report.wicks_word_count.to_string(),
            formula: report.exact_count.to_string(),
            ratio: avg.as_ref().and_then(|a| a.to_f64()).map(ratio6),
            status: Status::Pass,
            note: "shape words per conjugacy class".into(),
            wall_ms: start.elapsed().as_millis(),
        });
        if let Some(a) = avg {
            averages.push((k, a));
        }
    }
    // The check as stated: exactly 4 at k = 4, then monotonically increasing
    // toward 6 along the sweep. Empirically the average overshoots 6 near
    // k = 8 and approaches 6 from above, so the monotone part flags; the row
    // reports what was measured.
    let four_ok = averages
        .iter()
        .find(|(k, _)| *k == 4)
        .map(|(_, a)| *a == BigRational::from(BigInt::from(4)))
        .unwrap_or(true);
    let increasing = averages.windows(2).all(|w| w[1].1 > w[0].1);
    let status = if four_ok && increasing { Status::Pass } else { Status::Flag };
    records.push(VerificationRecord {
        theorem: "six-average".into(),
        k: ks.last().copied(),
        inputs: inputs_of(&[("r", r.to_string()), ("check", "trend".into())]),
        exact: averages
            .iter()
            .map(|(k, a)| format!("k={k}:{}", ratio6(a.to_f64().unwrap_or(f64::NAN))))
            .collect::<Vec<_>>()
            .join(" "),
        formula: "4 at k=4, then monotonically increasing".into(),
        ratio: None,
        status,
        note: "average multiplicity of shape words per class, tracking six".into(),
        wall_ms: 0,
    });
    Ok(records)
}

fn verify_fp_main_term(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let (g1, g2) = hecke_group(params.q)?;
    let fp = FreeProduct::new(g1, g2);
    let ks = params
        .ks
        .clone()
        .unwrap_or_else(|| vec![4, 8, 12, 16, 20, 24]);
    let mut records = Vec::new();
    let mut deviations: Vec<(u64, BigRational)> = Vec::new();
    for &k in &ks {
        let start = Instant::now();
        let report = crate::freeprod::count_commutator_classes_fp(&fp, k)?;
        let dev = exact_deviation(&report.exact_count, &report.main_term);
        let mut status = Status::Pass;
        let mut note = format!(
            "shape census [{}]",
            report
                .per_form_counts
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{}:{}", i + 1, c))
                .collect::<Vec<_>>()
                .join(" ")
        );
        if k == 4 && params.q == 3 && report.exact_count != BigInt::one() {
            status = Status::Flag;
            note = format!("expected exactly one class at k=4, got {}", report.exact_count);
        }
        records.push(VerificationRecord {
            theorem: "T1.3".into(),
            k: Some(k),
            inputs: inputs_of(&[("q", params.q.to_string())]),
            exact: report.exact_count.to_string(),
            formula: report.main_term.to_string(),
            ratio: rational_ratio6(&report.exact_count, &report.main_term),
            status,
            note,
            wall_ms: start.elapsed().as_millis(),
        });
        if let Some(d) = dev {
            if k >= 12 {
                deviations.push((k, d));
            }
        }
    }
    let monotone = deviations.windows(2).all(|w| w[1].1 < w[0].1);
    let status = if monotone { Status::Pass } else { Status::Flag };
    records.push(VerificationRecord {
        theorem: "T1.3".into(),
        k: ks.last().copied(),
        inputs: inputs_of(&[("q", params.q.to_string()), ("check", "trend".into())]),
        exact: deviations
            .iter()
            .map(|(k, d)| format!("k={k}:{}", ratio6(d.to_f64().unwrap_or(f64::NAN))))
            .collect::<Vec<_>>()
            .join(" "),
        formula: "decreasing for k >= 12".into(),
        ratio: None,
        status,
        note: "deviation |exact/main - 1| along the length sweep".into(),
        wall_ms: 0,
    });
    Ok(records)
}

fn verify_endpoint_counts(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = params.rank;
    let mut records = Vec::new();
    for n in 2..=params.max_n {
        let start = Instant::now();
        // Enumerate reduced words and bucket by (first, last) letter.
        let mut buckets: BTreeMap<(u8, u8), BigInt> = BTreeMap::new();
        for_each_reduced(r, n, |letters| {
            let key = (letters[0].code(), letters[letters.len() - 1].code());
            *buckets.entry(key).or_default() += 1;
        });
        let mut all_match = true;
        let mut total_enum = BigInt::zero();
        let mut total_formula = BigInt::zero();
        for s1 in Letter::alphabet(r) {
            for s2 in Letter::alphabet(r) {
                let formula = count_endpoint_pairs(r, n, s1, s2)?;
                let enumerated =
                    buckets.get(&(s1.code(), s2.code())).cloned().unwrap_or_default();
                if formula != enumerated {
                    all_match = false;
                }
                total_enum += enumerated;
                total_formula += formula;
            }
        }
        records.push(VerificationRecord {
            theorem: "Lemma2.1".into(),
            k: Some(n),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: total_enum.to_string(),
            formula: total_formula.to_string(),
            ratio: if all_match { Some(ratio6(1.0)) } else { None },
            status: if all_match && total_enum == total_formula {
                Status::Pass
            } else {
                Status::Flag
            },
            note: format!("all {} endpoint pairs compared exactly", 4 * (r as u64) * (r as u64)),
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(records)
}

fn verify_class_count_orders(
    params: &VerifyParams,
) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = params.rank;
    let ks = params.ks.clone().unwrap_or_else(|| (1..=20).collect());
    let mut records = Vec::new();
    for &k in &ks {
        let start = Instant::now();
        let (via_prim, via_tot) = classes_trivial_ab_breakdown(r, k)?;
        let agree = via_prim == via_tot && via_prim.is_integer();
        let mut note = "primitive/Mobius order vs totient order".to_string();
        if k == 4 && r == 2 {
            let frozen_ok = via_prim == BigRational::from(BigInt::from(2));
            if !frozen_ok {
                note = format!("expected 2 classes at k=4, got {via_prim}");
            }
        }
        records.push(VerificationRecord {
            theorem: "Eq1".into(),
            k: Some(k),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: via_prim.to_string(),
            formula: via_tot.to_string(),
            ratio: if agree { Some(ratio6(1.0)) } else { None },
            status: if agree { Status::Pass } else { Status::Flag },
            note,
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(records)
}

/// Trace and a fixed diagonal entry of the `n`-th power of the adjacency
/// matrix of the complete graph `K_m` (all ones off the diagonal).
fn walk_counts_by_matrix_power(m: usize, n: u64) -> (BigInt, BigInt) {
    let size = m;
    let mut acc: Vec<Vec<BigInt>> = (0..size)
        .map(|i| (0..size).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let adj: Vec<Vec<BigInt>> = (0..size)
        .map(|i| (0..size).map(|j| if i == j { BigInt::zero() } else { BigInt::one() }).collect())
        .collect();
    for _ in 0..n {
        let mut next = vec![vec![BigInt::zero(); size]; size];
        for (i, row) in next.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut sum = BigInt::zero();
                for l in 0..size {
                    sum += &acc[i][l] * &adj[l][j];
                }
                *cell = sum;
            }
        }
        acc = next;
    }
    let trace = (0..size).fold(BigInt::zero(), |s, i| s + &acc[i][i]);
    let based = acc[0][0].clone();
    (trace, based)
}

fn verify_paths(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let mut records = Vec::new();
    // Eigenvalue formula vs matrix powers.
    for m in 2u64..=5 {
        for n in 1..=params.max_n {
            let start = Instant::now();
            let (trace, based) = walk_counts_by_matrix_power(m as usize, n);
            let total = count_closed_paths_complete(m, n, false)?;
            let based_formula = count_closed_paths_complete(m, n, true)?;
            let ok = trace == total && based == based_formula;
            records.push(VerificationRecord {
                theorem: "paths".into(),
                k: Some(n),
                inputs: inputs_of(&[("m", m.to_string())]),
                exact: format!("{trace}/{based}"),
                formula: format!("{total}/{based_formula}"),
                ratio: if ok { Some(ratio6(1.0)) } else { None },
                status: if ok { Status::Pass } else { Status::Flag },
                note: "matrix-power walk counts (total/based)".into(),
                wall_ms: start.elapsed().as_millis(),
            });
        }
    }
    // Trivial-product enumeration vs the claimed closed form.
    for (o1, o2) in [(2u64, 3u64), (2, 4), (3, 3)] {
        let g1 = crate::freeprod::FiniteGroupTable::cyclic(o1, None)?;
        let g2 = crate::freeprod::FiniteGroupTable::cyclic(o2, None)?;
        let fp = FreeProduct::new(g1, g2);
        for k in [4u64, 8, 12] {
            let start = Instant::now();
            let rep = count_trivial_product_words(&fp, k)?;
            let matches_closed_form = rep.enumerated == rep.closed_form;
            let matches_eigen = rep.enumerated == rep.eigenvalue_count;
            let note = if matches_closed_form {
                "enumeration, eigenvalue count, and closed form agree".to_string()
            } else if matches_eigen {
                format!(
                    "enumeration ({}) matches the eigenvalue count; the closed form ({}) \
                     differs and is reported as stated",
                    rep.enumerated, rep.closed_form
                )
            } else {
                "enumeration disagrees with the eigenvalue count".to_string()
            };
            records.push(VerificationRecord {
                theorem: "paths".into(),
                k: Some(k),
                inputs: inputs_of(&[
                    ("g1", o1.to_string()),
                    ("g2", o2.to_string()),
                    ("check", "trivial-product".into()),
                ]),
                exact: rep.enumerated.to_string(),
                formula: rep.closed_form.to_string(),
                ratio: if matches_closed_form { Some(ratio6(1.0)) } else { None },
                status: if matches_closed_form { Status::Pass } else { Status::Flag },
                note,
                wall_ms: start.elapsed().as_millis(),
            });
        }
    }
    Ok(records)
}

fn verify_sharp(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = params.rank;
    let ms: Vec<u64> = params
        .ks
        .clone()
        .unwrap_or_else(|| (2..=12).collect());
    let mut records = Vec::new();
    let mut ratios: Vec<(u64, String)> = Vec::new();
    for &m in &ms {
        let start = Instant::now();
        let exact = ck(r, 2 * m)?;
        let predicted = sharp_asymptotic(r, m)?;
        let ratio = exact.to_f64().map(|e| e / predicted).map(ratio6);
        if let Some(s) = &ratio {
            ratios.push((m, s.clone()));
        }
        records.push(VerificationRecord {
            theorem: "sharp".into(),
            k: Some(m),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: exact.to_string(),
            formula: ratio6(predicted),
            ratio,
            status: Status::Pass,
            note: "c_{2m} against the sharp prediction".into(),
            wall_ms: start.elapsed().as_millis(),
        });
    }
    // Trend on the rounded ratio strings: |ratio - 1| decreasing for m >= 4.
    let deviations: Vec<(u64, i64)> = ratios
        .iter()
        .filter(|(m, _)| *m >= 4)
        .filter_map(|(m, s)| micro_units(s).map(|u| (*m, (u - 1_000_000).abs())))
        .collect();
    let monotone = deviations.windows(2).all(|w| w[1].1 < w[0].1);
    let status = if monotone && deviations.len() >= 2 { Status::Pass } else { Status::Flag };
    records.push(VerificationRecord {
        theorem: "sharp".into(),
        k: ms.last().copied(),
        inputs: inputs_of(&[("r", r.to_string()), ("check", "trend".into())]),
        exact: deviations
            .iter()
            .map(|(m, u)| format!("m={m}:0.{:06}", u))
            .collect::<Vec<_>>()
            .join(" "),
        formula: "decreasing for m >= 4".into(),
        ratio: None,
        status,
        note: "deviation |ratio - 1| on rounded six-decimal ratios".into(),
        wall_ms: 0,
    });
    Ok(records)
}

fn verify_rivin_ct(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let r = if params.rank == 3 { 3 } else { 2 };
    let ks = params.ks.clone().unwrap_or_else(|| (0..=12).collect());
    let mut records = Vec::new();
    for &k in &ks {
        let start = Instant::now();
        let ct = rivin_ct(r, k)?;
        let count = ck(r, k)?;
        let agree = ct == count;
        records.push(VerificationRecord {
            theorem: "rivin-ct".into(),
            k: Some(k),
            inputs: inputs_of(&[("r", r.to_string())]),
            exact: ct.to_string(),
            formula: count.to_string(),
            ratio: None,
            status: if agree { Status::Pass } else { Status::Flag },
            note: if agree {
                "constant term equals the word count".into()
            } else {
                "constant term differs from the word count; the recurrence is \
                 implemented as stated and the discrepancy is reported, not patched"
                    .into()
            },
            wall_ms: start.elapsed().as_millis(),
        });
    }
    // Numeric self-check of the polynomial engine against the Chebyshev
    // closed form.
    for (num, den) in [(1i64, 2i64), (2, 1)] {
        let start = Instant::now();
        let t = BigRational::new(BigInt::from(num), BigInt::from(den));
        let mut worst = 0f64;
        for &k in &ks {
            if k > 12 {
                continue;
            }
            worst = worst.max(rivin_numeric_check(r, k, &t)?);
        }
        let ok = worst < 1e-9;
        records.push(VerificationRecord {
            theorem: "rivin-ct".into(),
            k: None,
            inputs: inputs_of(&[
                ("r", r.to_string()),
                ("check", "chebyshev".into()),
                ("t", format!("{num}/{den}")),
            ]),
            exact: format!("{worst:.3e}"),
            formula: "< 1e-9".into(),
            ratio: None,
            status: if ok { Status::Pass } else { Status::Flag },
            note: "worst relative error of uniform evaluation vs closed form".into(),
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(records)
}

fn verify_chi(params: &VerifyParams) -> Result<Vec<VerificationRecord>, HarnessError> {
    let samples = params.samples;
    let fp = psl2_free_product();
    let mut records = Vec::new();

    // 1. Decomposition round-trips on random words.
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ok = 0u64;
    for _ in 0..samples {
        let len = rng.gen_range(0..=30);
        let m = random_gen_word(&mut rng, len).eval();
        if decompose_st(&m).eval() == m {
            ok += 1;
        }
    }
    records.push(VerificationRecord {
        theorem: "chi".into(),
        k: None,
        inputs: inputs_of(&[("check", "roundtrip".into()), ("seed", params.seed.to_string())]),
        exact: ok.to_string(),
        formula: samples.to_string(),
        ratio: Some(ratio6(1.0)),
        status: if ok == samples { Status::Pass } else { Status::Flag },
        note: "decompose/evaluate round-trips on seeded words".into(),
        wall_ms: start.elapsed().as_millis(),
    });

    // 2. Trace identity on random pairs (the check asserts internally).
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    for _ in 0..samples {
        let (la, lb) = (rng.gen_range(0..=15), rng.gen_range(0..=15));
        let a = random_gen_word(&mut rng, la).eval();
        let b = random_gen_word(&mut rng, lb).eval();
        let _ = trace_identity_check(&a, &b);
    }
    records.push(VerificationRecord {
        theorem: "chi".into(),
        k: None,
        inputs: inputs_of(&[("check", "trace-identity".into()), ("seed", params.seed.to_string())]),
        exact: samples.to_string(),
        formula: samples.to_string(),
        ratio: Some(ratio6(1.0)),
        status: Status::Pass,
        note: "Fricke trace identity verified exactly on seeded pairs".into(),
        wall_ms: start.elapsed().as_millis(),
    });

    // 3. The character is a homomorphism.
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(2));
    let mut ok = 0u64;
    for _ in 0..samples {
        let (la, lb) = (rng.gen_range(0..=12), rng.gen_range(0..=12));
        let a = random_gen_word(&mut rng, la).eval();
        let b = random_gen_word(&mut rng, lb).eval();
        if chi(&a.mul(&b)) == (chi(&a) + chi(&b)) % 12 {
            ok += 1;
        }
    }
    records.push(VerificationRecord {
        theorem: "chi".into(),
        k: None,
        inputs: inputs_of(&[("check", "homomorphism".into()), ("seed", params.seed.to_string())]),
        exact: ok.to_string(),
        formula: samples.to_string(),
        ratio: Some(ratio6(1.0)),
        status: if ok == samples { Status::Pass } else { Status::Flag },
        note: "chi(MN) = chi(M) + chi(N) mod 12".into(),
        wall_ms: start.elapsed().as_millis(),
    });

    // 4. chi cuts out exactly the trivial-abelianization words.
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(3));
    let mut ok = 0u64;
    for _ in 0..samples {
        let lm = rng.gen_range(0..=10);
        let m = random_gen_word(&mut rng, lm).eval();
        let lhs = in_commutator_subgroup_psl2(&m);
        let rhs = fp.has_trivial_abelianization(&to_free_product_word(&m));
        if lhs == rhs {
            ok += 1;
        }
    }
    records.push(VerificationRecord {
        theorem: "chi".into(),
        k: None,
        inputs: inputs_of(&[("check", "abelianization".into()), ("seed", params.seed.to_string())]),
        exact: ok.to_string(),
        formula: samples.to_string(),
        ratio: Some(ratio6(1.0)),
        status: if ok == samples { Status::Pass } else { Status::Flag },
        note: "membership by character agrees with trivial abelianization".into(),
        wall_ms: start.elapsed().as_millis(),
    });
    Ok(records)
}

/// CSV cell for the theorem column: the id plus bracketed non-length inputs,
/// e.g. `T1.1[r=2]` or `paths[check=trivial-product,g1=2,g2=3]`.
fn theorem_cell(record: &VerificationRecord) -> String {
    if record.inputs.is_empty() {
        return record.theorem.clone();
    }
    let inner = record
        .inputs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",");
    format!("{}[{}]", record.theorem, inner)
}

/// Render records as a report. JSON carries all fields except wall time;
/// CSV uses the fixed header `theorem,k,exact,main_term,ratio,status`.
pub fn emit_report(records: &[VerificationRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = records
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "theorem": r.theorem,
                        "k": r.k,
                        "inputs": r.inputs,
                        "exact": r.exact,
                        "formula": r.formula,
                        "ratio": r.ratio,
                        "status": r.status.to_string(),
                        "note": r.note,
                    })
                })
                .collect();
            let doc = serde_json::json!({ "records": rows });
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("theorem,k,exact,main_term,ratio,status\n");
            for r in records {
                let k = r.k.map(|v| v.to_string()).unwrap_or_default();
                let ratio = r.ratio.clone().unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    theorem_cell(r),
                    k,
                    r.exact,
                    r.formula,
                    ratio,
                    r.status
                ));
            }
            s
        }
    }
}

/// Append records (with wall times) to a JSONL log. Never truncates.
pub fn append_log(records: &[VerificationRecord], path: &std::path::Path) -> Result<(), HarnessError> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        let row = serde_json::json!({
            "theorem": r.theorem,
            "k": r.k,
            "inputs": r.inputs,
            "exact": r.exact,
            "formula": r.formula,
            "ratio": r.ratio,
            "status": r.status.to_string(),
            "note": r.note,
            "wall_ms": r.wall_ms,
        });
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// Exit code policy: 0 all pass, 2 when anything is flagged.
pub fn exit_code(records: &[VerificationRecord]) -> i32 {
    if records.iter().any(|r| r.status == Status::Flag) {
        2
    } else {
        0
    }
}

/// One row of the counting series table.
#[derive(Clone, Debug)]
pub struct SeriesRow {
    pub k: u64,
    pub ck: BigInt,
    pub pk: BigInt,
    pub classes: BigInt,
    /// Constant term, when the recurrence supports (r, k).
    pub rivin_ct: Option<BigInt>,
    /// `c_k / sharp(r, k/2)` for even `k >= 2`, rounded to six decimals.
    pub sharp_ratio: Option<String>,
}

/// Build the series table for lengths `1..=max_k`.
pub fn build_series(r: u8, max_k: u64) -> Result<Vec<SeriesRow>, HarnessError> {
    let mut rows = Vec::new();
    for k in 1..=max_k {
        let ck_v = ck(r, k)?;
        let pk = crate::counting::pd(r, k)?;
        let classes = classes_trivial_ab(r, k)?;
        let rivin = rivin_ct(r, k).ok();
        let sharp = if k % 2 == 0 {
            let m = k / 2;
            let predicted = sharp_asymptotic(r, m)?;
            ck_v.to_f64().map(|e| ratio6(e / predicted))
        } else {
            None
        };
        rows.push(SeriesRow { k, ck: ck_v, pk, classes, rivin_ct: rivin, sharp_ratio: sharp });
    }
    Ok(rows)
}

/// Render a series table. CSV header: `k,c_k,p_k,classes,rivin_ct,sharp_ratio`.
pub fn emit_series(rows: &[SeriesRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let out: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "k": r.k,
                        "c_k": r.ck.to_string(),
                        "p_k": r.pk.to_string(),
                        "classes": r.classes.to_string(),
                        "rivin_ct": r.rivin_ct.as_ref().map(|v| v.to_string()),
                        "sharp_ratio": r.sharp_ratio,
                    })
                })
                .collect();
            let doc = serde_json::json!({ "rows": out });
            let mut s = serde_json::to_string_pretty(&doc).expect("series serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("k,c_k,p_k,classes,rivin_ct,sharp_ratio\n");
            for r in rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.k,
                    r.ck,
                    r.pk,
                    r.classes,
                    r.rivin_ct.as_ref().map(|v| v.to_string()).unwrap_or_default(),
                    r.sharp_ratio.clone().unwrap_or_default()
                ));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_params() -> VerifyParams {
        VerifyParams {
            rank: 2,
            ks: Some(vec![4, 6, 8]),
            max_n: 5,
            samples: 50,
            seed: 0,
            q: 3,
        }
    }

    #[test]
    fn unknown_id_is_rejected() {
        assert!(matches!(
            run_verification("nope", &VerifyParams::default()),
            Err(HarnessError::UnknownTheorem(_))
        ));
    }

    #[test]
    fn endpoint_driver_passes() {
        let records = verify_endpoint_counts(&quick_params()).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.status == Status::Pass));
    }

    #[test]
    fn class_count_driver_passes() {
        let mut params = quick_params();
        params.ks = Some((1..=8).collect());
        let records = verify_class_count_orders(&params).unwrap();
        assert!(records.iter().all(|r| r.status == Status::Pass));
        let k4 = records.iter().find(|r| r.k == Some(4)).unwrap();
        assert_eq!(k4.exact, "2");
    }

    #[test]
    fn paths_driver_flags_only_the_closed_form_rows() {
        let mut params = quick_params();
        params.max_n = 6;
        let records = verify_paths(&params).unwrap();
        for r in &records {
            let is_closed_form_row = r.inputs.get("check").map(String::as_str)
                == Some("trivial-product");
            if !is_closed_form_row {
                assert_eq!(r.status, Status::Pass, "{r:?}");
            } else if r.k == Some(4) {
                // At k = 4 every tested pair happens to agree.
                assert_eq!(r.status, Status::Pass, "{r:?}");
            }
        }
        // The known divergences are flagged, not hidden.
        assert!(records.iter().any(|r| r.status == Status::Flag));
    }

    #[test]
    fn rivin_driver_reports_discrepancy_and_self_check() {
        let mut params = quick_params();
        params.ks = Some((0..=6).collect());
        let records = verify_rivin_ct(&params).unwrap();
        // Self-checks pass.
        for r in records.iter().filter(|r| r.inputs.get("check").is_some()) {
            assert_eq!(r.status, Status::Pass, "{r:?}");
        }
        // The k = 2 row records the documented mismatch (-4 vs 0).
        let k2 = records
            .iter()
            .find(|r| r.k == Some(2) && r.inputs.get("check").is_none())
            .unwrap();
        assert_eq!(k2.status, Status::Flag);
        assert_eq!(k2.exact, "-4");
        assert_eq!(k2.formula, "0");
    }

    #[test]
    fn chi_driver_passes() {
        let records = verify_chi(&quick_params()).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.status == Status::Pass));
    }

    #[test]
    fn emit_csv_shape() {
        let record = VerificationRecord {
            theorem: "T1.1".into(),
            k: Some(4),
            inputs: inputs_of(&[("r", "2".into())]),
            exact: "2".into(),
            formula: "1".into(),
            ratio: Some("2.000000".into()),
            status: Status::Pass,
            note: "".into(),
            wall_ms: 5,
        };
        let csv = emit_report(&[record.clone()], ReportFormat::Csv);
        assert_eq!(
            csv,
            "theorem,k,exact,main_term,ratio,status\nT1.1[r=2],4,2,1,2.000000,pass\n"
        );
        let json = emit_report(&[record], ReportFormat::Json);
        assert!(json.contains("\"theorem\": \"T1.1\""));
        assert!(!json.contains("wall_ms"), "wall time must not reach reports");
    }

    #[test]
    fn emit_is_deterministic() {
        let params = quick_params();
        let a = emit_report(&verify_endpoint_counts(&params).unwrap(), ReportFormat::Json);
        let b = emit_report(&verify_endpoint_counts(&params).unwrap(), ReportFormat::Json);
        assert_eq!(a, b);
    }

    #[test]
    fn series_table_values() {
        let rows = build_series(2, 6).unwrap();
        assert_eq!(rows.len(), 6);
        let k4 = &rows[3];
        assert_eq!(k4.ck, BigInt::from(8));
        assert_eq!(k4.pk, BigInt::from(8));
        assert_eq!(k4.classes, BigInt::from(2));
        assert_eq!(k4.rivin_ct, Some(BigInt::from(48)));
        assert!(k4.sharp_ratio.is_some());
        let csv = emit_series(&rows, ReportFormat::Csv);
        assert!(csv.starts_with("k,c_k,p_k,classes,rivin_ct,sharp_ratio\n"));
    }

    #[test]
    fn micro_units_parses_rounded_ratios() {
        assert_eq!(micro_units("2.000000"), Some(2_000_000));
        assert_eq!(micro_units("-0.500000"), Some(-500_000));
        assert_eq!(micro_units("1.5"), None);
    }

    #[test]
    fn exit_codes() {
        let mut r = VerificationRecord {
            theorem: "x".into(),
            k: None,
            inputs: BTreeMap::new(),
            exact: String::new(),
            formula: String::new(),
            ratio: None,
            status: Status::Pass,
            note: String::new(),
            wall_ms: 0,
        };
        assert_eq!(exit_code(&[r.clone()]), 0);
        r.status = Status::Flag;
        assert_eq!(exit_code(&[r]), 2);
    }

    #[test]
    fn append_log_keeps_history_and_wall_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let record = VerificationRecord {
            theorem: "T1.1".into(),
            k: Some(4),
            inputs: BTreeMap::new(),
            exact: "2".into(),
            formula: "1".into(),
            ratio: None,
            status: Status::Pass,
            note: String::new(),
            wall_ms: 7,
        };
        append_log(&[record.clone()], &path).unwrap();
        append_log(&[record], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"wall_ms\":7"));
    }
}
