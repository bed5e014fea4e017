//! `wicks` — command-line front end for the commutator decision and
//! counting engine.
//!
//! Decision commands (`fg classify`, `fp classify`, `psl2 ...`) print a JSON
//! object; tabular commands (`series`, `verify`, `report`) honor `--format`.
//! Exit codes: 0 success, 2 a verification completed with flagged rows,
//! 1 any error (bad input, I/O).

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use wicks_core::commfree::{
    count_commutator_classes_free, enumerate_wicks_commutators, is_commutator_free,
};
use wicks_core::freeprod::{
    count_commutator_classes_fp, hecke_group, FiniteGroupTable, FormReading, FreeProduct,
};
use wicks_core::freewords::{abelianize, canonical_rep, cyclic_reduce, Word};
use wicks_core::harness::{
    append_log, build_series, configure_threads, emit_report, emit_series, exit_code, run_all,
    run_verification, ReportFormat, VerifyParams, THEOREM_IDS,
};
use wicks_core::modular::{
    chi, decompose_st, in_commutator_subgroup_psl2, in_commutator_subgroup_sl2,
    is_commutator_psl2, markoff_scan, psl2_free_product, to_free_product_word, Mat2,
    MarkoffScanConfig,
};

#[derive(Parser)]
#[command(
    name = "wicks",
    version,
    about = "Commutator decision and counting engine for free groups, free products, and the modular group",
    arg_required_else_help = true
)]
struct Cli {
    /// Seed for the seeded verification sweeps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all available). Output is identical either way.
    #[arg(long)]
    threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for tabular commands.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Free-group commands (words over a..z and inverses A..Z).
    #[command(subcommand)]
    Fg(FgCmd),
    /// Free-product commands (words over named factor elements).
    #[command(subcommand)]
    Fp(FpCmd),
    /// Length-indexed counting table: word counts, primitive counts, class
    /// counts, polynomial constant terms, sharp-prediction ratios.
    Series {
        #[arg(long, default_value_t = 2)]
        rank: u8,
        #[arg(long = "max-k")]
        max_k: u64,
        /// Table format (defaults to the top-level --format).
        #[arg(long, value_enum)]
        emit: Option<FormatArg>,
    },
    /// Modular-group commands (2x2 integer matrices of determinant 1).
    #[command(subcommand)]
    Psl2(Psl2Cmd),
    /// Markoff triple scanning.
    #[command(subcommand)]
    Markoff(MarkoffCmd),
    /// Run one named verification (or all of them).
    Verify {
        /// One of: T1.1, six-average, T1.3, Lemma2.1, Eq1, paths, sharp,
        /// rivin-ct, chi. Omit to run all.
        #[arg(long)]
        theorem: Option<String>,
        #[command(flatten)]
        params: ParamArgs,
        /// Append records (with wall times) to this JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run every verification and emit the combined report.
    Report {
        #[command(flatten)]
        params: ParamArgs,
        /// Append records (with wall times) to this JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// Free-group rank used by the free checks.
    #[arg(long, default_value_t = 2)]
    rank: u8,
    /// Comma-separated length list overriding a driver's default sweep.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<u64>>,
    /// Upper bound for the small-n sweeps.
    #[arg(long = "max-n", default_value_t = 10)]
    max_n: u64,
    /// Sample count for the seeded matrix sweeps.
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    /// Second factor order q for the Z/2 * Z/q checks.
    #[arg(long, default_value_t = 3)]
    q: u64,
}

#[derive(Subcommand)]
enum FgCmd {
    /// Decide whether a freely reduced word is a commutator; print a witness
    /// if so. The input must already be reduced (strict).
    Classify {
        word: String,
        #[arg(long, default_value_t = 2)]
        rank: u8,
    },
    /// Count shape words or their conjugacy classes at one length.
    Count {
        #[arg(long, default_value_t = 2)]
        rank: u8,
        #[arg(long)]
        length: u64,
        #[arg(long, value_enum)]
        what: FgWhat,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FgWhat {
    /// Distinct shape words of the length.
    Wicks,
    /// Conjugacy classes among them, with the predicted main term.
    Classes,
}

#[derive(Args)]
struct GroupArgs {
    /// First factor: `zN` for the cyclic group of order N, or a JSON file
    /// with {"order": n, "table": [[..]], "names": [..]?}.
    #[arg(long, conflicts_with = "hecke")]
    group1: Option<String>,
    /// Second factor, same syntax as --group1.
    #[arg(long, conflicts_with = "hecke")]
    group2: Option<String>,
    /// Shorthand for Z/2 * Z/q with elements named s and r, r2, ...
    #[arg(long)]
    hecke: Option<u64>,
}

impl GroupArgs {
    fn build(&self) -> Result<FreeProduct> {
        if let Some(q) = self.hecke {
            let (g1, g2) = hecke_group(q)?;
            return Ok(FreeProduct::new(g1, g2));
        }
        let (Some(s1), Some(s2)) = (&self.group1, &self.group2) else {
            return Err(anyhow!("provide --group1 and --group2, or --hecke q"));
        };
        Ok(FreeProduct::new(parse_group(s1)?, parse_group(s2)?))
    }
}

fn parse_group(spec: &str) -> Result<FiniteGroupTable> {
    if let Some(rest) = spec.strip_prefix(['z', 'Z']) {
        if let Ok(n) = rest.parse::<u64>() {
            return Ok(FiniteGroupTable::cyclic(n, None)?);
        }
    }
    let text = std::fs::read_to_string(spec)
        .with_context(|| format!("group spec {spec:?} is neither zN nor a readable file"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{spec}: invalid JSON"))?;
    Ok(FiniteGroupTable::from_json(&value)?)
}

#[derive(Subcommand)]
enum FpCmd {
    /// Decide whether a word in G1 * G2 is a commutator. The input is put in
    /// normal form first (tokens may repeat or include identities).
    Classify {
        /// Dot-separated tokens: element names, or 1:i / 2:j indices.
        word: String,
        #[command(flatten)]
        group: GroupArgs,
    },
    /// Count commutator conjugacy classes at one length.
    Count {
        #[arg(long)]
        length: u64,
        #[command(flatten)]
        group: GroupArgs,
    },
    /// Show which shape ids match a word under the corrected reading of
    /// shapes 3/4 versus the literal one (diagnostic).
    CompareReadings {
        word: String,
        #[command(flatten)]
        group: GroupArgs,
    },
}

#[derive(Subcommand)]
enum Psl2Cmd {
    /// Write a matrix as a word in S = [[0,-1],[1,0]] and T = [[1,1],[0,1]],
    /// exactly (no sign ambiguity).
    Decompose {
        /// Four integers, row-major: "a b c d".
        matrix: String,
    },
    /// Character value, commutator-subgroup membership, and the commutator
    /// decision for a matrix.
    Classify {
        /// Four integers, row-major: "a b c d".
        matrix: String,
    },
}

#[derive(Subcommand)]
enum MarkoffCmd {
    /// Enumerate matrix pairs from short S/T words and record the trace
    /// triples of commutators with small trace, as JSONL.
    Scan {
        /// Words over S, T, T^-1 up to this length.
        #[arg(long = "max-len")]
        max_len: u32,
        /// Keep triples with |tr [A, B]| at most this bound.
        #[arg(long = "trace-bound")]
        trace_bound: u64,
        /// JSONL output path (a .state sidecar enables resuming).
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn json_line(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn fg_classify(word: &str, rank: u8) -> Result<serde_json::Value> {
    let w = Word::parse(word, rank)?;
    let (core, _) = cyclic_reduce(&w);
    let rep = canonical_rep(&core);
    let ab = abelianize(&w);
    let decision = is_commutator_free(&w);
    let witness = decision.as_ref().map(|c| {
        serde_json::json!({ "u": c.u.to_string(), "v": c.v.to_string() })
    });
    Ok(serde_json::json!({
        "word": w.to_string(),
        "rank": rank,
        "length": w.len(),
        "class_rep": rep.to_string(),
        "abelianization": ab,
        "is_commutator": decision.is_some(),
        "witness": witness,
    }))
}

fn fg_count(rank: u8, length: u64, what: FgWhat) -> Result<serde_json::Value> {
    match what {
        FgWhat::Wicks => {
            let words = enumerate_wicks_commutators(rank, length)?;
            Ok(serde_json::json!({
                "rank": rank,
                "length": length,
                "wicks_words": words.len(),
            }))
        }
        FgWhat::Classes => {
            let report = count_commutator_classes_free(rank, length)?;
            Ok(serde_json::json!({
                "rank": rank,
                "length": report.k,
                "classes": report.exact_count.to_string(),
                "wicks_words": report.wicks_word_count.to_string(),
                "main_term": report.main_term.to_string(),
                "ratio": report.ratio,
            }))
        }
    }
}

fn fp_classify(fp: &FreeProduct, word: &str) -> Result<serde_json::Value> {
    let raw = fp.parse_letters(word)?;
    let w = fp.normalize(&raw)?;
    let decision = fp.is_commutator(&w);
    let details = decision.as_ref().map(|acc| {
        serde_json::json!({
            "rotation": acc.rotation,
            "form_id": acc.form.as_ref().map(|f| f.form_id),
            "witness": acc.witness.as_ref().map(|wit| serde_json::json!({
                "u": fp.render(&wit.u),
                "v": fp.render(&wit.v),
            })),
        })
    });
    Ok(serde_json::json!({
        "word": fp.render(&w),
        "length": w.len(),
        "trivial_abelianization": fp.has_trivial_abelianization(&w),
        "is_commutator": decision.is_some(),
        "acceptance": details,
    }))
}

fn fp_count(fp: &FreeProduct, length: u64) -> Result<serde_json::Value> {
    let report = count_commutator_classes_fp(fp, length)?;
    Ok(serde_json::json!({
        "length": report.k,
        "classes": report.exact_count.to_string(),
        "accepted_words": report.accepted_words.to_string(),
        "main_term": report.main_term.to_string(),
        "ratio": report.ratio,
        "per_form_counts": report.per_form_counts,
    }))
}

fn fp_compare_readings(fp: &FreeProduct, word: &str) -> Result<serde_json::Value> {
    let raw = fp.parse_letters(word)?;
    let w = fp.normalize(&raw)?;
    let (core, _) = fp.cyclic_reduce(&w);
    let corrected: Vec<u8> =
        fp.matched_form_ids(&core, FormReading::Corrected).into_iter().collect();
    let literal: Vec<u8> =
        fp.matched_form_ids(&core, FormReading::PrintedLiteral).into_iter().collect();
    Ok(serde_json::json!({
        "word": fp.render(&w),
        "cyclic_core": fp.render(&core),
        "corrected_form_ids": corrected,
        "literal_form_ids": literal,
        "trivial_abelianization": fp.has_trivial_abelianization(&w),
    }))
}

fn psl2_decompose(matrix: &str) -> Result<serde_json::Value> {
    let m = Mat2::parse(matrix)?;
    let word = decompose_st(&m);
    let check = word.eval();
    let (a, b, c, d) = m.entries();
    Ok(serde_json::json!({
        "matrix": [a.to_string(), b.to_string(), c.to_string(), d.to_string()],
        "word": word.to_string(),
        "length": word.len(),
        "exact": check == m,
    }))
}

fn psl2_classify(matrix: &str) -> Result<serde_json::Value> {
    let m = Mat2::parse(matrix)?;
    let fp = psl2_free_product();
    let image = to_free_product_word(&m);
    Ok(serde_json::json!({
        "word": fp.render(&image),
        "chi": chi(&m),
        "in_commutator_subgroup": {
            "sl2": in_commutator_subgroup_sl2(&m),
            "psl2": in_commutator_subgroup_psl2(&m),
        },
        "is_commutator": is_commutator_psl2(&m),
    }))
}

fn run(cli: Cli) -> Result<i32> {
    configure_threads(cli.threads)?;
    let format: ReportFormat = cli.format.into();
    match cli.command {
        Command::Fg(cmd) => {
            let value = match cmd {
                FgCmd::Classify { word, rank } => fg_classify(&word, rank)?,
                FgCmd::Count { rank, length, what } => fg_count(rank, length, what)?,
            };
            write_output(&cli.out, &json_line(&value))?;
            Ok(0)
        }
        Command::Fp(cmd) => {
            let value = match cmd {
                FpCmd::Classify { word, group } => fp_classify(&group.build()?, &word)?,
                FpCmd::Count { length, group } => fp_count(&group.build()?, length)?,
                FpCmd::CompareReadings { word, group } => {
                    fp_compare_readings(&group.build()?, &word)?
                }
            };
            write_output(&cli.out, &json_line(&value))?;
            Ok(0)
        }
        Command::Series { rank, max_k, emit } => {
            let rows = build_series(rank, max_k)?;
            let fmt = emit.map(ReportFormat::from).unwrap_or(format);
            write_output(&cli.out, &emit_series(&rows, fmt))?;
            Ok(0)
        }
        Command::Psl2(cmd) => {
            let value = match cmd {
                Psl2Cmd::Decompose { matrix } => psl2_decompose(&matrix)?,
                Psl2Cmd::Classify { matrix } => psl2_classify(&matrix)?,
            };
            write_output(&cli.out, &json_line(&value))?;
            Ok(0)
        }
        Command::Markoff(MarkoffCmd::Scan { max_len, trace_bound, out }) => {
            let config = MarkoffScanConfig { max_word_len: max_len, trace_bound, out };
            let summary = markoff_scan(&config)?;
            let value = serde_json::json!({
                "matrices": summary.matrices,
                "pairs_total": summary.pairs_total,
                "pairs_skipped": summary.pairs_skipped,
                "triples_emitted": summary.triples_emitted,
                "resumed": summary.resumed,
            });
            write_output(&cli.out, &json_line(&value))?;
            Ok(0)
        }
        Command::Verify { theorem, params, log } => {
            let vp = verify_params(&params, cli.seed);
            let records = match &theorem {
                Some(id) => {
                    if !THEOREM_IDS.contains(&id.as_str()) {
                        return Err(anyhow!(
                            "unknown verification {:?}; expected one of {}",
                            id,
                            THEOREM_IDS.join(", ")
                        ));
                    }
                    run_verification(id, &vp)?
                }
                None => run_all(&vp)?,
            };
            if let Some(path) = &log {
                append_log(&records, path)?;
            }
            write_output(&cli.out, &emit_report(&records, format))?;
            Ok(exit_code(&records))
        }
        Command::Report { params, log } => {
            let vp = verify_params(&params, cli.seed);
            let records = run_all(&vp)?;
            if let Some(path) = &log {
                append_log(&records, path)?;
            }
            write_output(&cli.out, &emit_report(&records, format))?;
            Ok(exit_code(&records))
        }
    }
}

fn verify_params(args: &ParamArgs, seed: u64) -> VerifyParams {
    VerifyParams {
        rank: args.rank,
        ks: args.ks.clone(),
        max_n: args.max_n,
        samples: args.samples,
        seed,
        q: args.q,
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
