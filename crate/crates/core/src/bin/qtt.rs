use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use quasitubal::decomp::{self, error_curve, implicit_rank, multirank, qrank, qsvd, tsvd_finite, Limit, MultiRank, Rank};
use quasitubal::io::{self, QttObject};
use quasitubal::stream::{self, BandSchedule, ClosedFormOracle, DirOracle, Growth, QtOracle, SliceOracle};
use quasitubal::synth::{self, Family, SynthSpec};
use quasitubal::verify::{self, Suite};
use quasitubal::{Error, HNorm, QSvd};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Quasitubal tensor toolkit.
///
/// Any flag may also come from a JSON object passed with --config; flags on
/// the command line take precedence. QTT_THREADS caps the worker threads.
#[derive(Parser, Debug)]
#[command(name = "qtt", version, args_override_self = true)]
struct Cli {
    /// JSON file whose keys are flag names (e.g. {"seed": 3, "q-max": 20}).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a seeded synthetic tail-zero tensor.
    Synth(SynthArgs),
    /// Factor a tensor with the q-SVD or the finite tSVDM.
    Decompose(DecomposeArgs),
    /// Truncate a factorization by explicit rank, q-rank or multi-rank.
    Truncate(TruncateArgs),
    /// Tabulate the explicit truncation error against the rank.
    Compare(CompareArgs),
    /// Run a seeded property suite.
    Verify(VerifyArgs),
    /// Extract leading components from a slice oracle with band certificates.
    Extract(ExtractArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// Slices occupy k = -band..=band.
    #[arg(long, default_value_t = 8)]
    band: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ratio for geometric-decay, rate for smooth-fourier.
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Qsvd,
    Tsvd,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Qsvd)]
    mode: Mode,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("rank").required(true).args(["q", "trank", "multirank"])))]
struct TruncateArgs {
    /// q-SVD file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Explicit rank: keep the q leading components.
    #[arg(long)]
    q: Option<usize>,
    /// q-rank (t-rank) truncation.
    #[arg(long)]
    trank: Option<usize>,
    /// JSON multi-rank {"lo": .., "ranks": [..], "tail": ..}.
    #[arg(long, value_name = "FILE")]
    multirank: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Append a row with the residual norms to this CSV.
    #[arg(long, value_name = "CSV")]
    report: Option<PathBuf>,
    /// With --q, also write the kept components as CSV.
    #[arg(long, value_name = "CSV")]
    components: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Tensor or q-SVD file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "q-max")]
    q_max: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["tensor", "closed_form", "dir"])))]
struct ExtractArgs {
    /// Tail-zero tensor file.
    #[arg(long)]
    tensor: Option<PathBuf>,
    /// JSON closed-form oracle descriptor.
    #[arg(long = "closed-form", value_name = "FILE")]
    closed_form: Option<PathBuf>,
    /// Directory of slice_{k}.mat files; needs --total-energy and the shape.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long = "total-energy", requires = "dir")]
    total_energy: Option<f64>,
    #[arg(long, requires = "dir")]
    m: Option<usize>,
    #[arg(long, requires = "dir")]
    p: Option<usize>,
    #[arg(long)]
    q: usize,
    #[arg(long = "max-band", default_value_t = stream::DEFAULT_MAX_BAND)]
    max_band: u64,
    /// Grow the band by this step instead of doubling.
    #[arg(long)]
    step: Option<u64>,
    /// Component list (QTT).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_name = "CSV")]
    csv: Option<PathBuf>,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid(_) | Error::RankOutOfRange { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Splice flags from `--config FILE` in right after the subcommand name so
/// that explicit flags, which come later, override them.
fn expand_config(mut argv: Vec<String>) -> std::result::Result<Vec<String>, Failure> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = if let Some(v) = argv[pos].strip_prefix("--config=") {
        let v = v.to_string();
        argv.remove(pos);
        v
    } else {
        if pos + 1 >= argv.len() {
            return Err(usage("--config needs a file"));
        }
        let v = argv.remove(pos + 1);
        argv.remove(pos);
        v
    };
    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
    let obj: serde_json::Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| usage(format!("config {path} is not a JSON object: {e}")))?;
    let mut flags = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(usage(format!("config key {key}: unsupported value {v}"))),
        };
        match &value {
            Value::Bool(true) => flags.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for it in items {
                    flags.push(flag.clone());
                    flags.push(scalar(it)?);
                }
            }
            v => {
                flags.push(flag);
                flags.push(scalar(v)?);
            }
        }
    }
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(argv.len());
    argv.splice(sub..sub, flags);
    Ok(argv)
}

fn h_text(h: HNorm) -> String {
    match h {
        HNorm::Finite(v) => format!("{v:.16e}"),
        HNorm::NotInH => "not-in-H".into(),
    }
}

fn rank_text(r: Rank) -> String {
    match r {
        Rank::Finite(n) => n.to_string(),
        Rank::Infinite => "infinite".into(),
    }
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        family: a.family,
        m: a.m,
        p: a.p,
        band: a.band,
        seed: a.seed,
        decay: a.decay,
    };
    let x = synth::synthesize(&spec)?;
    io::write_qtt(&a.out, &QttObject::Tensor(x.clone()))?;
    println!("h_norm: {}", h_text(x.h_norm()));
    println!("op_norm: {:.16e}", x.op_norm());
    Ok(())
}

fn print_summary(q: &QSvd, recon: f64) {
    println!("q_rank: {}", qrank(q));
    println!("implicit_rank: {}", rank_text(implicit_rank(q)));
    println!("reconstruction_error: {recon:e}");
    let top = match decomp::order_components(q, Limit::Count(10)) {
        Ok(list) => list.sigmas(),
        // a nonzero tail repeats its values forever; list the distinct leaders
        Err(_) => {
            let tail = q.s.tail_slice();
            (0..tail.nrows().min(tail.ncols())).map(|i| tail[(i, i)].re).take(10).collect()
        }
    };
    let shown: Vec<String> = top.iter().map(|s| format!("{s:.6e}")).collect();
    println!("top_sigma: [{}]", shown.join(", "));
}

fn cmd_decompose(a: DecomposeArgs) -> CmdResult {
    match (io::read_qtt(&a.input)?, a.mode) {
        (QttObject::Tensor(x), Mode::Qsvd) => {
            let q = qsvd(&x)?;
            let recon = q.recompose().max_slice_distance(&x);
            io::write_qtt(&a.out, &QttObject::QSvd(q.clone()))?;
            print_summary(&q, recon);
        }
        (QttObject::Finite(x), Mode::Qsvd) => {
            let y = x.to_qt(0)?;
            let q = qsvd(&y)?;
            let recon = q.recompose().max_slice_distance(&y);
            io::write_qtt(&a.out, &QttObject::QSvd(q.clone()))?;
            print_summary(&q, recon);
        }
        (QttObject::Finite(x), Mode::Tsvd) => {
            let t = tsvd_finite(&x)?;
            let recon = t.recompose()?.sub(&x)?.frobenius();
            io::write_atomic(&a.out, &io::encode_tsvd(&t)?)?;
            let ranks = t.multirank();
            println!("t_rank: {}", ranks.iter().max().copied().unwrap_or(0));
            println!("multirank: {ranks:?}");
            println!("optimality_guaranteed: {}", t.optimality_guaranteed);
            println!("reconstruction_error: {recon:e}");
        }
        (QttObject::Tensor(_), Mode::Tsvd) => {
            return Err(usage("--mode tsvd needs a finite tensor file (with a transform)"));
        }
        _ => return Err(Error::Header(format!("{} is not a tensor file", a.input.display())).into()),
    }
    Ok(())
}

fn append_report(path: &Path, row: &[String]) -> CmdResult {
    let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(Error::from)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(["input", "mode", "parameter", "h_residual", "op_residual"])
            .map_err(Error::from)?;
    }
    w.write_record(row).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_truncate(a: TruncateArgs) -> CmdResult {
    let q = io::read_qsvd(&a.input)?;
    let x = q.recompose();
    let (mode, param, t) = if let Some(n) = a.q {
        let (t, comps) = decomp::truncate_explicit(&q, n)?;
        if let Some(csv) = &a.components {
            io::write_components_csv(csv, &comps)?;
        }
        println!("components_kept: {}", comps.len());
        ("explicit", n.to_string(), t)
    } else if let Some(r) = a.trank {
        ("qrank", r.to_string(), decomp::truncate_qrank(&q, r)?)
    } else {
        let path = a.multirank.as_ref().expect("clap enforces one rank flag");
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        let rho: MultiRank = serde_json::from_str(&text).map_err(|e| usage(format!("bad multi-rank file: {e}")))?;
        (
            "multirank",
            serde_json::to_string(&rho).map_err(Error::from)?,
            decomp::truncate_multirank(&q, &rho)?,
        )
    };
    if a.components.is_some() && a.q.is_none() {
        return Err(usage("--components needs --q"));
    }
    io::write_qtt(&a.out, &QttObject::Tensor(t.clone()))?;
    let res = x.sub(&t)?;
    let h = h_text(res.h_norm());
    let op = format!("{:.16e}", res.op_norm());
    println!("h_residual: {h}");
    println!("op_residual: {op}");
    println!("multirank: {}", serde_json::to_string(&multirank(&qsvd(&t)?)).map_err(Error::from)?);
    if let Some(path) = &a.report {
        append_report(path, &[a.input.display().to_string(), mode.into(), param, h, op])?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let q = match io::read_qtt(&a.input)? {
        QttObject::Tensor(x) => qsvd(&x)?,
        QttObject::QSvd(q) => q,
        _ => return Err(Error::Header(format!("{} holds neither a tensor nor a q-SVD", a.input.display())).into()),
    };
    let rows = error_curve(&q, a.q_max)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["q", "h_error", "op_error"]).map_err(Error::from)?;
    for r in &rows {
        w.write_record([r.q.to_string(), format!("{:.16e}", r.h_error), format!("{:.16e}", r.op_error)])
            .map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    io::write_atomic(&a.out, &bytes)?;
    println!("implicit_rank: {}", rank_text(implicit_rank(&q)));
    println!("rows: {}", rows.len());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let report = verify::run(a.suite, a.seed)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    match &a.report {
        Some(path) => io::write_atomic(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    for c in &report.checks {
        eprintln!(
            "{} {} (worst {:e}, tol {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tol
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            msg: format!("suite {:?} failed", a.suite),
        })
    }
}

fn cmd_extract(a: ExtractArgs) -> CmdResult {
    let oracle: Box<dyn SliceOracle> = if let Some(path) = &a.tensor {
        Box::new(QtOracle::new(io::read_tensor(path)?)?)
    } else if let Some(path) = &a.closed_form {
        Box::new(ClosedFormOracle::from_json(&std::fs::read_to_string(path).map_err(Error::from)?)?)
    } else {
        let dir = a.dir.clone().expect("clap enforces one source");
        let (Some(total), Some(m), Some(p)) = (a.total_energy, a.m, a.p) else {
            return Err(usage("--dir needs --total-energy, --m and --p"));
        };
        Box::new(DirOracle::new(dir, m, p, total)?)
    };
    let schedule = BandSchedule {
        start: 0,
        max_band: a.max_band,
        growth: a.step.map_or(Growth::Doubling, Growth::Additive),
    };
    let rep = stream::extract_top_q(oracle.as_ref(), a.q, schedule)?;
    io::write_qtt(&a.out, &QttObject::Components(rep.components.clone()))?;
    if let Some(csv) = &a.csv {
        io::write_components_csv(csv, &rep.components)?;
    }
    println!("components: {}", rep.components.len());
    println!("exhausted: {}", rep.exhausted);
    println!("slices_evaluated: {}", rep.slices_evaluated);
    println!("bands_used: {:?}", rep.bands_used);
    println!("residual_energy: {:.16e}", rep.residual_energy);
    for c in &rep.certificates {
        println!(
            "certificate stage={} band={} sigma_sq={:.16e} bound={:.16e}",
            c.stage, c.band, c.sigma_sq, c.bound
        );
    }
    Ok(())
}

fn init_threads() -> CmdResult {
    let Ok(v) = std::env::var("QTT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| usage(format!("QTT_THREADS={v} is not a thread count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> CmdResult {
    let argv = expand_config(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(Failure { code, msg: String::new() })
            };
        }
    };
    init_threads()?;
    match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Decompose(a) => cmd_decompose(a),
        Cmd::Truncate(a) => cmd_truncate(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Extract(a) => cmd_extract(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                let _ = writeln!(std::io::stderr(), "error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
