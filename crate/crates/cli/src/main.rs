//! `ustats` — cyclic and alternating U-statistics from the command line.
//!
//! Subcommands: `decompose`, `spectrum`, `simulate`, `limit-sample`,
//! `limit-cf`, `verify`, `perm-exact`, `slln`, `joint-cf`. Every run prints
//! its resolved configuration and seed as `#`-prefixed header lines, so a
//! rerun with the same flags reproduces the output byte for byte.
//!
//! Exit codes: 0 on success (all enabled assertions pass), 1 on an assertion
//! failure, 2 on usage or configuration errors.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ustats_core::harness::{
    self, convergence_samples_csv, convergence_summary_csv, joint_cf_experiment, parse_kernel,
    parse_measure, run_convergence, slln_run, verify_limit, ExperimentConfig,
};
use ustats_core::hoeffding::{degeneracy_class, project};
use ustats_core::limitlaws::{cf, sample, MixtureLaw, SeriesTruncation, TailCompensation};
use ustats_core::spectral::{
    operator_spectrum, OperatorKind, SpectralResolution, Spectrum, SpectrumMode,
};
use ustats_core::ustats::{exact_permutation_distribution, StatKind};
use ustats_core::UstatError;

#[derive(Parser)]
#[command(
    name = "ustats",
    about = "Cyclic and alternating order-2 U-statistics: evaluation, spectra, limit laws, verification",
    version
)]
struct Cli {
    /// Worker thread cap (default: USTATS_THREADS env var, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct KernelMeasureArgs {
    /// Kernel expression, e.g. `sign` or `sum(product, scale(2, swap(product)))`.
    #[arg(long)]
    kernel: String,

    /// Sampling measure, e.g. `uniform01` or `product(rademacher, rademacher)`.
    #[arg(long, default_value = "uniform01")]
    dist: String,
}

#[derive(Subcommand)]
enum Command {
    /// Hoeffding projections, variance components, and regime flags.
    Decompose {
        #[command(flatten)]
        km: KernelMeasureArgs,
        /// Quadrature nodes per continuous factor.
        #[arg(long, default_value_t = 512)]
        mq: usize,
        /// Degeneracy tolerance on variances.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Eigenvalues of one of the named integral operators.
    Spectrum {
        #[command(flatten)]
        km: KernelMeasureArgs,
        /// Operator: plain | hat | check | block | tc-sym | tc-anti.
        #[arg(long)]
        operator: String,
        /// Nystrom nodes per continuous factor of the sample space.
        #[arg(long, default_value_t = 400)]
        m: usize,
        /// Nodes on the auxiliary [0,1] coordinate (lifted/block operators).
        #[arg(long, default_value_t = 64)]
        mt: usize,
        /// Quadrature nodes for the Hoeffding projection (f12-based operators).
        #[arg(long, default_value_t = 512)]
        mq: usize,
        /// Number of eigenvalues to report.
        #[arg(long, default_value_t = 16)]
        top: usize,
    },
    /// Monte Carlo convergence study over an n-grid.
    Simulate {
        /// JSON config file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        dist: Option<String>,
        /// Statistics to run (repeatable).
        #[arg(long = "stat")]
        stats: Vec<String>,
        /// Comma-separated ascending n values.
        #[arg(long, value_delimiter = ',')]
        n_grid: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the per-replication sample CSV here.
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
    /// Draw i.i.d. samples of a mixture law (one per line).
    LimitSample {
        /// MixtureLaw as JSON, or @path to a JSON file.
        #[arg(long)]
        law: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Series terms per area/half-area component.
        #[arg(long, default_value_t = 2000)]
        trunc: usize,
        /// Tail handling: gaussian | none.
        #[arg(long, default_value = "gaussian")]
        tail: String,
    },
    /// Characteristic function of a mixture law on a t-grid.
    LimitCf {
        /// MixtureLaw as JSON, or @path to a JSON file.
        #[arg(long)]
        law: String,
        /// Grid: comma list (`0,0.5,1`) or `start:step:end`.
        #[arg(long)]
        t: String,
    },
    /// Compare a degenerate statistic with its theorem limit law.
    Verify {
        /// Statistic: classic | cyclic | cyclic-sym | alt-first | alt-second | bialt | full-pairs.
        #[arg(long)]
        stat: String,
        #[command(flatten)]
        km: KernelMeasureArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.06)]
        ks_threshold: f64,
        #[arg(long, default_value_t = 2000)]
        trunc: usize,
        #[arg(long, default_value_t = 400)]
        m: usize,
        #[arg(long, default_value_t = 64)]
        mt: usize,
        #[arg(long, default_value_t = 512)]
        mq: usize,
    },
    /// Exact distribution of a sign-kernel statistic over all permutations.
    PermExact {
        #[arg(long)]
        stat: String,
        #[arg(long)]
        n: usize,
    },
    /// Strong-law trajectory of a growing sample path.
    Slln {
        #[arg(long)]
        stat: String,
        #[command(flatten)]
        km: KernelMeasureArgs,
        #[arg(long, default_value_t = 100_000)]
        nmax: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Empirical joint characteristic function of the bilinear example.
    JointCf {
        /// product(rademacher,rademacher) or product(stdnormal,stdnormal).
        #[arg(long, default_value = "product(rademacher, rademacher)")]
        dist: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        s_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        t_grid: Vec<f64>,
    },
}

/// Assertion failures exit 1; config/usage problems exit 2.
enum RunError {
    AssertionFailed(String),
    Config(String),
}

impl From<UstatError> for RunError {
    fn from(e: UstatError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("USTATS_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }

    match run(&cli) {
        Ok(output) => {
            if let Some(path) = &cli.out {
                if let Err(e) = fs::write(path, output) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            } else {
                print!("{output}");
            }
            ExitCode::SUCCESS
        }
        Err(RunError::AssertionFailed(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_stat(s: &str) -> Result<StatKind, RunError> {
    StatKind::from_str(s).map_err(|e| RunError::Config(e.to_string()))
}

fn parse_law(text: &str) -> Result<MixtureLaw, RunError> {
    let body = if let Some(path) = text.strip_prefix('@') {
        fs::read_to_string(path).map_err(|e| RunError::Config(format!("{path}: {e}")))?
    } else {
        text.to_string()
    };
    let law: MixtureLaw =
        serde_json::from_str(&body).map_err(|e| RunError::Config(format!("bad law JSON: {e}")))?;
    law.validate()?;
    Ok(law)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, RunError> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(RunError::Config("grid must be `start:step:end` or a comma list".into()));
        }
        let start: f64 = parts[0].parse().map_err(|_| RunError::Config("bad grid start".into()))?;
        let step: f64 = parts[1].parse().map_err(|_| RunError::Config("bad grid step".into()))?;
        let end: f64 = parts[2].parse().map_err(|_| RunError::Config("bad grid end".into()))?;
        if step <= 0.0 || end < start {
            return Err(RunError::Config("grid needs step > 0 and end >= start".into()));
        }
        let mut out = Vec::new();
        let mut t = start;
        while t <= end + 1e-12 {
            out.push(t);
            t += step;
        }
        Ok(out)
    } else {
        text.split(',')
            .map(|v| v.trim().parse().map_err(|_| RunError::Config(format!("bad grid value `{v}`"))))
            .collect()
    }
}

fn header(command: &str, config: &serde_json::Value, seed: Option<u64>) -> String {
    let mut out = format!("# command: {command}\n# config: {config}\n");
    if let Some(s) = seed {
        let _ = writeln!(out, "# seed: {s}");
    }
    out
}

fn spectrum_rows(spec: &Spectrum, top: usize, format: Format) -> String {
    let mode = match spec.mode {
        SpectrumMode::RealEigen => "real-eigen",
        SpectrumMode::ImaginaryPairs => "imaginary-pairs",
    };
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str("index,lambda,mode\n");
            for (i, v) in spec.values.iter().take(top).enumerate() {
                let _ = writeln!(out, "{i},{v:.10},{mode}");
            }
        }
        Format::Jsonl => {
            for (i, v) in spec.values.iter().take(top).enumerate() {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::json!({"index": i, "lambda": v, "mode": mode})
                );
            }
        }
    }
    out
}

fn run(cli: &Cli) -> Result<String, RunError> {
    match &cli.command {
        Command::Decompose { km, mq, tol } => {
            let measure = parse_measure(&km.dist)?;
            let kernel = parse_kernel(&km.kernel, &measure.space())?;
            let parts = project(&kernel, &measure, *mq)?;
            let vc = parts.variance_components();
            let report = degeneracy_class(&vc, *tol);
            let cfgv = serde_json::json!({
                "kernel": km.kernel, "dist": km.dist, "mq": mq, "tol": tol
            });
            let mut out = header("decompose", &cfgv, None);
            match cli.format {
                Format::Csv => {
                    out.push_str("quantity,value\n");
                    let _ = writeln!(out, "mu,{:.17e}", parts.mu());
                    let _ = writeln!(out, "var_f1,{:.17e}", vc.var_f1);
                    let _ = writeln!(out, "var_f2,{:.17e}", vc.var_f2);
                    let _ = writeln!(out, "cov_f1f2,{:.17e}", vc.cov_f1f2);
                    let _ = writeln!(out, "var_f1_plus_f2,{:.17e}", vc.var_f1_plus_f2);
                    let _ = writeln!(out, "var_f12,{:.17e}", vc.var_f12);
                    let _ = writeln!(out, "var_f,{:.17e}", vc.var_f);
                    for (name, regime) in [
                        ("classic", report.classic),
                        ("cyclic", report.cyclic),
                        ("alt-first", report.alt_first),
                        ("alt-second", report.alt_second),
                        ("bialt", report.bialt),
                    ] {
                        let _ = writeln!(out, "regime_{name},{regime:?}");
                    }
                }
                Format::Jsonl => {
                    let _ = writeln!(
                        out,
                        "{}",
                        serde_json::json!({
                            "mu": parts.mu(),
                            "variance_components": vc,
                            "regimes": report,
                        })
                    );
                }
            }
            Ok(out)
        }

        Command::Spectrum { km, operator, m, mt, mq, top } => {
            let measure = parse_measure(&km.dist)?;
            let kernel = parse_kernel(&km.kernel, &measure.space())?;
            let op = OperatorKind::from_str(operator)?;
            let res = SpectralResolution { m_x: *m, m_t: *mt };
            let spec = operator_spectrum(&kernel, &measure, op, res, *mq)?;
            let cfgv = serde_json::json!({
                "kernel": km.kernel, "dist": km.dist, "operator": operator,
                "m": m, "mt": mt, "mq": mq, "top": top
            });
            Ok(header("spectrum", &cfgv, None) + &spectrum_rows(&spec, *top, cli.format))
        }

        Command::Simulate { config, kernel, dist, stats, n_grid, reps, seed, samples_out } => {
            let mut cfg: ExperimentConfig = match config {
                Some(path) => {
                    let body = fs::read_to_string(path)
                        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&body)
                        .map_err(|e| RunError::Config(format!("bad config JSON: {e}")))?
                }
                None => ExperimentConfig {
                    kernel: String::new(),
                    measure: "uniform01".into(),
                    stats: Vec::new(),
                    n_grid: Vec::new(),
                    replications: 0,
                    seed: 1,
                    trunc: 2000,
                    quadrature: 512,
                    degeneracy_tol: 1e-8,
                    ks_threshold: 0.06,
                    resolution: SpectralResolution::default(),
                },
            };
            // flags override config-file values
            if let Some(k) = kernel {
                cfg.kernel = k.clone();
            }
            if let Some(d) = dist {
                cfg.measure = d.clone();
            }
            if !stats.is_empty() {
                cfg.stats = stats.iter().map(|s| parse_stat(s)).collect::<Result<_, _>>()?;
            }
            if !n_grid.is_empty() {
                cfg.n_grid = n_grid.clone();
            }
            if let Some(r) = reps {
                cfg.replications = *r;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if cfg.kernel.is_empty() {
                return Err(RunError::Config("no kernel given (flag or config file)".into()));
            }
            let report = run_convergence(&cfg)?;
            if let Some(path) = samples_out {
                fs::write(path, convergence_samples_csv(&report))
                    .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            }
            let out = convergence_summary_csv(&report);
            // enabled assertion: empirical means within 4 standard errors
            for sr in &report.stats {
                for row in &sr.rows {
                    if !row.mean_within_4se {
                        // emit the report before failing so it can be inspected
                        if cli.out.is_none() {
                            print!("{out}");
                        }
                        return Err(RunError::AssertionFailed(format!(
                            "{} at n={} has empirical mean {} vs exact {} (outside 4 SE)",
                            sr.stat, row.n, row.mean, row.exact_mean
                        )));
                    }
                }
            }
            Ok(out)
        }

        Command::LimitSample { law, n, seed, trunc, tail } => {
            let law = parse_law(law)?;
            let compensation = match tail.as_str() {
                "gaussian" => TailCompensation::GaussianTail,
                "none" => TailCompensation::None,
                other => return Err(RunError::Config(format!("unknown tail mode `{other}`"))),
            };
            let trunc = SeriesTruncation::new(*trunc, compensation)?;
            let samples = sample(&law, trunc, *seed, *n)?;
            let cfgv = serde_json::json!({
                "law": law, "n": n, "trunc": trunc.k_terms, "tail": tail
            });
            let mut out = header("limit-sample", &cfgv, Some(*seed));
            for s in samples {
                let _ = writeln!(out, "{s:.17e}");
            }
            Ok(out)
        }

        Command::LimitCf { law, t } => {
            let law = parse_law(law)?;
            let grid = parse_grid(t)?;
            let cfgv = serde_json::json!({"law": law, "t": t});
            let mut out = header("limit-cf", &cfgv, None);
            match cli.format {
                Format::Csv => {
                    out.push_str("t,re,im\n");
                    for &t in &grid {
                        let (re, im) = cf(&law, t);
                        let _ = writeln!(out, "{t:.10},{re:.12},{im:.12}");
                    }
                }
                Format::Jsonl => {
                    for &t in &grid {
                        let (re, im) = cf(&law, t);
                        let _ = writeln!(out, "{}", serde_json::json!({"t": t, "re": re, "im": im}));
                    }
                }
            }
            Ok(out)
        }

        Command::Verify { stat, km, n, reps, seed, ks_threshold, trunc, m, mt, mq } => {
            let stat = parse_stat(stat)?;
            let measure = parse_measure(&km.dist)?;
            let kernel = parse_kernel(&km.kernel, &measure.space())?;
            let trunc = SeriesTruncation::new(*trunc, TailCompensation::GaussianTail)?;
            let res = SpectralResolution { m_x: *m, m_t: *mt };
            let report =
                verify_limit(stat, &kernel, &measure, *n, *reps, *seed, trunc, res, 1e-8, *mq)?;
            let cfgv = serde_json::json!({
                "stat": stat, "kernel": km.kernel, "dist": km.dist,
                "n": n, "reps": reps, "ks_threshold": ks_threshold,
                "trunc": trunc.k_terms, "m": m, "mt": mt, "mq": mq
            });
            let out = header("verify", &cfgv, Some(*seed)) + &harness::verify_csv(&report, *seed);
            if report.ks >= *ks_threshold {
                if cli.out.is_none() {
                    print!("{out}");
                }
                return Err(RunError::AssertionFailed(format!(
                    "KS distance {:.4} >= threshold {}",
                    report.ks, ks_threshold
                )));
            }
            Ok(out)
        }

        Command::PermExact { stat, n } => {
            let stat = parse_stat(stat)?;
            let dist = exact_permutation_distribution(stat, *n)?;
            let cfgv = serde_json::json!({"stat": stat, "n": n});
            let mut out = header("perm-exact", &cfgv, None);
            match cli.format {
                Format::Csv => {
                    out.push_str("value,count\n");
                    for (v, c) in dist {
                        let _ = writeln!(out, "{v},{c}");
                    }
                }
                Format::Jsonl => {
                    for (v, c) in dist {
                        let _ = writeln!(out, "{}", serde_json::json!({"value": v, "count": c}));
                    }
                }
            }
            Ok(out)
        }

        Command::Slln { stat, km, nmax, seed, tolerance } => {
            let stat = parse_stat(stat)?;
            let measure = parse_measure(&km.dist)?;
            let kernel = parse_kernel(&km.kernel, &measure.space())?;
            let report = slln_run(stat, &kernel, &measure, *nmax, *seed, *tolerance)?;
            let cfgv = serde_json::json!({
                "stat": stat, "kernel": km.kernel, "dist": km.dist,
                "nmax": nmax, "tolerance": tolerance
            });
            let mut out = header("slln", &cfgv, Some(*seed));
            out.push_str("n,normalized\n");
            for p in &report.trajectory {
                let _ = writeln!(out, "{},{:.12}", p.n, p.normalized);
            }
            let _ = writeln!(out, "# target: {}", report.target);
            let _ = writeln!(out, "# final: {}", report.final_value);
            if !report.pass {
                if cli.out.is_none() {
                    print!("{out}");
                }
                return Err(RunError::AssertionFailed(format!(
                    "final value {} is not within {} of target {}",
                    report.final_value, tolerance, report.target
                )));
            }
            Ok(out)
        }

        Command::JointCf { dist, n, reps, seed, s_grid, t_grid } => {
            let measure = parse_measure(dist)?;
            let points = joint_cf_experiment(&measure, *n, *reps, s_grid, t_grid, *seed)?;
            let cfgv = serde_json::json!({
                "dist": dist, "n": n, "reps": reps, "s_grid": s_grid, "t_grid": t_grid
            });
            let mut out = header("joint-cf", &cfgv, Some(*seed));
            match cli.format {
                Format::Csv => {
                    out.push_str("s,t,empirical_modulus,analytic\n");
                    for p in &points {
                        let _ = writeln!(
                            out,
                            "{},{},{:.8},{:.8}",
                            p.s, p.t, p.empirical_modulus, p.analytic
                        );
                    }
                }
                Format::Jsonl => {
                    for p in &points {
                        let _ = writeln!(out, "{}", serde_json::to_string(p).unwrap());
                    }
                }
            }
            Ok(out)
        }
    }
}
