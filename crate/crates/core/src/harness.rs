//! Experiment orchestration: Monte Carlo convergence studies, limit-law
//! verification, the joint characteristic function experiment, strong-law
//! trajectories, and report emission.
//!
//! # Config grammar
//!
//! Kernels and measures are given as composition strings:
//!
//! ```text
//! kernel  := "product" | "sign" | "bilinear"
//!          | "sum(" kernel "," kernel ")"
//!          | "scale(" number "," kernel ")"
//!          | "swap(" kernel ")" | "sym-part(" kernel ")" | "antisym-part(" kernel ")"
//! measure := "uniform01" | "rademacher" | "stdnormal"
//!          | "bernoulli(" p ")" | "atoms(" v ":" p { "," v ":" p } ")"
//!          | "product(" measure "," measure ")"
//! ```
//!
//! A kernel's domain is the space of the measure it is paired with. Full
//! experiment configs are JSON documents deserializing into
//! [`ExperimentConfig`]; every emitted report echoes the resolved config and
//! master seed, and reruns reproduce output byte for byte regardless of
//! worker count (all randomness flows through per-replication derived
//! streams, and reductions are order-fixed).

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hoeffding::{degeneracy_class, project, HoeffdingParts, MeasureSpec, Regime};
use crate::kernels::{KernelExpr, KernelSpec, Point, SpaceSpec};
use crate::limitlaws::{
    cf_joint_bilinear, cumulant, empirical_cumulants, sample, MixtureLaw, ScaleExponent,
    SeriesTruncation,
};
use crate::rng::{mix64, Stream};
use crate::spectral::{limit_law_from_theorem, SpectralResolution};
use crate::ustats::{
    binom2, evaluate, evaluate_fast, exact_mean, FastForm, Fenwick, StatKind,
};
use crate::{Result, UstatError};

// ---------------------------------------------------------------------------
// Config grammar
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(UstatError::Config(format!(
                "expected `{c}` at position {} in `{}`",
                self.pos, self.s
            )))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let b = self.s.as_bytes()[self.pos];
            if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(UstatError::Config(format!(
                "expected a name at position {} in `{}`",
                self.pos, self.s
            )));
        }
        Ok(&self.s[start..self.pos])
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let b = self.s.as_bytes()[self.pos];
            if b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.s[start..self.pos]
            .parse()
            .map_err(|_| UstatError::Config(format!("bad number at position {start} in `{}`", self.s)))
    }

    fn done(&mut self) -> Result<()> {
        self.skip_ws();
        if self.pos == self.s.len() {
            Ok(())
        } else {
            Err(UstatError::Config(format!("trailing input `{}`", &self.s[self.pos..])))
        }
    }
}

fn parse_kernel_expr(c: &mut Cursor) -> Result<KernelExpr> {
    let name = c.ident()?;
    Ok(match name {
        "product" => KernelExpr::Product,
        "sign" => KernelExpr::Sign,
        "bilinear" => KernelExpr::Bilinear,
        "sum" => {
            c.expect('(')?;
            let a = parse_kernel_expr(c)?;
            c.expect(',')?;
            let b = parse_kernel_expr(c)?;
            c.expect(')')?;
            KernelExpr::Sum(Box::new(a), Box::new(b))
        }
        "scale" => {
            c.expect('(')?;
            let factor = c.number()?;
            c.expect(',')?;
            let inner = parse_kernel_expr(c)?;
            c.expect(')')?;
            KernelExpr::Scale(factor, Box::new(inner))
        }
        "swap" | "sym-part" | "antisym-part" => {
            c.expect('(')?;
            let inner = parse_kernel_expr(c)?;
            c.expect(')')?;
            match name {
                "swap" => KernelExpr::Swap(Box::new(inner)),
                "sym-part" => KernelExpr::SymPart(Box::new(inner)),
                _ => KernelExpr::AntisymPart(Box::new(inner)),
            }
        }
        other => return Err(UstatError::Config(format!("unknown kernel `{other}`"))),
    })
}

/// Parse a kernel expression; its domain is the given space.
pub fn parse_kernel(text: &str, domain: &SpaceSpec) -> Result<KernelSpec> {
    let mut c = Cursor::new(text);
    let expr = parse_kernel_expr(&mut c)?;
    c.done()?;
    KernelSpec::new(expr, domain.clone())
}

fn parse_measure_inner(c: &mut Cursor) -> Result<MeasureSpec> {
    let name = c.ident()?;
    Ok(match name {
        "uniform01" => MeasureSpec::Uniform01,
        "rademacher" => MeasureSpec::Rademacher,
        "stdnormal" => MeasureSpec::StdNormal,
        "bernoulli" => {
            c.expect('(')?;
            let p = c.number()?;
            c.expect(')')?;
            MeasureSpec::bernoulli(p)?
        }
        "atoms" => {
            c.expect('(')?;
            let mut values = Vec::new();
            let mut probs = Vec::new();
            loop {
                values.push(c.number()?);
                c.expect(':')?;
                probs.push(c.number()?);
                match c.peek() {
                    Some(',') => c.expect(',')?,
                    _ => break,
                }
            }
            c.expect(')')?;
            MeasureSpec::atoms(values, probs)?
        }
        "product" => {
            c.expect('(')?;
            let a = parse_measure_inner(c)?;
            c.expect(',')?;
            let b = parse_measure_inner(c)?;
            c.expect(')')?;
            MeasureSpec::product(a, b)?
        }
        other => return Err(UstatError::Config(format!("unknown measure `{other}`"))),
    })
}

/// Parse a measure expression.
pub fn parse_measure(text: &str) -> Result<MeasureSpec> {
    let mut c = Cursor::new(text);
    let m = parse_measure_inner(&mut c)?;
    c.done()?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

fn default_trunc() -> usize {
    2000
}
fn default_quadrature() -> usize {
    512
}
fn default_deg_tol() -> f64 {
    1e-8
}
fn default_ks_threshold() -> f64 {
    0.06
}
fn default_resolution() -> SpectralResolution {
    SpectralResolution::default()
}

/// A full convergence-study configuration; JSON on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: String,
    pub measure: String,
    pub stats: Vec<StatKind>,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_trunc")]
    pub trunc: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    #[serde(default = "default_deg_tol")]
    pub degeneracy_tol: f64,
    #[serde(default = "default_ks_threshold")]
    pub ks_threshold: f64,
    #[serde(default = "default_resolution")]
    pub resolution: SpectralResolution,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(UstatError::Config("n_grid must be strictly ascending".into()));
        }
        if self.n_grid[0] < 2 {
            return Err(UstatError::Config("n_grid entries must be >= 2".into()));
        }
        if self.replications < 100 {
            return Err(UstatError::Config("need at least 100 replications".into()));
        }
        if self.stats.is_empty() {
            return Err(UstatError::Config("no statistics selected".into()));
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let measure = parse_measure(&self.measure)?;
        parse_kernel(&self.kernel, &measure.space())
    }

    pub fn measure_spec(&self) -> Result<MeasureSpec> {
        parse_measure(&self.measure)
    }
}

/// Per-(stat, n) Monte Carlo summary; `values` holds the raw statistic per
/// replication, in replication order.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub exact_mean: f64,
    pub mean_within_4se: bool,
    pub values: Vec<f64>,
}

impl ConvergenceRow {
    /// Centered and `n^{-e}`-scaled copies of the replication values.
    pub fn normalized(&self, scale: ScaleExponent) -> Vec<f64> {
        let factor = (self.n as f64).powf(-scale.value());
        self.values.iter().map(|v| (v - self.exact_mean) * factor).collect()
    }
}

#[derive(Clone, Debug)]
pub struct StatReport {
    pub stat: StatKind,
    pub regime: Regime,
    pub scale_exponent: ScaleExponent,
    /// Least-squares slope of `log Var` against `log n`.
    pub fitted_exponent: f64,
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config_json: String,
    pub stats: Vec<StatReport>,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn stat_index(stat: StatKind) -> u64 {
    StatKind::ALL.iter().position(|k| *k == stat).unwrap() as u64
}

fn data_component(stat: StatKind, n_idx: usize) -> u64 {
    (stat_index(stat) << 32) | n_idx as u64
}

/// Evaluate with the fast path where one exists, else by definition.
fn evaluate_best(stat: StatKind, kernel: &KernelSpec, data: &[Point]) -> Result<f64> {
    match evaluate_fast(stat, kernel, data) {
        Ok(v) => Ok(v),
        Err(UstatError::UnsupportedKernel) => evaluate(stat, kernel, data),
        Err(e) => Err(e),
    }
}

/// Run the convergence study described by the config.
///
/// For each statistic and each `n`: `N` replications of fresh i.i.d. data,
/// the statistic per replication, the raw mean/variance, a 4-standard-error
/// check of the mean against its exact formula, and the variance-scaling
/// exponent fitted over the grid.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let measure = cfg.measure_spec()?;
    let kernel = cfg.kernel_spec()?;
    let parts = project(&kernel, &measure, cfg.quadrature)?;
    let mu = parts.mu();

    let mut stats = Vec::new();
    for &stat in &cfg.stats {
        let law =
            limit_law_from_theorem(stat, &parts, cfg.resolution, cfg.degeneracy_tol, None)?;
        let vc = parts.variance_components();
        let regime = degeneracy_class(&vc, cfg.degeneracy_tol).for_stat(stat);

        let mut rows = Vec::new();
        for (n_idx, &n) in cfg.n_grid.iter().enumerate() {
            let component = data_component(stat, n_idx);
            let values: Vec<f64> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = Stream::derive(cfg.seed, component, rep as u64);
                    let data = measure.sample_vec(&mut rng, n);
                    evaluate_best(stat, &kernel, &data).expect("validated config")
                })
                .collect();
            let (mean, var) = mean_var(&values);
            let exact = exact_mean(stat, n, mu)?;
            let se = (var / cfg.replications as f64).sqrt();
            rows.push(ConvergenceRow {
                n,
                mean,
                var,
                exact_mean: exact,
                mean_within_4se: (mean - exact).abs() <= 4.0 * se,
                values,
            });
        }

        // least squares on (log n, log var)
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.var > 0.0)
            .map(|r| ((r.n as f64).ln(), r.var.ln()))
            .collect();
        let fitted = if pts.len() >= 2 {
            let nx = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            (nx * sxy - sx * sy) / (nx * sxx - sx * sx)
        } else {
            f64::NAN
        };

        stats.push(StatReport {
            stat,
            regime,
            scale_exponent: law.scale_exponent,
            fitted_exponent: fitted,
            rows,
        });
    }

    Ok(ExperimentReport {
        seed: cfg.seed,
        config_json: serde_json::to_string(cfg).expect("config serializes"),
        stats,
    })
}

/// Two-sample Kolmogorov-Smirnov distance by a merged sort sweep.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 50 || b.len() < 50 {
        return Err(UstatError::InsufficientSamples { need: 50, got: a.len().min(b.len()) });
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(worst.max((1.0 - i as f64 / na).abs().max((1.0 - j as f64 / nb).abs())))
}

/// Outcome of a limit-law verification run.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub stat: StatKind,
    pub n: usize,
    pub replications: usize,
    pub ks: f64,
    /// `kappa_1..kappa_4` of the normalized empirical sample.
    pub empirical_cumulants: Vec<f64>,
    /// The same orders for the analytic law.
    pub law_cumulants: Vec<f64>,
    pub law: MixtureLaw,
    pub normalized: Vec<f64>,
    pub law_sample: Vec<f64>,
}

/// Compare the normalized statistic against its theorem limit law: KS
/// distance between `N` normalized replications and `N` law samples, plus a
/// side-by-side cumulant table.
pub fn verify_limit(
    stat: StatKind,
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    n: usize,
    replications: usize,
    seed: u64,
    trunc: SeriesTruncation,
    resolution: SpectralResolution,
    degeneracy_tol: f64,
    quadrature: usize,
) -> Result<VerifyReport> {
    let parts = project(kernel, measure, quadrature)?;
    let law = limit_law_from_theorem(stat, &parts, resolution, degeneracy_tol, Some(n))?;
    if law.scale_exponent != ScaleExponent::One {
        return Err(UstatError::RegimeMismatch);
    }
    let mu = parts.mu();
    let exact = exact_mean(stat, n, mu)?;
    let normalized: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = Stream::derive(seed, data_component(stat, 0), rep as u64);
            let data = measure.sample_vec(&mut rng, n);
            let v = evaluate_best(stat, kernel, &data).expect("validated inputs");
            (v - exact) / n as f64
        })
        .collect();
    let law_sample = sample(&law, trunc, mix64(seed ^ 0x5EED_1AB5_0F_u64), replications)?;
    let ks = ks_two_sample(&normalized, &law_sample)?;
    let empirical = empirical_cumulants(&normalized, 4).unwrap_or_else(|_| {
        // fewer than 10^4 replications: report orders 1..2 padded with NaN
        let mut v = empirical_cumulants(&normalized, 2).unwrap_or_default();
        v.resize(4, f64::NAN);
        v
    });
    let analytic: Vec<f64> = (1..=4).map(|m| cumulant(&law, m).unwrap()).collect();
    Ok(VerifyReport {
        stat,
        n,
        replications,
        ks,
        empirical_cumulants: empirical,
        law_cumulants: analytic,
        law,
        normalized,
        law_sample,
    })
}

/// One grid point of the joint characteristic function surface.
#[derive(Clone, Debug, Serialize)]
pub struct JointCfPoint {
    pub s: f64,
    pub t: f64,
    pub empirical_modulus: f64,
    pub analytic: f64,
}

/// Empirical joint cf of `(2 U_n(fs)/n, 2 U_n(fa)/n)` for the bilinear
/// kernel, against the closed-form surface. The measure must be a product of
/// two Rademacher or two standard normal factors.
pub fn joint_cf_experiment(
    measure: &MeasureSpec,
    n: usize,
    replications: usize,
    s_grid: &[f64],
    t_grid: &[f64],
    seed: u64,
) -> Result<Vec<JointCfPoint>> {
    match measure {
        MeasureSpec::Product(a, b)
            if matches!(**a, MeasureSpec::Rademacher | MeasureSpec::StdNormal)
                && **a == **b => {}
        _ => {
            return Err(UstatError::Config(
                "joint-cf needs product(rademacher,rademacher) or product(stdnormal,stdnormal)"
                    .into(),
            ))
        }
    }
    let bilinear = KernelSpec::new(KernelExpr::Bilinear, measure.space())?;
    let fs = bilinear.symmetric_part();
    let fa = bilinear.antisymmetric_part();
    let pairs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = Stream::derive(seed, 0, rep as u64);
            let data = measure.sample_vec(&mut rng, n);
            let ws = 2.0 * evaluate_fast(StatKind::Classic, &fs, &data).expect("separable")
                / n as f64;
            let wa = 2.0 * evaluate_fast(StatKind::Classic, &fa, &data).expect("separable")
                / n as f64;
            (ws, wa)
        })
        .collect();
    let mut out = Vec::new();
    for &s in s_grid {
        for &t in t_grid {
            let (mut re, mut im) = (0.0, 0.0);
            for &(ws, wa) in &pairs {
                let phase = s * ws + t * wa;
                re += phase.cos();
                im += phase.sin();
            }
            re /= replications as f64;
            im /= replications as f64;
            out.push(JointCfPoint {
                s,
                t,
                empirical_modulus: (re * re + im * im).sqrt(),
                analytic: cf_joint_bilinear(s, t),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Strong law trajectories
// ---------------------------------------------------------------------------

/// One checkpoint of a strong-law run: the statistic normalized by
/// `binom(n,2)` (by `n^2/2` for the cyclic variants).
#[derive(Clone, Debug, Serialize)]
pub struct SllnPoint {
    pub n: usize,
    pub normalized: f64,
}

#[derive(Clone, Debug)]
pub struct SllnReport {
    pub stat: StatKind,
    pub target: f64,
    pub final_value: f64,
    pub pass: bool,
    pub trajectory: Vec<SllnPoint>,
}

/// Logarithmic checkpoint grid `n = ceil(10^{k/8})`, deduplicated, ending at
/// `n_max`.
fn checkpoints(n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let n = 10f64.powf(k as f64 / 8.0).ceil() as usize;
        if n >= n_max {
            break;
        }
        if n >= 2 && out.last() != Some(&n) {
            out.push(n);
        }
        k += 1;
    }
    out.push(n_max);
    out
}

/// Single growing sample path with O(1)-amortized updates per point.
///
/// Separable kernels keep parity-split leading sums; the sign kernel keeps
/// parity-split rank counters over the (pre-generated) value universe. The
/// cyclic statistics re-evaluate at each checkpoint, since their index
/// structure changes with `n`.
pub fn slln_run(
    stat: StatKind,
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    n_max: usize,
    seed: u64,
    tolerance: f64,
) -> Result<SllnReport> {
    if n_max < 1000 {
        return Err(UstatError::TooFewPoints { need: 1000, got: n_max });
    }
    let mut rng = Stream::derive(seed, 0, 0);
    let data = measure.sample_vec(&mut rng, n_max);
    let marks = checkpoints(n_max);

    let cyclic = matches!(stat, StatKind::Cyclic | StatKind::CyclicSym);
    let mut trajectory = Vec::with_capacity(marks.len());

    if cyclic {
        for &n in &marks {
            let v = evaluate_best(stat, kernel, &data[..n])?;
            trajectory.push(SllnPoint { n, normalized: 2.0 * v / (n as f64 * n as f64) });
        }
    } else {
        match crate::ustats::fast_form(kernel).ok_or(UstatError::UnsupportedKernel)? {
            FastForm::ScaledSign(c) => {
                let values: Vec<f64> = data
                    .iter()
                    .map(|p| p.scalar().ok_or(UstatError::UnsupportedKernel))
                    .collect::<Result<_>>()?;
                let (ranks, universe) = crate::ustats::compress_ranks(&values);
                return slln_sign_run(stat, c, &ranks, universe, &marks, tolerance);
            }
            FastForm::Separable(mut factors) => {
                // the ordered-pairs sum is the classic one with the
                // transposed terms appended
                let effective = if stat == StatKind::FullPairs {
                    factors = factors.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
                    StatKind::Classic
                } else {
                    stat
                };
                let mut lead = vec![[0.0; 2]; factors.len()];
                let mut value = 0.0;
                let mut mark_iter = marks.iter().peekable();
                for (pos, p) in data.iter().enumerate() {
                    for (c, (a, b)) in factors.iter().enumerate() {
                        let bv = b.eval(p);
                        value += match effective {
                            StatKind::Classic => bv * (lead[c][0] + lead[c][1]),
                            StatKind::AltFirst => bv * (lead[c][0] - lead[c][1]),
                            StatKind::AltSecond => {
                                let s = if pos % 2 == 1 { 1.0 } else { -1.0 };
                                s * bv * (lead[c][0] + lead[c][1])
                            }
                            StatKind::BiAlt => {
                                let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
                                s * bv * (lead[c][0] - lead[c][1])
                            }
                            _ => unreachable!(),
                        };
                        lead[c][pos % 2] += a.eval(p);
                    }
                    if mark_iter.peek() == Some(&&(pos + 1)) {
                        mark_iter.next();
                        let n = pos + 1;
                        trajectory.push(SllnPoint { n, normalized: value / binom2(n) });
                    }
                }
            }
        }
    }

    let target = slln_target(stat, kernel, measure)?;
    let final_value = trajectory.last().map(|p| p.normalized).unwrap_or(f64::NAN);
    Ok(SllnReport {
        stat,
        target,
        final_value,
        pass: (final_value - target).abs() < tolerance,
        trajectory,
    })
}

fn slln_sign_run(
    stat: StatKind,
    scale: f64,
    ranks: &[usize],
    universe: usize,
    marks: &[usize],
    tolerance: f64,
) -> Result<SllnReport> {
    let mut even = Fenwick::new(universe);
    let mut odd = Fenwick::new(universe);
    let mut value = 0i64;
    let mut trajectory = Vec::with_capacity(marks.len());
    let mut mark_iter = marks.iter().peekable();
    for (pos, &r) in ranks.iter().enumerate() {
        let be = even.sign_balance(r);
        let bo = odd.sign_balance(r);
        value += match stat {
            StatKind::Classic => be + bo,
            StatKind::FullPairs => 0,
            StatKind::AltFirst => be - bo,
            StatKind::AltSecond => (if pos % 2 == 1 { 1 } else { -1 }) * (be + bo),
            StatKind::BiAlt => (if pos % 2 == 0 { 1 } else { -1 }) * (be - bo),
            StatKind::Cyclic | StatKind::CyclicSym => unreachable!(),
        };
        if pos % 2 == 0 {
            even.insert(r);
        } else {
            odd.insert(r);
        }
        if mark_iter.peek() == Some(&&(pos + 1)) {
            mark_iter.next();
            let n = pos + 1;
            trajectory.push(SllnPoint { n, normalized: scale * value as f64 / binom2(n) });
        }
    }
    // sign kernel is antisymmetric: mu = 0, every target is 0
    let final_value = trajectory.last().map(|p| p.normalized).unwrap_or(f64::NAN);
    Ok(SllnReport {
        stat,
        target: 0.0,
        final_value,
        pass: final_value.abs() < tolerance,
        trajectory,
    })
}

fn slln_target(stat: StatKind, kernel: &KernelSpec, measure: &MeasureSpec) -> Result<f64> {
    // mu from a cheap projection; the target is mu for the classic
    // statistic, 2 mu for the ordered-pairs sum, mu for the (normalized)
    // cyclic statistic, and 0 for the alternating ones
    let parts = project(kernel, measure, 128)?;
    let mu = parts.mu();
    Ok(match stat {
        StatKind::Classic => mu,
        StatKind::FullPairs => 2.0 * mu,
        StatKind::Cyclic => mu,
        StatKind::CyclicSym => 0.0,
        StatKind::AltFirst | StatKind::AltSecond | StatKind::BiAlt => 0.0,
    })
}

// ---------------------------------------------------------------------------
// CSV / JSONL emission
// ---------------------------------------------------------------------------

/// Header lines carrying the resolved config and seed, prefixed with `#`.
pub fn report_header(config_json: &str, seed: u64) -> String {
    format!("# config: {config_json}\n# seed: {seed}\n")
}

/// Summary CSV: one row per (stat, n).
pub fn convergence_summary_csv(report: &ExperimentReport) -> String {
    let mut out = report_header(&report.config_json, report.seed);
    out.push_str("stat,n,mean,var,exact_mean,mean_within_4se,regime,scale_exponent,fitted_exponent\n");
    for sr in &report.stats {
        for row in &sr.rows {
            let _ = writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.17e},{},{:?},{},{:.6}",
                sr.stat,
                row.n,
                row.mean,
                row.var,
                row.exact_mean,
                row.mean_within_4se,
                sr.regime,
                sr.scale_exponent.value(),
                sr.fitted_exponent
            );
        }
    }
    out
}

/// Sample CSV: one row per replication.
pub fn convergence_samples_csv(report: &ExperimentReport) -> String {
    let mut out = report_header(&report.config_json, report.seed);
    out.push_str("experiment,stat,n,replication,value\n");
    for sr in &report.stats {
        for row in &sr.rows {
            for (rep, v) in row.values.iter().enumerate() {
                let _ = writeln!(out, "convergence,{},{},{},{:.17e}", sr.stat, row.n, rep, v);
            }
        }
    }
    out
}

/// CSV for a verification run: the KS line plus the cumulant table.
pub fn verify_csv(report: &VerifyReport, seed: u64) -> String {
    let mut out = format!("# seed: {seed}\nstat,n,reps,ks,k1,k2,k3,k4,law_k1,law_k2,law_k3,law_k4\n");
    let e = &report.empirical_cumulants;
    let l = &report.law_cumulants;
    let _ = writeln!(
        out,
        "{},{},{},{:.6},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
        report.stat, report.n, report.replications, report.ks, e[0], e[1], e[2], e[3], l[0], l[1], l[2], l[3]
    );
    out
}

/// Build parts once for callers that need them alongside harness runs.
pub fn project_config(cfg: &ExperimentConfig) -> Result<Arc<HoeffdingParts>> {
    let measure = cfg.measure_spec()?;
    let kernel = cfg.kernel_spec()?;
    Ok(Arc::new(project(&kernel, &measure, cfg.quadrature)?))
}
