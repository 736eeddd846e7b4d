//! Hoeffding projections `mu, f1, f2, f12` of a kernel under a sampling
//! measure, and the variance components that drive every limit theorem's
//! regime split.
//!
//! The projection is
//!
//! ```text
//! f(x,y) = mu + f1(x) + f2(y) + f12(x,y)
//! f1(x)  = E f(x, X) - mu,   f2(y) = E f(X, y) - mu,
//! f12    = f - mu - f1 - f2            (exact by construction)
//! ```
//!
//! Integrals over continuous measures use a composite midpoint rule with
//! `m_q` nodes per factor; the uniform weights keep downstream Nystrom
//! matrices symmetric without reweighting, and midpoints never evaluate the
//! sign kernel at a tie. Discrete measures sum their atoms exactly.
//! `mu`, `f1`, `f2` and the one-argument moments share a single node grid, so
//! the centering identities (`E f1 = 0`, and `f2 = -f1` for antisymmetric
//! kernels) hold to rounding, not just to quadrature accuracy. The squared
//! pair moments (`Var f`, `Var f12`) instead pair that grid with a staggered
//! `m_q + 1`-node grid for the second argument: with a shared grid the
//! diagonal nodes `x = y` carry weight `1/m_q` but see `sgn(0) = 0`, which
//! biases second moments of jump kernels by `O(1/m_q)`; staggered symmetric
//! grids never tie and restore `O(1/m_q^2)` accuracy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::kernels::{KernelSpec, PairFn, Point, SpaceSpec, Symmetry};
use crate::rng::Stream;
use crate::ustats::StatKind;
use crate::{Result, UstatError};

/// Standard normal quantile.
pub(crate) fn probit(u: f64) -> f64 {
    use std::sync::OnceLock;
    static STD_NORMAL: OnceLock<statrs::distribution::Normal> = OnceLock::new();
    let n = STD_NORMAL.get_or_init(|| statrs::distribution::Normal::new(0.0, 1.0).unwrap());
    n.inverse_cdf(u)
}

/// The law of the i.i.d. inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureSpec {
    Uniform01,
    Rademacher,
    StdNormal,
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    Product(Box<MeasureSpec>, Box<MeasureSpec>),
}

impl MeasureSpec {
    /// `Bernoulli(p)` on `{0,1}`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(UstatError::InvalidSpace(format!("bernoulli p = {p} out of [0,1]")));
        }
        Ok(MeasureSpec::Atoms { values: vec![0.0, 1.0], probs: vec![1.0 - p, p] })
    }

    pub fn atoms(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        // reuse the space validation
        SpaceSpec::discrete_atoms(values.clone(), probs.clone())?;
        Ok(MeasureSpec::Atoms { values, probs })
    }

    pub fn product(a: MeasureSpec, b: MeasureSpec) -> Result<Self> {
        if matches!(a, MeasureSpec::Product(..)) || matches!(b, MeasureSpec::Product(..)) {
            return Err(UstatError::InvalidSpace("product measures may not nest".into()));
        }
        Ok(MeasureSpec::Product(Box::new(a), Box::new(b)))
    }

    /// The sample space this measure lives on.
    pub fn space(&self) -> SpaceSpec {
        match self {
            MeasureSpec::Uniform01 => SpaceSpec::UnitInterval,
            MeasureSpec::Rademacher => SpaceSpec::Rademacher,
            MeasureSpec::StdNormal => SpaceSpec::StdNormal,
            MeasureSpec::Atoms { values, probs } => {
                SpaceSpec::DiscreteAtoms { values: values.clone(), probs: probs.clone() }
            }
            MeasureSpec::Product(a, b) => {
                SpaceSpec::ProductOfTwo(Box::new(a.space()), Box::new(b.space()))
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        match self {
            MeasureSpec::Rademacher | MeasureSpec::Atoms { .. } => true,
            MeasureSpec::Uniform01 | MeasureSpec::StdNormal => false,
            MeasureSpec::Product(a, b) => a.is_discrete() && b.is_discrete(),
        }
    }

    fn sample_scalar(&self, rng: &mut Stream) -> f64 {
        match self {
            MeasureSpec::Uniform01 => rng.next_f64(),
            MeasureSpec::Rademacher => {
                if rng.next_u64() & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            MeasureSpec::StdNormal => {
                use rand_distr::Distribution;
                rand_distr::StandardNormal.sample(rng)
            }
            MeasureSpec::Atoms { values, probs } => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            MeasureSpec::Product(..) => unreachable!("product handled in sample()"),
        }
    }

    /// Draw one i.i.d. point.
    pub fn sample(&self, rng: &mut Stream) -> Point {
        match self {
            MeasureSpec::Product(a, b) => {
                let x = a.sample_scalar(rng);
                let y = b.sample_scalar(rng);
                Point::Pair(x, y)
            }
            other => Point::Scalar(other.sample_scalar(rng)),
        }
    }

    /// Draw a data vector of length `n`.
    pub fn sample_vec(&self, rng: &mut Stream, n: usize) -> Vec<Point> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    fn scalar_grid(&self, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            MeasureSpec::Uniform01 => {
                let w = 1.0 / m as f64;
                Ok(((0..m).map(|i| (i as f64 + 0.5) * w).collect(), vec![w; m]))
            }
            MeasureSpec::StdNormal => {
                let w = 1.0 / m as f64;
                Ok(((0..m).map(|i| probit((i as f64 + 0.5) * w)).collect(), vec![w; m]))
            }
            MeasureSpec::Rademacher => Ok((vec![-1.0, 1.0], vec![0.5, 0.5])),
            MeasureSpec::Atoms { values, probs } => Ok((values.clone(), probs.clone())),
            MeasureSpec::Product(..) => unreachable!(),
        }
    }

    /// Quadrature grid with `m` nodes per continuous factor.
    pub fn grid(&self, m: usize) -> Result<MeasureGrid> {
        if m < 2 && !self.is_discrete() {
            return Err(UstatError::BadResolution(m));
        }
        match self {
            MeasureSpec::Product(a, b) => {
                let (xa, wa) = a.scalar_grid(m)?;
                let (xb, wb) = b.scalar_grid(m)?;
                let mut points = Vec::with_capacity(xa.len() * xb.len());
                let mut weights = Vec::with_capacity(xa.len() * xb.len());
                for (x, wx) in xa.iter().zip(&wa) {
                    for (y, wy) in xb.iter().zip(&wb) {
                        points.push(Point::Pair(*x, *y));
                        weights.push(wx * wy);
                    }
                }
                Ok(MeasureGrid { points, weights })
            }
            other => {
                let (xs, ws) = other.scalar_grid(m)?;
                Ok(MeasureGrid {
                    points: xs.into_iter().map(Point::Scalar).collect(),
                    weights: ws,
                })
            }
        }
    }

    /// Staggered grid used as the second argument of pair moments: `m + 1`
    /// midpoints per continuous factor, so no node ever coincides with one of
    /// `grid(m)`. Discrete factors keep their atoms (tied atoms are genuine
    /// probability mass there).
    pub fn staggered_grid(&self, m: usize) -> Result<MeasureGrid> {
        self.grid(if self.is_discrete() { m } else { m + 1 })
    }
}

/// Nodes and weights of a quadrature grid on a sample space.
#[derive(Clone, Debug)]
pub struct MeasureGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl MeasureGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

type SharedPairFn = Arc<dyn PairFn + Send + Sync>;

/// The Hoeffding projections of a kernel under a measure.
///
/// `f12` is represented by subtraction (a closure over `f`, `f1`, `f2`,
/// `mu`), never tabulated, so the decomposition identity is exact at every
/// point.
pub struct HoeffdingParts {
    eval: SharedPairFn,
    symmetry: Symmetry,
    measure: MeasureSpec,
    resolution: usize,
    grid_a: MeasureGrid,
    grid_b: MeasureGrid,
    mu: f64,
    f1_at_a: Vec<f64>,
    f2_at_a: Vec<f64>,
    f2_at_b: Vec<f64>,
}

/// Project a composition-tree kernel.
pub fn project(kernel: &KernelSpec, nu: &MeasureSpec, m_q: usize) -> Result<HoeffdingParts> {
    if kernel.domain().shape() != nu.space().shape() {
        return Err(UstatError::DomainMismatch);
    }
    let k = kernel.clone();
    let sym = kernel.symmetry();
    project_with(Arc::new(move |x: &Point, y: &Point| k.eval_unchecked(x, y)), sym, nu, m_q)
}

/// Project an arbitrary evaluable kernel. This is the engine behind
/// [`project`]; the spectral module and tests use it directly for kernels
/// (such as `f12` itself) that are not composition trees.
pub fn project_with(
    eval: SharedPairFn,
    symmetry: Symmetry,
    nu: &MeasureSpec,
    m_q: usize,
) -> Result<HoeffdingParts> {
    if m_q < 2 && !nu.is_discrete() {
        return Err(UstatError::BadResolution(m_q));
    }
    let grid_a = nu.grid(m_q)?;
    let grid_b = nu.staggered_grid(m_q)?;

    let na = grid_a.len();
    // row sums over the shared grid: mu and the two marginal projections
    let mut f1_raw = vec![0.0; na];
    let mut f2_raw = vec![0.0; na];
    let mut mu = 0.0;
    for i in 0..na {
        let xi = &grid_a.points[i];
        let wi = grid_a.weights[i];
        let mut row = 0.0;
        for j in 0..na {
            let v = eval.eval(xi, &grid_a.points[j]);
            let wj = grid_a.weights[j];
            row += wj * v;
            f2_raw[j] += wi * v;
        }
        f1_raw[i] = row;
        mu += wi * row;
    }
    let f1_at_a: Vec<f64> = f1_raw.iter().map(|v| v - mu).collect();
    let f2_at_a: Vec<f64> = f2_raw.iter().map(|v| v - mu).collect();
    let f2_at_b: Vec<f64> = grid_b
        .points
        .iter()
        .map(|y| {
            let mut acc = 0.0;
            for (xi, wi) in grid_a.points.iter().zip(&grid_a.weights) {
                acc += wi * eval.eval(xi, y);
            }
            acc - mu
        })
        .collect();

    Ok(HoeffdingParts {
        eval,
        symmetry,
        measure: nu.clone(),
        resolution: m_q,
        grid_a,
        grid_b,
        mu,
        f1_at_a,
        f2_at_a,
        f2_at_b,
    })
}

impl HoeffdingParts {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Declared symmetry of the underlying kernel.
    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn kernel_fn(&self) -> SharedPairFn {
        Arc::clone(&self.eval)
    }

    pub fn eval_kernel(&self, x: &Point, y: &Point) -> f64 {
        self.eval.eval(x, y)
    }

    /// `f1(x) = E f(x, X) - mu`, via the shared quadrature grid.
    pub fn f1(&self, x: &Point) -> f64 {
        let mut acc = 0.0;
        for (y, w) in self.grid_a.points.iter().zip(&self.grid_a.weights) {
            acc += w * self.eval.eval(x, y);
        }
        acc - self.mu
    }

    /// `f2(y) = E f(X, y) - mu`.
    pub fn f2(&self, y: &Point) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.grid_a.points.iter().zip(&self.grid_a.weights) {
            acc += w * self.eval.eval(x, y);
        }
        acc - self.mu
    }

    /// `f12(x,y) = f(x,y) - mu - f1(x) - f2(y)`; exact by construction.
    pub fn f12(&self, x: &Point, y: &Point) -> f64 {
        self.eval.eval(x, y) - self.mu - self.f1(x) - self.f2(y)
    }

    /// `f12` as a shareable kernel closure (each call costs two grid sweeps).
    pub fn f12_fn(self: &Arc<Self>) -> SharedPairFn {
        let parts = Arc::clone(self);
        Arc::new(move |x: &Point, y: &Point| parts.f12(x, y))
    }

    pub fn grid(&self) -> &MeasureGrid {
        &self.grid_a
    }

    /// Cached `f1` at the nodes of the primary grid.
    pub fn f1_at_nodes(&self) -> &[f64] {
        &self.f1_at_a
    }

    pub fn f2_at_nodes(&self) -> &[f64] {
        &self.f2_at_a
    }

    /// All six variance/covariance summaries.
    pub fn variance_components(&self) -> VarianceComponents {
        let a = &self.grid_a;
        let b = &self.grid_b;

        let mut var_f1 = 0.0;
        let mut var_f2 = 0.0;
        let mut cov = 0.0;
        for i in 0..a.len() {
            let w = a.weights[i];
            var_f1 += w * self.f1_at_a[i] * self.f1_at_a[i];
            var_f2 += w * self.f2_at_a[i] * self.f2_at_a[i];
            cov += w * self.f1_at_a[i] * self.f2_at_a[i];
        }

        let mut var_f12 = 0.0;
        let mut var_f = 0.0;
        for i in 0..a.len() {
            let xi = &a.points[i];
            let wi = a.weights[i];
            let f1i = self.f1_at_a[i];
            for j in 0..b.len() {
                let v = self.eval.eval(xi, &b.points[j]);
                let wij = wi * b.weights[j];
                let centered = v - self.mu;
                let resid = centered - f1i - self.f2_at_b[j];
                var_f12 += wij * resid * resid;
                var_f += wij * centered * centered;
            }
        }

        VarianceComponents {
            var_f1,
            var_f2,
            cov_f1f2: cov,
            var_f12,
            var_f1_plus_f2: var_f1 + var_f2 + 2.0 * cov,
            var_f,
        }
    }
}

/// Second-moment summary of the projections.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub var_f1: f64,
    pub var_f2: f64,
    pub cov_f1f2: f64,
    pub var_f12: f64,
    pub var_f1_plus_f2: f64,
    pub var_f: f64,
}

/// Which regime a statistic's limit theorem is in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Linear projections survive: variance of order n^3, normal limit.
    Nondegenerate,
    /// Linear projections vanish: variance of order n^2, chaos limit.
    Degenerate,
    /// Even `f12` vanishes: variance of order n, normal limit again.
    DoublyDegenerate,
}

/// Per-statistic regime flags.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub classic: Regime,
    pub cyclic: Regime,
    pub alt_first: Regime,
    pub alt_second: Regime,
    pub bialt: Regime,
}

impl DegeneracyReport {
    pub fn for_stat(&self, stat: StatKind) -> Regime {
        match stat {
            StatKind::Classic | StatKind::FullPairs => self.classic,
            StatKind::Cyclic | StatKind::CyclicSym => self.cyclic,
            StatKind::AltFirst => self.alt_first,
            StatKind::AltSecond => self.alt_second,
            StatKind::BiAlt => self.bialt,
        }
    }
}

/// Classify each statistic's regime from the variance components.
///
/// Each theorem keys on its own linear part: the classic statistic on
/// `Var f1` and `Var f2`, the cyclic one on `Var(f1+f2)`, the second-index
/// alternating one on `Var f2` (first-index on `Var f1`), while the
/// bi-alternating statistic has no nondegenerate case at all. The doubly
/// degenerate flag additionally requires `Var f12 < tol`.
pub fn degeneracy_class(vc: &VarianceComponents, tol: f64) -> DegeneracyReport {
    let small = |v: f64| v < tol;
    let doubly = small(vc.var_f12);
    let classic = if small(vc.var_f1) && small(vc.var_f2) {
        Regime::Degenerate
    } else {
        Regime::Nondegenerate
    };
    let cyclic = if small(vc.var_f1_plus_f2) { Regime::Degenerate } else { Regime::Nondegenerate };
    let alt_second = if small(vc.var_f2) {
        if doubly {
            Regime::DoublyDegenerate
        } else {
            Regime::Degenerate
        }
    } else {
        Regime::Nondegenerate
    };
    let alt_first = if small(vc.var_f1) {
        if doubly {
            Regime::DoublyDegenerate
        } else {
            Regime::Degenerate
        }
    } else {
        Regime::Nondegenerate
    };
    let bialt = if doubly { Regime::DoublyDegenerate } else { Regime::Degenerate };
    DegeneracyReport { classic, cyclic, alt_first, alt_second, bialt }
}
