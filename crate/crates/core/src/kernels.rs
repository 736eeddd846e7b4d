//! Sample spaces, kernel evaluation, the symmetric/antisymmetric split, and
//! the hat/check lifts to `X x [0,1]`.
//!
//! Kernels are composition trees over three builtins:
//!
//! * `product`  — `f(x,y) = x*y` on a scalar space,
//! * `sign`     — `f(x,y) = sgn(x-y)` on a scalar space,
//! * `bilinear` — `f((x1,x2),(y1,y2)) = x1*y2` on a two-factor space,
//!
//! combined with `sum`, `scale`, `swap`, `sym-part` and `antisym-part`.
//! Keeping kernels as data (rather than arbitrary closures) makes configs
//! serializable and runs reproducible; the generic parts of the crate that
//! need more freedom accept any [`PairFn`] instead.

use crate::{Result, UstatError};

/// A point of a sample space: a real scalar or an R^2 pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Scalar(f64),
    Pair(f64, f64),
}

impl Point {
    #[inline]
    pub fn scalar(self) -> Option<f64> {
        match self {
            Point::Scalar(x) => Some(x),
            Point::Pair(..) => None,
        }
    }
}

/// Anything evaluable as a two-argument kernel on points.
pub trait PairFn: Sync {
    fn eval(&self, x: &Point, y: &Point) -> f64;
}

impl<F: Fn(&Point, &Point) -> f64 + Sync> PairFn for F {
    #[inline]
    fn eval(&self, x: &Point, y: &Point) -> f64 {
        self(x, y)
    }
}

/// Shape of points a space carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointShape {
    Scalar,
    Pair,
}

/// The declared sample space.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSpec {
    /// `[0,1]` with Lebesgue measure in mind.
    UnitInterval,
    /// Finitely many real atoms with probabilities.
    DiscreteAtoms { values: Vec<f64>, probs: Vec<f64> },
    /// `{-1,+1}` with probability 1/2 each.
    Rademacher,
    /// The real line under N(0,1).
    StdNormal,
    /// A product of two scalar factors (at most one nesting: X within R^2).
    ProductOfTwo(Box<SpaceSpec>, Box<SpaceSpec>),
    /// Ranks `1..=n`; marks permutation mode.
    RankOrdinal(usize),
}

impl SpaceSpec {
    pub fn discrete_atoms(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(UstatError::InvalidSpace(
                "atoms need matching nonempty value/probability lists".into(),
            ));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(UstatError::InvalidSpace("negative atom probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(UstatError::InvalidSpace(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        Ok(SpaceSpec::DiscreteAtoms { values, probs })
    }

    pub fn product(a: SpaceSpec, b: SpaceSpec) -> Result<Self> {
        for factor in [&a, &b] {
            if matches!(factor, SpaceSpec::ProductOfTwo(..) | SpaceSpec::RankOrdinal(_)) {
                return Err(UstatError::InvalidSpace(
                    "product factors must be scalar spaces".into(),
                ));
            }
        }
        Ok(SpaceSpec::ProductOfTwo(Box::new(a), Box::new(b)))
    }

    pub fn shape(&self) -> PointShape {
        match self {
            SpaceSpec::ProductOfTwo(..) => PointShape::Pair,
            _ => PointShape::Scalar,
        }
    }

    pub fn contains_shape(&self, p: &Point) -> bool {
        matches!(
            (self.shape(), p),
            (PointShape::Scalar, Point::Scalar(_)) | (PointShape::Pair, Point::Pair(..))
        )
    }

    /// Deterministic probe points used for symmetry verification.
    pub(crate) fn probe_points(&self, count: usize) -> Vec<Point> {
        match self {
            SpaceSpec::UnitInterval => (0..count)
                .map(|i| Point::Scalar((i as f64 + 0.5) / count as f64))
                .collect(),
            SpaceSpec::StdNormal => (0..count)
                .map(|i| {
                    let u = (i as f64 + 0.5) / count as f64;
                    Point::Scalar(crate::hoeffding::probit(u))
                })
                .collect(),
            SpaceSpec::Rademacher => (0..count)
                .map(|i| Point::Scalar(if i % 2 == 0 { 1.0 } else { -1.0 }))
                .collect(),
            SpaceSpec::DiscreteAtoms { values, .. } => (0..count)
                .map(|i| Point::Scalar(values[i % values.len()]))
                .collect(),
            SpaceSpec::RankOrdinal(n) => (0..count)
                .map(|i| Point::Scalar((i % n.max(&1)) as f64 + 1.0))
                .collect(),
            SpaceSpec::ProductOfTwo(a, b) => {
                // cross product of per-factor probes, so discrete factors
                // still produce off-diagonal pairs
                let k = (count as f64).sqrt().ceil() as usize;
                let pa = a.probe_points(k);
                let pb = b.probe_points(k);
                let mut out = Vec::with_capacity(count);
                'fill: for x in &pa {
                    for y in &pb {
                        out.push(Point::Pair(x.scalar().unwrap(), y.scalar().unwrap()));
                        if out.len() == count {
                            break 'fill;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Declared symmetry of a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    General,
}

impl Symmetry {
    fn name(self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
            Symmetry::General => "general",
        }
    }
}

/// Kernel composition tree.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelExpr {
    /// `x * y` on scalars.
    Product,
    /// `sgn(x - y)` on scalars.
    Sign,
    /// `x1 * y2` on pairs.
    Bilinear,
    Sum(Box<KernelExpr>, Box<KernelExpr>),
    Scale(f64, Box<KernelExpr>),
    Swap(Box<KernelExpr>),
    SymPart(Box<KernelExpr>),
    AntisymPart(Box<KernelExpr>),
}

impl KernelExpr {
    fn required_shape(&self) -> Option<PointShape> {
        match self {
            KernelExpr::Product | KernelExpr::Sign => Some(PointShape::Scalar),
            KernelExpr::Bilinear => Some(PointShape::Pair),
            KernelExpr::Sum(a, b) => match (a.required_shape(), b.required_shape()) {
                (Some(s), None) | (None, Some(s)) => Some(s),
                (Some(s), Some(t)) if s == t => Some(s),
                (None, None) => None,
                _ => Some(PointShape::Pair), // mismatch; caught by validate
            },
            KernelExpr::Scale(_, inner)
            | KernelExpr::Swap(inner)
            | KernelExpr::SymPart(inner)
            | KernelExpr::AntisymPart(inner) => inner.required_shape(),
        }
    }

    fn shapes_consistent(&self) -> bool {
        match self {
            KernelExpr::Sum(a, b) => {
                a.shapes_consistent()
                    && b.shapes_consistent()
                    && match (a.required_shape(), b.required_shape()) {
                        (Some(s), Some(t)) => s == t,
                        _ => true,
                    }
            }
            KernelExpr::Scale(_, i)
            | KernelExpr::Swap(i)
            | KernelExpr::SymPart(i)
            | KernelExpr::AntisymPart(i) => i.shapes_consistent(),
            _ => true,
        }
    }

    /// Symmetry implied by the tree structure.
    fn inferred_symmetry(&self) -> Symmetry {
        match self {
            KernelExpr::Product => Symmetry::Symmetric,
            KernelExpr::Sign => Symmetry::Antisymmetric,
            KernelExpr::Bilinear => Symmetry::General,
            KernelExpr::SymPart(_) => Symmetry::Symmetric,
            KernelExpr::AntisymPart(_) => Symmetry::Antisymmetric,
            KernelExpr::Scale(_, inner) | KernelExpr::Swap(inner) => inner.inferred_symmetry(),
            KernelExpr::Sum(a, b) => {
                let (sa, sb) = (a.inferred_symmetry(), b.inferred_symmetry());
                if sa == sb {
                    sa
                } else {
                    Symmetry::General
                }
            }
        }
    }

    fn eval(&self, x: &Point, y: &Point) -> f64 {
        match self {
            KernelExpr::Product => match (x, y) {
                (Point::Scalar(a), Point::Scalar(b)) => a * b,
                _ => f64::NAN,
            },
            KernelExpr::Sign => match (x, y) {
                (Point::Scalar(a), Point::Scalar(b)) => sgn(a - b),
                _ => f64::NAN,
            },
            KernelExpr::Bilinear => match (x, y) {
                (Point::Pair(x1, _), Point::Pair(_, y2)) => x1 * y2,
                _ => f64::NAN,
            },
            KernelExpr::Sum(a, b) => a.eval(x, y) + b.eval(x, y),
            KernelExpr::Scale(c, inner) => c * inner.eval(x, y),
            KernelExpr::Swap(inner) => inner.eval(y, x),
            KernelExpr::SymPart(inner) => 0.5 * (inner.eval(x, y) + inner.eval(y, x)),
            KernelExpr::AntisymPart(inner) => 0.5 * (inner.eval(x, y) - inner.eval(y, x)),
        }
    }
}

/// The sign function with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// An evaluable kernel on a declared space, with verified symmetry metadata.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    expr: KernelExpr,
    domain: SpaceSpec,
    symmetry: Symmetry,
}

const PROBE_SIDE: usize = 10;
const PROBE_TOL: f64 = 1e-12;

impl KernelSpec {
    /// Build a kernel, inferring its symmetry tag from the tree and then
    /// verifying the tag on a 10x10 probe grid.
    pub fn new(expr: KernelExpr, domain: SpaceSpec) -> Result<Self> {
        let declared = expr.inferred_symmetry();
        Self::with_symmetry(expr, domain, declared)
    }

    /// Build a kernel with an explicit symmetry declaration; the declaration
    /// (when not `General`) must hold on the probe grid to within 1e-12.
    pub fn with_symmetry(expr: KernelExpr, domain: SpaceSpec, declared: Symmetry) -> Result<Self> {
        if !expr.shapes_consistent() {
            return Err(UstatError::DomainMismatch);
        }
        if let Some(shape) = expr.required_shape() {
            if shape != domain.shape() {
                return Err(UstatError::DomainMismatch);
            }
        }
        let spec = KernelSpec { expr, domain, symmetry: declared };
        if declared != Symmetry::General {
            let probes = spec.domain.probe_points(PROBE_SIDE);
            let mut worst = 0.0_f64;
            for x in &probes {
                for y in &probes {
                    let forward = spec.expr.eval(x, y);
                    let backward = spec.expr.eval(y, x);
                    let dev = match declared {
                        Symmetry::Symmetric => (forward - backward).abs(),
                        Symmetry::Antisymmetric => (forward + backward).abs(),
                        Symmetry::General => 0.0,
                    };
                    worst = worst.max(dev);
                }
            }
            if worst > PROBE_TOL {
                return Err(UstatError::SymmetryViolation {
                    declared: declared.name(),
                    deviation: worst,
                });
            }
        }
        Ok(spec)
    }

    pub fn expr(&self) -> &KernelExpr {
        &self.expr
    }

    pub fn domain(&self) -> &SpaceSpec {
        &self.domain
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Evaluate `f(x,y)`; errors if a point shape disagrees with the domain.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        if !self.domain.contains_shape(x) || !self.domain.contains_shape(y) {
            return Err(UstatError::DomainMismatch);
        }
        Ok(self.expr.eval(x, y))
    }

    /// Unchecked evaluation for inner loops; callers validate shapes once.
    #[inline]
    pub fn eval_unchecked(&self, x: &Point, y: &Point) -> f64 {
        self.expr.eval(x, y)
    }

    /// The swap `f_check(x,y) = f(y,x)`. Symmetry tags survive: a symmetric
    /// kernel is unchanged, an antisymmetric one absorbs the sign.
    pub fn swap(&self) -> KernelSpec {
        let expr = match &self.expr {
            // swap(swap(k)) collapses back to k
            KernelExpr::Swap(inner) => (**inner).clone(),
            other => KernelExpr::Swap(Box::new(other.clone())),
        };
        KernelSpec { expr, domain: self.domain.clone(), symmetry: self.symmetry }
    }

    /// Symmetric part `(f + f_check)/2`.
    pub fn symmetric_part(&self) -> KernelSpec {
        KernelSpec {
            expr: KernelExpr::SymPart(Box::new(self.expr.clone())),
            domain: self.domain.clone(),
            symmetry: Symmetry::Symmetric,
        }
    }

    /// Antisymmetric part `(f - f_check)/2`.
    pub fn antisymmetric_part(&self) -> KernelSpec {
        KernelSpec {
            expr: KernelExpr::AntisymPart(Box::new(self.expr.clone())),
            domain: self.domain.clone(),
            symmetry: Symmetry::Antisymmetric,
        }
    }

    pub fn scale(&self, c: f64) -> KernelSpec {
        KernelSpec {
            expr: KernelExpr::Scale(c, Box::new(self.expr.clone())),
            domain: self.domain.clone(),
            symmetry: self.symmetry,
        }
    }

    /// `f - f_check`, the antisymmetrization that turns the cyclic-symmetric
    /// statistic into a plain cyclic one.
    pub fn minus_swap(&self) -> KernelSpec {
        KernelSpec {
            expr: KernelExpr::Scale(2.0, Box::new(KernelExpr::AntisymPart(Box::new(self.expr.clone())))),
            domain: self.domain.clone(),
            symmetry: Symmetry::Antisymmetric,
        }
    }

    /// `f + f_check`.
    pub fn plus_swap(&self) -> KernelSpec {
        KernelSpec {
            expr: KernelExpr::Scale(2.0, Box::new(KernelExpr::SymPart(Box::new(self.expr.clone())))),
            domain: self.domain.clone(),
            symmetry: Symmetry::Symmetric,
        }
    }

    /// Lift to `X x [0,1]`.
    pub fn lift(&self, which: Lift) -> LiftedKernelSpec {
        LiftedKernelSpec { base: self.clone(), lift: which }
    }
}

/// Which lift of the kernel to `X x [0,1]` is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lift {
    /// `hat f((x,t),(y,u)) = f(x,y)` if `t<u`, `f(y,x)` if `t>u`, `0` at ties.
    Hat,
    /// `check f((x,t),(y,u)) = f(x,y)` if `t<u`, `-f(y,x)` if `t>u`, `0` at ties.
    Check,
}

/// A kernel lifted to `X x [0,1]`; the hat lift is symmetric, the check lift
/// antisymmetric. Ties `t = u` evaluate to 0 (a null set under the product
/// measure, pinned here so evaluation is deterministic).
#[derive(Clone, Debug)]
pub struct LiftedKernelSpec {
    base: KernelSpec,
    lift: Lift,
}

impl LiftedKernelSpec {
    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn lift(&self) -> Lift {
        self.lift
    }

    pub fn eval(&self, x: &Point, t: f64, y: &Point, u: f64) -> Result<f64> {
        let domain = self.base.domain();
        if !domain.contains_shape(x) || !domain.contains_shape(y) {
            return Err(UstatError::DomainMismatch);
        }
        Ok(self.eval_unchecked(x, t, y, u))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &Point, t: f64, y: &Point, u: f64) -> f64 {
        lifted_eval(|a, b| self.base.eval_unchecked(a, b), self.lift, x, t, y, u)
    }
}

/// The hat/check case split, shared with closure-backed kernels.
#[inline]
pub fn lifted_eval<F: Fn(&Point, &Point) -> f64>(
    f: F,
    lift: Lift,
    x: &Point,
    t: f64,
    y: &Point,
    u: f64,
) -> f64 {
    if t < u {
        f(x, y)
    } else if t > u {
        match lift {
            Lift::Hat => f(y, x),
            Lift::Check => -f(y, x),
        }
    } else {
        0.0
    }
}

/// Convenience constructors for the builtin kernels.
pub mod builtin {
    use super::*;

    /// `f(x,y) = x*y` on the given scalar space.
    pub fn product(domain: SpaceSpec) -> Result<KernelSpec> {
        KernelSpec::new(KernelExpr::Product, domain)
    }

    /// `f(x,y) = sgn(x-y)` on the given scalar space.
    pub fn sign(domain: SpaceSpec) -> Result<KernelSpec> {
        KernelSpec::new(KernelExpr::Sign, domain)
    }

    /// `f((x1,x2),(y1,y2)) = x1*y2` on the given product space.
    pub fn bilinear(domain: SpaceSpec) -> Result<KernelSpec> {
        KernelSpec::new(KernelExpr::Bilinear, domain)
    }
}
