//! Evaluation of the five order-2 U-statistics, their exact means and
//! degenerate variances, O(n log n) fast paths, the proof-device pairing
//! identities, and exact permutation distributions.
//!
//! Index conventions follow the 1-based definitions: `classic` sums
//! `f(X_i,X_j)` over `i < j`; the alternating variants attach signs
//! `(-1)^{i+1}`, `(-1)^j`, `(-1)^{i+j}`; the cyclic statistic sums
//! `f(X_i, X_{i+j mod n})` over `i` in `Z_n` and `1 <= j < n/2`, so each
//! unordered pair is oriented along its shorter circular arc and, for even
//! `n`, the diameter pairs `(i, i+n/2)` do not appear at all.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hoeffding::{Regime, VarianceComponents};
use crate::kernels::{KernelExpr, KernelSpec, Point};
use crate::{Result, UstatError};

/// Which of the statistics is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    /// `U_n = sum_{i<j} f(X_i,X_j)`.
    Classic,
    /// `U°_n`, indices on the circle.
    Cyclic,
    /// `U°°_n(f) = U°_n(f - f_check)`.
    CyclicSym,
    /// `U^{-+}_n`, signs `(-1)^{i+1}`.
    AltFirst,
    /// `U^{+-}_n`, signs `(-1)^j`.
    AltSecond,
    /// `U^{--}_n`, signs `(-1)^{i+j}`.
    #[serde(rename = "bialt")]
    BiAlt,
    /// The full sum over ordered pairs `i != j`.
    FullPairs,
}

impl StatKind {
    pub const ALL: [StatKind; 7] = [
        StatKind::Classic,
        StatKind::Cyclic,
        StatKind::CyclicSym,
        StatKind::AltFirst,
        StatKind::AltSecond,
        StatKind::BiAlt,
        StatKind::FullPairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Classic => "classic",
            StatKind::Cyclic => "cyclic",
            StatKind::CyclicSym => "cyclic-sym",
            StatKind::AltFirst => "alt-first",
            StatKind::AltSecond => "alt-second",
            StatKind::BiAlt => "bialt",
            StatKind::FullPairs => "full-pairs",
        }
    }
}

impl std::str::FromStr for StatKind {
    type Err = UstatError;

    fn from_str(s: &str) -> Result<Self> {
        StatKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| UstatError::Config(format!("unknown statistic `{s}`")))
    }
}

impl std::fmt::Display for StatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `1 <= j <= cyclic_span(n)` indexes the inner sum of the cyclic statistic.
#[inline]
fn cyclic_span(n: usize) -> usize {
    (n - 1) / 2
}

fn validate_data(kernel: &KernelSpec, data: &[Point]) -> Result<()> {
    if data.len() < 2 {
        return Err(UstatError::TooFewPoints { need: 2, got: data.len() });
    }
    if data.iter().any(|p| !kernel.domain().contains_shape(p)) {
        return Err(UstatError::DomainMismatch);
    }
    Ok(())
}

/// Evaluate a statistic by its defining finite sum.
pub fn evaluate(stat: StatKind, kernel: &KernelSpec, data: &[Point]) -> Result<f64> {
    validate_data(kernel, data)?;
    Ok(evaluate_unchecked(stat, kernel, data))
}

fn evaluate_unchecked(stat: StatKind, kernel: &KernelSpec, data: &[Point]) -> f64 {
    let n = data.len();
    let f = |a: usize, b: usize| kernel.eval_unchecked(&data[a], &data[b]);
    match stat {
        StatKind::Classic => {
            let mut acc = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    acc += f(a, b);
                }
            }
            acc
        }
        StatKind::FullPairs => {
            let mut acc = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    acc += f(a, b) + f(b, a);
                }
            }
            acc
        }
        StatKind::Cyclic => {
            let span = cyclic_span(n);
            let mut acc = 0.0;
            for a in 0..n {
                for j in 1..=span {
                    acc += f(a, (a + j) % n);
                }
            }
            acc
        }
        StatKind::CyclicSym => {
            let span = cyclic_span(n);
            let mut acc = 0.0;
            for a in 0..n {
                for j in 1..=span {
                    let b = (a + j) % n;
                    acc += f(a, b) - f(b, a);
                }
            }
            acc
        }
        StatKind::AltFirst => {
            let mut acc = 0.0;
            for a in 0..n {
                let s = if a % 2 == 0 { 1.0 } else { -1.0 };
                for b in (a + 1)..n {
                    acc += s * f(a, b);
                }
            }
            acc
        }
        StatKind::AltSecond => {
            let mut acc = 0.0;
            for b in 1..n {
                let s = if b % 2 == 1 { 1.0 } else { -1.0 };
                for a in 0..b {
                    acc += s * f(a, b);
                }
            }
            acc
        }
        StatKind::BiAlt => {
            let mut acc = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    let s = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += s * f(a, b);
                }
            }
            acc
        }
    }
}

// ---------------------------------------------------------------------------
// Exact moments
// ---------------------------------------------------------------------------

#[inline]
pub fn binom2(n: usize) -> f64 {
    (n as f64) * ((n - 1) as f64) / 2.0
}

/// Exact expectation of each statistic on i.i.d. data with `mu = E f`.
pub fn exact_mean(stat: StatKind, n: usize, mu: f64) -> Result<f64> {
    if n < 2 {
        return Err(UstatError::TooFewPoints { need: 2, got: n });
    }
    let half = (n / 2) as f64;
    Ok(match stat {
        StatKind::Classic => binom2(n) * mu,
        StatKind::FullPairs => 2.0 * binom2(n) * mu,
        StatKind::Cyclic => (n as f64) * half * mu,
        StatKind::CyclicSym => 0.0,
        StatKind::AltFirst => half * mu,
        StatKind::AltSecond => if n % 2 == 0 { half * mu } else { -half * mu },
        StatKind::BiAlt => -half * mu,
    })
}

/// Whether a variance formula is exact at finite n or only its leading term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceExactness {
    Exact,
    /// Correct up to an `O(n)` (or `O(1)` in the doubly degenerate case)
    /// remainder.
    AsymptoticLeading,
}

#[derive(Clone, Copy, Debug)]
pub struct DegenerateVariance {
    pub value: f64,
    pub exactness: VarianceExactness,
}

/// Variance of a statistic in its degenerate (or doubly degenerate) regime.
///
/// For `cyclic-sym` and `full-pairs`, pass the variance components of the
/// reduced kernel (`f - f_check`, resp. `f + f_check`); the formulas are then
/// those of `cyclic` and `classic`.
///
/// With `parity_aware` set, the doubly degenerate bi-alternating variance
/// uses the parity-specific ingredient (`(Var f1 + Var f2)/2` for even n,
/// `Var(f1+f2)/2` for odd n); without it the even-n form is used for all n.
pub fn exact_degenerate_variance(
    stat: StatKind,
    n: usize,
    vc: &VarianceComponents,
    regime: Regime,
    parity_aware: bool,
) -> Result<DegenerateVariance> {
    if n < 2 {
        return Err(UstatError::TooFewPoints { need: 2, got: n });
    }
    if regime == Regime::Nondegenerate {
        return Err(UstatError::RegimeMismatch);
    }
    let nf = n as f64;
    let half = (n / 2) as f64;
    let exact = |value| DegenerateVariance { value, exactness: VarianceExactness::Exact };
    let leading =
        |value| DegenerateVariance { value, exactness: VarianceExactness::AsymptoticLeading };
    Ok(match (stat, regime) {
        (StatKind::Classic | StatKind::FullPairs, _) => exact(binom2(n) * vc.var_f),
        (StatKind::Cyclic | StatKind::CyclicSym, _) => exact(nf * half * vc.var_f12),
        (StatKind::BiAlt, Regime::Degenerate)
        | (StatKind::AltSecond, Regime::Degenerate)
        | (StatKind::AltFirst, Regime::Degenerate) => leading(0.5 * nf * nf * vc.var_f12),
        (StatKind::BiAlt, Regime::DoublyDegenerate) => {
            let ingredient = if parity_aware && n % 2 == 1 {
                0.5 * vc.var_f1_plus_f2
            } else {
                0.5 * (vc.var_f1 + vc.var_f2)
            };
            leading(nf * ingredient)
        }
        (StatKind::AltSecond, Regime::DoublyDegenerate) => leading(0.5 * nf * vc.var_f1),
        (StatKind::AltFirst, Regime::DoublyDegenerate) => leading(0.5 * nf * vc.var_f2),
        (_, Regime::Nondegenerate) => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// Pairing identities (proof devices, exposed for exact testing)
// ---------------------------------------------------------------------------

/// Which pairing construction is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairLiftVariant {
    /// `X~_i = (X_i, X_{i+n/2})`, cyclic statistic.
    Cyclic,
    /// `X~_i = (X_{2i-1}, X_{2i})`, bi-alternating statistic.
    BiAlt,
    /// `X~_i = (X_{2i-1}, X_{2i})`, second-index alternating statistic.
    AltSecond,
}

/// The paired data and lifted kernel `F` on `X^2` that turn a length-2n
/// cyclic/alternating statistic into a classic U-statistic of length n.
pub struct PairLift<'a> {
    variant: PairLiftVariant,
    kernel: &'a KernelSpec,
    data: &'a [Point],
    half: usize,
}

pub fn pair_lift<'a>(
    kernel: &'a KernelSpec,
    variant: PairLiftVariant,
    data: &'a [Point],
) -> Result<PairLift<'a>> {
    validate_data(kernel, data)?;
    if data.len() % 2 != 0 || data.len() < 4 {
        return Err(UstatError::BadPairLiftLength(data.len()));
    }
    Ok(PairLift { variant, kernel, data, half: data.len() / 2 })
}

impl PairLift<'_> {
    pub fn half(&self) -> usize {
        self.half
    }

    /// The i-th paired point (0-based).
    pub fn paired(&self, i: usize) -> (Point, Point) {
        match self.variant {
            PairLiftVariant::Cyclic => (self.data[i], self.data[i + self.half]),
            PairLiftVariant::BiAlt | PairLiftVariant::AltSecond => {
                (self.data[2 * i], self.data[2 * i + 1])
            }
        }
    }

    /// The lifted kernel on explicit pair points.
    pub fn lifted_kernel(&self, xa: &Point, xb: &Point, ya: &Point, yb: &Point) -> f64 {
        let f = |u: &Point, v: &Point| self.kernel.eval_unchecked(u, v);
        match self.variant {
            PairLiftVariant::Cyclic => f(xa, ya) + f(ya, xb) + f(xb, yb) + f(yb, xa),
            PairLiftVariant::BiAlt => f(xa, ya) - f(xa, yb) - f(xb, ya) + f(xb, yb),
            PairLiftVariant::AltSecond => -f(xa, ya) + f(xa, yb) - f(xb, ya) + f(xb, yb),
        }
    }

    /// `F(X~_i, X~_j)`.
    pub fn eval_lifted(&self, i: usize, j: usize) -> f64 {
        let (xa, xb) = self.paired(i);
        let (ya, yb) = self.paired(j);
        self.lifted_kernel(&xa, &xb, &ya, &yb)
    }

    /// `U_{n/2}(F; X~)`.
    pub fn u_stat_of_lift(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.half {
            for j in (i + 1)..self.half {
                acc += self.eval_lifted(i, j);
            }
        }
        acc
    }

    /// The diagonal correction `sum_i f(X_{2i-1},X_{2i})`; zero for the
    /// cyclic pairing, which needs none.
    pub fn correction(&self) -> f64 {
        match self.variant {
            PairLiftVariant::Cyclic => 0.0,
            PairLiftVariant::BiAlt | PairLiftVariant::AltSecond => (0..self.half)
                .map(|i| self.kernel.eval_unchecked(&self.data[2 * i], &self.data[2 * i + 1]))
                .sum(),
        }
    }

    /// The original statistic reconstructed from the lift:
    /// `U° = U(F)`, `U^{--} = U(F) - correction`, `U^{+-} = U(F) + correction`.
    pub fn reconstruct(&self) -> f64 {
        match self.variant {
            PairLiftVariant::Cyclic => self.u_stat_of_lift(),
            PairLiftVariant::BiAlt => self.u_stat_of_lift() - self.correction(),
            PairLiftVariant::AltSecond => self.u_stat_of_lift() + self.correction(),
        }
    }
}

// ---------------------------------------------------------------------------
// Integer permutation statistics
// ---------------------------------------------------------------------------

#[inline]
fn isgn(x: i64) -> i64 {
    match x.cmp(&0) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Equal => 0,
        std::cmp::Ordering::Less => -1,
    }
}

/// Exact integer evaluation of a statistic with the sign kernel on ranks.
pub fn evaluate_sign_ranks(stat: StatKind, ranks: &[i64]) -> i64 {
    let n = ranks.len();
    let f = |a: usize, b: usize| isgn(ranks[a] - ranks[b]);
    match stat {
        StatKind::Classic => {
            let mut acc = 0;
            for a in 0..n {
                for b in (a + 1)..n {
                    acc += f(a, b);
                }
            }
            acc
        }
        StatKind::FullPairs => 0, // each ordered pair cancels its reverse
        StatKind::Cyclic => {
            let span = cyclic_span(n);
            let mut acc = 0;
            for a in 0..n {
                for j in 1..=span {
                    acc += f(a, (a + j) % n);
                }
            }
            acc
        }
        StatKind::CyclicSym => 2 * evaluate_sign_ranks(StatKind::Cyclic, ranks),
        StatKind::AltFirst => {
            let mut acc = 0;
            for a in 0..n {
                let s = if a % 2 == 0 { 1 } else { -1 };
                for b in (a + 1)..n {
                    acc += s * f(a, b);
                }
            }
            acc
        }
        StatKind::AltSecond => {
            let mut acc = 0;
            for b in 1..n {
                let s = if b % 2 == 1 { 1 } else { -1 };
                for a in 0..b {
                    acc += s * f(a, b);
                }
            }
            acc
        }
        StatKind::BiAlt => {
            let mut acc = 0;
            for a in 0..n {
                for b in (a + 1)..n {
                    let s = if (a + b) % 2 == 0 { 1 } else { -1 };
                    acc += s * f(a, b);
                }
            }
            acc
        }
    }
}

/// Evaluate a statistic with the sign kernel on a permutation of `1..=n`,
/// exactly in integer arithmetic. The cyclic case is the writhe, `alt-first`
/// the alternating inversion number, `bialt` the bi-alternating one.
pub fn permutation_statistic(stat: StatKind, sigma: &[usize]) -> Result<i64> {
    let n = sigma.len();
    if n < 2 {
        return Err(UstatError::TooFewPoints { need: 2, got: n });
    }
    let mut seen = vec![false; n + 1];
    for &v in sigma {
        if v == 0 || v > n || seen[v] {
            return Err(UstatError::NotAPermutation);
        }
        seen[v] = true;
    }
    let ranks: Vec<i64> = sigma.iter().map(|&v| v as i64).collect();
    Ok(evaluate_sign_ranks(stat, &ranks))
}

/// Exact distribution of a sign-kernel statistic over all of `S_n`
/// (multiset of values with counts). Capped at `n <= 9`.
pub fn exact_permutation_distribution(stat: StatKind, n: usize) -> Result<BTreeMap<i64, u64>> {
    if n > 9 {
        return Err(UstatError::EnumerationTooLarge(n));
    }
    if n < 2 {
        return Err(UstatError::TooFewPoints { need: 2, got: n });
    }
    let mut perm: Vec<i64> = (1..=n as i64).collect();
    let mut counts = BTreeMap::new();
    let record = |p: &[i64], map: &mut BTreeMap<i64, u64>| {
        *map.entry(evaluate_sign_ranks(stat, p)).or_insert(0) += 1;
    };
    // Heap's algorithm, iterative form
    record(&perm, &mut counts);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            record(&perm, &mut counts);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Fast paths
// ---------------------------------------------------------------------------

/// Coordinate selector of a separable factor.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Select {
    ScalarVal,
    PairFirst,
    PairSecond,
}

/// One side of a rank-one term `a(x) b(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Factor {
    coef: f64,
    select: Select,
}

impl Factor {
    #[inline]
    pub(crate) fn eval(&self, p: &Point) -> f64 {
        let v = match (self.select, p) {
            (Select::ScalarVal, Point::Scalar(x)) => *x,
            (Select::PairFirst, Point::Pair(x, _)) => *x,
            (Select::PairSecond, Point::Pair(_, y)) => *y,
            _ => f64::NAN,
        };
        self.coef * v
    }

    fn scaled(self, c: f64) -> Factor {
        Factor { coef: c * self.coef, ..self }
    }
}

/// Structure a kernel must expose for `evaluate_fast` to accept it.
#[derive(Clone, Debug, PartialEq)]
pub enum FastForm {
    /// `c * sgn(x - y)` on scalar data.
    ScaledSign(f64),
    /// `sum_c a_c(x) b_c(y)`.
    Separable(Vec<(Factor, Factor)>),
}

/// Extract the declared factorization of a kernel, if it has one.
pub fn fast_form(kernel: &KernelSpec) -> Option<FastForm> {
    fast_form_expr(kernel.expr())
}

fn fast_form_expr(expr: &KernelExpr) -> Option<FastForm> {
    let unit = |select| Factor { coef: 1.0, select };
    match expr {
        KernelExpr::Sign => Some(FastForm::ScaledSign(1.0)),
        KernelExpr::Product => Some(FastForm::Separable(vec![(
            unit(Select::ScalarVal),
            unit(Select::ScalarVal),
        )])),
        KernelExpr::Bilinear => Some(FastForm::Separable(vec![(
            unit(Select::PairFirst),
            unit(Select::PairSecond),
        )])),
        KernelExpr::Scale(c, inner) => Some(match fast_form_expr(inner)? {
            FastForm::ScaledSign(d) => FastForm::ScaledSign(c * d),
            FastForm::Separable(fs) => {
                FastForm::Separable(fs.into_iter().map(|(a, b)| (a.scaled(*c), b)).collect())
            }
        }),
        KernelExpr::Swap(inner) => Some(match fast_form_expr(inner)? {
            FastForm::ScaledSign(d) => FastForm::ScaledSign(-d),
            FastForm::Separable(fs) => {
                FastForm::Separable(fs.into_iter().map(|(a, b)| (b, a)).collect())
            }
        }),
        KernelExpr::SymPart(inner) => Some(match fast_form_expr(inner)? {
            FastForm::ScaledSign(_) => FastForm::Separable(Vec::new()), // identically zero
            FastForm::Separable(fs) => {
                let mut out = Vec::with_capacity(2 * fs.len());
                for (a, b) in fs {
                    out.push((a.scaled(0.5), b));
                    out.push((b.scaled(0.5), a));
                }
                FastForm::Separable(out)
            }
        }),
        KernelExpr::AntisymPart(inner) => Some(match fast_form_expr(inner)? {
            FastForm::ScaledSign(d) => FastForm::ScaledSign(d),
            FastForm::Separable(fs) => {
                let mut out = Vec::with_capacity(2 * fs.len());
                for (a, b) in fs {
                    out.push((a.scaled(0.5), b));
                    out.push((b.scaled(-0.5), a));
                }
                FastForm::Separable(out)
            }
        }),
        KernelExpr::Sum(lhs, rhs) => match (fast_form_expr(lhs)?, fast_form_expr(rhs)?) {
            (FastForm::ScaledSign(c), FastForm::ScaledSign(d)) => Some(FastForm::ScaledSign(c + d)),
            (FastForm::Separable(mut a), FastForm::Separable(b)) => {
                a.extend(b);
                Some(FastForm::Separable(a))
            }
            _ => None,
        },
    }
}

/// A Fenwick tree over value ranks, counting inserted elements.
pub(crate) struct Fenwick {
    tree: Vec<i64>,
    total: i64,
}

impl Fenwick {
    pub(crate) fn new(size: usize) -> Self {
        Fenwick { tree: vec![0; size + 1], total: 0 }
    }

    pub(crate) fn insert(&mut self, mut rank: usize) {
        while rank < self.tree.len() {
            self.tree[rank] += 1;
            rank += rank & rank.wrapping_neg();
        }
        self.total += 1;
    }

    /// Count of inserted elements with rank `<= rank`.
    fn le(&self, mut rank: usize) -> i64 {
        let mut acc = 0;
        while rank > 0 {
            acc += self.tree[rank];
            rank -= rank & rank.wrapping_neg();
        }
        acc
    }

    /// `#{greater} - #{less}` among inserted elements, for a query rank.
    #[inline]
    pub(crate) fn sign_balance(&self, rank: usize) -> i64 {
        let le = self.le(rank);
        let lt = self.le(rank - 1);
        (self.total - le) - lt
    }
}

/// Dense ranks in `1..=R`, ties sharing a rank.
pub(crate) fn compress_ranks(values: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0usize; values.len()];
    let mut r = 0usize;
    let mut prev = f64::NAN;
    for &idx in &order {
        if values[idx] != prev {
            r += 1;
            prev = values[idx];
        }
        ranks[idx] = r;
    }
    (ranks, r)
}

/// `sum_{k<l} sgn(x_k - x_l)` and its alternating variants, via one sweep
/// with parity-stratified Fenwick counters.
fn sign_sweep(stat: StatKind, ranks: &[usize], universe: usize) -> i64 {
    let _n = ranks.len();
    let mut even = Fenwick::new(universe); // indices with even 0-based position
    let mut odd = Fenwick::new(universe);
    let mut acc = 0i64;
    for (pos, &r) in ranks.iter().enumerate() {
        let be = even.sign_balance(r);
        let bo = odd.sign_balance(r);
        acc += match stat {
            StatKind::Classic => be + bo,
            // (-1)^{i+1} = +1 for odd 1-based i, i.e. even 0-based position
            StatKind::AltFirst => be - bo,
            // (-1)^j = +1 for even 1-based j, i.e. odd 0-based position
            StatKind::AltSecond => {
                let s = if pos % 2 == 1 { 1 } else { -1 };
                s * (be + bo)
            }
            // (-1)^{i+j} = (-1)^{pos_i + pos_j}
            StatKind::BiAlt => {
                let s = if pos % 2 == 0 { 1 } else { -1 };
                s * (be - bo)
            }
            _ => unreachable!(),
        };
        if pos % 2 == 0 {
            even.insert(r);
        } else {
            odd.insert(r);
        }
    }
    acc
}

/// Cyclic signed sum: all pairs minus twice the far pairs minus the even-n
/// diameter terms.
fn cyclic_sign_sum(ranks: &[usize], universe: usize) -> i64 {
    let n = ranks.len();
    let all = sign_sweep(StatKind::Classic, ranks, universe);
    // far pairs: 1-based l-k > n/2, i.e. 0-based k <= l - (floor(n/2)+1)
    let offset = n / 2 + 1;
    let mut far = 0i64;
    let mut bit = Fenwick::new(universe);
    for l in 0..n {
        if l >= offset {
            bit.insert(ranks[l - offset]);
        }
        far += bit.sign_balance(ranks[l]);
    }
    let mut diam = 0i64;
    if n % 2 == 0 {
        let h = n / 2;
        for k in 0..h {
            diam += isgn(ranks[k] as i64 - ranks[k + h] as i64);
        }
    }
    all - 2 * far - diam
}

fn scalar_values(data: &[Point]) -> Result<Vec<f64>> {
    data.iter()
        .map(|p| p.scalar().ok_or(UstatError::UnsupportedKernel))
        .collect()
}

/// Fast evaluation: `O(n log n)` for sign kernels via rank counters,
/// `O(Cn)` for separable kernels via prefix/window sums. Errors with
/// `UnsupportedKernel` when no fast path applies; falling back to
/// [`evaluate`] is the caller's decision.
pub fn evaluate_fast(stat: StatKind, kernel: &KernelSpec, data: &[Point]) -> Result<f64> {
    validate_data(kernel, data)?;
    match fast_form(kernel).ok_or(UstatError::UnsupportedKernel)? {
        FastForm::ScaledSign(c) => {
            let values = scalar_values(data)?;
            let (ranks, universe) = compress_ranks(&values);
            let raw = match stat {
                StatKind::Classic | StatKind::AltFirst | StatKind::AltSecond | StatKind::BiAlt => {
                    sign_sweep(stat, &ranks, universe)
                }
                StatKind::Cyclic => cyclic_sign_sum(&ranks, universe),
                StatKind::CyclicSym => 2 * cyclic_sign_sum(&ranks, universe),
                StatKind::FullPairs => 0,
            };
            Ok(c * raw as f64)
        }
        FastForm::Separable(factors) => Ok(separable_value(stat, &factors, data)),
    }
}

fn separable_value(stat: StatKind, factors: &[(Factor, Factor)], data: &[Point]) -> f64 {
    let n = data.len();
    match stat {
        StatKind::Classic => {
            let mut acc = 0.0;
            let mut lead = vec![0.0; factors.len()];
            for p in data {
                for (c, (a, b)) in factors.iter().enumerate() {
                    acc += b.eval(p) * lead[c];
                    lead[c] += a.eval(p);
                }
            }
            acc
        }
        StatKind::FullPairs => {
            let doubled: Vec<(Factor, Factor)> = factors
                .iter()
                .flat_map(|&(a, b)| [(a, b), (b, a)])
                .collect();
            separable_value(StatKind::Classic, &doubled, data)
        }
        StatKind::AltSecond => {
            let mut acc = 0.0;
            let mut lead = vec![0.0; factors.len()];
            for (pos, p) in data.iter().enumerate() {
                let s = if pos % 2 == 1 { 1.0 } else { -1.0 };
                for (c, (a, b)) in factors.iter().enumerate() {
                    acc += s * b.eval(p) * lead[c];
                    lead[c] += a.eval(p);
                }
            }
            acc
        }
        StatKind::AltFirst => {
            let mut acc = 0.0;
            let mut lead = vec![[0.0; 2]; factors.len()];
            for (pos, p) in data.iter().enumerate() {
                for (c, (a, b)) in factors.iter().enumerate() {
                    acc += b.eval(p) * (lead[c][0] - lead[c][1]);
                    lead[c][pos % 2] += a.eval(p);
                }
            }
            acc
        }
        StatKind::BiAlt => {
            let mut acc = 0.0;
            let mut lead = vec![[0.0; 2]; factors.len()];
            for (pos, p) in data.iter().enumerate() {
                let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
                for (c, (a, b)) in factors.iter().enumerate() {
                    acc += s * b.eval(p) * (lead[c][0] - lead[c][1]);
                    lead[c][pos % 2] += a.eval(p);
                }
            }
            acc
        }
        StatKind::Cyclic => {
            let span = cyclic_span(n);
            let mut acc = 0.0;
            for (a, b) in factors {
                let bv: Vec<f64> = data.iter().map(|p| b.eval(p)).collect();
                let mut window: f64 = bv[1..=span].iter().sum();
                for i in 0..n {
                    acc += a.eval(&data[i]) * window;
                    // slide: drop b(x_{i+1}), add b(x_{i+span+1})
                    window -= bv[(i + 1) % n];
                    window += bv[(i + span + 1) % n];
                }
            }
            acc
        }
        StatKind::CyclicSym => {
            let minus_swapped: Vec<(Factor, Factor)> = factors
                .iter()
                .flat_map(|&(a, b)| [(a, b), (b.scaled(-1.0), a)])
                .collect();
            separable_value(StatKind::Cyclic, &minus_swapped, data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{builtin, SpaceSpec};
    use crate::rng::Stream;

    fn scalars(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::Scalar(x)).collect()
    }

    fn sign_unit() -> KernelSpec {
        builtin::sign(SpaceSpec::UnitInterval).unwrap()
    }

    fn product_unit() -> KernelSpec {
        builtin::product(SpaceSpec::UnitInterval).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        // writhe of the identity in S_3
        let ranks = scalars(&[1.0, 2.0, 3.0]);
        let sign = builtin::sign(SpaceSpec::RankOrdinal(3)).unwrap();
        assert_eq!(evaluate(StatKind::Cyclic, &sign, &ranks).unwrap(), -1.0);
        // zero inversions: U_3 = -3
        assert_eq!(evaluate(StatKind::Classic, &sign, &ranks).unwrap(), -3.0);
        // one-term bi-alternating sum, sign (-1)^{1+2}
        let prod = product_unit();
        let two = scalars(&[0.3, 0.7]);
        assert_eq!(evaluate(StatKind::BiAlt, &prod, &two).unwrap(), -0.21);
        // the cyclic inner range is empty at n = 2
        assert_eq!(evaluate(StatKind::Cyclic, &prod, &two).unwrap(), 0.0);
        assert!(matches!(
            evaluate(StatKind::Classic, &prod, &scalars(&[0.5])),
            Err(UstatError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn exact_mean_formulas() {
        assert_eq!(exact_mean(StatKind::Cyclic, 5, 0.25).unwrap(), 2.5);
        assert_eq!(exact_mean(StatKind::BiAlt, 5, 0.25).unwrap(), -0.5);
        assert_eq!(exact_mean(StatKind::AltSecond, 4, 0.25).unwrap(), 0.5);
        assert_eq!(exact_mean(StatKind::AltSecond, 5, 0.25).unwrap(), -0.5);
        assert_eq!(exact_mean(StatKind::AltFirst, 5, 0.25).unwrap(), 0.5);
        assert_eq!(exact_mean(StatKind::Classic, 5, 0.25).unwrap(), 2.5);
        assert_eq!(exact_mean(StatKind::FullPairs, 5, 0.25).unwrap(), 5.0);
    }

    /// Average each statistic of the product kernel over all 32 Bernoulli(1/2)
    /// data vectors of length 5; dyadic values make the comparison exact.
    #[test]
    fn exact_mean_matches_exhaustive_bernoulli_enumeration() {
        let prod = builtin::product(SpaceSpec::DiscreteAtoms {
            values: vec![0.0, 1.0],
            probs: vec![0.5, 0.5],
        })
        .unwrap();
        let n = 5;
        for stat in StatKind::ALL {
            let mut total = 0.0;
            for bits in 0u32..(1 << n) {
                let data: Vec<Point> =
                    (0..n).map(|i| Point::Scalar(((bits >> i) & 1) as f64)).collect();
                total += evaluate(stat, &prod, &data).unwrap();
            }
            let mean = total / (1 << n) as f64;
            assert_eq!(
                mean,
                exact_mean(stat, n, 0.25).unwrap(),
                "mean mismatch for {stat}"
            );
        }
    }

    #[test]
    fn degenerate_variance_formulas() {
        let vc = VarianceComponents {
            var_f1: 0.0,
            var_f2: 0.0,
            cov_f1f2: 0.0,
            var_f12: 1.0 / 3.0,
            var_f1_plus_f2: 0.0,
            var_f: 1.0 / 3.0,
        };
        let v = exact_degenerate_variance(StatKind::Cyclic, 5, &vc, Regime::Degenerate, true)
            .unwrap();
        assert!((v.value - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(v.exactness, VarianceExactness::Exact);
        let v = exact_degenerate_variance(StatKind::Cyclic, 3, &vc, Regime::Degenerate, true)
            .unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);

        let rademacher_xy = VarianceComponents {
            var_f1: 0.0,
            var_f2: 0.0,
            cov_f1f2: 0.0,
            var_f12: 1.0,
            var_f1_plus_f2: 0.0,
            var_f: 1.0,
        };
        let v = exact_degenerate_variance(
            StatKind::Classic,
            10,
            &rademacher_xy,
            Regime::Degenerate,
            true,
        )
        .unwrap();
        assert_eq!(v.value, 45.0);

        let v = exact_degenerate_variance(StatKind::BiAlt, 8, &rademacher_xy, Regime::Degenerate, true)
            .unwrap();
        assert_eq!(v.value, 32.0);
        assert_eq!(v.exactness, VarianceExactness::AsymptoticLeading);

        assert!(matches!(
            exact_degenerate_variance(StatKind::Classic, 10, &vc, Regime::Nondegenerate, true),
            Err(UstatError::RegimeMismatch)
        ));
    }

    #[test]
    fn cyclic_variance_formula_matches_enumeration_over_s5() {
        // sum of writhe and of its square over all of S_5, in exact integers
        let dist = exact_permutation_distribution(StatKind::Cyclic, 5).unwrap();
        let mut sum = 0i64;
        let mut sum_sq = 0i64;
        let mut count = 0u64;
        for (&v, &c) in &dist {
            sum += v * c as i64;
            sum_sq += v * v * c as i64;
            count += c;
        }
        assert_eq!(count, 120);
        assert_eq!(sum, 0);
        // Var = sum_sq/120 must equal 5*2*(1/3) = 10/3, i.e. sum_sq = 400
        assert_eq!(sum_sq, 400);
    }

    #[test]
    fn permutation_statistics_examples() {
        assert_eq!(permutation_statistic(StatKind::Cyclic, &[1, 2, 3]).unwrap(), -1);
        assert!(permutation_statistic(StatKind::Cyclic, &[1, 1, 3]).is_err());
        assert!(permutation_statistic(StatKind::Cyclic, &[1, 2, 4]).is_err());

        let u3 = exact_permutation_distribution(StatKind::Classic, 3).unwrap();
        let expected: BTreeMap<i64, u64> = [(-3, 1), (-1, 2), (1, 2), (3, 1)].into_iter().collect();
        assert_eq!(u3, expected);

        let bialt3 = exact_permutation_distribution(StatKind::BiAlt, 3).unwrap();
        let cyc3 = exact_permutation_distribution(StatKind::Cyclic, 3).unwrap();
        let pm: BTreeMap<i64, u64> = [(-1, 3), (1, 3)].into_iter().collect();
        assert_eq!(bialt3, pm);
        assert_eq!(cyc3, pm);
    }

    #[test]
    fn pair_lift_identities() {
        let mut rng = Stream::new(5);
        // cyclic pairing on rank data: exact integers
        let sign = builtin::sign(SpaceSpec::RankOrdinal(8)).unwrap();
        for _ in 0..50 {
            let mut perm: Vec<i64> = (1..=8).collect();
            // Fisher-Yates
            for i in (1..8).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                perm.swap(i, j);
            }
            let data: Vec<Point> = perm.iter().map(|&r| Point::Scalar(r as f64)).collect();
            let lift = pair_lift(&sign, PairLiftVariant::Cyclic, &data).unwrap();
            let direct = evaluate(StatKind::Cyclic, &sign, &data).unwrap();
            assert_eq!(lift.reconstruct(), direct);
            assert_eq!(lift.correction(), 0.0);
        }

        // bi-alternating pairing with the product kernel on reals
        let prod = product_unit();
        let data: Vec<Point> = (0..6).map(|_| Point::Scalar(rng.next_f64())).collect();
        let lift = pair_lift(&prod, PairLiftVariant::BiAlt, &data).unwrap();
        let direct = evaluate(StatKind::BiAlt, &prod, &data).unwrap();
        assert!((lift.reconstruct() - direct).abs() < 1e-12);

        // second-index alternating pairing with the bilinear kernel on R^2
        let rad2 = SpaceSpec::product(SpaceSpec::Rademacher, SpaceSpec::Rademacher).unwrap();
        let bil = builtin::bilinear(rad2).unwrap();
        let data: Vec<Point> = (0..8)
            .map(|_| {
                let s = |b: bool| if b { 1.0 } else { -1.0 };
                Point::Pair(s(rng.next_u64() & 1 == 0), s(rng.next_u64() & 1 == 0))
            })
            .collect();
        let lift = pair_lift(&bil, PairLiftVariant::AltSecond, &data).unwrap();
        let direct = evaluate(StatKind::AltSecond, &bil, &data).unwrap();
        assert!((lift.reconstruct() - direct).abs() < 1e-12);

        assert!(pair_lift(&prod, PairLiftVariant::BiAlt, &scalars(&[0.1, 0.2, 0.3])).is_err());
    }

    #[test]
    fn fast_paths_match_naive_evaluation() {
        let mut rng = Stream::new(17);
        let sign = sign_unit();
        let prod = product_unit();
        let data: Vec<Point> = (0..500).map(|_| Point::Scalar(rng.next_f64())).collect();

        for stat in StatKind::ALL {
            let naive = evaluate(stat, &sign, &data).unwrap();
            let fast = evaluate_fast(stat, &sign, &data).unwrap();
            assert_eq!(fast, naive, "sign kernel, {stat}");

            let naive = evaluate(stat, &prod, &data).unwrap();
            let fast = evaluate_fast(stat, &prod, &data).unwrap();
            let scale = naive.abs().max(1.0);
            assert!((fast - naive).abs() / scale < 1e-9, "product kernel, {stat}");
        }

        // ties must agree too (discrete data)
        let tied: Vec<Point> =
            (0..200).map(|_| Point::Scalar((rng.next_u64() % 5) as f64)).collect();
        for stat in [StatKind::Classic, StatKind::Cyclic, StatKind::AltFirst, StatKind::BiAlt] {
            assert_eq!(
                evaluate_fast(stat, &sign, &tied).unwrap(),
                evaluate(stat, &sign, &tied).unwrap(),
                "tied data, {stat}"
            );
        }

        // U_n(xy) = ((sum x)^2 - sum x^2)/2
        let xs: Vec<f64> = data.iter().map(|p| p.scalar().unwrap()).collect();
        let sum: f64 = xs.iter().sum();
        let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
        let closed = (sum * sum - sum_sq) / 2.0;
        let fast = evaluate_fast(StatKind::Classic, &prod, &data).unwrap();
        assert!((fast - closed).abs() < 1e-9 * closed.abs().max(1.0));

        // no fast path for sign + product mixtures
        let mixed = KernelSpec::new(
            KernelExpr::Sum(Box::new(KernelExpr::Sign), Box::new(KernelExpr::Product)),
            SpaceSpec::UnitInterval,
        )
        .unwrap();
        assert!(matches!(
            evaluate_fast(StatKind::Classic, &mixed, &data),
            Err(UstatError::UnsupportedKernel)
        ));
    }

    #[test]
    fn fast_path_handles_large_sign_input() {
        let mut rng = Stream::new(23);
        let sign = sign_unit();
        let data: Vec<Point> = (0..100_000).map(|_| Point::Scalar(rng.next_f64())).collect();
        let full = evaluate_fast(StatKind::Classic, &sign, &data).unwrap();
        assert!(full.abs() < binom2(100_000));
        // cross-check on a prefix against the quadratic evaluator
        let prefix = &data[..2000];
        assert_eq!(
            evaluate_fast(StatKind::Classic, &sign, prefix).unwrap(),
            evaluate(StatKind::Classic, &sign, prefix).unwrap()
        );
        assert_eq!(
            evaluate_fast(StatKind::Cyclic, &sign, prefix).unwrap(),
            evaluate(StatKind::Cyclic, &sign, prefix).unwrap()
        );
    }

    #[test]
    fn separable_sym_part_of_bilinear() {
        let rad2 = SpaceSpec::product(SpaceSpec::Rademacher, SpaceSpec::Rademacher).unwrap();
        let fs = builtin::bilinear(rad2).unwrap().symmetric_part();
        let mut rng = Stream::new(29);
        let data: Vec<Point> = (0..300)
            .map(|_| {
                let s = |b: bool| if b { 1.0 } else { -1.0 };
                Point::Pair(s(rng.next_u64() & 1 == 0), s(rng.next_u64() & 1 == 0))
            })
            .collect();
        for stat in [StatKind::Classic, StatKind::AltSecond, StatKind::Cyclic] {
            let naive = evaluate(stat, &fs, &data).unwrap();
            let fast = evaluate_fast(stat, &fs, &data).unwrap();
            assert!((fast - naive).abs() < 1e-10, "{stat}: {fast} vs {naive}");
        }
    }
}
