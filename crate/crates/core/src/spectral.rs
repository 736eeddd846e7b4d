//! Nystrom discretization of the integral operators behind the degenerate
//! limit laws, eigenvalue extraction, the analytic spectrum catalog, and the
//! theorem decision tree that turns Hoeffding parts into a [`MixtureLaw`].
//!
//! Discretization is weight-symmetrized: the operator `T_K` on a grid with
//! weights `w` becomes the matrix `sqrt(w_i) K(x_i, x_j) sqrt(w_j)`, so
//! symmetric kernels give exactly symmetric matrices and antisymmetric
//! kernels exactly antisymmetric ones. Symmetric eigenvalues come from
//! cyclic Jacobi rotations; anti-self-adjoint spectra (`+-i lambda` pairs)
//! come from the singular values of the real antisymmetric matrix, computed
//! through the symmetric eigendecomposition of `M^T M` — the pairing of
//! singular values is a theorem for real antisymmetric matrices and is
//! verified, not assumed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::hoeffding::{HoeffdingParts, MeasureGrid, MeasureSpec, Regime, VarianceComponents};
use crate::kernels::{Lift, PairFn, Symmetry};
use crate::limitlaws::{MixtureLaw, Parity, ScaleExponent};
use crate::linalg::{jacobi_eigenvalues, Dense};
use crate::ustats::StatKind;
use crate::{Result, UstatError};

const SIDE_CAP: usize = 8192;
const STRUCTURE_TOL: f64 = 1e-12;
const JACOBI_OFF_TOL: f64 = 1e-12;
/// Eigenvalues below this are reported as zero.
pub const DROP_TOL: f64 = 1e-8;
/// At most this many eigenvalues are reported; the rest feed the tail.
pub const REPORT_CAP: usize = 64;

/// Structural class of a discretized operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureTag {
    Symmetric,
    Antisymmetric,
    BlockSymmetric,
}

/// A weight-symmetrized kernel matrix with verified structure.
pub struct NystromMatrix {
    data: Dense,
    structure: StructureTag,
}

impl NystromMatrix {
    pub fn side(&self) -> usize {
        self.data.n
    }

    pub fn structure(&self) -> StructureTag {
        self.structure
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data.get(i, j)
    }

    /// Squared Frobenius norm; approximates the squared Hilbert-Schmidt norm
    /// of the operator.
    pub fn frobenius_sq(&self) -> f64 {
        let f = self.data.frobenius();
        f * f
    }

    fn verify(data: Dense, structure: StructureTag) -> Result<NystromMatrix> {
        let ok = match structure {
            StructureTag::Symmetric | StructureTag::BlockSymmetric => {
                data.max_asym() < STRUCTURE_TOL
            }
            StructureTag::Antisymmetric => data.max_skew_defect() < STRUCTURE_TOL,
        };
        if !ok {
            return Err(UstatError::StructureMismatch);
        }
        Ok(NystromMatrix { data, structure })
    }
}

fn check_side(side: usize) -> Result<()> {
    if side > SIDE_CAP {
        return Err(UstatError::DimensionOverflow(side));
    }
    Ok(())
}

/// Unweighted kernel values on a grid.
fn base_matrix(kernel: &dyn PairFn, grid: &MeasureGrid) -> Dense {
    let pts = &grid.points;
    Dense::from_fn(pts.len(), |i, j| kernel.eval(&pts[i], &pts[j]))
}

fn weighted(base: &Dense, weights: &[f64], structure: StructureTag) -> Result<NystromMatrix> {
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let data = Dense::from_fn(base.n, |i, j| sq[i] * base.get(i, j) * sq[j]);
    NystromMatrix::verify(data, structure)
}

/// Plain operator `T_K` on the measure grid.
pub fn nystrom_plain(
    kernel: &dyn PairFn,
    grid: &MeasureGrid,
    structure: StructureTag,
) -> Result<NystromMatrix> {
    check_side(grid.len())?;
    weighted(&base_matrix(kernel, grid), &grid.weights, structure)
}

fn lifted_from_base(
    base: &Dense,
    weights: &[f64],
    m_t: usize,
    lift: Lift,
) -> Result<NystromMatrix> {
    let g = base.n;
    let side = g * m_t;
    check_side(side)?;
    let wt = 1.0 / m_t as f64;
    let sq: Vec<f64> = weights.iter().map(|w| (w * wt).sqrt()).collect();
    let sign = match lift {
        Lift::Hat => 1.0,
        Lift::Check => -1.0,
    };
    // node (i, a) -> index i * m_t + a; the auxiliary nodes are midpoints of
    // [0,1], so t_a < t_b iff a < b
    let data = Dense::from_fn(side, |r, c| {
        let (i, a) = (r / m_t, r % m_t);
        let (j, b) = (c / m_t, c % m_t);
        let v = if a < b {
            base.get(i, j)
        } else if a > b {
            sign * base.get(j, i)
        } else {
            0.0
        };
        sq[i] * v * sq[j]
    });
    let tag = match lift {
        Lift::Hat => StructureTag::Symmetric,
        Lift::Check => StructureTag::Antisymmetric,
    };
    NystromMatrix::verify(data, tag)
}

/// Hat or check lift of a kernel, discretized on `grid x [0,1]` with `m_t`
/// midpoint nodes on the auxiliary coordinate.
pub fn nystrom_lifted(
    kernel: &dyn PairFn,
    grid: &MeasureGrid,
    m_t: usize,
    lift: Lift,
) -> Result<NystromMatrix> {
    if m_t < 2 {
        return Err(UstatError::BadResolution(m_t));
    }
    check_side(grid.len().saturating_mul(m_t))?;
    lifted_from_base(&base_matrix(kernel, grid), &grid.weights, m_t, lift)
}

fn block_from_base(base: &Dense, weights: &[f64], m_t: usize) -> Result<NystromMatrix> {
    let g = base.n;
    let half = g * m_t;
    let side = 2 * half;
    check_side(side)?;
    let wt = 1.0 / m_t as f64;
    let sq: Vec<f64> = weights.iter().map(|w| (w * wt).sqrt()).collect();
    let hat = |i: usize, a: usize, j: usize, b: usize| {
        if a < b {
            base.get(i, j)
        } else if a > b {
            base.get(j, i)
        } else {
            0.0
        }
    };
    let check = |i: usize, a: usize, j: usize, b: usize| {
        if a < b {
            base.get(i, j)
        } else if a > b {
            -base.get(j, i)
        } else {
            0.0
        }
    };
    let data = Dense::from_fn(side, |r, c| {
        let (alpha, r0) = (r / half, r % half);
        let (beta, c0) = (c / half, c % half);
        let (i, a) = (r0 / m_t, r0 % m_t);
        let (j, b) = (c0 / m_t, c0 % m_t);
        let v = match (alpha, beta) {
            (0, 0) => -hat(i, a, j, b),
            (0, 1) => check(i, a, j, b),
            (1, 0) => -check(i, a, j, b),
            (1, 1) => hat(i, a, j, b),
            _ => unreachable!(),
        };
        0.5 * sq[i] * v * sq[j]
    });
    NystromMatrix::verify(data, StructureTag::BlockSymmetric)
}

/// The two-block operator `(1/2) [[-T_hat, T_check], [-T_check, T_hat]]`
/// of the alternating theorems, discretized for the given `f12` kernel.
pub fn nystrom_block(
    f12: &dyn PairFn,
    grid: &MeasureGrid,
    m_t: usize,
) -> Result<NystromMatrix> {
    if m_t < 2 {
        return Err(UstatError::BadResolution(m_t));
    }
    check_side(grid.len().saturating_mul(2 * m_t))?;
    block_from_base(&base_matrix(f12, grid), &grid.weights, m_t)
}

fn unit_block_operator(m_t: usize, diag_sign: bool) -> Result<NystromMatrix> {
    // nodes (t_a, block); block atoms carry mass 1 each
    let side = 2 * m_t;
    check_side(side)?;
    let sq = (1.0 / m_t as f64).sqrt();
    let sg = |a: usize, b: usize| {
        // sgn(u - t) at midpoints
        if b > a {
            1.0
        } else if b < a {
            -1.0
        } else {
            0.0
        }
    };
    let data = Dense::from_fn(side, |r, c| {
        let (alpha, a) = (r / m_t, r % m_t);
        let (beta, b) = (c / m_t, c % m_t);
        let v = if diag_sign {
            // Ha = (1/2) [[-sgn(u-t), 1], [-1, sgn(u-t)]]
            match (alpha, beta) {
                (0, 0) => -sg(a, b),
                (0, 1) => 1.0,
                (1, 0) => -1.0,
                (1, 1) => sg(a, b),
                _ => unreachable!(),
            }
        } else {
            // Hs = (1/2) [[-1, sgn(u-t)], [-sgn(u-t), 1]]
            match (alpha, beta) {
                (0, 0) => -1.0,
                (0, 1) => sg(a, b),
                (1, 0) => -sg(a, b),
                (1, 1) => 1.0,
                _ => unreachable!(),
            }
        };
        0.5 * sq * v * sq
    });
    let tag = if diag_sign { StructureTag::Antisymmetric } else { StructureTag::Symmetric };
    NystromMatrix::verify(data, tag)
}

/// The symmetric block kernel on `([0,1] x {1,2})^2` whose eigenvalues are
/// `+-2/((2k-1)pi)`.
pub fn nystrom_hs(m_t: usize) -> Result<NystromMatrix> {
    unit_block_operator(m_t, false)
}

/// Its antisymmetric counterpart, eigenvalues `+-2i/((2k-1)pi)`.
pub fn nystrom_ha(m_t: usize) -> Result<NystromMatrix> {
    unit_block_operator(m_t, true)
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

/// How the eigenvalue list is to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMode {
    /// Real eigenvalues of a self-adjoint operator.
    RealEigen,
    /// Positive `lambda_q` standing for the pair `+-i lambda_q` of an
    /// anti-self-adjoint operator.
    ImaginaryPairs,
}

/// Leading eigenvalues, ordered by decreasing magnitude.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub mode: SpectrumMode,
    pub values: Vec<f64>,
    /// Sum of squares of the values not reported (beyond the cap or under
    /// the drop tolerance), in the same per-value convention as `values`.
    pub tail_sum_sq: f64,
}

impl Spectrum {
    fn from_sorted(mode: SpectrumMode, mut values: Vec<f64>) -> Spectrum {
        values.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        let keep = values
            .iter()
            .take(REPORT_CAP)
            .take_while(|v| v.abs() >= DROP_TOL)
            .count();
        let tail_sum_sq = values[keep..].iter().map(|v| v * v).sum();
        values.truncate(keep);
        Spectrum { mode, values, tail_sum_sq }
    }

    /// Group near-equal values into (value, multiplicity) pairs.
    pub fn multiplicities(&self, tol: f64) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((rep, count)) if (v - *rep).abs() <= tol => *count += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// `sum lambda^2` including the tail, counting `+-i lambda` pairs twice.
    /// Comparable to the squared Hilbert-Schmidt norm of the kernel.
    pub fn hilbert_schmidt_sq(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum::<f64>() + self.tail_sum_sq;
        match self.mode {
            SpectrumMode::RealEigen => s,
            SpectrumMode::ImaginaryPairs => 2.0 * s,
        }
    }
}

/// Eigenvalues of a symmetric (or block-symmetric) Nystrom matrix.
pub fn eig_symmetric(m: &NystromMatrix) -> Result<Spectrum> {
    if !matches!(m.structure, StructureTag::Symmetric | StructureTag::BlockSymmetric) {
        return Err(UstatError::StructureMismatch);
    }
    let vals = jacobi_eigenvalues(m.data.clone(), JACOBI_OFF_TOL)?;
    Ok(Spectrum::from_sorted(SpectrumMode::RealEigen, vals))
}

/// Positive `lambda_q` with `+-i lambda_q` the eigenvalues of an
/// antisymmetric Nystrom matrix, via singular values with enforced pairing.
pub fn eig_antisymmetric(m: &NystromMatrix) -> Result<Spectrum> {
    if m.structure != StructureTag::Antisymmetric {
        return Err(UstatError::StructureMismatch);
    }
    let gram = m.data.gram();
    let mut sq = jacobi_eigenvalues(gram, JACOBI_OFF_TOL * JACOBI_OFF_TOL)?;
    sq.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut sigmas: Vec<f64> = sq.into_iter().map(|v| v.max(0.0).sqrt()).collect();
    sigmas.retain(|&s| s >= DROP_TOL);
    let mut lambdas = Vec::with_capacity(sigmas.len() / 2);
    let mut i = 0;
    while i < sigmas.len() {
        if i + 1 >= sigmas.len() {
            return Err(UstatError::UnpairedSingularValue(sigmas[i]));
        }
        let (a, b) = (sigmas[i], sigmas[i + 1]);
        if (a - b).abs() > 1e-6 * a.max(1.0) {
            return Err(UstatError::UnpairedSingularValue(a));
        }
        lambdas.push(0.5 * (a + b));
        i += 2;
    }
    Ok(Spectrum::from_sorted(SpectrumMode::ImaginaryPairs, lambdas))
}

// ---------------------------------------------------------------------------
// Analytic catalog
// ---------------------------------------------------------------------------

/// Operators whose spectra are known in closed form, used to validate the
/// Nystrom pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticCase {
    /// `sgn(t-u)` on `[0,1]`: `+-2i/((2k-1)pi)`, all simple.
    SignOperator,
    /// The writhe projection `sgn(x-y) - 2x + 2y` on `[0,1]`: `+-i/(pi k)`.
    WritheF12,
    /// The symmetric block kernel: `+-2/((2k-1)pi)`.
    HsBlock,
    /// The antisymmetric block kernel: `+-2i/((2k-1)pi)`.
    HaBlock,
    /// A rank-one projection `lambda phi(x)phi(y)`, `|phi| = 1`.
    RankOne { lambda: f64 },
    /// The bilinear kernel's hat operator: `2/((2k+1)pi)`, `k` over Z.
    Esj22,
    /// Hat operator of `s*2fs + tau*2fa` for the bilinear kernel:
    /// `+-2 tau/(omega0 + 2k pi)` with `omega0 = arccos(2ab/(a^2+b^2))`,
    /// `a = s+tau`, `b = s-tau`.
    Esj22Perturbed { s: f64, tau: f64 },
}

impl AnalyticCase {
    pub fn parse(id: &str, params: &[f64]) -> Result<AnalyticCase> {
        match id {
            "l3" => Ok(AnalyticCase::SignOperator),
            "writhe-f12" => Ok(AnalyticCase::WritheF12),
            "las" => Ok(AnalyticCase::HsBlock),
            "laa" => Ok(AnalyticCase::HaBlock),
            "e1" => Ok(AnalyticCase::RankOne { lambda: params.first().copied().unwrap_or(1.0) }),
            "esj22" => Ok(AnalyticCase::Esj22),
            "esj22-perturbed" => {
                if params.len() != 2 {
                    return Err(UstatError::Config(
                        "esj22-perturbed needs parameters s, tau".into(),
                    ));
                }
                Ok(AnalyticCase::Esj22Perturbed { s: params[0], tau: params[1] })
            }
            other => Err(UstatError::UnknownCase(other.to_string())),
        }
    }
}

/// First `count` eigenvalues of a catalog case, exactly, with the exact
/// squared tail.
pub fn analytic_spectrum(case: &AnalyticCase, count: usize) -> Result<Spectrum> {
    if count == 0 {
        return Err(UstatError::Config("need at least one eigenvalue".into()));
    }
    let finish = |mode: SpectrumMode, values: Vec<f64>, total_sq: f64| {
        let partial: f64 = values.iter().map(|v| v * v).sum();
        Spectrum { mode, values, tail_sum_sq: (total_sq - partial).max(0.0) }
    };
    Ok(match case {
        AnalyticCase::SignOperator | AnalyticCase::HaBlock => {
            let values: Vec<f64> =
                (1..=count).map(|k| 2.0 / ((2 * k - 1) as f64 * PI)).collect();
            finish(SpectrumMode::ImaginaryPairs, values, 0.5)
        }
        AnalyticCase::WritheF12 => {
            let values: Vec<f64> = (1..=count).map(|k| 1.0 / (PI * k as f64)).collect();
            finish(SpectrumMode::ImaginaryPairs, values, 1.0 / 6.0)
        }
        AnalyticCase::HsBlock | AnalyticCase::Esj22 => {
            let values: Vec<f64> = (0..count)
                .map(|i| {
                    let k = (i / 2 + 1) as f64;
                    let v = 2.0 / ((2.0 * k - 1.0) * PI);
                    if i % 2 == 0 {
                        v
                    } else {
                        -v
                    }
                })
                .collect();
            finish(SpectrumMode::RealEigen, values, 1.0)
        }
        AnalyticCase::RankOne { lambda } => Spectrum {
            mode: SpectrumMode::RealEigen,
            values: vec![*lambda],
            tail_sum_sq: 0.0,
        },
        AnalyticCase::Esj22Perturbed { s, tau } => {
            if *s == 0.0 || *tau == 0.0 {
                return Err(UstatError::Config(
                    "esj22-perturbed needs s*tau != 0; use esj22/las for the pure cases".into(),
                ));
            }
            let a = s + tau;
            let b = s - tau;
            let omega0 = (2.0 * a * b / (a * a + b * b)).acos();
            // denominators |omega0 + 2k pi| in increasing order: k = 0, -1, 1, -2, ...
            let mut values = Vec::with_capacity(count);
            let mut k = 0i64;
            'outer: loop {
                for kk in [k, -k - 1] {
                    let den = omega0 + 2.0 * kk as f64 * PI;
                    let v = (2.0 * tau / den).abs();
                    for sign in [1.0, -1.0] {
                        values.push(sign * v);
                        if values.len() == count {
                            break 'outer;
                        }
                    }
                }
                k += 1;
            }
            values.sort_by(|x, y| y.abs().partial_cmp(&x.abs()).unwrap());
            let half = 0.5 * omega0;
            let total = 2.0 * tau * tau / (half.sin() * half.sin());
            finish(SpectrumMode::RealEigen, values, total)
        }
    })
}

// ---------------------------------------------------------------------------
// Limit laws from the theorems
// ---------------------------------------------------------------------------

/// Grid sizes for operator discretization: `m_x` nodes per continuous factor
/// of the sample space, `m_t` nodes on the auxiliary `[0,1]` coordinate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectralResolution {
    pub m_x: usize,
    pub m_t: usize,
}

impl Default for SpectralResolution {
    fn default() -> Self {
        SpectralResolution { m_x: 400, m_t: 64 }
    }
}

/// `f12` tabulated on a spectral grid, reusing the projection's quadrature.
fn f12_base(parts: &HoeffdingParts, grid: &MeasureGrid) -> Dense {
    let mu = parts.mu();
    let f1: Vec<f64> = grid.points.iter().map(|p| parts.f1(p)).collect();
    let f2: Vec<f64> = grid.points.iter().map(|p| parts.f2(p)).collect();
    Dense::from_fn(grid.len(), |i, j| {
        parts.eval_kernel(&grid.points[i], &grid.points[j]) - mu - f1[i] - f2[j]
    })
}

fn symmetrized(base: &Dense, anti: bool) -> Dense {
    Dense::from_fn(base.n, |i, j| {
        if anti {
            0.5 * (base.get(i, j) - base.get(j, i))
        } else {
            0.5 * (base.get(i, j) + base.get(j, i))
        }
    })
}

/// True when the variance is below `tol`; an error when it falls inside the
/// guard band `[tol, 10 tol]`, where classification would be a coin flip.
fn vanishes(variance: f64, tol: f64) -> Result<bool> {
    if variance < tol {
        Ok(true)
    } else if variance <= 10.0 * tol {
        Err(UstatError::AmbiguousRegime { variance, tol, band: 10.0 * tol })
    } else {
        Ok(false)
    }
}

/// Guard-banded regime classification for one statistic.
pub fn classify_regime(stat: StatKind, vc: &VarianceComponents, tol: f64) -> Result<Regime> {
    let linear_gone = match stat {
        StatKind::Classic | StatKind::FullPairs => vanishes(vc.var_f1.max(vc.var_f2), tol)?,
        StatKind::Cyclic | StatKind::CyclicSym => vanishes(vc.var_f1_plus_f2, tol)?,
        StatKind::AltSecond => vanishes(vc.var_f2, tol)?,
        StatKind::AltFirst => vanishes(vc.var_f1, tol)?,
        StatKind::BiAlt => true,
    };
    if !linear_gone {
        return Ok(Regime::Nondegenerate);
    }
    let quadratic_gone = match stat {
        StatKind::AltFirst | StatKind::AltSecond | StatKind::BiAlt => {
            vanishes(vc.var_f12, tol)?
        }
        _ => false,
    };
    Ok(if quadratic_gone { Regime::DoublyDegenerate } else { Regime::Degenerate })
}

fn chi_law(spec: Spectrum) -> MixtureLaw {
    let tail = 0.5 * spec.tail_sum_sq;
    MixtureLaw {
        chi_coeffs: spec.values,
        scale_exponent: ScaleExponent::One,
        ..Default::default()
    }
    .with_gaussian_tail(tail)
}

fn eta_law(spec: Spectrum) -> MixtureLaw {
    let tail = spec.tail_sum_sq;
    MixtureLaw {
        eta_coeffs: spec.values,
        scale_exponent: ScaleExponent::One,
        ..Default::default()
    }
    .with_gaussian_tail(tail)
}

fn xeta_law(spec: Spectrum) -> MixtureLaw {
    let tail = 0.5 * spec.tail_sum_sq;
    MixtureLaw {
        xeta_coeffs: spec.values,
        scale_exponent: ScaleExponent::One,
        ..Default::default()
    }
    .with_gaussian_tail(tail)
}

/// The limit law of a statistic under the projected kernel, routed through
/// the appropriate theorem clause.
///
/// Degenerate chi-square / area / half-area coefficients come from Nystrom
/// spectra of the `f12`-derived operator the relevant theorem names;
/// eigenvalue mass beyond the report cap is folded into the Gaussian
/// component, keeping the law's variance faithful. `n_hint` selects the
/// parity-specific variance of the doubly degenerate bi-alternating clause
/// (even-n form when absent).
pub fn limit_law_from_theorem(
    stat: StatKind,
    parts: &HoeffdingParts,
    res: SpectralResolution,
    tol: f64,
    n_hint: Option<usize>,
) -> Result<MixtureLaw> {
    // the symmetrized variants reduce to cyclic/classic with a derived kernel
    match stat {
        StatKind::CyclicSym => {
            let f = parts.kernel_fn();
            let g = std::sync::Arc::new(move |x: &crate::kernels::Point, y: &crate::kernels::Point| {
                f.eval(x, y) - f.eval(y, x)
            });
            let reduced =
                crate::hoeffding::project_with(g, Symmetry::Antisymmetric, parts.measure(), parts.resolution())?;
            return limit_law_from_theorem(StatKind::Cyclic, &reduced, res, tol, n_hint);
        }
        StatKind::FullPairs => {
            let f = parts.kernel_fn();
            let g = std::sync::Arc::new(move |x: &crate::kernels::Point, y: &crate::kernels::Point| {
                f.eval(x, y) + f.eval(y, x)
            });
            let reduced =
                crate::hoeffding::project_with(g, Symmetry::Symmetric, parts.measure(), parts.resolution())?;
            return limit_law_from_theorem(StatKind::Classic, &reduced, res, tol, n_hint);
        }
        _ => {}
    }

    let vc = parts.variance_components();
    let regime = classify_regime(stat, &vc, tol)?;

    match regime {
        Regime::Nondegenerate => {
            let var = match stat {
                StatKind::Classic => (vc.var_f1 + vc.var_f2 + vc.cov_f1f2) / 3.0,
                StatKind::Cyclic => vc.var_f1_plus_f2 / 4.0,
                StatKind::AltSecond => vc.var_f2 / 3.0,
                StatKind::AltFirst => vc.var_f1 / 3.0,
                StatKind::BiAlt | StatKind::CyclicSym | StatKind::FullPairs => unreachable!(),
            };
            Ok(MixtureLaw::gaussian(var, ScaleExponent::ThreeHalves))
        }
        Regime::DoublyDegenerate => {
            let (var, parity) = match stat {
                StatKind::BiAlt => match n_hint.map(|n| n % 2) {
                    Some(1) => (0.5 * vc.var_f1_plus_f2, Some(Parity::Odd)),
                    _ => (0.5 * (vc.var_f1 + vc.var_f2), Some(Parity::Even)),
                },
                StatKind::AltSecond => (0.5 * vc.var_f1, None),
                StatKind::AltFirst => (0.5 * vc.var_f2, None),
                _ => unreachable!("only alternating statistics are doubly degenerate"),
            };
            let mut law = MixtureLaw::gaussian(var, ScaleExponent::Half);
            law.parity_tag = parity;
            Ok(law)
        }
        Regime::Degenerate => {
            let grid = parts.measure().grid(res.m_x)?;
            let base = f12_base(parts, &grid);
            let symmetry = parts.symmetry();
            let law: MixtureLaw = match stat {
                StatKind::Classic | StatKind::BiAlt => match symmetry {
                    Symmetry::Symmetric => {
                        let m = weighted(&base, &grid.weights, StructureTag::Symmetric)?;
                        chi_law(eig_symmetric(&m)?)
                    }
                    Symmetry::Antisymmetric => {
                        let m = weighted(&base, &grid.weights, StructureTag::Antisymmetric)?;
                        eta_law(eig_antisymmetric(&m)?)
                    }
                    Symmetry::General => {
                        let m = lifted_from_base(&base, &grid.weights, res.m_t, Lift::Hat)?;
                        chi_law(eig_symmetric(&m)?)
                    }
                },
                StatKind::Cyclic => {
                    // symmetric and antisymmetric parts of f12 decouple
                    let fs = symmetrized(&base, false);
                    let fa = symmetrized(&base, true);
                    let chi_spec = eig_symmetric(&weighted(
                        &fs,
                        &grid.weights,
                        StructureTag::Symmetric,
                    )?)?;
                    let eta_spec = eig_antisymmetric(&weighted(
                        &fa,
                        &grid.weights,
                        StructureTag::Antisymmetric,
                    )?)?;
                    let tail = 0.5 * chi_spec.tail_sum_sq + eta_spec.tail_sum_sq;
                    MixtureLaw {
                        chi_coeffs: chi_spec.values,
                        eta_coeffs: eta_spec.values,
                        scale_exponent: ScaleExponent::One,
                        ..Default::default()
                    }
                    .with_gaussian_tail(tail)
                }
                StatKind::AltSecond | StatKind::AltFirst => match symmetry {
                    Symmetry::Symmetric => {
                        let m = weighted(&base, &grid.weights, StructureTag::Symmetric)?;
                        xeta_law(eig_symmetric(&m)?)
                    }
                    Symmetry::Antisymmetric => {
                        let m = weighted(&base, &grid.weights, StructureTag::Antisymmetric)?;
                        eta_law(eig_antisymmetric(&m)?)
                    }
                    Symmetry::General => {
                        // the first-index variant's block operator is
                        // unitarily equivalent; same spectrum either way
                        let m = block_from_base(&base, &grid.weights, res.m_t)?;
                        chi_law(eig_symmetric(&m)?)
                    }
                },
                StatKind::CyclicSym | StatKind::FullPairs => unreachable!(),
            };
            // Every degenerate clause has Var W = Var(f12)/2; the Nystrom
            // matrix systematically misses the kernel's mass on the diagonal
            // band (where jump kernels evaluate mid-jump), so fold the
            // deficit into the Gaussian component to pin the law's variance
            // to the theorem value.
            let gap = (0.5 * vc.var_f12 - law.variance()).max(0.0);
            Ok(law.with_gaussian_tail(gap))
        }
    }
}

/// Operator selector for the `spectrum` CLI surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Plain,
    Hat,
    Check,
    Block,
    TcSym,
    TcAnti,
}

impl std::str::FromStr for OperatorKind {
    type Err = UstatError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => OperatorKind::Plain,
            "hat" => OperatorKind::Hat,
            "check" => OperatorKind::Check,
            "block" => OperatorKind::Block,
            "tc-sym" => OperatorKind::TcSym,
            "tc-anti" => OperatorKind::TcAnti,
            other => return Err(UstatError::Config(format!("unknown operator `{other}`"))),
        })
    }
}

/// Spectrum of one of the named operators of a kernel under a measure.
///
/// `plain`, `hat` and `check` act on the raw kernel (`plain` requires a
/// declared symmetry); `block`, `tc-sym` and `tc-anti` act on its `f12`
/// projection, computed with `m_q` quadrature nodes.
pub fn operator_spectrum(
    kernel: &crate::kernels::KernelSpec,
    nu: &MeasureSpec,
    op: OperatorKind,
    res: SpectralResolution,
    m_q: usize,
) -> Result<Spectrum> {
    let grid = nu.grid(res.m_x)?;
    let k = kernel.clone();
    let raw = move |x: &crate::kernels::Point, y: &crate::kernels::Point| k.eval_unchecked(x, y);
    match op {
        OperatorKind::Plain => match kernel.symmetry() {
            Symmetry::Symmetric => {
                eig_symmetric(&nystrom_plain(&raw, &grid, StructureTag::Symmetric)?)
            }
            Symmetry::Antisymmetric => {
                eig_antisymmetric(&nystrom_plain(&raw, &grid, StructureTag::Antisymmetric)?)
            }
            Symmetry::General => Err(UstatError::StructureMismatch),
        },
        OperatorKind::Hat => eig_symmetric(&nystrom_lifted(&raw, &grid, res.m_t, Lift::Hat)?),
        OperatorKind::Check => {
            eig_antisymmetric(&nystrom_lifted(&raw, &grid, res.m_t, Lift::Check)?)
        }
        OperatorKind::Block | OperatorKind::TcSym | OperatorKind::TcAnti => {
            let parts = crate::hoeffding::project(kernel, nu, m_q)?;
            let base = f12_base(&parts, &grid);
            match op {
                OperatorKind::Block => {
                    eig_symmetric(&block_from_base(&base, &grid.weights, res.m_t)?)
                }
                OperatorKind::TcSym => {
                    let fs = symmetrized(&base, false);
                    eig_symmetric(&weighted(&fs, &grid.weights, StructureTag::Symmetric)?)
                }
                OperatorKind::TcAnti => {
                    let fa = symmetrized(&base, true);
                    eig_antisymmetric(&weighted(&fa, &grid.weights, StructureTag::Antisymmetric)?)
                }
                _ => unreachable!(),
            }
        }
    }
}

/// `integral of k(x,y)^2` by staggered-grid quadrature (robust to jump
/// kernels on the diagonal).
pub fn kernel_hs_norm_sq(kernel: &dyn PairFn, nu: &MeasureSpec, m: usize) -> Result<f64> {
    let a = nu.grid(m)?;
    let b = nu.staggered_grid(m)?;
    let mut acc = 0.0;
    for (x, wx) in a.points.iter().zip(&a.weights) {
        for (y, wy) in b.points.iter().zip(&b.weights) {
            let v = kernel.eval(x, y);
            acc += wx * wy * v * v;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hoeffding::project;
    use crate::kernels::{builtin, Point, SpaceSpec};

    fn sign_kernel() -> crate::kernels::KernelSpec {
        builtin::sign(SpaceSpec::UnitInterval).unwrap()
    }

    fn rad2() -> MeasureSpec {
        MeasureSpec::product(MeasureSpec::Rademacher, MeasureSpec::Rademacher).unwrap()
    }

    #[test]
    fn sign_nystrom_is_antisymmetric() {
        let grid = MeasureSpec::Uniform01.grid(400).unwrap();
        let k = sign_kernel();
        let raw = move |x: &Point, y: &Point| k.eval_unchecked(x, y);
        let m = nystrom_plain(&raw, &grid, StructureTag::Antisymmetric).unwrap();
        assert_eq!(m.side(), 400);
        assert_eq!(m.structure(), StructureTag::Antisymmetric);
        // wrong expectation is flagged
        assert!(matches!(
            nystrom_plain(&raw, &grid, StructureTag::Symmetric),
            Err(UstatError::StructureMismatch)
        ));
    }

    #[test]
    fn rademacher_product_operator_is_exact() {
        let grid = MeasureSpec::Rademacher.grid(2).unwrap();
        let k = builtin::product(SpaceSpec::Rademacher).unwrap();
        let raw = move |x: &Point, y: &Point| k.eval_unchecked(x, y);
        let m = nystrom_plain(&raw, &grid, StructureTag::Symmetric).unwrap();
        assert_eq!(m.side(), 2);
        let spec = eig_symmetric(&m).unwrap();
        // single nonzero eigenvalue Var X = 1
        assert_eq!(spec.values.len(), 1);
        assert!((spec.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_kernel_has_single_unit_eigenvalue() {
        // 3xy on uniform [0,1]: the normalized eigenfunction sqrt(3) x gives
        // eigenvalue 1
        let grid = MeasureSpec::Uniform01.grid(200).unwrap();
        let raw = |x: &Point, y: &Point| 3.0 * x.scalar().unwrap() * y.scalar().unwrap();
        let m = nystrom_plain(&raw, &grid, StructureTag::Symmetric).unwrap();
        let spec = eig_symmetric(&m).unwrap();
        assert!((spec.values[0] - 1.0).abs() < 1e-4, "{}", spec.values[0]);
        assert!(spec.values.len() == 1 || spec.values[1].abs() < 1e-6);
    }

    #[test]
    fn sign_operator_spectrum_matches_catalog() {
        let spec = operator_spectrum(
            &sign_kernel(),
            &MeasureSpec::Uniform01,
            OperatorKind::Plain,
            SpectralResolution { m_x: 200, m_t: 2 },
            64,
        )
        .unwrap();
        assert_eq!(spec.mode, SpectrumMode::ImaginaryPairs);
        let analytic = analytic_spectrum(&AnalyticCase::SignOperator, 3).unwrap();
        for (got, want) in spec.values.iter().zip(&analytic.values) {
            assert!((got - want).abs() < 4e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn writhe_f12_spectrum() {
        let parts = project(&sign_kernel(), &MeasureSpec::Uniform01, 256).unwrap();
        let grid = MeasureSpec::Uniform01.grid(200).unwrap();
        let base = f12_base(&parts, &grid);
        let m = weighted(&base, &grid.weights, StructureTag::Antisymmetric).unwrap();
        let spec = eig_antisymmetric(&m).unwrap();
        for (q, want) in [(0, 1.0 / PI), (1, 1.0 / (2.0 * PI)), (2, 1.0 / (3.0 * PI))] {
            assert!((spec.values[q] - want).abs() < 4e-3, "{} vs {want}", spec.values[q]);
        }
    }

    #[test]
    fn hs_and_ha_blocks_match_their_lemmas() {
        let hs = nystrom_hs(128).unwrap();
        assert_eq!(hs.structure(), StructureTag::Symmetric);
        let spec = eig_symmetric(&hs).unwrap();
        let mut top: Vec<f64> = spec.values[..4].to_vec();
        top.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let want = [2.0 / PI, 2.0 / (3.0 * PI), -2.0 / (3.0 * PI), -2.0 / PI];
        for (got, want) in top.iter().zip(want) {
            assert!((got - want).abs() < 1e-3, "Hs: {got} vs {want}");
        }

        let ha = nystrom_ha(128).unwrap();
        assert_eq!(ha.structure(), StructureTag::Antisymmetric);
        let spec = eig_antisymmetric(&ha).unwrap();
        for (got, want) in spec.values.iter().zip([2.0 / PI, 2.0 / (3.0 * PI)]) {
            assert!((got - want).abs() < 1e-3, "Ha: {got} vs {want}");
        }
    }

    #[test]
    fn writhe_symmetric_part_has_empty_spectrum() {
        // f12 of the sign kernel is antisymmetric: tc-sym sees the zero kernel
        let spec = operator_spectrum(
            &sign_kernel(),
            &MeasureSpec::Uniform01,
            OperatorKind::TcSym,
            SpectralResolution { m_x: 64, m_t: 2 },
            128,
        )
        .unwrap();
        assert!(spec.values.is_empty(), "{:?}", spec.values);
    }

    #[test]
    fn check_lift_of_the_sign_kernel() {
        // for antisymmetric f the check lift is f(x,y) off ties, so its
        // spectrum is f's own, damped by the tie band 1/m_t
        let spec = operator_spectrum(
            &sign_kernel(),
            &MeasureSpec::Uniform01,
            OperatorKind::Check,
            SpectralResolution { m_x: 64, m_t: 48 },
            64,
        )
        .unwrap();
        assert_eq!(spec.mode, SpectrumMode::ImaginaryPairs);
        let damping = 1.0 - 1.0 / 48.0;
        for (k, got) in spec.values.iter().take(2).enumerate() {
            let want = 2.0 / ((2 * k + 1) as f64 * PI) * damping;
            assert!((got - want).abs() < 5e-3, "check lift: {got} vs {want}");
        }
    }

    #[test]
    fn analytic_catalog_values() {
        let l3 = analytic_spectrum(&AnalyticCase::SignOperator, 3).unwrap();
        assert_eq!(l3.mode, SpectrumMode::ImaginaryPairs);
        for (got, want) in
            l3.values.iter().zip([2.0 / PI, 2.0 / (3.0 * PI), 2.0 / (5.0 * PI)])
        {
            assert!((got - want).abs() < 1e-15);
        }
        // HS identity: 2 sum lambda^2 = 1 once the tail is included
        assert!((l3.hilbert_schmidt_sq() - 1.0).abs() < 1e-12);

        let e1 = analytic_spectrum(&AnalyticCase::RankOne { lambda: 1.0 }, 1).unwrap();
        assert_eq!(e1.values, vec![1.0]);

        let pert =
            analytic_spectrum(&AnalyticCase::Esj22Perturbed { s: 1.0, tau: 1.0 }, 1).unwrap();
        assert!((pert.values[0] - 4.0 / PI).abs() < 1e-12);
        // a=2, b=0: twice the esj22 top eigenvalue
        let esj = analytic_spectrum(&AnalyticCase::Esj22, 1).unwrap();
        assert!((pert.values[0] - 2.0 * esj.values[0]).abs() < 1e-12);
        // HS total: a^2 + b^2 = 4
        assert!((pert.hilbert_schmidt_sq() - 4.0).abs() < 1e-10);

        assert!(matches!(
            AnalyticCase::parse("no-such-case", &[]),
            Err(UstatError::UnknownCase(_))
        ));
    }

    #[test]
    fn limit_law_examples() {
        // cyclic + sign on uniform: area mixture with lambda_q ~ 1/(pi q)
        let parts = project(&sign_kernel(), &MeasureSpec::Uniform01, 256).unwrap();
        let law = limit_law_from_theorem(
            StatKind::Cyclic,
            &parts,
            SpectralResolution { m_x: 200, m_t: 2 },
            1e-8,
            None,
        )
        .unwrap();
        assert!(law.chi_coeffs.is_empty());
        assert!(!law.eta_coeffs.is_empty());
        assert!((law.eta_coeffs[0] - 1.0 / PI).abs() < 4e-3);
        // Var W = (1/2) Var f12 = 1/6
        assert!((law.variance() - 1.0 / 6.0).abs() < 2e-3, "{}", law.variance());

        // classic + product on Rademacher: single chi coefficient 1
        let k = builtin::product(SpaceSpec::Rademacher).unwrap();
        let parts = project(&k, &MeasureSpec::Rademacher, 2).unwrap();
        let law = limit_law_from_theorem(
            StatKind::Classic,
            &parts,
            SpectralResolution { m_x: 2, m_t: 2 },
            1e-8,
            None,
        )
        .unwrap();
        assert_eq!(law.chi_coeffs.len(), 1);
        assert!((law.chi_coeffs[0] - 1.0).abs() < 1e-12);
        assert_eq!(law.scale_exponent, ScaleExponent::One);

        // alt-second + symmetric part of bilinear on Rademacher^2:
        // half-area coefficients {1/2, -1/2}
        let fs = builtin::bilinear(rad2().space()).unwrap().symmetric_part();
        let parts = project(&fs, &rad2(), 2).unwrap();
        let law = limit_law_from_theorem(
            StatKind::AltSecond,
            &parts,
            SpectralResolution { m_x: 2, m_t: 2 },
            1e-8,
            None,
        )
        .unwrap();
        let mut coeffs = law.xeta_coeffs.clone();
        coeffs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(coeffs.len(), 2);
        assert!((coeffs[0] - 0.5).abs() < 1e-12);
        assert!((coeffs[1] + 0.5).abs() < 1e-12);

        // nondegenerate: classic + product on uniform
        let k = builtin::product(SpaceSpec::UnitInterval).unwrap();
        let parts = project(&k, &MeasureSpec::Uniform01, 512).unwrap();
        let law = limit_law_from_theorem(
            StatKind::Classic,
            &parts,
            SpectralResolution::default(),
            1e-8,
            None,
        )
        .unwrap();
        assert_eq!(law.scale_exponent, ScaleExponent::ThreeHalves);
        assert!((law.gaussian_var - 1.0 / 48.0).abs() < 1e-6);
        // and the second-index alternating variant: E f2^2 / 3 = 1/144
        let law = limit_law_from_theorem(
            StatKind::AltSecond,
            &parts,
            SpectralResolution::default(),
            1e-8,
            None,
        )
        .unwrap();
        assert!((law.gaussian_var - 1.0 / 144.0).abs() < 1e-6);
    }

    #[test]
    fn ambiguous_regimes_are_refused() {
        // f(x,y) = eps (x + y - 1): var_f1 = eps^2/12 sits in the guard band
        let tol: f64 = 1e-8;
        let eps = (5.0 * tol * 12.0).sqrt();
        let parts = crate::hoeffding::project_with(
            std::sync::Arc::new(move |x: &Point, y: &Point| {
                eps * (x.scalar().unwrap() + y.scalar().unwrap() - 1.0)
            }),
            Symmetry::Symmetric,
            &MeasureSpec::Uniform01,
            128,
        )
        .unwrap();
        let err = limit_law_from_theorem(
            StatKind::Classic,
            &parts,
            SpectralResolution { m_x: 32, m_t: 2 },
            tol,
            None,
        );
        assert!(matches!(err, Err(UstatError::AmbiguousRegime { .. })));
    }

    #[test]
    fn doubly_degenerate_laws() {
        // f(x,y) = g(x) + g(y), g = 2x-1: f12 = 0, Var g = 1/3
        let parts = crate::hoeffding::project_with(
            std::sync::Arc::new(|x: &Point, y: &Point| {
                let g = |p: &Point| 2.0 * p.scalar().unwrap() - 1.0;
                g(x) + g(y)
            }),
            Symmetry::Symmetric,
            &MeasureSpec::Uniform01,
            256,
        )
        .unwrap();
        let law = limit_law_from_theorem(
            StatKind::BiAlt,
            &parts,
            SpectralResolution { m_x: 32, m_t: 2 },
            1e-8,
            Some(2000),
        )
        .unwrap();
        assert_eq!(law.scale_exponent, ScaleExponent::Half);
        assert_eq!(law.parity_tag, Some(Parity::Even));
        // sigma^2_even = (Var f1 + Var f2)/2 = 1/3, up to quadrature error
        assert!((law.gaussian_var - 1.0 / 3.0).abs() < 1e-4);
        let odd = limit_law_from_theorem(
            StatKind::BiAlt,
            &parts,
            SpectralResolution { m_x: 32, m_t: 2 },
            1e-8,
            Some(2001),
        )
        .unwrap();
        // sigma^2_odd = Var(f1+f2)/2 = 2/3
        assert!((odd.gaussian_var - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn hs_identities_on_moderate_grids() {
        // symmetric case: sum lambda_r^2 vs the HS norm of fs12 of the
        // bilinear kernel on Rademacher^2 (exact atoms)
        let bil = builtin::bilinear(rad2().space()).unwrap();
        let parts = project(&bil, &rad2(), 2).unwrap();
        let grid = rad2().grid(2).unwrap();
        let base = f12_base(&parts, &grid);
        let fs = symmetrized(&base, false);
        let spec =
            eig_symmetric(&weighted(&fs, &grid.weights, StructureTag::Symmetric).unwrap())
                .unwrap();
        let hs = kernel_hs_norm_sq(
            &|x: &Point, y: &Point| {
                0.5 * (bil.eval_unchecked(x, y) + bil.eval_unchecked(y, x))
            },
            &rad2(),
            2,
        )
        .unwrap();
        assert!((spec.hilbert_schmidt_sq() - hs).abs() < 1e-10);

        // antisymmetric case at m = 400: 2 sum lambda_q^2 vs integral sgn^2 = 1
        let grid = MeasureSpec::Uniform01.grid(400).unwrap();
        let k = sign_kernel();
        let raw = move |x: &Point, y: &Point| k.eval_unchecked(x, y);
        let m = nystrom_plain(&raw, &grid, StructureTag::Antisymmetric).unwrap();
        let spec = eig_antisymmetric(&m).unwrap();
        let hs = kernel_hs_norm_sq(
            &|x: &Point, y: &Point| sign_kernel().eval_unchecked(x, y),
            &MeasureSpec::Uniform01,
            400,
        )
        .unwrap();
        // staggered grids keep the jump kernel off its ties; a handful of
        // floating-point coincidences may remain
        assert!((hs - 1.0).abs() < 1e-3, "{hs}");
        let ratio = spec.hilbert_schmidt_sq() / hs;
        assert!((ratio - 1.0).abs() < 0.02, "HS ratio {ratio}");
    }

    #[test]
    fn lanti_product_structure_for_the_sign_kernel() {
        // eigenvalues of T_{hat f} for antisymmetric f are the products
        // {+-2 lambda_q / ((2k-1) pi)}, each pair counted twice
        let grid = MeasureSpec::Uniform01.grid(24).unwrap();
        let k = sign_kernel();
        let raw = move |x: &Point, y: &Point| k.eval_unchecked(x, y);
        let m = nystrom_lifted(&raw, &grid, 24, Lift::Hat).unwrap();
        let spec = eig_symmetric(&m).unwrap();
        let lam = |q: f64, k: f64| 4.0 / (q * k * PI * PI);
        let expected = [
            lam(1.0, 1.0),
            lam(1.0, 1.0),
            -lam(1.0, 1.0),
            -lam(1.0, 1.0),
            lam(1.0, 3.0),
            lam(1.0, 3.0),
        ];
        // compare by magnitude-sorted prefix: the top four are +-4/pi^2
        // twice, the next ones 4/(3 pi^2)
        for (got, want) in spec.values.iter().zip(expected) {
            assert!(
                (got.abs() - want.abs()).abs() < 5e-3,
                "|{got}| vs |{want}|"
            );
        }
        // sign pattern: two positive and two negative among the top four
        let pos = spec.values[..4].iter().filter(|v| **v > 0.0).count();
        assert_eq!(pos, 2);
    }

    #[test]
    fn hat_lift_of_symmetric_kernel_reproduces_base_spectrum() {
        // fs of bilinear on Rademacher^2: eigenvalues +-1/2; the lifted
        // operator sees them through the rank-one averaging in t
        let fs = builtin::bilinear(rad2().space()).unwrap().symmetric_part();
        let raw = move |x: &Point, y: &Point| fs.eval_unchecked(x, y);
        let grid = rad2().grid(2).unwrap();
        let m_t = 160;
        let m = nystrom_lifted(&raw, &grid, m_t, Lift::Hat).unwrap();
        let spec = eig_symmetric(&m).unwrap();
        let want = [0.5, -0.5, 0.0, 0.0];
        for (got, want) in spec.values.iter().take(4).zip(want) {
            assert!((got - want).abs() < 5e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn block_operator_spectrum_is_sign_symmetric_and_matches_esj22() {
        let bil = builtin::bilinear(rad2().space()).unwrap();
        let parts = project(&bil, &rad2(), 2).unwrap();
        let grid = rad2().grid(2).unwrap();
        let base = f12_base(&parts, &grid);
        let m = block_from_base(&base, &grid.weights, 96).unwrap();
        assert_eq!(m.structure(), StructureTag::BlockSymmetric);
        let spec = eig_symmetric(&m).unwrap();
        // lambda <-> -lambda pairing at matched indices
        let mut i = 0;
        while i + 1 < spec.values.len().min(8) {
            assert!(
                (spec.values[i] + spec.values[i + 1]).abs() < 1e-6,
                "unpaired block eigenvalues {} {}",
                spec.values[i],
                spec.values[i + 1]
            );
            i += 2;
        }
        // the U^{+-} limit for the bilinear kernel is xeta, whose chi-series
        // coefficients are +-2/((2k-1)pi), each once
        assert!((spec.values[0].abs() - 2.0 / PI).abs() < 0.02, "{}", spec.values[0]);
    }

    #[test]
    fn oversized_grids_are_rejected() {
        let grid = MeasureSpec::Uniform01.grid(200).unwrap();
        let raw = |_: &Point, _: &Point| 0.0;
        assert!(matches!(
            nystrom_lifted(&raw, &grid, 64, Lift::Hat),
            Err(UstatError::DimensionOverflow(_))
        ));
    }
}
