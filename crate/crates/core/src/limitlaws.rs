//! The limit building blocks and their mixtures.
//!
//! Three ingredient distributions appear in the degenerate limits:
//!
//! * `chi = zeta^2 - 1` for standard normal `zeta` — mean 0, variance 2,
//!   characteristic function `e^{-it}(1-2it)^{-1/2}`;
//! * the stochastic area `eta` — cf `1/cosh(t)`, variance 1, representable
//!   as `sum_k (zeta_{k,1}^2 + zeta_{k,2}^2 - zeta_{k,3}^2 - zeta_{k,4}^2) / ((2k-1)pi)`;
//! * the half area `xeta` — cf `cosh(t)^{-1/2}`, variance 1/2, representable
//!   as `sum_k (zeta_{k,1}^2 - zeta_{k,2}^2) / ((2k-1)pi)`.
//!
//! A [`MixtureLaw`] is a finite linear combination of independent copies of
//! these plus an optional Gaussian component, with the normalization scale
//! recorded alongside. Samplers truncate the series representations at `K`
//! terms; with Gaussian tail compensation the truncated tail variance is
//! replaced by an independent centered normal, making second moments exact
//! while perturbing higher cumulants by `O(1/K)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Result, UstatError};

/// Scale `n^{-e}` under which a statistic converges to its law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleExponent {
    /// `n^{-3/2}`: nondegenerate normal limits.
    ThreeHalves,
    /// `n^{-1}`: degenerate second-chaos limits.
    One,
    /// `n^{-1/2}`: doubly degenerate normal limits.
    Half,
}

impl ScaleExponent {
    pub fn value(self) -> f64 {
        match self {
            ScaleExponent::ThreeHalves => 1.5,
            ScaleExponent::One => 1.0,
            ScaleExponent::Half => 0.5,
        }
    }
}

/// Parity of the sample size, where a limit depends on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Even,
    Odd,
}

/// A limit distribution: independent Gaussian, chi-square, area, and
/// half-area components.
///
/// The chi coefficients contribute `lambda_r (zeta_r^2 - 1)/2` each, the area
/// coefficients `lambda_q eta_q` (positive by convention), the half-area
/// coefficients `lambda_r xeta_r`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixtureLaw {
    #[serde(default)]
    pub gaussian_var: f64,
    #[serde(default)]
    pub chi_coeffs: Vec<f64>,
    #[serde(default)]
    pub eta_coeffs: Vec<f64>,
    #[serde(default)]
    pub xeta_coeffs: Vec<f64>,
    pub scale_exponent: ScaleExponent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity_tag: Option<Parity>,
}

impl Default for ScaleExponent {
    fn default() -> Self {
        ScaleExponent::One
    }
}

impl MixtureLaw {
    pub fn gaussian(var: f64, scale: ScaleExponent) -> Self {
        MixtureLaw { gaussian_var: var, scale_exponent: scale, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaussian_var < 0.0 || !self.gaussian_var.is_finite() {
            return Err(UstatError::Config("gaussian_var must be finite and >= 0".into()));
        }
        if self.eta_coeffs.iter().any(|&l| l <= 0.0) {
            return Err(UstatError::Config("eta coefficients must be positive".into()));
        }
        for list in [&self.chi_coeffs, &self.eta_coeffs, &self.xeta_coeffs] {
            if list.iter().any(|l| !l.is_finite()) {
                return Err(UstatError::Config("non-finite mixture coefficient".into()));
            }
        }
        Ok(())
    }

    /// Exact variance of the law (equals `cumulant(2)`).
    pub fn variance(&self) -> f64 {
        let chi: f64 = self.chi_coeffs.iter().map(|l| l * l / 2.0).sum();
        let eta: f64 = self.eta_coeffs.iter().map(|l| l * l).sum();
        let xeta: f64 = self.xeta_coeffs.iter().map(|l| l * l / 2.0).sum();
        self.gaussian_var + chi + eta + xeta
    }

    /// Fold a spectral tail (sum of squared dropped coefficients, in each
    /// component's own convention) into the Gaussian part, keeping the
    /// variance of the truncated law exact.
    pub fn with_gaussian_tail(mut self, tail_var: f64) -> Self {
        self.gaussian_var += tail_var;
        self
    }
}

/// How many series terms a sampler uses per area / half-area component.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub k_terms: usize,
    pub tail_compensation: TailCompensation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailCompensation {
    None,
    GaussianTail,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        SeriesTruncation { k_terms: 2000, tail_compensation: TailCompensation::GaussianTail }
    }
}

impl SeriesTruncation {
    pub fn new(k_terms: usize, tail_compensation: TailCompensation) -> Result<Self> {
        if k_terms == 0 {
            return Err(UstatError::Config("series truncation needs K >= 1".into()));
        }
        Ok(SeriesTruncation { k_terms, tail_compensation })
    }
}

/// `sum_{k<=K} (2k-1)^{-2}`, and the tail beyond it (`pi^2/8` total).
fn odd_reciprocal_sq_partial(k_terms: usize) -> (f64, f64) {
    let mut partial = 0.0;
    for k in 1..=k_terms {
        let d = (2 * k - 1) as f64;
        partial += 1.0 / (d * d);
    }
    let total = std::f64::consts::PI * std::f64::consts::PI / 8.0;
    (partial, (total - partial).max(0.0))
}

#[inline]
fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
fn chi_sq_1(rng: &mut Stream) -> f64 {
    let z: f64 = normal(rng);
    z * z
}

/// One half-area draw via the two-chi-square series.
fn sample_xeta(rng: &mut Stream, k_terms: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=k_terms {
        let coeff = 1.0 / ((2 * k - 1) as f64 * std::f64::consts::PI);
        acc += coeff * (chi_sq_1(rng) - chi_sq_1(rng));
    }
    acc
}

/// One stochastic-area draw via the four-chi-square series.
fn sample_eta(rng: &mut Stream, k_terms: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=k_terms {
        let coeff = 1.0 / ((2 * k - 1) as f64 * std::f64::consts::PI);
        acc += coeff * (chi_sq_1(rng) + chi_sq_1(rng) - chi_sq_1(rng) - chi_sq_1(rng));
    }
    acc
}

/// Draw `count` i.i.d. samples of the law.
///
/// Component `c` of replication `r` draws from the stream derived from
/// `(seed, c, r)`; the resulting sample vector is therefore independent of
/// any parallel scheduling. Component indices enumerate chi coefficients
/// first, then eta, then xeta, then the Gaussian (+ tail) component.
pub fn sample(
    law: &MixtureLaw,
    trunc: SeriesTruncation,
    seed: u64,
    count: usize,
) -> Result<Vec<f64>> {
    law.validate()?;
    if count == 0 {
        return Err(UstatError::InsufficientSamples { need: 1, got: 0 });
    }
    let k = trunc.k_terms;
    let (_, tail) = odd_reciprocal_sq_partial(k);
    // per-unit-coefficient truncated-tail variances of the two series
    let (eta_tail_var, xeta_tail_var) = match trunc.tail_compensation {
        TailCompensation::GaussianTail => {
            let per_term_eta = 8.0 / (std::f64::consts::PI * std::f64::consts::PI);
            let per_term_xeta = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
            (per_term_eta * tail, per_term_xeta * tail)
        }
        TailCompensation::None => (0.0, 0.0),
    };
    let mut gauss_var = law.gaussian_var;
    gauss_var += eta_tail_var * law.eta_coeffs.iter().map(|l| l * l).sum::<f64>();
    gauss_var += xeta_tail_var * law.xeta_coeffs.iter().map(|l| l * l).sum::<f64>();
    let gauss_sd = gauss_var.sqrt();

    let n_chi = law.chi_coeffs.len();
    let n_eta = law.eta_coeffs.len();
    let n_xeta = law.xeta_coeffs.len();
    let gauss_component = (n_chi + n_eta + n_xeta) as u64;

    let draw_one = |rep: usize| {
        let r = rep as u64;
        let mut value = 0.0;
        for (c, lam) in law.chi_coeffs.iter().enumerate() {
            let mut rng = Stream::derive(seed, c as u64, r);
            value += 0.5 * lam * (chi_sq_1(&mut rng) - 1.0);
        }
        for (c, lam) in law.eta_coeffs.iter().enumerate() {
            let mut rng = Stream::derive(seed, (n_chi + c) as u64, r);
            value += lam * sample_eta(&mut rng, k);
        }
        for (c, lam) in law.xeta_coeffs.iter().enumerate() {
            let mut rng = Stream::derive(seed, (n_chi + n_eta + c) as u64, r);
            value += lam * sample_xeta(&mut rng, k);
        }
        if gauss_sd > 0.0 {
            let mut rng = Stream::derive(seed, gauss_component, r);
            value += gauss_sd * normal(&mut rng);
        }
        value
    };

    Ok((0..count).into_par_iter().map(draw_one).collect())
}

/// Characteristic function of the law at real `t`.
///
/// Each factor is evaluated on the principal branch. For real `t` this is
/// already continuous along the path from 0: the chi factors take the square
/// root of `1 - i lambda t`, whose real part is identically 1, so the
/// argument never crosses the negative real axis; the cosh factors have
/// positive real arguments. Winding can only arise if factors are multiplied
/// together *before* taking the root, which this implementation never does.
pub fn cf(law: &MixtureLaw, t: f64) -> (f64, f64) {
    let mut re = 1.0;
    let mut im = 0.0;
    let mut mul = |r: f64, i: f64| {
        let (nr, ni) = (re * r - im * i, re * i + im * r);
        re = nr;
        im = ni;
    };
    for &lam in &law.chi_coeffs {
        // e^{-i s} (1 - 2 i s)^{-1/2} at s = lambda t / 2
        let s = 0.5 * lam * t;
        let modulus = (1.0 + 4.0 * s * s).powf(-0.25);
        let phase = -s + 0.5 * (2.0 * s).atan();
        mul(modulus * phase.cos(), modulus * phase.sin());
    }
    for &lam in &law.eta_coeffs {
        mul(1.0 / (lam * t).cosh(), 0.0);
    }
    for &lam in &law.xeta_coeffs {
        mul((lam * t).cosh().powf(-0.5), 0.0);
    }
    if law.gaussian_var > 0.0 {
        mul((-0.5 * law.gaussian_var * t * t).exp(), 0.0);
    }
    (re, im)
}

/// Joint characteristic function of the symmetric/antisymmetric limit pair
/// of the bilinear example: `(cosh^2 t + s^2 sinh^2(t)/t^2)^{-1/2}`,
/// real-valued, with the `t -> 0` limit `(1+s^2)^{-1/2}`.
pub fn cf_joint_bilinear(s: f64, t: f64) -> f64 {
    let ratio = if t == 0.0 { 1.0 } else { t.sinh() / t };
    let c = t.cosh();
    (c * c + s * s * ratio * ratio).powf(-0.5)
}

/// Bernoulli numbers `B_2..B_12`, exact rationals.
const BERNOULLI: [(f64, f64); 6] =
    [(1.0, 6.0), (-1.0, 30.0), (1.0, 42.0), (-1.0, 30.0), (5.0, 66.0), (-691.0, 2730.0)];

fn bernoulli(m: usize) -> f64 {
    let (num, den) = BERNOULLI[m / 2 - 1];
    num / den
}

/// `kappa_m(zeta^2 - 1) = 2^{m-1} (m-1)!`.
pub fn chi_cumulant(m: usize) -> f64 {
    let mut fact = 1.0;
    for i in 1..m {
        fact *= i as f64;
    }
    2f64.powi(m as i32 - 1) * fact
}

/// `kappa_m(eta) = 2^m (2^m - 1) |B_m| / m` for even m, 0 for odd m.
pub fn eta_cumulant(m: usize) -> f64 {
    if m == 1 || m % 2 == 1 {
        return 0.0;
    }
    let p = 2f64.powi(m as i32);
    p * (p - 1.0) * bernoulli(m).abs() / m as f64
}

/// `kappa_m(xeta) = kappa_m(eta) / 2`.
pub fn xeta_cumulant(m: usize) -> f64 {
    0.5 * eta_cumulant(m)
}

/// m-th cumulant of a mixture law, `1 <= m <= 12`.
pub fn cumulant(law: &MixtureLaw, m: usize) -> Result<f64> {
    if !(1..=12).contains(&m) {
        return Err(UstatError::CumulantOrder(m));
    }
    if m == 1 {
        return Ok(0.0);
    }
    let mi = m as i32;
    let mut acc = 0.0;
    acc += law.chi_coeffs.iter().map(|l| (l / 2.0).powi(mi)).sum::<f64>() * chi_cumulant(m);
    acc += law.eta_coeffs.iter().map(|l| l.powi(mi)).sum::<f64>() * eta_cumulant(m);
    acc += law.xeta_coeffs.iter().map(|l| l.powi(mi)).sum::<f64>() * xeta_cumulant(m);
    if m == 2 {
        acc += law.gaussian_var;
    }
    Ok(acc)
}

/// m-th cumulant of the writhe limit `sum_k eta_k/(pi k)` in closed form:
/// `2^{2m} (2^m - 1) B_m^2 / (2m * m!)` for even m.
pub fn writhe_limit_cumulant(m: usize) -> Result<f64> {
    if !(1..=12).contains(&m) {
        return Err(UstatError::CumulantOrder(m));
    }
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let mut fact = 1.0;
    for i in 1..=m {
        fact *= i as f64;
    }
    let b = bernoulli(m);
    Ok(4f64.powi(m as i32) * (2f64.powi(m as i32) - 1.0) * b * b / (2.0 * m as f64 * fact))
}

/// Central-moment cumulant estimates `kappa_1..kappa_{max_order}`.
pub fn empirical_cumulants(samples: &[f64], max_order: usize) -> Result<Vec<f64>> {
    let n = samples.len();
    let need = if max_order >= 4 { 10_000 } else { 10 };
    if n < need {
        return Err(UstatError::InsufficientSamples { need, got: n });
    }
    if !(1..=4).contains(&max_order) {
        return Err(UstatError::CumulantOrder(max_order));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let mut out = vec![mean];
    if max_order >= 2 {
        out.push(m2);
    }
    if max_order >= 3 {
        out.push(m3);
    }
    if max_order >= 4 {
        out.push(m4 - 3.0 * m2 * m2);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_eta() -> MixtureLaw {
        MixtureLaw {
            eta_coeffs: vec![1.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        }
    }

    fn pure_xeta() -> MixtureLaw {
        MixtureLaw {
            xeta_coeffs: vec![1.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        }
    }

    #[test]
    fn cf_values() {
        let (re, im) = cf(&pure_xeta(), 1.0);
        assert!(im.abs() < 1e-15);
        assert!((re - 1f64.cosh().powf(-0.5)).abs() < 1e-12);
        assert!((re - 0.80502).abs() < 1e-5);

        let (re, im) = cf(&pure_eta(), 1.0);
        assert!(im.abs() < 1e-15);
        assert!((re - 0.64805).abs() < 1e-5);

        let chi = MixtureLaw {
            chi_coeffs: vec![1.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        assert_eq!(cf(&chi, 0.0), (1.0, 0.0));

        // |cf| <= 1 on a probe grid, for a mixed law
        let mixed = MixtureLaw {
            gaussian_var: 0.3,
            chi_coeffs: vec![0.5, -0.25],
            eta_coeffs: vec![0.4],
            xeta_coeffs: vec![0.7, -0.1],
            scale_exponent: ScaleExponent::One,
            parity_tag: None,
        };
        for i in 0..200 {
            let t = -10.0 + 0.1 * i as f64;
            let (re, im) = cf(&mixed, t);
            assert!((re * re + im * im).sqrt() <= 1.0 + 1e-12);
        }
        assert_eq!(cf(&mixed, 0.0), (1.0, 0.0));
    }

    #[test]
    fn chi_cf_matches_known_transform() {
        // (zeta_1^2 - zeta_2^2)/2 has the real cf (1 + t^2)^{-1/2}
        let law = MixtureLaw {
            chi_coeffs: vec![1.0, -1.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        for t in [0.3, 1.0, 2.7] {
            let (re, im) = cf(&law, t);
            assert!(im.abs() < 1e-15);
            assert!((re - (1.0 + t * t).powf(-0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_cf_values() {
        assert!((cf_joint_bilinear(1.0, 1.0) - 0.51556).abs() < 1e-5);
        for t in [0.5, 1.0, 2.0] {
            assert!((cf_joint_bilinear(0.0, t) - 1.0 / t.cosh()).abs() < 1e-12);
        }
        for s in [0.5, 1.0, 3.0] {
            assert!((cf_joint_bilinear(s, 0.0) - (1.0 + s * s).powf(-0.5)).abs() < 1e-12);
        }
        assert!((cf_joint_bilinear(1.0, 0.0) - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn cumulant_values() {
        let chi2 = MixtureLaw {
            chi_coeffs: vec![2.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        assert_eq!(cumulant(&chi2, 3).unwrap(), 8.0);
        assert_eq!(cumulant(&pure_eta(), 4).unwrap(), 2.0);
        assert_eq!(cumulant(&pure_eta(), 3).unwrap(), 0.0);
        assert!((cumulant(&pure_eta(), 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((cumulant(&pure_xeta(), 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(cumulant(&pure_eta(), 13).is_err());

        // writhe limit: kappa_2 = 1/6 in closed form
        assert!((writhe_limit_cumulant(2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((writhe_limit_cumulant(4).unwrap() - 1.0 / 45.0).abs() < 1e-15);
        // and by summing the coefficient series with a Gaussian tail
        let q = 512;
        let coeffs: Vec<f64> =
            (1..=q).map(|k| 1.0 / (std::f64::consts::PI * k as f64)).collect();
        let partial: f64 = coeffs.iter().map(|l| l * l).sum();
        let law = MixtureLaw {
            eta_coeffs: coeffs,
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        }
        .with_gaussian_tail(1.0 / 6.0 - partial);
        assert!((cumulant(&law, 2).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!((cumulant(&law, 4).unwrap() - 1.0 / 45.0).abs() < 1e-8);
    }

    #[test]
    fn sampler_moments_at_reduced_scale() {
        // full-scale checks (N = 1e6, K = 2000) run in the acceptance suite
        let trunc = SeriesTruncation::new(400, TailCompensation::GaussianTail).unwrap();
        let n = 60_000;
        let eta = sample(&pure_eta(), trunc, 99, n).unwrap();
        let k = empirical_cumulants(&eta, 4).unwrap();
        assert!(k[0].abs() < 0.02, "mean {}", k[0]);
        assert!((k[1] - 1.0).abs() < 0.03, "var {}", k[1]);
        assert!((k[3] - 2.0).abs() < 0.35, "kappa4 {}", k[3]);

        let xeta = sample(&pure_xeta(), trunc, 100, n).unwrap();
        let k = empirical_cumulants(&xeta, 4).unwrap();
        assert!((k[1] - 0.5).abs() < 0.02, "var {}", k[1]);

        let chi = MixtureLaw {
            chi_coeffs: vec![1.0],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        let s = sample(&chi, trunc, 101, n).unwrap();
        let k = empirical_cumulants(&s, 3).unwrap();
        assert!(k[0].abs() < 0.005, "mean {}", k[0]);
        assert!((k[1] - 0.5).abs() < 0.02, "var {}", k[1]);
        assert!((k[2] - 1.0).abs() < 0.06, "kappa3 {}", k[2]);
    }

    #[test]
    fn sampling_is_reproducible_and_seed_sensitive() {
        let law = MixtureLaw {
            chi_coeffs: vec![0.5],
            eta_coeffs: vec![0.3],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        let trunc = SeriesTruncation::new(50, TailCompensation::GaussianTail).unwrap();
        let a = sample(&law, trunc, 7, 100).unwrap();
        let b = sample(&law, trunc, 7, 100).unwrap();
        assert_eq!(a, b);
        let c = sample(&law, trunc, 8, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn truncated_cf_matches_analytic_cf() {
        let trunc = SeriesTruncation::default();
        let samples = sample(&pure_xeta(), trunc, 4, 100_000).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let (mut re, mut im) = (0.0, 0.0);
            for &x in &samples {
                re += (t * x).cos();
                im += (t * x).sin();
            }
            re /= samples.len() as f64;
            im /= samples.len() as f64;
            let target = t.cosh().powf(-0.5);
            let dist = ((re - target).powi(2) + im * im).sqrt();
            assert!(dist < 0.01, "t={t}: empirical cf off by {dist}");
        }
    }

    #[test]
    fn empirical_cumulants_need_enough_samples() {
        assert!(matches!(
            empirical_cumulants(&[1.0; 100], 4),
            Err(UstatError::InsufficientSamples { .. })
        ));
        assert!(empirical_cumulants(&[1.0; 100], 2).is_ok());
    }

    #[test]
    fn invalid_laws_are_rejected() {
        let law = MixtureLaw {
            eta_coeffs: vec![-0.5],
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        assert!(law.validate().is_err());
        let law = MixtureLaw {
            gaussian_var: -1.0,
            scale_exponent: ScaleExponent::One,
            ..Default::default()
        };
        assert!(law.validate().is_err());
    }
}
