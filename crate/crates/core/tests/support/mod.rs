//! Exact-identity checks shared by the identity and acceptance suites.
//!
//! Everything here is an algebraic identity of the finite sums themselves,
//! so rank/sign data must agree exactly and float data to 1e-12.

use ustats_core::kernels::{builtin, KernelSpec, Point, SpaceSpec};
use ustats_core::rng::Stream;
use ustats_core::ustats::{evaluate, pair_lift, PairLiftVariant, StatKind};

pub const FLOAT_TOL: f64 = 1e-12;

pub fn rank_data(rng: &mut Stream, n: usize) -> Vec<Point> {
    let mut perm: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm.into_iter().map(|r| Point::Scalar(r as f64)).collect()
}

pub fn uniform_data(rng: &mut Stream, n: usize) -> Vec<Point> {
    (0..n).map(|_| Point::Scalar(rng.next_f64())).collect()
}

pub fn rademacher_pairs(rng: &mut Stream, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let s = |b: bool| if b { 1.0 } else { -1.0 };
            Point::Pair(s(rng.next_u64() & 1 == 0), s(rng.next_u64() & 1 == 0))
        })
        .collect()
}

pub fn sign_on_ranks(n: usize) -> KernelSpec {
    builtin::sign(SpaceSpec::RankOrdinal(n)).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Pairing identities: the length-2n statistic equals a classic U-statistic
/// of the lifted kernel on paired data, up to the diagonal correction.
pub fn check_pairing(kernel: &KernelSpec, data: &[Point], tol: f64) {
    for (variant, stat) in [
        (PairLiftVariant::Cyclic, StatKind::Cyclic),
        (PairLiftVariant::BiAlt, StatKind::BiAlt),
        (PairLiftVariant::AltSecond, StatKind::AltSecond),
    ] {
        let lift = pair_lift(kernel, variant, data).unwrap();
        let direct = evaluate(stat, kernel, data).unwrap();
        assert!(
            close(lift.reconstruct(), direct, tol),
            "{stat} pairing identity: {} vs {direct}",
            lift.reconstruct()
        );
    }
}

/// The odd-from-even recursions for the cyclic, bi-alternating, and
/// second-index alternating statistics, with the extra sums written out.
pub fn check_recursions(kernel: &KernelSpec, data: &[Point], tol: f64) {
    let m = data.len();
    assert!(m >= 5 && m % 2 == 1);
    let half = m / 2; // data has 2*half + 1 points
    let f = |a: usize, b: usize| kernel.eval_unchecked(&data[a], &data[b]);

    let even = &data[..2 * half];
    let cyc_odd = evaluate(StatKind::Cyclic, kernel, data).unwrap();
    let cyc_even = evaluate(StatKind::Cyclic, kernel, even).unwrap();
    let mut extra = 0.0;
    for i in 0..half {
        extra += f(i, i + half);
        extra += f(2 * half, i);
    }
    for i in half..2 * half {
        extra += f(i, 2 * half);
    }
    assert!(close(cyc_odd, cyc_even + extra, tol), "cyclic recursion: {cyc_odd} vs {}", cyc_even + extra);

    let bi_odd = evaluate(StatKind::BiAlt, kernel, data).unwrap();
    let bi_even = evaluate(StatKind::BiAlt, kernel, even).unwrap();
    let mut extra = 0.0;
    for a in 0..2 * half {
        let s = if a % 2 == 0 { 1.0 } else { -1.0 };
        extra += s * f(a, 2 * half);
    }
    assert!(close(bi_odd, bi_even + extra, tol), "bialt recursion");

    let alt_odd = evaluate(StatKind::AltSecond, kernel, data).unwrap();
    let alt_even = evaluate(StatKind::AltSecond, kernel, even).unwrap();
    let mut extra = 0.0;
    for a in 0..2 * half {
        extra += f(a, 2 * half);
    }
    assert!(close(alt_odd, alt_even - extra, tol), "alt-second recursion");
}

/// For symmetric kernels the cyclic statistic is the classic one, minus the
/// diameter terms when n is even.
pub fn check_symmetric_reduction(kernel: &KernelSpec, data: &[Point], tol: f64) {
    let n = data.len();
    let cyc = evaluate(StatKind::Cyclic, kernel, data).unwrap();
    let classic = evaluate(StatKind::Classic, kernel, data).unwrap();
    if n % 2 == 1 {
        assert!(close(cyc, classic, tol), "odd-n symmetric reduction: {cyc} vs {classic}");
    } else {
        let mut diam = 0.0;
        for i in 0..n / 2 {
            diam += kernel.eval_unchecked(&data[i], &data[i + n / 2]);
        }
        assert!(close(cyc, classic - diam, tol), "even-n symmetric reduction");
    }
}

/// `U°°_n(f) = U°_n(f - f_check)` exactly.
pub fn check_cyclic_sym_reduction(kernel: &KernelSpec, data: &[Point], tol: f64) {
    let direct = evaluate(StatKind::CyclicSym, kernel, data).unwrap();
    let reduced = evaluate(StatKind::Cyclic, &kernel.minus_swap(), data).unwrap();
    assert!(close(direct, reduced, tol), "cyclic-sym reduction: {direct} vs {reduced}");
}

/// Reversal identity: `U^{+-}_n(f; reversed) = (-1)^n U^{-+}_n(f_check)`.
pub fn check_reversal(kernel: &KernelSpec, data: &[Point], tol: f64) {
    let reversed: Vec<Point> = data.iter().rev().copied().collect();
    let lhs = evaluate(StatKind::AltSecond, kernel, &reversed).unwrap();
    let rhs = evaluate(StatKind::AltFirst, &kernel.swap(), data).unwrap();
    let sign = if data.len() % 2 == 0 { 1.0 } else { -1.0 };
    assert!(close(lhs, sign * rhs, tol), "reversal identity: {lhs} vs {}", sign * rhs);
}

/// Run the whole exact suite across kernels and sizes.
pub fn run_exact_suite(seed: u64) {
    let mut rng = Stream::new(seed);

    for &n in &[4, 6, 8, 10] {
        let sign = sign_on_ranks(n);
        for _ in 0..20 {
            let data = rank_data(&mut rng, n);
            check_pairing(&sign, &data, 0.0);
            check_reversal(&sign, &data, 0.0);
            check_cyclic_sym_reduction(&sign, &data, 0.0);
        }
    }

    let product = builtin::product(SpaceSpec::UnitInterval).unwrap();
    let rad2 = SpaceSpec::product(SpaceSpec::Rademacher, SpaceSpec::Rademacher).unwrap();
    let bilinear = builtin::bilinear(rad2).unwrap();
    for &n in &[4, 6, 8] {
        for _ in 0..20 {
            let data = uniform_data(&mut rng, n);
            check_pairing(&product, &data, FLOAT_TOL);
            check_reversal(&product, &data, FLOAT_TOL);
            check_symmetric_reduction(&product, &data, FLOAT_TOL);
            check_cyclic_sym_reduction(&product, &data, FLOAT_TOL);

            let pairs = rademacher_pairs(&mut rng, n);
            check_pairing(&bilinear, &pairs, FLOAT_TOL);
            check_reversal(&bilinear, &pairs, FLOAT_TOL);
            check_cyclic_sym_reduction(&bilinear, &pairs, FLOAT_TOL);
        }
    }

    for &n in &[5, 7, 9, 11] {
        let sign = sign_on_ranks(n);
        for _ in 0..20 {
            let data = rank_data(&mut rng, n);
            check_recursions(&sign, &data, 0.0);
            check_symmetric_reduction(&product, &uniform_data(&mut rng, n), FLOAT_TOL);
        }
        for _ in 0..20 {
            let data = uniform_data(&mut rng, n);
            check_recursions(&product, &data, FLOAT_TOL);
            let _ = sign;
        }
    }
}
