use onesided::fredholm::*;
use onesided::kernels::{transition_density, InitialCondition, KernelError};
use onesided::quad::{integrate_panels, GaussLegendre};
use proptest::prelude::*;

/// GOE Tracy-Widom mean and variance; the Airy_1 one-point law is `F_1(2s)`.
const TW1_MEAN: f64 = -1.206_533_574_582;
const TW1_VAR: f64 = 1.607_781_034_581;

fn gaussian_rank_one(c: f64, a: f64) -> f64 {
    let disc = Discretization::new(Orientation::BelowThreshold, vec![a], vec![14.0], 64).unwrap();
    let op = build_operator(|x, _, y, _| Ok(c * (-0.5 * x * x).exp() * (-0.5 * y * y).exp()), &disc).unwrap();
    fredholm_det(&op).unwrap().value
}

#[test]
fn zero_kernel_and_block_structure() {
    let disc = Discretization::new(Orientation::AboveThreshold, vec![0.0, 1.0], vec![2.0, 3.0], 8).unwrap();
    let zero = build_operator(|_, _, _, _| Ok(0.0), &disc).unwrap();
    assert_eq!(fredholm_det(&zero).unwrap().value, 1.0);
    let op = build_operator(|x, i, y, j| Ok((x - y) + 10.0 * i as f64 + 100.0 * j as f64), &disc).unwrap();
    assert_eq!(op.label_count(), 2);
    // Each window is split where the other one ends: [0, 1] + [1, 2] and [1, 2] + [2, 4].
    assert_eq!(op.matrix.n, 32);
    let b = op.block(1, 0);
    let (xs, ws) = (&op.nodes, &op.weights);
    let expect = (ws[1][2] * ws[0][5]).sqrt() * (xs[1][2] - xs[0][5] + 10.0);
    assert!((b[2][5] - expect).abs() < 1e-14);
    assert!(xs[1].iter().all(|&x| (1.0..=4.0).contains(&x)));
    assert!(Discretization::new(Orientation::AboveThreshold, vec![0.0], vec![1.0], 7).is_err());
}

#[test]
fn rank_one_gaussian_determinant() {
    for (c, a) in [(0.7, 0.0), (0.3, -1.5), (1.1, 2.0)] {
        let exact = 1.0 - c * 0.5 * std::f64::consts::PI.sqrt() * libm::erfc(-a);
        let d = gaussian_rank_one(c, a);
        assert!((d - exact).abs() < 1e-8, "c={c} a={a}: {d} vs {exact}");
    }
    // Two labels: det(I - f g^T) = 1 - sum_i int f_i g_i.
    let disc = Discretization::new(Orientation::BelowThreshold, vec![0.0, 1.0], vec![14.0, 14.0], 64).unwrap();
    let amp = [0.4, 0.25];
    let op = build_operator(|x, i, y, _| Ok(amp[i] * (-0.5 * x * x).exp() * (-0.5 * y * y).exp()), &disc).unwrap();
    let half_sqrt_pi = 0.5 * std::f64::consts::PI.sqrt();
    let exact = 1.0 - half_sqrt_pi * (amp[0] * libm::erfc(0.0) + amp[1] * libm::erfc(-1.0));
    assert!((fredholm_det(&op).unwrap().value - exact).abs() < 1e-8);
}

#[test]
fn kernel_failures_carry_the_point() {
    let disc = Discretization::new(Orientation::AboveThreshold, vec![0.0], vec![1.0], 8).unwrap();
    let err = build_operator(|x, _, _, _| if x > 0.5 { Err(KernelError::Domain("boom".into())) } else { Ok(0.0) }, &disc)
        .unwrap_err();
    assert!(matches!(err, FredholmError::Kernel { x1, .. } if x1 > 0.5));
    let nan = build_operator(|_, _, _, _| Ok(f64::NAN), &disc).unwrap();
    assert!(matches!(fredholm_det(&nan), Err(FredholmError::NonFinite(..))));
    assert!(LabelSet::new(vec![1, 1], vec![0.0, 1.0]).is_err());
    assert!(LabelSet::new(vec![], vec![]).is_err());
    assert!(joint_cdf_airy1(&[(0.0, 0.0), (0.0, 1.0)]).is_err());
}

#[test]
fn airy1_one_point_moments_match_goe_tracy_widom() {
    let rule = GaussLegendre::cached(10);
    let (mut m1, mut m2) = (0.0, 0.0);
    for p in 0..24 {
        let lo = -6.0 + 0.5 * p as f64;
        for (s, w) in rule.mapped(lo, lo + 0.5) {
            let f = joint_cdf_airy1(&[(0.0, s)]).unwrap().value;
            let tail = if s > 0.0 { 1.0 - f } else { -f };
            m1 += w * tail;
            m2 += w * 2.0 * s * tail;
        }
    }
    let var = m2 - m1 * m1;
    assert!((m1 - TW1_MEAN / 2.0).abs() < 1e-8, "mean {m1}");
    assert!((var - TW1_VAR / 4.0).abs() < 1e-8, "variance {var}");
}

#[test]
fn airy1_resolution_and_limits() {
    let d = joint_cdf_airy1(&[(0.0, 0.0)]).unwrap();
    let tr = &d.resolution_trace;
    assert!(tr.len() >= 2 && (tr[tr.len() - 1].1 - tr[tr.len() - 2].1).abs() < 1e-6);
    assert!((joint_cdf_airy1(&[(0.0, 12.0)]).unwrap().value - 1.0).abs() < 1e-12);
    for (r2, s1) in [(1.0, -0.5), (0.4, 0.3), (-0.7, -1.2)] {
        let one = joint_cdf_airy1(&[(0.0, s1)]).unwrap().value;
        let two = joint_cdf_airy1(&[(0.0, s1), (r2, 9.0)]).unwrap().value;
        assert!((one - two).abs() < 1e-6, "{one} vs {two}");
    }
    // Joint probabilities never exceed either marginal.
    let j = joint_cdf_airy1(&[(0.0, 0.2), (0.5, -0.1)]).unwrap().value;
    let m = joint_cdf_airy1(&[(0.5, -0.1)]).unwrap().value.min(joint_cdf_airy1(&[(0.0, 0.2)]).unwrap().value);
    assert!(j <= m + 1e-9 && j > 0.0);
}

#[test]
fn probability_bounds_and_monotonicity() {
    let grid: Vec<f64> = (0..13).map(|i| -3.0 + 0.5 * i as f64).collect();
    let airy: Vec<f64> = grid.iter().map(|&s| joint_cdf_airy1(&[(0.0, s)]).unwrap().value).collect();
    let flat: Vec<f64> =
        grid.iter().map(|&a| joint_cdf_flat(1.0, &LabelSet::single(0, a - 1.0).unwrap()).unwrap().value).collect();
    let finite: Vec<f64> =
        grid.iter().map(|&a| joint_cdf_finite(1.0, &LabelSet::single(3, a - 3.0).unwrap()).unwrap().value).collect();
    for v in airy.iter().chain(&flat).chain(&finite) {
        assert!((-1e-4..=1.0 + 1e-4).contains(v), "{v}");
    }
    // CDF in s increases; P(x >= a) decreases in a.
    assert!(airy.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{airy:?}");
    assert!(flat.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{flat:?}");
    assert!(finite.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{finite:?}");
    assert!((joint_cdf_flat(1.0, &LabelSet::single(0, -30.0).unwrap()).unwrap().value - 1.0).abs() < 1e-9);
    assert!((joint_cdf_finite(1.0, &LabelSet::new(vec![1, 2], vec![-40.0, -40.0]).unwrap()).unwrap().value - 1.0).abs() < 1e-9);
}

#[test]
fn flat_cdf_depends_on_threshold_plus_label() {
    for c in [-1.8, -0.5, 0.7] {
        let v: Vec<f64> = [1, 5, 20]
            .iter()
            .map(|&k| joint_cdf_flat(1.0, &LabelSet::single(k, c - k as f64).unwrap()).unwrap().value)
            .collect();
        assert!((v[0] - v[1]).abs() < 1e-6 && (v[0] - v[2]).abs() < 1e-6, "{v:?}");
    }
}

#[test]
fn window_and_resolution_insensitivity() {
    let ls = LabelSet::new(vec![0, 2], vec![-1.2, -2.9]).unwrap();
    let base = joint_cdf_flat(1.0, &ls).unwrap();
    let wide = joint_cdf_flat_with(1.0, &ls, &DetOptions { width_scale: 1.5, ..DetOptions::default() }).unwrap();
    assert!((base.value - wide.value).abs() < 1e-6);
    let fine = joint_cdf_flat_with(1.0, &ls, &DetOptions { n_start: 64, ..DetOptions::default() }).unwrap();
    assert!((base.value - fine.value).abs() < 1e-6);
    let a = [(0.0, -0.4), (0.8, 0.6)];
    let base = joint_cdf_airy1(&a).unwrap().value;
    let wide = joint_cdf_airy1_with(&a, &DetOptions { width_scale: 1.5, ..DetOptions::default() }).unwrap().value;
    assert!((base - wide).abs() < 1e-6);
}

#[test]
fn finite_cdf_matches_warren_density() {
    // N = 2 from (-1, -2): P(x_2(1) >= -2.5) by integrating the transition density.
    let init = InitialCondition::Custom(vec![-1.0, -2.0]);
    let a = -2.5;
    let outer = GaussLegendre::cached(20);
    let mut p = 0.0;
    for k in 0..24 {
        let lo = a + 0.5 * k as f64;
        for (x2, w2) in outer.mapped(lo, lo + 0.5) {
            let inner = integrate_panels(x2, x2 + 14.0, 28, 16, |x1| transition_density(&[x1, x2], 1.0, &init).unwrap());
            p += w2 * inner;
        }
    }
    let det = joint_cdf_finite(1.0, &LabelSet::single(2, a).unwrap()).unwrap().value;
    assert!((det - p).abs() < 1e-8, "{det} vs {p}");
    // Two labels: P(x_1(1) >= a1, x_2(1) >= a2).
    let (a1, a2) = (-0.8, -2.2);
    let mut p = 0.0;
    // Panels of width 0.35 put a1 on a breakpoint, where the inner limit has a kink.
    for k in 0..36 {
        let lo = a2 + 0.35 * k as f64;
        for (x2, w2) in outer.mapped(lo, lo + 0.35) {
            let from = x2.max(a1);
            let inner = integrate_panels(from, from + 14.0, 28, 16, |x1| transition_density(&[x1, x2], 1.0, &init).unwrap());
            p += w2 * inner;
        }
    }
    let det = joint_cdf_finite(1.0, &LabelSet::new(vec![1, 2], vec![a1, a2]).unwrap()).unwrap().value;
    assert!((det - p).abs() < 1e-8, "{det} vs {p}");
    // The top particle is a free Brownian motion from -1.
    let top = joint_cdf_finite(0.7, &LabelSet::single(1, -0.4).unwrap()).unwrap().value;
    assert!((top - 0.5 * libm::erfc(0.6 / 1.4f64.sqrt())).abs() < 1e-10);
    // Joint events are bounded by their marginals.
    let j = joint_cdf_finite(1.0, &LabelSet::new(vec![1, 3], vec![-1.5, -3.5]).unwrap()).unwrap().value;
    let m1 = joint_cdf_finite(1.0, &LabelSet::single(1, -1.5).unwrap()).unwrap().value;
    let m3 = joint_cdf_finite(1.0, &LabelSet::single(3, -3.5).unwrap()).unwrap().value;
    assert!(j <= m1.min(m3) + 1e-9 && j >= m1 + m3 - 1.0 - 1e-9);
}

#[test]
fn flat_one_point_near_airy1_at_large_time() {
    for s in [-1.5, 0.0, 1.0] {
        let f = joint_cdf_flat(1e3, &LabelSet::from_scaled(1e3, &[(0.0, s)]).unwrap()).unwrap().value;
        let a = joint_cdf_airy1(&[(0.0, s)]).unwrap().value;
        assert!((f - a).abs() < 2e-2, "s={s}: {f} vs {a}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn rank_one_identity(c in 0.05f64..1.2, a in -3.0f64..3.0) {
        let exact = 1.0 - c * 0.5 * std::f64::consts::PI.sqrt() * libm::erfc(-a);
        prop_assert!((gaussian_rank_one(c, a) - exact).abs() < 1e-8);
    }

    #[test]
    fn airy1_cdf_is_monotone(s in -3.0f64..3.0, ds in 0.01f64..1.0) {
        let lo = joint_cdf_airy1(&[(0.0, s)]).unwrap().value;
        let hi = joint_cdf_airy1(&[(0.0, s + ds)]).unwrap().value;
        prop_assert!(hi >= lo - 1e-12);
    }
}
