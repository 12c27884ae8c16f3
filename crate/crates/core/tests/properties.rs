use fatfront_core::analysis::envelopes;
use fatfront_core::certificates::PhiProfile;
use fatfront_core::discretization::{ConvolutionOptions, ConvolutionPlan, Field, Grid1D};
use fatfront_core::integrator::{step, Scheme};
use fatfront_core::kernels::{catalog, KernelFamily, KernelSpec};
use fatfront_core::reaction::{ReactionFamily, ReactionSpec};
use proptest::prelude::*;

fn kernel_family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        (0.2f64..3.0, 0.1f64..5.0).prop_map(|(alpha, c)| KernelFamily::LogSublinear { alpha, c }),
        (0.2f64..0.9, 0.3f64..3.0, 0.1f64..5.0).prop_map(|(alpha, beta, c)| KernelFamily::StretchedExp {
            alpha,
            beta,
            c
        }),
        (2.2f64..6.0, 0.1f64..5.0).prop_map(|(alpha, c)| KernelFamily::Algebraic { alpha, c }),
        (0.3f64..3.0, 0.1f64..5.0).prop_map(|(rate, c)| KernelFamily::Laplace { rate, c }),
    ]
}

fn fat_family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        (0.2f64..0.9, 0.3f64..3.0).prop_map(|(alpha, beta)| KernelFamily::StretchedExp { alpha, beta, c: 1.0 }),
        (2.2f64..6.0).prop_map(|alpha| KernelFamily::Algebraic { alpha, c: 1.0 }),
        (0.5f64..2.0).prop_map(|alpha| KernelFamily::LogSublinear { alpha, c: 1.0 }),
    ]
}

fn reaction() -> impl Strategy<Value = ReactionSpec> {
    prop_oneof![Just(ReactionFamily::Logistic), (0.0f64..3.0).prop_map(|a| ReactionFamily::WeakAllee { a }),]
        .prop_map(|f| ReactionSpec::new(f).unwrap())
}

fn unit_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, n)
}

fn plan(family: KernelFamily, half_width: f64, n: usize) -> ConvolutionPlan {
    let k = KernelSpec::new(family).unwrap();
    let opts = ConvolutionOptions { deficit_max: 1.0, ..ConvolutionOptions::default() };
    ConvolutionPlan::new(Grid1D::new(half_width, n).unwrap(), &k, opts).unwrap()
}

fn direct(plan: &ConvolutionPlan, u: &[f64]) -> Vec<f64> {
    let w = plan.weights();
    (0..u.len()).map(|i| u.iter().enumerate().map(|(j, v)| w[i.abs_diff(j)] * v).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_even_and_normalized(family in kernel_family(), x in -1e3f64..1e3) {
        let k = KernelSpec::new(family).unwrap();
        prop_assert_eq!(k.evaluate(x), k.evaluate(-x));
        let (mass, moment) = k.mass_and_first_moment().unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        prop_assert!(moment.is_finite() && moment > 0.0);
    }

    #[test]
    fn kernel_tail_is_monotone(family in kernel_family(), a in 0.0f64..500.0, gap in 0.0f64..500.0) {
        let k = KernelSpec::new(family).unwrap();
        prop_assert!(k.evaluate(a) >= k.evaluate(a + gap));
        prop_assert!(k.ln_evaluate(a) >= k.ln_evaluate(a + gap));
        prop_assert!(k.tail_mass(a).unwrap() >= k.tail_mass(a + gap).unwrap());
    }

    #[test]
    fn inverse_tail_round_trips(family in kernel_family(), depth in 0.01f64..300.0) {
        let k = KernelSpec::new(family).unwrap();
        let ln_y = k.ln_evaluate(0.0) - depth;
        let x = k.inverse_ln_tail(ln_y).unwrap();
        prop_assert!(x > k.splice_radius());
        prop_assert!((k.ln_evaluate(x) - ln_y).abs() <= 1e-8 * (1.0 + ln_y.abs()));
    }

    #[test]
    fn fat_tails_beat_every_exponential(family in fat_family(), eta in 0.05f64..2.0) {
        let k = KernelSpec::new(family).unwrap();
        // J(x) e^{ηx} eventually exceeds any bound
        let x = match family {
            KernelFamily::LogSublinear { alpha, .. } => 1e6 / (eta * eta) * (4.0 * alpha / eta).exp(),
            _ => 1e6 / (eta * eta),
        };
        prop_assert!(k.ln_evaluate(x) + eta * x > 10.0);
        prop_assert!(k.exponential_moment(eta).is_err());
    }

    #[test]
    fn truncation_keeps_one_minus_eps(family in kernel_family(), eps in 0.01f64..0.99) {
        let k = KernelSpec::new(family).unwrap();
        let t = k.truncate(eps).unwrap();
        prop_assert!((t.d_eps() + t.eps() - 1.0).abs() < 1e-15);
        prop_assert!((2.0 * k.tail_mass(t.a_eps()).unwrap() - eps).abs() < 1e-9);
        prop_assert_eq!(t.evaluate(t.a_eps() * 1.001), 0.0);
    }

    #[test]
    fn convolution_matches_direct_sum(family in kernel_family(), half_width in 5.0f64..100.0, u in unit_values(128)) {
        let p = plan(family, half_width, u.len());
        let mut out = vec![0.0; u.len()];
        p.convolve_into(&u, &mut out);
        let oracle = direct(&p, &u);
        let scale = oracle.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (a, b) in out.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn convolution_commutes_with_reflection(family in kernel_family(), u in unit_values(96)) {
        let p = plan(family, 30.0, u.len());
        let mut a = vec![0.0; u.len()];
        let mut b = vec![0.0; u.len()];
        let reflected: Vec<f64> = u.iter().rev().copied().collect();
        p.convolve_into(&u, &mut a);
        p.convolve_into(&reflected, &mut b);
        b.reverse();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn convolution_is_monotone_and_loses_mass_outward(
        family in kernel_family(),
        u in unit_values(96),
        bump in unit_values(96),
    ) {
        let p = plan(family, 30.0, u.len());
        let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
        let mut cu = vec![0.0; u.len()];
        let mut cv = vec![0.0; u.len()];
        p.convolve_into(&u, &mut cu);
        p.convolve_into(&v, &mut cv);
        for (a, b) in cu.iter().zip(&cv) {
            prop_assert!(*a <= *b + 1e-12);
        }
        let before: f64 = u.iter().sum();
        let after: f64 = cu.iter().sum();
        prop_assert!(after <= before * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn reaction_invariants(r in reaction(), s in 0.0f64..=1.0) {
        prop_assert_eq!(r.f(0.0), 0.0);
        prop_assert!(r.f(1.0).abs() < 1e-15);
        prop_assert!(r.f(s) >= 0.0);
        prop_assert!(r.f(s) <= r.sup_per_capita_rate() * s + 1e-15);
        prop_assert!(r.fprime(s).abs() <= r.max_abs_fprime() + 1e-12);
        prop_assert!(r.evaluate_f(1.5).is_err());
    }

    #[test]
    fn stepping_preserves_order(u in unit_values(128), bump in unit_values(128), r in reaction()) {
        let p = plan(catalog::STRETCHED_SQRT, 40.0, u.len());
        let g = p.grid();
        let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
        let dt = 0.25 / r.max_abs_fprime().max(1.0);
        let mut lo = Field::new(g, u, 0.0).unwrap();
        let mut hi = Field::new(g, v, 0.0).unwrap();
        for _ in 0..4 {
            lo = step(&lo, &p, Some(&r), dt, Scheme::Rk4, 1e-8).unwrap();
            hi = step(&hi, &p, Some(&r), dt, Scheme::Rk4, 1e-8).unwrap();
        }
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!(*a <= *b + 1e-8);
        }
    }

    #[test]
    fn linear_flow_conserves_mass(u in unit_values(64)) {
        // thin kernel and a wide zero margin so nothing reaches the boundary
        let n = 1024;
        let p = plan(catalog::LAPLACE_UNIT, 200.0, n);
        let mut values = vec![0.0; n];
        values[480..544].copy_from_slice(&u);
        let mut f = Field::new(p.grid(), values, 0.0).unwrap();
        let m0 = f.mass();
        let dt = 0.25;
        for _ in 0..8 {
            f = step(&f, &p, None, dt, Scheme::Rk4, 1e-8).unwrap();
        }
        prop_assert!((f.mass() - m0).abs() <= (p.deficit() + 1e-10) * 2.0 * m0 + 1e-14);
    }

    #[test]
    fn envelopes_are_ordered(lambda in 0.05f64..0.95, eps in 0.01f64..0.99, margin in 0.0f64..1.0, t in 0.0f64..50.0) {
        let k = KernelSpec::new(catalog::STRETCHED_SQRT).unwrap();
        let r = ReactionSpec::new(ReactionFamily::Logistic).unwrap();
        let rho = r.sup_per_capita_rate() + margin;
        let rep = envelopes(&k, &r, lambda, eps, rho, &[t], None).unwrap();
        prop_assert!(0.0 <= rep.lower[0] && rep.lower[0] <= rep.upper[0]);
        prop_assert_eq!(rep.contained[0], None);
    }

    #[test]
    fn phi_profile_is_even_increasing_concave(x in 0.0f64..1e4, h in 0.01f64..50.0) {
        let phi = PhiProfile::new(&KernelSpec::new(catalog::STRETCHED_SQRT).unwrap()).unwrap();
        prop_assert_eq!(phi.phi(0.0), 0.0);
        prop_assert_eq!(phi.phi(x), phi.phi(-x));
        prop_assert!(phi.phi(x + h) >= phi.phi(x));
        let mid = phi.phi(x + h);
        let chord = 0.5 * (phi.phi(x) + phi.phi(x + 2.0 * h));
        prop_assert!(mid >= chord - 1e-9 * (1.0 + mid.abs()));
        prop_assert!(phi.phi_hat(x) <= 1.0);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let r = ReactionSpec::new(ReactionFamily::Logistic).unwrap();
    let p = plan(catalog::LAPLACE_UNIT, 50.0, 256);
    let g = p.grid();
    let u0: Vec<f64> = g.coordinates().iter().map(|x| (-(x * x) / 50.0).exp() * 0.8).collect();
    let solve = |dt: f64| {
        let mut f = Field::new(g, u0.clone(), 0.0).unwrap();
        for _ in 0..(2.0 / dt).round() as usize {
            f = step(&f, &p, Some(&r), dt, Scheme::Rk4, 1e-8).unwrap();
        }
        f.values
    };
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (a, b, c) = (solve(0.2), solve(0.1), solve(0.05));
    let ratio = diff(&a, &b) / diff(&b, &c);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}
