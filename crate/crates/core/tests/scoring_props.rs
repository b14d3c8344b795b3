use antifrag::filters::FilterKind;
use antifrag::scoring::{classify, integrated_score, score_adversarial, score_clean, score_combined, Label, ScoreRecord};
use proptest::prelude::*;

fn j() -> impl Strategy<Value = f64> {
    -2000.0f64..2000.0
}

fn rank(l: Label) -> u8 {
    match l {
        Label::Fragile => 0,
        Label::Robust => 1,
        Label::Antifragile => 2,
    }
}

proptest! {
    #[test]
    fn antisymmetric(a in j(), b in j()) {
        prop_assert_eq!(score_clean(a, b), -score_clean(b, a));
        prop_assert_eq!(score_adversarial(a, b), -score_adversarial(b, a));
        prop_assert_eq!(score_combined(a, b), -score_combined(b, a));
    }

    #[test]
    fn translation_invariant(a in j(), b in j(), c in j()) {
        let tol = 1e-12 * (a.abs() + b.abs() + c.abs());
        prop_assert!((score_clean(a + c, b + c) - score_clean(a, b)).abs() <= tol);
    }

    #[test]
    fn record_identity(cb in j(), cf in j(), ab in j(), af in j(), tau in 0.0f64..50.0) {
        let r = ScoreRecord::new(FilterKind::Pwf, 0.5, 0.25, cb, cf, ab, af, 0.5, tau);
        prop_assert!(r.differences_exact());
        prop_assert!(r.identity_residual() < 1e-9);
    }

    #[test]
    fn classify_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0, tau in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(classify(lo, tau)) <= rank(classify(hi, tau)));
    }

    #[test]
    fn integrated_linear(
        pts in prop::collection::vec((0.0f64..1.0, j(), j()), 2..20),
        k in -10.0f64..10.0,
    ) {
        let mut stress: Vec<f64> = pts.iter().map(|p| p.0).collect();
        stress.sort_by(f64::total_cmp);
        let stressed: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let base: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let scaled: Vec<f64> = stressed.iter().zip(&base).map(|(s, b)| b + k * (s - b)).collect();
        let s1 = integrated_score(&stress, &stressed, &base).unwrap();
        let sk = integrated_score(&stress, &scaled, &base).unwrap();
        let mag: f64 = stressed.iter().chain(&base).map(|v| v.abs()).sum::<f64>() * (1.0 + k.abs());
        prop_assert!((sk - k * s1).abs() <= 1e-12 * mag.max(1.0));
    }

    #[test]
    fn integrated_matches_fine_riemann_sum(
        knots in prop::collection::vec(-50.0f64..50.0, 2..8),
        width in 0.1f64..3.0,
    ) {
        // Piecewise-linear integrand on a uniform grid: the trapezoid rule is exact,
        // and a fine midpoint sum converges to the same value.
        let n = knots.len();
        let stress: Vec<f64> = (0..n).map(|i| i as f64 * width).collect();
        let zeros = vec![0.0; n];
        let trap = integrated_score(&stress, &knots, &zeros).unwrap();
        let fine = 20_000;
        let total = stress[n - 1];
        let h = total / fine as f64;
        let interp = |x: f64| {
            let i = ((x / width) as usize).min(n - 2);
            let t = (x - stress[i]) / width;
            knots[i] * (1.0 - t) + knots[i + 1] * t
        };
        let riemann: f64 = (0..fine).map(|k| interp((k as f64 + 0.5) * h) * h).sum();
        prop_assert!((trap - riemann).abs() < 1e-6 * (1.0 + trap.abs()));
    }
}
