use antifrag::filters::{
    apply_mask, compactness, hpf_mask, lpf_mask, make_grid, pwf_mask, FilterKind, FilterMask,
};
use proptest::prelude::*;

fn theta() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![-5.0f64..-1e-6, 1e-6f64..5.0],
        2..200,
    )
}

fn kind() -> impl Strategy<Value = FilterKind> {
    prop_oneof![Just(FilterKind::Hpf), Just(FilterKind::Lpf), Just(FilterKind::Pwf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hpf_lpf_complementary(t in theta(), alpha in 0.0f64..5.0) {
        prop_assume!(t.iter().all(|v| v.abs() != alpha));
        let (h, l) = (hpf_mask(&t, alpha), lpf_mask(&t, alpha));
        for (a, b) in h.bits.iter().zip(&l.bits) {
            prop_assert!(*a != *b, "each parameter survives exactly one filter");
        }
    }

    #[test]
    fn compactness_monotone(t in theta(), n in 1usize..40) {
        let grid = make_grid(&t, n);
        prop_assume!(grid.is_ok());
        let grid = grid.unwrap();
        let hpf: Vec<f64> = grid.values.iter().map(|&a| compactness(&hpf_mask(&t, a)).compactness).collect();
        let lpf: Vec<f64> = grid.values.iter().map(|&a| compactness(&lpf_mask(&t, a)).compactness).collect();
        prop_assert!(hpf.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(lpf.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*hpf.last().unwrap(), 0.0);
        prop_assert_eq!(lpf[0], 0.0);
    }

    #[test]
    fn pwf_bands_tile(t in theta(), n in 1usize..40) {
        let grid = make_grid(&t, n);
        prop_assume!(grid.is_ok());
        let grid = grid.unwrap();
        let masks: Vec<FilterMask> = grid.values.iter().map(|&a| pwf_mask(&t, a, grid.delta_alpha)).collect();
        let on_edge = |m: f64| {
            grid.values.iter().any(|&a| {
                m == a - grid.delta_alpha / 2.0 || m == a + grid.delta_alpha / 2.0
            })
        };
        let mut total = 0;
        for (i, v) in t.iter().enumerate() {
            let hits = masks.iter().filter(|m| !m.bits[i]).count();
            prop_assert!(hits >= 1, "|θ|={} escaped every band", v.abs());
            if !on_edge(v.abs()) {
                prop_assert_eq!(hits, 1);
            }
            total += hits;
        }
        let removed: usize = masks.iter().map(|m| m.removed_count()).sum();
        prop_assert_eq!(removed, total);
        if t.iter().all(|v| !on_edge(v.abs())) {
            prop_assert_eq!(removed, t.len());
        }
    }

    #[test]
    fn apply_mask_idempotent_and_faithful(t in theta(), k in kind(), alpha in 0.0f64..5.0, da in 0.01f64..1.0) {
        let m = k.mask(&t, alpha, da);
        let once = apply_mask(&t, &m).unwrap();
        prop_assert_eq!(apply_mask(&once, &m).unwrap(), once.clone());
        for i in 0..t.len() {
            if m.bits[i] {
                prop_assert_eq!(once[i].to_bits(), t[i].to_bits());
            } else {
                prop_assert_eq!(once[i], 0.0);
            }
        }
    }

    #[test]
    fn run_length_round_trip(t in theta(), k in kind(), alpha in 0.0f64..5.0) {
        let m = k.mask(&t, alpha, 0.3);
        let back = FilterMask::from_run_length(k, alpha, &m.to_run_length()).unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #[test]
    fn identity_threshold_removes_nothing(t in theta(), k in kind(), n in 1usize..30) {
        let grid = make_grid(&t, n);
        prop_assume!(grid.is_ok());
        let grid = grid.unwrap();
        let m = k.mask(&t, k.identity_alpha(&grid), grid.delta_alpha);
        prop_assert_eq!(m.removed_count(), 0);
    }
}
