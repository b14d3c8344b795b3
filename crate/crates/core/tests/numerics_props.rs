mod common;

use antifrag::numerics::{finite_diff_grad, spearman, DenseMatrix, RngStream, FD_STEP};
use common::{rel_err, uniform_vec};
use proptest::prelude::*;

fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, uniform_vec(rng, rows * cols, -3.0, 3.0)).unwrap()
}

proptest! {
    #[test]
    fn matvec_distributes(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let m = random_matrix(&mut rng, rows, cols);
        let a = uniform_vec(&mut rng, cols, -5.0, 5.0);
        let b = uniform_vec(&mut rng, cols, -5.0, 5.0);
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = m.matvec(&ab).unwrap();
        let (ma, mb) = (m.matvec(&a).unwrap(), m.matvec(&b).unwrap());
        for r in 0..rows {
            // Rounding scales with the magnitude of the summands, not the sum.
            let scale: f64 = (0..cols).map(|c| m.get(r, c).abs() * (a[c].abs() + b[c].abs())).sum();
            prop_assert!((lhs[r] - (ma[r] + mb[r])).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn transpose_is_adjoint(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 1);
        let m = random_matrix(&mut rng, rows, cols);
        let x = uniform_vec(&mut rng, cols, -1.0, 1.0);
        let y = uniform_vec(&mut rng, rows, -1.0, 1.0);
        let lhs: f64 = m.matvec(&x).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = m.matvec_transpose(&y).unwrap().iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn streams_reproduce(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..64 {
            prop_assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn fd_gradient_of_quadratic(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 2);
        let a = random_matrix(&mut rng, n, n);
        let x = uniform_vec(&mut rng, n, -2.0, 2.0);
        let f = |v: &[f64]| -> f64 {
            let av = a.matvec(v).unwrap();
            v.iter().zip(&av).map(|(p, q)| p * q).sum()
        };
        let exact: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| (a.get(i, j) + a.get(j, i)) * x[j]).sum())
            .collect();
        let fd = finite_diff_grad(f, &x, FD_STEP).unwrap();
        prop_assert!(rel_err(&fd, &exact) < 1e-5);
    }

    #[test]
    fn spearman_bounded_and_symmetric(seed in any::<u64>(), n in 3usize..30) {
        let mut rng = RngStream::new(seed, 3);
        let x = uniform_vec(&mut rng, n, -1.0, 1.0);
        let y = uniform_vec(&mut rng, n, -1.0, 1.0);
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert_eq!(Some(r), spearman(&y, &x));
        }
        // Any strictly increasing map of y leaves the rank correlation unchanged.
        let z: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0).collect();
        prop_assert_eq!(spearman(&x, &y), spearman(&x, &z));
    }
}

/// Fixed draws pin the generator across platforms and releases.
#[test]
fn stream_golden_values() {
    let mut a = RngStream::new(0, 0);
    let mut b = RngStream::new(42, 7);
    assert_eq!([a.next_u64(), a.next_u64(), b.next_u64()], GOLDEN);
}

const GOLDEN: [u64; 3] = [13080132717333068652, 8594738769458413623, 2370525664269707216];
