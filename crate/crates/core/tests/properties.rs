use ndarray::Array2;
use proptest::prelude::*;

use paraprobe_core::features::rolling_stats;
use paraprobe_core::ingest::{clean_matrix, standardize};
use paraprobe_core::probes::acf;

fn matrix(max_n: usize, max_p: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        prop::collection::vec(-1e3f64..1e3, n * p)
            .prop_map(move |v| Array2::from_shape_vec((n, p), v).unwrap())
    })
}

fn cell() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => -1e6f64..1e6,
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
    ]
}

proptest! {
    #[test]
    fn clean_is_idempotent(v in prop::collection::vec(cell(), 1..200)) {
        let mut once = Array2::from_shape_vec((v.len(), 1), v).unwrap();
        clean_matrix(&mut once);
        let mut twice = once.clone();
        clean_matrix(&mut twice);
        prop_assert!(once.iter().all(|x| x.is_finite()));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn standardized_columns_are_centered(x in matrix(60, 6)) {
        let (z, params) = standardize(&x).unwrap();
        let n = x.nrows() as f64;
        for (j, col) in z.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            prop_assert!(m.abs() < 1e-9);
            if !params.constant_columns.contains(&j) {
                let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn acf_is_affine_invariant(
        v in prop::collection::vec(-100f64..100.0, 20..120),
        a in 0.1f64..50.0,
        b in -100f64..100.0,
    ) {
        prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-3));
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let r = acf(&v, 5).unwrap();
        let s = acf(&w, 5).unwrap();
        for (x, y) in r.iter().zip(&s) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rolling_min_mean_max_ordered(
        v in prop::collection::vec(-1e4f64..1e4, 1..150),
        w in 2usize..40,
    ) {
        let r = rolling_stats(&v, w).unwrap();
        for i in 0..v.len() {
            let tol = 1e-9 * r.max[i].abs().max(r.min[i].abs()).max(1.0);
            prop_assert!(r.min[i] <= r.mean[i] + tol && r.mean[i] <= r.max[i] + tol);
            prop_assert!(r.std[i] >= 0.0 && r.cv[i] >= 0.0);
        }
    }
}
