use mlmfm::global::{estimate_rank, majority_vote};
use mlmfm::metrics::{rss_tss, subspace_distance};
use mlmfm::numerics::{sym_eig, thin_qr, varimax, varimax_criterion};
use mlmfm::pipeline::io::default_manifest;
use mlmfm::pipeline::{read_panel_csv, write_panel_csv, MissingPolicy};
use mlmfm::types::orthonormality_error;
use mlmfm::{GroupSeries, GroupedPanel, Mat};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-10.0..10.0f64, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v))
}

fn tall(max_rows: usize) -> impl Strategy<Value = Mat> {
    (2..=max_rows).prop_flat_map(|n| (1..=n).prop_flat_map(move |k| matrix(n, k)))
}

/// Two orthonormal bases in the same ambient dimension.
fn basis_pair() -> impl Strategy<Value = (Mat, Mat)> {
    (3..=7usize)
        .prop_flat_map(|n| (1..=n, 1..=n, Just(n)))
        .prop_flat_map(|(a, b, n)| (matrix(n, a), matrix(n, b)))
        .prop_filter_map("rank deficient draw", |(a, b)| {
            Some((thin_qr(&a).ok()?.0, thin_qr(&b).ok()?.0))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thin_qr_is_idempotent_on_q(a in tall(8)) {
        if let Ok((q, r)) = thin_qr(&a) {
            prop_assert!(orthonormality_error(&q) < 1e-10);
            prop_assert!((&q * &r - &a).amax() <= 1e-10 * a.norm().max(1.0));
            let (q2, r2) = thin_qr(&q).unwrap();
            prop_assert!((&q2 - &q).amax() < 1e-10);
            prop_assert!((r2 - Mat::identity(q.ncols(), q.ncols())).amax() < 1e-10);
        }
    }

    #[test]
    fn distance_is_bounded_and_symmetric((a, b) in basis_pair()) {
        let d = subspace_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, subspace_distance(&b, &a).unwrap());
        prop_assert!(subspace_distance(&a, &a).unwrap() < 1e-7);
    }

    #[test]
    fn eigen_ladder_is_sorted_and_keeps_trace(m in (1..=7usize).prop_flat_map(|n| matrix(n, n))) {
        let a = &m * m.transpose();
        let e = sym_eig(&a).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let scale = a.norm().max(1.0);
        prop_assert!((e.values.iter().sum::<f64>() - a.trace()).abs() <= 1e-8 * scale);
        prop_assert!(e.values.iter().all(|&v| v >= -1e-10 * scale));
        prop_assert!(orthonormality_error(&e.vectors) < 1e-10);
    }

    #[test]
    fn varimax_keeps_orthonormal_columns_and_never_decreases(a in (3..=9usize).prop_flat_map(|n| matrix(n, 3))) {
        if let Ok((q, _)) = thin_qr(&a) {
            let res = varimax(&q, 100, 1e-8);
            prop_assert!(orthonormality_error(&res.rotated) < 1e-9);
            prop_assert!(orthonormality_error(&res.rotation) < 1e-9);
            prop_assert!(varimax_criterion(&res.rotated) >= varimax_criterion(&q) - 1e-12);
        }
    }

    #[test]
    fn rank_rule_stays_in_range(mut ladder in prop::collection::vec(0.0..100.0f64, 2..20), cap in 1usize..30) {
        ladder.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ladder[0] += 1.0;
        let k = estimate_rank(&ladder, cap).unwrap();
        prop_assert!(k >= 1 && k <= (cap / 3).max(1).min(ladder.len() - 1).max(1));
    }

    #[test]
    fn vote_returns_a_cast_value(votes in prop::collection::vec(1usize..5, 1..9)) {
        let v = majority_vote(&votes).unwrap();
        prop_assert!(votes.contains(&v));
        let count = |x: usize| votes.iter().filter(|&&y| y == x).count();
        prop_assert!(votes.iter().all(|&x| count(x) < count(v) || (count(x) == count(v) && x >= v)));
    }

    #[test]
    fn rss_tss_ignores_a_common_shift(
        x in prop::collection::vec(matrix(3, 2), 3..8),
        noise in prop::collection::vec(matrix(3, 2), 8),
        shift in -50.0..50.0f64,
    ) {
        let fitted: Vec<Mat> = x.iter().zip(&noise).map(|(a, e)| a + e * 0.1).collect();
        if let Ok(base) = rss_tss(&x, &fitted) {
            prop_assert!(base <= 1.0);
            let xs: Vec<Mat> = x.iter().map(|a| a.add_scalar(shift)).collect();
            let fs: Vec<Mat> = fitted.iter().map(|a| a.add_scalar(shift)).collect();
            let shifted = rss_tss(&xs, &fs).unwrap();
            prop_assert!((shifted - base).abs() <= 1e-8 * (1.0 + base.abs()));
            prop_assert_eq!(rss_tss(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn panel_csv_round_trip_is_exact(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 2 * 3 * 2 * 4),
    ) {
        let mut it = values.into_iter();
        let groups = (0..2)
            .map(|g| {
                let obs = (0..4).map(|_| Mat::from_iterator(3, 2, it.by_ref().take(6))).collect();
                GroupSeries::new(format!("g{g}"), obs)
            })
            .collect();
        let panel = GroupedPanel::new(groups);
        let manifest = default_manifest(&panel);
        let mut buf = Vec::new();
        write_panel_csv(&panel, &manifest, &mut buf).unwrap();
        let (back, m2) = read_panel_csv(buf.as_slice(), MissingPolicy::Reject).unwrap();
        prop_assert_eq!(m2, manifest);
        for (a, b) in panel.groups.iter().zip(&back.groups) {
            for (x, y) in a.obs.iter().zip(&b.obs) {
                prop_assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
    }
}
