//! Stage 1: global loading spaces from cross-group contemporaneous
//! covariances, and the eigenvalue-ratio rank rule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::{at_b, block_gram_sum, stack, swap_row_layout, symmetrize};
use crate::numerics::sym_eig;
use crate::types::{DirectionDiagnostics, GroupedPanel, Mat};

/// Row-direction (`W1`, `N_m x N_m`) and column-direction (`W2`, `p x p`)
/// statistics for one group.
#[derive(Debug, Clone)]
pub struct GlobalStatistic {
    pub w1: Mat,
    pub w2: Mat,
}

/// Contributions of the ordered pair `(m, i)` to `W1_m` and `W2_m`, given
/// the cross-moment `G = D_mᵀ D_i / T` (rows indexed `a + j*N_m`).
fn pair_terms(g: &Mat, rows: usize, p: usize) -> (Mat, Mat) {
    let w1 = block_gram_sum(g, rows);
    let w2 = block_gram_sum(&swap_row_layout(g, rows, p), p);
    (w1, w2)
}

/// `W1_m` and `W2_m` for every group.
///
/// `W1_m = sum_{i != m} sum_{j1, j2} Omega_{mi,j1j2} Omega_{mi,j1j2}ᵀ` with
/// `Omega_{mi,j1j2} = T⁻¹ sum_t x_{.j1,mt} x_{.j2,it}ᵀ` (raw cross moments, no
/// centering). `W2_m` is the same construction on transposed data. Each
/// unordered pair's cross-moment matrix is formed once and used for both
/// groups; per-group sums run over `i` in increasing order.
pub fn global_statistics(panel: &GroupedPanel) -> Result<Vec<GlobalStatistic>> {
    let m = panel.n_groups();
    if m < 2 {
        return Err(Error::TooFewGroups(m));
    }
    panel.ensure_valid()?;
    let t = panel.t();
    let p = panel.p();
    let stacks: Vec<Mat> = panel.groups.iter().map(|g| stack(&g.obs, false)).collect();

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
    let terms: Vec<((Mat, Mat), (Mat, Mat))> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let g = at_b(&stacks[a].as_view(), &stacks[b].as_view(), 1.0 / t as f64);
            let for_a = pair_terms(&g, panel.rows(a), p);
            let for_b = pair_terms(&g.transpose(), panel.rows(b), p);
            (for_a, for_b)
        })
        .collect();

    let mut stats: Vec<GlobalStatistic> = (0..m)
        .map(|g| GlobalStatistic {
            w1: Mat::zeros(panel.rows(g), panel.rows(g)),
            w2: Mat::zeros(p, p),
        })
        .collect();
    for (&(a, b), ((w1a, w2a), (w1b, w2b))) in pairs.iter().zip(terms) {
        stats[a].w1 += w1a;
        stats[a].w2 += w2a;
        stats[b].w1 += w1b;
        stats[b].w2 += w2b;
    }
    for s in &mut stats {
        symmetrize(&mut s.w1);
        symmetrize(&mut s.w2);
    }
    Ok(stats)
}

/// `W1_m` for a single group.
pub fn compute_w1(panel: &GroupedPanel, m: usize) -> Result<Mat> {
    single_group(panel, m).map(|s| s.w1)
}

/// `W2_m` for a single group (row construction applied to `X_mtᵀ`).
pub fn compute_w2(panel: &GroupedPanel, m: usize) -> Result<Mat> {
    single_group(panel, m).map(|s| s.w2)
}

fn single_group(panel: &GroupedPanel, m: usize) -> Result<GlobalStatistic> {
    let groups = panel.n_groups();
    if groups < 2 {
        return Err(Error::TooFewGroups(groups));
    }
    if m >= groups {
        return Err(Error::Shape(format!("group index {m} out of range")));
    }
    panel.ensure_valid()?;
    let t = panel.t() as f64;
    let p = panel.p();
    let dm = stack(&panel.group(m).obs, false);
    let mut w1 = Mat::zeros(panel.rows(m), panel.rows(m));
    let mut w2 = Mat::zeros(p, p);
    for i in (0..groups).filter(|&i| i != m) {
        let di = stack(&panel.group(i).obs, false);
        let g = at_b(&dm.as_view(), &di.as_view(), 1.0 / t);
        let (a, b) = pair_terms(&g, panel.rows(m), p);
        w1 += a;
        w2 += b;
    }
    symmetrize(&mut w1);
    symmetrize(&mut w2);
    Ok(GlobalStatistic { w1, w2 })
}

/// Eigenvalues below `1e-12 * lambda_1` are raised to that floor before
/// ratios are formed.
fn floored(ladder: &[f64]) -> Result<Vec<f64>> {
    let top = ladder.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let floor = 1e-12 * top;
    Ok(ladder.iter().map(|&v| v.max(floor)).collect())
}

/// `lambda_{i+1} / lambda_i` over the whole (floored) ladder.
pub fn ratio_curve(ladder: &[f64]) -> Result<Vec<f64>> {
    let vals = floored(ladder)?;
    Ok(vals.windows(2).map(|w| w[1] / w[0]).collect())
}

/// Eigenvalue-ratio rank: the `i` in `1..=max(1, dim_cap / 3)` minimizing
/// `lambda_{i+1} / lambda_i`, smallest `i` on ties.
pub fn estimate_rank(ladder: &[f64], dim_cap: usize) -> Result<usize> {
    let ratios = ratio_curve(ladder)?;
    let end = (dim_cap / 3).max(1).min(ratios.len());
    let mut best = 1;
    for i in 1..=end {
        if ratios[i - 1] < ratios[best - 1] {
            best = i;
        }
    }
    Ok(best)
}

/// Most frequent value; ties go to the smallest.
pub fn majority_vote(values: &[usize]) -> Option<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    for chunk in sorted.chunk_by(|a, b| a == b) {
        let count = chunk.len();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((chunk[0], count));
        }
    }
    best.map(|(v, _)| v)
}

pub(crate) fn direction_diagnostics(values: &[f64], dim_cap: usize) -> Result<DirectionDiagnostics> {
    let clean: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    Ok(DirectionDiagnostics {
        ratios: ratio_curve(&clean)?,
        estimated: estimate_rank(&clean, dim_cap)?,
        ladder: clean,
        used: 0,
    })
}

#[derive(Debug, Clone)]
pub struct GlobalGroupFit {
    pub q1: Mat,
    pub q2: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub row: DirectionDiagnostics,
    pub col: DirectionDiagnostics,
}

#[derive(Debug, Clone)]
pub struct GlobalFit {
    pub k1: usize,
    pub k2: usize,
    pub groups: Vec<GlobalGroupFit>,
}

/// Estimates global loading spaces for every group. Missing `k1` / `k2` are
/// estimated per group and reconciled by majority vote.
pub fn fit_global(panel: &GroupedPanel, k1: Option<usize>, k2: Option<usize>) -> Result<GlobalFit> {
    let stats = global_statistics(panel)?;
    let p = panel.p();
    let mut eigs = Vec::with_capacity(stats.len());
    let mut rows = Vec::with_capacity(stats.len());
    let mut cols = Vec::with_capacity(stats.len());
    for (m, s) in stats.iter().enumerate() {
        let e1 = sym_eig(&s.w1)?;
        let e2 = sym_eig(&s.w2)?;
        rows.push(direction_diagnostics(&e1.values, panel.rows(m))?);
        cols.push(direction_diagnostics(&e2.values, p)?);
        eigs.push((e1, e2));
    }

    let min_rows = (0..panel.n_groups()).map(|m| panel.rows(m)).min().unwrap_or(0);
    let k1 = match k1 {
        Some(k) => k,
        None => majority_vote(&rows.iter().map(|d| d.estimated).collect::<Vec<_>>()).unwrap_or(1),
    };
    let k2 = match k2 {
        Some(k) => k,
        None => majority_vote(&cols.iter().map(|d| d.estimated).collect::<Vec<_>>()).unwrap_or(1),
    };
    if k1 < 1 || k1 > min_rows {
        return Err(Error::InvalidDims(format!("k1 = {k1} outside 1..={min_rows}")));
    }
    if k2 < 1 || k2 > p {
        return Err(Error::InvalidDims(format!("k2 = {k2} outside 1..={p}")));
    }

    let groups = eigs
        .into_iter()
        .zip(rows.into_iter().zip(cols))
        .map(|((e1, e2), (mut row, mut col))| {
            row.used = k1;
            col.used = k2;
            GlobalGroupFit {
                q1: e1.leading(k1),
                b1: e1.trailing(k1),
                q2: e2.leading(k2),
                b2: e2.trailing(k2),
                row,
                col,
            }
        })
        .collect();
    Ok(GlobalFit { k1, k2, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::subspace_distance;
    use crate::numerics::thin_qr;
    use crate::types::GroupSeries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Quadruple loop over pairs, column indices and entries.
    pub(crate) fn naive_w1(panel: &GroupedPanel, m: usize) -> Mat {
        let t = panel.t();
        let nm = panel.rows(m);
        let pm = panel.group(m).cols();
        let mut w = Mat::zeros(nm, nm);
        for i in (0..panel.n_groups()).filter(|&i| i != m) {
            let ni = panel.rows(i);
            for j1 in 0..pm {
                for j2 in 0..panel.group(i).cols() {
                    let mut omega = Mat::zeros(nm, ni);
                    for s in 0..t {
                        let xm = &panel.group(m).obs[s];
                        let xi = &panel.group(i).obs[s];
                        for a in 0..nm {
                            for b in 0..ni {
                                omega[(a, b)] += xm[(a, j1)] * xi[(b, j2)] / t as f64;
                            }
                        }
                    }
                    w += &omega * omega.transpose();
                }
            }
        }
        w
    }

    fn transposed(panel: &GroupedPanel) -> GroupedPanel {
        GroupedPanel::new(
            panel
                .groups
                .iter()
                .map(|g| GroupSeries::new(g.name.clone(), g.obs.iter().map(|x| x.transpose()).collect()))
                .collect(),
        )
    }

    fn random_panel(rng: &mut ChaCha8Rng, rows: &[usize], p: usize, t: usize) -> GroupedPanel {
        GroupedPanel::new(
            rows.iter()
                .enumerate()
                .map(|(g, &n)| {
                    let obs = (0..t)
                        .map(|_| Mat::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal)))
                        .collect();
                    GroupSeries::new(format!("g{g}"), obs)
                })
                .collect(),
        )
    }

    #[test]
    fn tiny_instance_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let panel = random_panel(&mut rng, &[2, 2], 2, 3);
        for m in 0..2 {
            let fast = compute_w1(&panel, m).unwrap();
            let slow = naive_w1(&panel, m);
            assert!((fast - slow).amax() < 1e-12);
            let fast2 = compute_w2(&panel, m).unwrap();
            let slow2 = naive_w1(&transposed(&panel), m);
            assert!((fast2 - slow2).amax() < 1e-12);
        }
    }

    #[test]
    fn all_groups_agree_with_single_group_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let panel = random_panel(&mut rng, &[3, 4, 2], 3, 6);
        let all = global_statistics(&panel).unwrap();
        for (m, stat) in all.iter().enumerate() {
            assert!((&stat.w1 - compute_w1(&panel, m).unwrap()).amax() < 1e-12);
            assert!((&stat.w2 - naive_w1(&transposed(&panel), m)).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_panel_gives_zero_statistic() {
        let panel = GroupedPanel::new(vec![
            GroupSeries::new("a", vec![Mat::zeros(3, 2); 4]),
            GroupSeries::new("b", vec![Mat::zeros(3, 2); 4]),
        ]);
        assert_eq!(compute_w1(&panel, 0).unwrap(), Mat::zeros(3, 3));
    }

    #[test]
    fn single_group_is_an_error() {
        let panel = GroupedPanel::new(vec![GroupSeries::new("a", vec![Mat::zeros(3, 2); 4])]);
        assert!(matches!(compute_w1(&panel, 0), Err(Error::TooFewGroups(1))));
        assert!(matches!(fit_global(&panel, None, None), Err(Error::TooFewGroups(1))));
    }

    #[test]
    fn statistic_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let panel = random_panel(&mut rng, &[5, 4], 3, 8);
        let w = compute_w1(&panel, 0).unwrap();
        assert_eq!(w, w.transpose());
        let e = sym_eig(&w).unwrap();
        assert!(e.values.iter().all(|&v| v >= -1e-8 * w.norm()));
    }

    #[test]
    fn signed_column_permutation_leaves_w1_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let panel = random_panel(&mut rng, &[3, 3, 2], 4, 7);
        let mut o = Mat::zeros(4, 4);
        for (i, (j, s)) in [(2, 1.0), (0, -1.0), (3, 1.0), (1, -1.0)].into_iter().enumerate() {
            o[(i, j)] = s;
        }
        let rotated = GroupedPanel::new(
            panel
                .groups
                .iter()
                .map(|g| GroupSeries::new(g.name.clone(), g.obs.iter().map(|x| x * &o).collect()))
                .collect(),
        );
        for m in 0..3 {
            let a = compute_w1(&panel, m).unwrap();
            let b = compute_w1(&rotated, m).unwrap();
            assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn left_rotation_rotates_estimated_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let panel = random_panel(&mut rng, &[5, 4, 4], 3, 20);
        let (u, _) = thin_qr(&Mat::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let mut rotated = panel.clone();
        for x in &mut rotated.groups[0].obs {
            *x = &u * &*x;
        }
        let w = compute_w1(&panel, 0).unwrap();
        let wr = compute_w1(&rotated, 0).unwrap();
        assert!((&u * &w * u.transpose() - &wr).amax() < 1e-10);

        let base = fit_global(&panel, Some(2), Some(1)).unwrap();
        let rot = fit_global(&rotated, Some(2), Some(1)).unwrap();
        let mapped = &u * &base.groups[0].q1;
        assert!(subspace_distance(&mapped, &rot.groups[0].q1).unwrap() < 1e-8);
    }

    #[test]
    fn rank_rule_examples() {
        assert_eq!(estimate_rank(&[100.0, 90.0, 0.001, 0.0008, 0.0007], 15).unwrap(), 2);
        assert_eq!(estimate_rank(&[5.0; 6], 6).unwrap(), 1);
        assert_eq!(estimate_rank(&[8.0, 4.0, 2.0, 1.0], 4).unwrap(), 1);
        // cap below 3 still searches i = 1
        assert_eq!(estimate_rank(&[3.0, 1.0], 2).unwrap(), 1);
        assert_eq!(estimate_rank(&[7.0], 1).unwrap(), 1);
        assert!(matches!(estimate_rank(&[0.0, 0.0], 6), Err(Error::DegenerateSpectrum)));
        // zero tail is floored, not divided by
        assert_eq!(estimate_rank(&[4.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 9).unwrap(), 2);
    }

    #[test]
    fn majority_vote_ties_go_low() {
        assert_eq!(majority_vote(&[3, 2, 3]), Some(3));
        assert_eq!(majority_vote(&[3, 2]), Some(2));
        assert_eq!(majority_vote(&[4, 4, 1, 1, 5]), Some(1));
        assert_eq!(majority_vote(&[]), None);
    }

    #[test]
    fn exact_recovery_without_noise_or_local_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, p, t) = (8, 6, 60);
        let c = thin_qr(&Mat::from_fn(p, 2, |_, _| rng.random_range(-1.0..1.0))).unwrap().0;
        let qs: Vec<Mat> = (0..3)
            .map(|_| thin_qr(&Mat::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0))).unwrap().0)
            .collect();
        let gs: Vec<Mat> = (0..t)
            .map(|_| Mat::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let panel = GroupedPanel::new(
            qs.iter()
                .enumerate()
                .map(|(m, q)| {
                    GroupSeries::new(format!("g{m}"), gs.iter().map(|g| q * g * c.transpose()).collect())
                })
                .collect(),
        );
        let fit = fit_global(&panel, None, None).unwrap();
        assert_eq!((fit.k1, fit.k2), (2, 2));
        for (m, q) in qs.iter().enumerate() {
            assert!(subspace_distance(&fit.groups[m].q1, q).unwrap() < 1e-6);
            assert!(subspace_distance(&fit.groups[m].q2, &c).unwrap() < 1e-6);
            assert!((fit.groups[m].b1.transpose() * &fit.groups[m].q1).amax() < 1e-10);
        }
    }
}
