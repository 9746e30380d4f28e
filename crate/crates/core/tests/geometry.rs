mod common;

use apportion::geometry::*;
use apportion::Error;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(points: &[Vec<f64>]) -> PointCloud {
    PointCloud::from_rows(points).unwrap()
}

fn random_points(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn hull_matches_lp_membership_up_to_200_points() {
    for (seed, d) in [(1, 1), (2, 2), (3, 3), (4, 2), (5, 3)] {
        let pts = random_points(seed, 200, d);
        let got = hull_vertices(&cloud(&pts)).unwrap();
        assert_eq!(got, brute_force_vertices(&pts, 1e-9), "seed {seed}, d {d}");
    }
}

#[test]
fn triangle_corners_survive_many_interior_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]];
    let mut pts: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let mut w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            (0..2).map(|c| (0..3).map(|v| w[v] * corners[v][c]).sum()).collect()
        })
        .collect();
    pts.extend(corners.iter().map(|c| c.to_vec()));
    let got = hull_vertices(&cloud(&pts)).unwrap();
    for corner in 1000..1003 {
        assert!(got.contains(&corner));
    }
    for &v in &got {
        assert!(lp_distance_to_hull(&pts[1000..], &pts[v]) < 1e-12 || v >= 1000);
    }
}

#[test]
fn unit_right_triangle_and_collinear_volume() {
    let v = simplex_log_volume(&cloud(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]));
    assert!((v - 0.5f64.ln()).abs() < 1e-15);
    let v = simplex_log_volume(&cloud(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]));
    assert_eq!(v, f64::NEG_INFINITY);
}

#[test]
fn tetrahedron_volume_matches_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let pts = random_points(rng.random(), 4, 3);
        let edges = DMatrix::from_fn(3, 3, |r, c| pts[r + 1][c] - pts[0][c]);
        let oracle = (edges.determinant().abs() / 6.0).ln();
        let got = simplex_log_volume(&cloud(&pts));
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
}

#[test]
fn exhaustive_matches_all_triples() {
    for seed in 0..20 {
        let pts = random_points(100 + seed, 10, 2);
        let area = |a: usize, b: usize, c: usize| {
            let (u, v) = (
                [pts[b][0] - pts[a][0], pts[b][1] - pts[a][1]],
                [pts[c][0] - pts[a][0], pts[c][1] - pts[a][1]],
            );
            (u[0] * v[1] - u[1] * v[0]).abs() / 2.0
        };
        let mut best = (0.0, vec![]);
        for a in 0..10 {
            for b in a + 1..10 {
                for c in b + 1..10 {
                    let s = area(a, b, c);
                    if s > best.0 {
                        best = (s, vec![a, b, c]);
                    }
                }
            }
        }
        let got = max_volume_exhaustive(&cloud(&pts), 3, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
        assert_eq!(got.indices, best.1);
        assert!((got.log_volume - best.0.ln()).abs() < 1e-12);
    }
}

#[test]
fn duplicated_corners_take_smallest_tuple() {
    let pts = vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.2, 0.2],
    ];
    let got = max_volume_exhaustive(&cloud(&pts), 3, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
    assert_eq!(got.indices, vec![0, 1, 2]);
}

#[test]
fn greedy_finds_triangle_among_interior_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut pts = vec![vec![0.0, 0.0], vec![2.0, 0.1], vec![0.4, 1.5]];
    for _ in 0..100 {
        let mut w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        pts.push((0..2).map(|c| (0..3).map(|v| w[v] * pts[v][c]).sum()).collect());
    }
    let g = max_volume_greedy(&cloud(&pts), 3, DEFAULT_MAX_SWEEPS).unwrap();
    let e = max_volume_exhaustive(&cloud(&pts), 3, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
    let mut gi = g.indices.clone();
    gi.sort();
    assert_eq!(gi, vec![0, 1, 2]);
    assert_eq!(e.indices, vec![0, 1, 2]);
}

#[test]
fn exhaustive_budget_and_degeneracy_errors() {
    let pts = random_points(9, 30, 2);
    let err = max_volume_exhaustive(&cloud(&pts), 3, 100).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
    let line: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let err = max_volume_exhaustive(&cloud(&line), 3, DEFAULT_EXHAUSTIVE_BUDGET).unwrap_err();
    assert!(matches!(err, Error::AllDegenerate));
    let err = max_volume_greedy(&cloud(&line), 3, DEFAULT_MAX_SWEEPS).unwrap_err();
    assert!(matches!(err, Error::AllDegenerate));
}

#[test]
fn noiseless_three_source_cloud_has_rank_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let h = DMatrix::from_fn(3, 8, |_, _| rng.random_range(0.05..1.0));
    let w = DMatrix::from_fn(300, 3, |_, _| rng.random_range(0.0..1.0));
    let mut y = &w * &h;
    for mut row in y.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let (basis, z) = intrinsic_projection(&PointCloud::new(y.clone()).unwrap(), 7).unwrap();
    // Rank oracle: eigenvalues of the centered Gram matrix.
    let mut centered = y.columns(0, 7).into_owned();
    let means = centered.row_mean();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let eig = (centered.transpose() * &centered).symmetric_eigen().eigenvalues;
    let top = eig.iter().copied().fold(0.0, f64::max);
    let oracle = eig.iter().filter(|&&e| e > 1e-12 * top).count();
    assert_eq!(oracle, 2);
    assert_eq!(basis.rank(), 2);
    assert_eq!(z.dim(), 2);
}

#[test]
fn identity_rows_project_to_a_triangle() {
    let y = DMatrix::<f64>::identity(3, 3);
    let (basis, z) = intrinsic_projection(&PointCloud::new(y).unwrap(), 8).unwrap();
    assert_eq!(basis.rank(), 2);
    assert!(simplex_log_volume(&z).is_finite());
    let err = intrinsic_projection(&PointCloud::new(DMatrix::from_element(4, 3, 1.0 / 3.0)).unwrap(), 2);
    assert!(matches!(err, Err(Error::DegenerateCloud(_))));
}

#[test]
fn affine_inverse_on_random_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let mut h = DMatrix::from_fn(3, 8, |_, _| rng.random_range(0.0..1.0));
        for mut row in h.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let inv = affine_right_inverse(&h).unwrap();
        let aug = h.clone().insert_column(8, 1.0);
        let prod = aug * &inv.matrix;
        assert!(max_abs_diff(&prod, &DMatrix::identity(3, 3)) <= 1e-8);
        assert!(!inv.rank_deficient());
    }
    let twins = DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 0.2, 0.3, 0.5]);
    assert!(affine_right_inverse(&twins).unwrap().rank_deficient());
}

fn point_sets(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), d + 2..max_n)
}

fn simplex_rows(max_n: usize, j: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(prop::collection::vec(0.001f64..1.0, j), 3..max_n).prop_map(move |rows| {
        let n = rows.len();
        let mut m = DMatrix::from_fn(n, j, |r, c| rows[r][c]);
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_agrees_with_lp_oracle_2d(pts in point_sets(40, 2)) {
        prop_assert_eq!(hull_vertices(&cloud(&pts)).unwrap(), brute_force_vertices(&pts, 1e-9));
    }

    #[test]
    fn hull_agrees_with_lp_oracle_3d(pts in point_sets(40, 3)) {
        prop_assert_eq!(hull_vertices(&cloud(&pts)).unwrap(), brute_force_vertices(&pts, 1e-9));
    }

    #[test]
    fn removing_an_interior_point_keeps_the_hull(pts in point_sets(40, 3), pick in any::<prop::sample::Index>()) {
        let verts = hull_vertices(&cloud(&pts)).unwrap();
        let interior: Vec<usize> = (0..pts.len()).filter(|i| !verts.contains(i)).collect();
        prop_assume!(!interior.is_empty());
        let drop = interior[pick.index(interior.len())];
        let reduced: Vec<Vec<f64>> =
            pts.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, p)| p.clone()).collect();
        let remapped: Vec<usize> =
            hull_vertices(&cloud(&reduced)).unwrap().into_iter().map(|i| if i >= drop { i + 1 } else { i }).collect();
        prop_assert_eq!(remapped, verts);
    }

    #[test]
    fn volume_is_permutation_and_rigid_motion_invariant(seed in any::<u64>(), d in 2usize..6, extra in 0usize..3) {
        let k = (d + 1 - extra.min(d - 1)).max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(rng.random(), k, d);
        let base = simplex_log_volume(&cloud(&pts));
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.rotate_left(1);
        prop_assert!((simplex_log_volume(&cloud(&shuffled)) - base).abs() <= 1e-9);
        let q = random_rotation(&mut rng, d);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| (0..d).map(|r| (0..d).map(|c| q[(r, c)] * p[c]).sum::<f64>() + shift[r]).collect())
            .collect();
        prop_assert!((simplex_log_volume(&cloud(&moved)) - base).abs() <= 1e-9);
    }

    #[test]
    fn greedy_never_beats_exhaustive(seed in any::<u64>(), m in 4usize..25, d in 2usize..4, k in 2usize..5) {
        prop_assume!(k <= d + 1 && k <= m);
        let pts = random_points(seed, m, d);
        let g = max_volume_greedy(&cloud(&pts), k, DEFAULT_MAX_SWEEPS).unwrap();
        let e = max_volume_exhaustive(&cloud(&pts), k, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
        prop_assert!(g.log_volume <= e.log_volume + 1e-12);
        let mut idx = g.indices.clone();
        idx.sort();
        idx.dedup();
        prop_assert_eq!(idx.len(), k);
    }

    #[test]
    fn projection_basis_properties(y in simplex_rows(30, 6), cap in 1usize..6) {
        let (basis, z) = intrinsic_projection(&PointCloud::new(y.clone()).unwrap(), cap).unwrap();
        let b = &basis.basis;
        let r = basis.rank();
        prop_assert!((1..=5).contains(&r) && r <= cap);
        prop_assert!(max_abs_diff(&(b.transpose() * b), &DMatrix::identity(r, r)) <= 1e-10);
        let mut centered = y.columns(0, 5).into_owned();
        for mut row in centered.row_iter_mut() {
            row -= basis.mean_offset.transpose();
        }
        let recon = z.points() * b.transpose();
        prop_assert!((centered - recon).norm() <= basis.discarded_mass() + 1e-8);
    }

    #[test]
    fn affine_inverse_is_a_right_inverse(h in simplex_rows(5, 7)) {
        let inv = affine_right_inverse(&h).unwrap();
        prop_assume!(!inv.rank_deficient());
        let k = h.nrows();
        let aug = h.clone().insert_column(7, 1.0);
        prop_assert!(max_abs_diff(&(aug * &inv.matrix), &DMatrix::identity(k, k)) <= 1e-8);
    }
}
