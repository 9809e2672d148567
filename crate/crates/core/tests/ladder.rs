use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semiclassical::ladder::{build_power, build_single, magnitude_envelope, LadderAction};
use semiclassical::multiindex::{BasisIndexSet, MultiIndex};
use semiclassical::verify::random_frame;
use semiclassical::wavepacket::{eval_basis, Frame};

/// Hermite-function moments `∫ h_j (x−a)^m h_k` by trapezoid on a wide grid.
fn oscillator_moment(hbar: f64, j: usize, k: usize, m: i32) -> f64 {
    let n = 4000;
    let half = 12.0 * hbar.sqrt() * 3.0;
    let h = 2.0 * half / n as f64;
    let herm = |k: usize, y: f64| {
        let (mut prev, mut cur) = (0.0, 1.0);
        for i in 0..k {
            let next = (2.0 / (i + 1) as f64).sqrt() * y * cur - (i as f64 / (i + 1) as f64).sqrt() * prev;
            prev = cur;
            cur = next;
        }
        cur * (std::f64::consts::PI * hbar).powf(-0.25) * (-y * y / 2.0).exp()
    };
    (0..n)
        .map(|i| {
            let x = -half + i as f64 * h;
            let y = x / hbar.sqrt();
            herm(j, y) * x.powi(m) * herm(k, y)
        })
        .sum::<f64>()
        * h
}

#[test]
fn unit_frame_matches_hermite_moments() {
    let hbar = 0.2;
    let f = Frame::standard(hbar, &[0.0], &[0.0]).unwrap();
    for m in 1..=4u32 {
        let x = build_power(&f, &MultiIndex::new(vec![m]), 6, 6).unwrap();
        for j in 0..=6 {
            for k in 0..=6 {
                let oracle = oscillator_moment(hbar, j, k, m as i32);
                assert!((x.matrix().get(j, k).re - oracle).abs() < 1e-9, "m={m} j={j} k={k}");
                assert!(x.matrix().get(j, k).im.abs() < 1e-14);
            }
        }
    }
}

#[test]
fn random_frame_matches_grid_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_frame(&mut rng, 1).unwrap();
    let grid = Arc::new(f.auto_grid(10).unwrap());
    let phis = eval_basis(&f, 6, &grid).unwrap();
    let a = f.a[0];
    for m in 1..=4u32 {
        let x = build_power(&f, &MultiIndex::new(vec![m]), 6, 6).unwrap();
        for k in 0..=6 {
            let moved = phis[k].mul_real(|p| (p[0] - a).powi(m as i32));
            for j in 0..=6 {
                let q = phis[j].inner(&moved).unwrap();
                assert!((q - x.matrix().get(j, k)).norm() < 1e-7);
            }
        }
    }
}

#[test]
fn two_dimensional_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_frame(&mut rng, 2).unwrap();
    let grid = Arc::new(f.auto_grid(6).unwrap());
    let phis = eval_basis(&f, 3, &grid).unwrap();
    let m = MultiIndex::new(vec![1, 2]);
    let x = build_power(&f, &m, 3, 3).unwrap();
    let (a0, a1) = (f.a[0], f.a[1]);
    for k in 0..phis.len() {
        let moved = phis[k].mul_real(|p| (p[0] - a0) * (p[1] - a1).powi(2));
        for j in 0..phis.len() {
            let q = phis[j].inner(&moved).unwrap();
            assert!((q - x.matrix().get(j, k)).norm() < 1e-7);
        }
    }
}

#[test]
fn band_structure_is_exact() {
    let f = Frame::standard(0.3, &[0.1], &[0.0]).unwrap();
    for m in 1..=4u32 {
        let x = build_power(&f, &MultiIndex::new(vec![m]), 12, 12).unwrap();
        for j in 0..=12usize {
            for k in 0..=12usize {
                if j.abs_diff(k) > m as usize {
                    assert_eq!(x.matrix().get(j, k), Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}

#[test]
fn products_compose_on_the_leading_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f = random_frame(&mut rng, 2).unwrap();
    let m1 = MultiIndex::new(vec![1, 1]);
    let m2 = MultiIndex::new(vec![2, 0]);
    let cap = 4;
    // grow the inner dimension so the product is exact on the leading block
    let left = build_power(&f, &m1, cap + 2, cap + 2).unwrap();
    let right = build_power(&f, &m2, cap + 2, cap).unwrap();
    let combined = build_power(&f, &m1.add(&m2), cap, cap).unwrap();
    let rows = combined.rows().len();
    let prod = left.matrix().to_dense().rows(0, rows) * right.matrix().to_dense();
    let diff = (prod - combined.matrix().to_dense()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12);
}

#[test]
fn action_agrees_with_assembled_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f = random_frame(&mut rng, 2).unwrap();
    let basis = Arc::new(BasisIndexSet::enumerate_upto(2, 7));
    let action = LadderAction::new(&f, basis.clone());
    let x = build_single(&f, 1, 7, 6).unwrap();
    let ncols = basis.count_upto(6);
    for k in 0..ncols {
        let mut v = vec![Complex64::new(0.0, 0.0); basis.len()];
        v[k] = Complex64::new(1.0, 0.0);
        let mut out = vec![Complex64::new(0.0, 0.0); basis.len()];
        action.apply_axis(1, &v, &mut out);
        for (r, val) in out.iter().enumerate() {
            assert!((val - x.matrix().get(r, k)).norm() < 1e-14);
        }
    }
}

#[test]
fn coo_dump_lists_nonzeros() {
    let f = Frame::standard(1.0, &[0.0], &[0.0]).unwrap();
    let x = build_single(&f, 0, 3, 2).unwrap();
    let coo = x.matrix().to_coo();
    assert_eq!(coo.lines().count(), x.matrix().nnz());
    let first: Vec<f64> = coo.lines().next().unwrap().split(' ').map(|t| t.parse().unwrap()).collect();
    assert_eq!(&first[..2], &[1.0, 0.0]);
    assert!((first[2] - 0.5f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn square_blocks_are_hermitian(seed in 0u64..10_000, n in 1u32..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_frame(&mut rng, 1).unwrap();
        let x = build_power(&f, &MultiIndex::new(vec![n]), 8, 8).unwrap();
        prop_assert!(x.hermitian_defect() < 1e-12 * (1.0 + x.matrix().max_abs()));
    }

    #[test]
    fn entries_respect_the_envelope(seed in 0u64..10_000, m0 in 0u32..=2, m1 in 0u32..=2) {
        prop_assume!(m0 + m1 >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_frame(&mut rng, 2).unwrap();
        let m = MultiIndex::new(vec![m0, m1]);
        let x = build_power(&f, &m, 5, 5).unwrap();
        for k in 0..x.cols().len() {
            let env = magnitude_envelope(&f, &m, x.cols().get(k).order());
            for (_, v) in x.matrix().column(k) {
                prop_assert!(v.norm() <= env);
            }
        }
    }
}
