//! Structural invariants as property tests.

mod common;

use common::random_bifiltration;
use mgeneo::complex::{
    bifiltration_from_channels, coarsen_bifiltration, grade_le, lower_star_filtration,
    upper_star_filtration, Bifiltration, TriangleRule,
};
use mgeneo::geneo::{apply_operator, default_bank, default_kernels, BankKind, OperatorSpec};
use mgeneo::img::{read_csv, read_pgm, sup_distance, write_csv, write_pgm, GrayImage};
use mgeneo::ml::{stratified_split, Lda, LinearSvm, SvmParams};
use mgeneo::mpl::{landscapes, slice_filtration, GridSpec};
use mgeneo::ph::{betti_numbers, compute_persistence, swap_for_upper_star, PersistencePoint};
use mgeneo::vec::{persistence_image, PersistenceImageSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(w: usize, h: usize) -> impl Strategy<Value = GrayImage> {
    prop::collection::vec(0.0f64..255.0, w * h).prop_map(move |v| GrayImage::new(w, h, v).unwrap())
}

fn square_image() -> impl Strategy<Value = GrayImage> {
    (2usize..10).prop_flat_map(|n| image(n, n))
}

fn any_image() -> impl Strategy<Value = GrayImage> {
    (1usize..8, 1usize..8).prop_flat_map(|(w, h)| image(w, h))
}

fn operators() -> Vec<OperatorSpec> {
    let mut ops: Vec<OperatorSpec> = BankKind::ALL
        .iter()
        .flat_map(|&k| default_bank(k).operators)
        .collect();
    ops.extend(default_kernels().into_iter().map(OperatorSpec::Geneo));
    ops
}

fn dihedral(img: &GrayImage) -> Vec<GrayImage> {
    let mut out = Vec::new();
    let mut r = img.clone();
    for _ in 0..4 {
        out.push(r.clone());
        out.push(r.flip_horizontal());
        r = r.rotate90();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn landscape_is_nonnegative_decreasing_in_k_and_lipschitz(seed in any::<u64>()) {
        let b = random_bifiltration(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let grid = GridSpec::new([-2.0, -2.0], [14.0, 14.0], 1.0).unwrap();
        let (nx, ny) = grid.cells();
        for l in landscapes(&b, &[0, 1], 3, &grid).unwrap() {
            for ix in 0..nx {
                for iy in 0..ny {
                    prop_assert!(l.value(1, ix, iy) >= 0.0);
                    for k in 1..3 {
                        prop_assert!(l.value(k, ix, iy) >= l.value(k + 1, ix, iy));
                    }
                    for k in 1..=3 {
                        let v = l.value(k, ix, iy);
                        if ix + 1 < nx {
                            prop_assert!((v - l.value(k, ix + 1, iy)).abs() <= grid.step + 1e-9);
                        }
                        if iy + 1 < ny {
                            prop_assert!((v - l.value(k, ix, iy + 1)).abs() <= grid.step + 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shared_diagonals_match_per_point_slices(
        (a, b) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| (image(w, h), image(w, h))),
        simplex_max in any::<bool>(),
    ) {
        let rule = if simplex_max { TriangleRule::SimplexMax } else { TriangleRule::SquareMax };
        let bif = bifiltration_from_channels(&a, &b, rule).unwrap();
        let grid = GridSpec::new([0.0, 0.0], [260.0, 260.0], 20.0).unwrap();
        let lands = landscapes(&bif, &[0, 1], 2, &grid).unwrap();
        let (nx, ny) = grid.cells();
        for ix in 0..nx {
            for iy in 0..ny {
                let d = compute_persistence(&slice_filtration(&bif, grid.point(ix, iy)));
                for (dim, l) in lands.iter().enumerate() {
                    let mut bars: Vec<f64> = d.of_dim(dim).map(|p| (-p.birth).min(p.death).max(0.0)).collect();
                    bars.sort_by(|x, y| y.total_cmp(x));
                    for k in 1..=2 {
                        let want = bars.get(k - 1).copied().unwrap_or(0.0);
                        prop_assert!((l.value(k, ix, iy) - want).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn coarsening_only_raises_grades_and_stays_monotone(seed in any::<u64>(), bins in 1usize..12) {
        let b = random_bifiltration(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let c = coarsen_bifiltration(&b, bins).unwrap();
        c.check_monotone().unwrap();
        for (g, h) in b.grades().iter().zip(c.grades()) {
            prop_assert!(grade_le(*g, *h));
        }
    }

    #[test]
    fn bifiltration_text_round_trips(seed in any::<u64>()) {
        let b = random_bifiltration(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let back = Bifiltration::from_text(&b.to_text()).unwrap();
        prop_assert_eq!(back.grades(), b.grades());
        prop_assert_eq!(back.complex().simplices(), b.complex().simplices());
    }

    #[test]
    fn euler_characteristic_matches_betti_numbers(img in any_image()) {
        let f = lower_star_filtration(&img).unwrap();
        let (b0, b1) = betti_numbers(&f, f64::INFINITY);
        prop_assert_eq!(b0 as i64 - b1 as i64, f.complex().euler_characteristic());
        let d = compute_persistence(&f);
        prop_assert_eq!(d.of_dim(0).filter(|p| p.is_essential()).count(), 1);
        prop_assert_eq!(d.of_dim(1).filter(|p| p.is_essential()).count(), 0);
        for t in [0.0, 64.0, 128.0, 200.0] {
            let (b0, b1) = betti_numbers(&f, t);
            prop_assert_eq!((d.betti_at(0, t), d.betti_at(1, t)), (b0, b1));
        }
    }

    #[test]
    fn upper_star_swap_keeps_positive_persistence(img in any_image()) {
        let d = swap_for_upper_star(&compute_persistence(&upper_star_filtration(&img).unwrap()), 0.0);
        for p in d.points() {
            prop_assert!(p.birth < p.death && p.death.is_finite());
        }
    }

    #[test]
    fn operators_are_non_expansive(
        (a, b) in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| (image(w, h), image(w, h)))
    ) {
        let d = sup_distance(&a, &b).unwrap();
        for op in operators() {
            let fa = apply_operator(&op, &a).unwrap();
            let fb = apply_operator(&op, &b).unwrap();
            prop_assert!(sup_distance(&fa, &fb).unwrap() <= op.lipschitz_bound() * d + 1e-12 * 255.0);
        }
    }

    #[test]
    fn operators_commute_with_grid_symmetries(img in square_image()) {
        for op in operators() {
            let out = apply_operator(&op, &img).unwrap();
            for (g_img, g_out) in dihedral(&img).iter().zip(dihedral(&out)) {
                let got = apply_operator(&op, g_img).unwrap();
                prop_assert_eq!(got.values(), g_out.values());
            }
        }
    }

    #[test]
    fn operators_are_linear(
        (a, b) in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| (image(w, h), image(w, h))),
        s in -3.0f64..3.0,
        t in -3.0f64..3.0,
    ) {
        let mix = GrayImage::new(a.width(), a.height(),
            a.values().iter().zip(b.values()).map(|(x, y)| s * x + t * y).collect()).unwrap();
        for op in operators() {
            let (fa, fb) = (apply_operator(&op, &a).unwrap(), apply_operator(&op, &b).unwrap());
            let fm = apply_operator(&op, &mix).unwrap();
            let scale = 255.0 * (s.abs() + t.abs()) + 1.0;
            for ((m, x), y) in fm.values().iter().zip(fa.values()).zip(fb.values()) {
                prop_assert!((m - (s * x + t * y)).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn persistence_image_is_additive(
        pts in prop::collection::vec((0.0f64..200.0, 0.0f64..100.0), 0..8),
        split in 0usize..8,
    ) {
        let points: Vec<PersistencePoint> = pts.iter()
            .map(|&(b, p)| PersistencePoint { birth: b, death: b + p, dim: 1 })
            .collect();
        let spec = PersistenceImageSpec::default();
        let k = split.min(points.len());
        let whole = persistence_image(&points, &spec).unwrap();
        let left = persistence_image(&points[..k], &spec).unwrap();
        let right = persistence_image(&points[k..], &spec).unwrap();
        for ((w, l), r) in whole.iter().zip(&left).zip(&right) {
            prop_assert!((w - (l + r)).abs() <= 1e-12);
        }
    }

    #[test]
    fn persistence_image_is_lipschitz(
        birth in 0.0f64..250.0,
        pers in 0.0f64..250.0,
        shift in -5.0f64..5.0,
        along_birth in any::<bool>(),
        sigma in 0.5f64..3.0,
    ) {
        let spec = PersistenceImageSpec { sigma, ..Default::default() };
        let p = PersistencePoint { birth, death: birth + pers, dim: 0 };
        let q = if along_birth {
            PersistencePoint { birth: birth + shift, death: birth + shift + pers, dim: 0 }
        } else {
            PersistencePoint { birth, death: birth + (pers + shift).max(0.0), dim: 0 }
        };
        let moved = (q.birth - p.birth).abs() + ((q.death - q.birth) - (p.death - p.birth)).abs();
        let a = persistence_image([&p], &spec).unwrap();
        let b = persistence_image([&q], &spec).unwrap();
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(d <= spec.lipschitz_constant() * moved + 1e-12);
    }

    #[test]
    fn lda_predictions_ignore_translation(seed in any::<u64>(), shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..30).map(|i| (0..3).map(|j| rng.gen_range(-1.0..1.0) + (i % 3 * j) as f64).collect()).collect();
        let y: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
        let moved: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect();
        let p = Lda::fit(&x, &y).unwrap().predict(&x).unwrap();
        let q = Lda::fit(&moved, &y).unwrap().predict(&moved).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn stratified_split_partitions_each_class(
        labels in prop::collection::vec(0u8..4, 8..80),
        seed in any::<u64>(),
    ) {
        let mut counts = [0usize; 4];
        labels.iter().for_each(|&l| counts[l as usize] += 1);
        prop_assume!(counts.iter().all(|&c| c == 0 || c >= 2));
        let (train, test) = stratified_split(&labels, 0.8, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in 0..4u8 {
            let n = counts[class as usize];
            if n == 0 {
                continue;
            }
            let in_train = train.iter().filter(|&&i| labels[i] == class).count();
            prop_assert!(in_train >= 1 && in_train < n);
        }
    }

    #[test]
    fn pgm_and_csv_round_trip(img in any_image()) {
        let q = img.map(|v| v.round()).unwrap();
        prop_assert_eq!(read_pgm(&write_pgm(&q, 0.0, 255.0).unwrap()).unwrap(), q.clone());
        prop_assert_eq!(read_csv(&write_csv(&img)).unwrap(), img);
    }
}

#[test]
fn svm_follows_flipped_labels() {
    let x: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![(i % 20) as f64 + if i < 20 { -30.0 } else { 30.0 }, 1.0])
        .collect();
    let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
    let flipped: Vec<u8> = y.iter().map(|&l| 1 - l).collect();
    let params = SvmParams::default();
    let p = LinearSvm::fit(&x, &y, &params)
        .unwrap()
        .predict(&x)
        .unwrap();
    let q = LinearSvm::fit(&x, &flipped, &params)
        .unwrap()
        .predict(&x)
        .unwrap();
    assert_eq!(p, y);
    assert_eq!(q, flipped);
}
