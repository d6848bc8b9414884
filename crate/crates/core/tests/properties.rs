mod common;

use proptest::prelude::*;
use rand::Rng;
use smoe::edge::{place_kernels, reduce_segments};
use smoe::model::{gating_weights, parse_model, reconstruct, write_model};
use smoe::optimizer::{merge_models, split_tiles};
use smoe::{train, EdgeSegment, Orientation, SmoeModel, TrainConfig};

use common::{random_image, random_model, rng};

fn random_segments(seed: u64, n: usize, size: f64) -> Vec<EdgeSegment> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| EdgeSegment {
            center: [r.gen_range(0.0..size), r.gen_range(0.0..size)],
            orientation: Orientation::ALL[r.gen_range(0..4)],
            length: r.gen_range(2..20),
        })
        .collect()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gating_weights_form_a_partition(seed in any::<u64>(), k in 1usize..10, x in -2.0f64..34.0, y in -2.0f64..34.0) {
        let model = random_model(&mut rng(seed), k, 32, 32);
        let w = gating_weights(&model, [x, y]).unwrap();
        prop_assert_eq!(w.len(), k);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduction_stays_within_budget(seed in any::<u64>(), n in 1usize..300, max_pts in 1usize..64) {
        let segs = random_segments(seed, n, 100.0);
        let out = reduce_segments(&segs, max_pts, 0.1, 100.0 * 2f64.sqrt()).unwrap();
        prop_assert!(out.len() <= max_pts);
        prop_assert!(!out.is_empty());
        if n <= max_pts {
            prop_assert_eq!(out, segs);
        }
    }

    #[test]
    fn placement_gives_two_kernels_per_segment(seed in any::<u64>(), n in 0usize..80, delta in 0.5f64..10.0) {
        let segs = random_segments(seed, n, 48.0);
        let kernels = place_kernels(&segs, delta, 48, 40);
        prop_assert_eq!(kernels.len(), 2 * n);
        for (s, pair) in segs.iter().zip(kernels.chunks(2)) {
            for k in pair {
                prop_assert!((0.0..=47.0).contains(&k.mu[0]) && (0.0..=39.0).contains(&k.mu[1]));
                prop_assert_eq!(k.expert, 0.0);
                prop_assert_eq!(k.alpha, 1.0);
            }
            let inside = s.center[0] - delta >= 0.0 && s.center[0] + delta <= 47.0
                && s.center[1] - delta >= 0.0 && s.center[1] + delta <= 39.0;
            if inside {
                let d = (pair[0].mu[0] - pair[1].mu[0]).hypot(pair[0].mu[1] - pair[1].mu[1]);
                prop_assert!((d - delta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tiles_cover_the_image_once(seed in any::<u64>(), w in 8usize..90, h in 8usize..90, tile in 8usize..40) {
        let img = random_image(&mut rng(seed), w, h);
        let tiles = split_tiles(&img, tile).unwrap();
        let mut hits = vec![0u32; w * h];
        for (spec, t) in &tiles {
            prop_assert_eq!((t.width(), t.height()), (spec.width, spec.height));
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (gx, gy) = (spec.origin[0] + x, spec.origin[1] + y);
                    hits[gy * w + gx] += 1;
                    prop_assert_eq!(t.get(x, y), img.get(gx, gy));
                }
            }
        }
        prop_assert!(hits.iter().all(|&c| c == 1));
    }

    #[test]
    fn merge_translates_every_tile_model(seed in any::<u64>(), w in 16usize..64, h in 16usize..64) {
        let img = random_image(&mut rng(seed), w, h);
        let mut r = rng(seed ^ 1);
        let parts: Vec<_> = split_tiles(&img, 16)
            .unwrap()
            .into_iter()
            .map(|(spec, t)| {
                let k = r.gen_range(1..4);
                (spec, random_model(&mut r, k, t.width(), t.height()))
            })
            .collect();
        let merged = merge_models(&parts, w, h).unwrap();
        let mut i = 0;
        for (spec, m) in &parts {
            for k in m.kernels() {
                let g = merged.kernels()[i];
                prop_assert_eq!(g.mu, [k.mu[0] + spec.origin[0] as f64, k.mu[1] + spec.origin[1] as f64]);
                prop_assert_eq!((g.chol, g.expert, g.alpha), (k.chol, k.expert, k.alpha));
                i += 1;
            }
        }
        prop_assert_eq!(i, merged.len());
    }

    #[test]
    fn model_text_round_trips(seed in any::<u64>(), k in 1usize..20, w in 1usize..300, h in 1usize..300) {
        let model = random_model(&mut rng(seed), k, w, h);
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = parse_model(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, model);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn small_steps_never_raise_the_loss(seed in any::<u64>(), k in 1usize..6) {
        let mut r = rng(seed);
        let model = random_model(&mut r, k, 12, 12);
        let img = random_image(&mut r, 12, 12);
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            max_iters: 40,
            reg_weight: 0.0,
            prune_threshold: 0.0,
            convergence_tol: 0.0,
            ..TrainConfig::default()
        };
        let (_, report) = train(&model, &img, &cfg).unwrap();
        for pair in report.loss_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-9, "{} -> {}", pair[0], pair[1]);
        }
        prop_assert!(report.final_loss <= report.loss_trace[0] + 1e-9);
    }

    #[test]
    fn results_do_not_depend_on_thread_count(seed in any::<u64>(), k in 1usize..12) {
        let mut r = rng(seed);
        let model = random_model(&mut r, k, 40, 24);
        let img = random_image(&mut r, 40, 24);
        let cfg = TrainConfig { max_iters: 5, ..TrainConfig::default() };
        let many: (SmoeModel, _) = train(&model, &img, &cfg).unwrap();
        let one = single_thread(|| train(&model, &img, &cfg).unwrap());
        prop_assert_eq!(&many.0, &one.0);
        prop_assert_eq!(&many.1.loss_trace, &one.1.loss_trace);
        let a = reconstruct(&model).unwrap();
        let b = single_thread(|| reconstruct(&model).unwrap());
        prop_assert_eq!(a, b);
    }
}
