use dcanvas::anchor::{apply_anchors, build_anchor_system, even_anchor_indices, lift_anchors};
use dcanvas::classify::{nn_classify, DistanceMatrix};
use dcanvas::cluster::Clusterer;
use dcanvas::distortion::{color_residual, optimal_affine, AffineColor};
use dcanvas::io::load_idx;
use dcanvas::raster::{sample, SmoothImage};
use dcanvas::{identity_transform, solve_path, DigitalImage, SolveConfig, StageConfig, View};
use proptest::prelude::*;

fn image(size: usize, px: &[f64]) -> DigitalImage {
    DigitalImage::new(size, size, px[..size * size].to_vec()).unwrap()
}

fn axis(len: usize, k: usize) -> Vec<usize> {
    even_anchor_indices(len, k.min(len))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_row_stochastic_and_affine_exact(
        rows in 2usize..20, cols in 2usize..20, kr in 2usize..6, kc in 2usize..6,
        m in proptest::array::uniform4(-3.0f64..3.0), t in proptest::array::uniform2(-10.0f64..10.0),
    ) {
        let sys = build_anchor_system(rows, cols, &axis(rows, kr), &axis(cols, kc)).unwrap();
        for row in sys.weights() {
            let sum: f64 = row.entries().iter().map(|e| e.1).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(row.entries().iter().all(|e| e.1 >= 0.0));
            prop_assert!(row.entries().len() <= 4);
        }
        let map = |p: &[f64; 2]| [m[0] * p[0] + m[1] * p[1] + t[0], m[2] * p[0] + m[3] * p[1] + t[1]];
        let anchors: Vec<_> = sys.identity_anchors().iter().map(map).collect();
        let got = apply_anchors(&sys, &anchors).unwrap();
        let id = identity_transform(rows, cols);
        for (g, p) in got.points().iter().zip(id.points()) {
            let w = map(p);
            let scale = 1.0 + w[0].abs().max(w[1].abs());
            prop_assert!((g[0] - w[0]).abs() <= 1e-12 * scale && (g[1] - w[1]).abs() <= 1e-12 * scale);
        }
        let ident = apply_anchors(&sys, &sys.identity_anchors()).unwrap();
        prop_assert!(ident.max_abs_diff(&id) <= 1e-12);
    }

    #[test]
    fn lift_keeps_the_coarse_transform_at_fine_anchors(
        size in 4usize..16, coarse in 2usize..4, extra in 1usize..6,
        jitter in proptest::collection::vec(-1.0f64..1.0, 32),
    ) {
        let fine = (coarse + extra).min(size);
        let c = build_anchor_system(size, size, &axis(size, coarse), &axis(size, coarse)).unwrap();
        let f = build_anchor_system(size, size, &axis(size, fine), &axis(size, fine)).unwrap();
        let anchors: Vec<_> = c.identity_anchors().iter().enumerate()
            .map(|(k, p)| [p[0] + jitter[(2 * k) % 32], p[1] + jitter[(2 * k + 1) % 32]]).collect();
        let coarse_full = apply_anchors(&c, &anchors).unwrap();
        let lifted = lift_anchors(&c, &anchors, &f);
        let fine_full = apply_anchors(&f, &lifted).unwrap();
        for &k in f.anchor_grid_index() {
            let (a, b) = (coarse_full.points()[k], fine_full.points()[k]);
            prop_assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn narrow_kernel_reproduces_pixels(
        size in 2usize..9, cutoff in 0.05f64..=1.0, px in proptest::collection::vec(0.0f64..=1.0, 64),
    ) {
        let img = image(size, &px);
        let s = SmoothImage::new(img.clone(), cutoff).unwrap();
        prop_assert_eq!(sample(&s, &identity_transform(size, size)), img.pixels().to_vec());
    }

    #[test]
    fn argmin_survives_monotone_maps(
        values in proptest::collection::vec(0.0f64..100.0, 12), shift in -5.0f64..5.0, scale in 0.1f64..10.0,
    ) {
        let matrix = |v: Vec<f64>| DistanceMatrix {
            rows: 3, cols: 4, values: v, train_labels: vec![0, 1, 2, 1],
            mode: View::Dc, config: SolveConfig::for_size(4, View::Dc), elapsed: Default::default(),
        };
        let base = nn_classify(&matrix(values.clone()));
        let mapped = nn_classify(&matrix(values.iter().map(|v| scale * v.powi(3) + shift).collect()));
        let exp = nn_classify(&matrix(values.iter().map(|v| (v / 50.0).exp()).collect()));
        prop_assert_eq!(&base, &mapped);
        prop_assert_eq!(&base, &exp);
    }

    #[test]
    fn closed_form_contrast_is_the_minimum(
        r in proptest::collection::vec(0.0f64..3.0, 20), m in proptest::collection::vec(0.0f64..3.0, 20),
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let best = optimal_affine(&r, &m, false);
        let other = AffineColor { a, b };
        prop_assert!(color_residual(&r, &m, best) <= color_residual(&r, &m, other) + 1e-9);
        let nonneg = optimal_affine(&r, &m, true);
        prop_assert!(nonneg.a >= 0.0);
        let other = AffineColor { a: a.abs(), b };
        prop_assert!(color_residual(&r, &m, nonneg) <= color_residual(&r, &m, other) + 1e-9);
    }

    #[test]
    fn config_round_trips(
        mode in prop_oneof![Just(View::Dc), Just(View::Dv)],
        stages in proptest::collection::vec((2usize..30, 0.5f64..5.0, 0.001f64..1000.0, 1usize..300), 1..5),
        tolerance in 1e-8f64..1e-2, symmetric in any::<bool>(), stride in 1usize..10,
    ) {
        let mut stages = stages;
        let mut anchors: Vec<usize> = stages.iter().map(|s| s.0).collect();
        let mut cutoffs: Vec<f64> = stages.iter().map(|s| s.1).collect();
        anchors.sort_unstable();
        cutoffs.sort_by(|a, b| b.total_cmp(a));
        for (k, s) in stages.iter_mut().enumerate() {
            s.0 = anchors[k];
            s.1 = cutoffs[k];
        }
        let mut c = SolveConfig::for_size(28, mode);
        c.tolerance = tolerance;
        c.symmetric = symmetric;
        c.flow_stride = stride;
        c.stages = stages.into_iter().map(|(anchors, cutoff, mu, max_iterations)| StageConfig { anchors, cutoff, mu, max_iterations }).collect();
        let back = SolveConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn idx_round_trips(rows in 1usize..6, cols in 1usize..6, n in 0usize..5, bytes in proptest::collection::vec(any::<u8>(), 150), labels in proptest::collection::vec(0u8..10, 5)) {
        let mut img = vec![0, 0, 8, 3];
        for d in [n, rows, cols] {
            img.extend_from_slice(&(d as u32).to_be_bytes());
        }
        img.extend_from_slice(&bytes[..n * rows * cols]);
        let mut lab = vec![0, 0, 8, 1];
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        lab.extend_from_slice(&labels[..n]);
        let ds = load_idx(&img[..], &lab[..]).unwrap();
        prop_assert_eq!(ds.len(), n);
        for (k, im) in ds.images.iter().enumerate() {
            prop_assert_eq!(im.to_bytes(), bytes[k * rows * cols..(k + 1) * rows * cols].to_vec());
            prop_assert_eq!(ds.labels[k], labels[k] as usize);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stage_traces_never_increase(
        a in proptest::collection::vec(0.0f64..=1.0, 64), b in proptest::collection::vec(0.0f64..=1.0, 64),
        mode in prop_oneof![Just(View::Dc), Just(View::Dv)], full in any::<bool>(),
    ) {
        let mut c = if full { SolveConfig::full_path(8, mode) } else { SolveConfig::for_size(8, mode) };
        for s in &mut c.stages {
            s.max_iterations = 25;
        }
        let r = solve_path(&image(8, &a), &image(8, &b), &c).unwrap();
        for stage in &r.stages {
            for w in stage.trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
        prop_assert!(r.dc_value >= 0.0 && r.dv_value >= 0.0);
        prop_assert!(r.flow[0].max_abs_diff(&identity_transform(8, 8)) <= 1e-12);
        prop_assert_eq!(r.flow.last().unwrap(), &r.transform);
    }

    #[test]
    fn assignment_never_increases_the_data_term(
        px in proptest::collection::vec(0.0f64..=1.0, 5 * 36), assign in proptest::collection::vec(0usize..2, 5),
    ) {
        let imgs: Vec<_> = (0..5).map(|i| image(6, &px[i * 36..(i + 1) * 36])).collect();
        let config = SolveConfig::for_size(6, View::Dc);
        let c = Clusterer::new(&imgs, &config, false).unwrap();
        let stage = config.stages.len() - 1;
        let mut s = c.initial_state(stage, vec![0, 3], assign);
        let before = c.wcsd(&s);
        c.assign_step(&mut s);
        prop_assert!(c.wcsd(&s) <= before);
        // A second pass is a fixpoint.
        let fixed = s.assignments.clone();
        c.assign_step(&mut s);
        prop_assert_eq!(s.assignments, fixed);
    }
}
