use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surftex::gan::{slerp, RunConfig};
use surftex::hierarchy::{cube_hierarchy, FeatureField};
use surftex::mesh::{load_obj, make_cube_hierarchy_level, make_quad_sphere, save_obj, QuadMesh};
use surftex::neighborhood::{build_neighborhood, PAD};
use surftex::nn::{adam_step, face_conv, AdamConfig, AdamState, Checkpoint, FaceConvParams, Tensor};
use surftex::par;
use surftex::render::{rasterize, sample_pose, PoseConfig};

fn level(sphere: bool, k: u32) -> QuadMesh {
    if sphere {
        make_quad_sphere(k)
    } else {
        make_cube_hierarchy_level(k).unwrap()
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighbourhoods_are_symmetric_and_follow_relabeling(sphere: bool, k in 1u32..4, seed: u64) {
        let mesh = level(sphere, k);
        let table = build_neighborhood(&mesh).unwrap();
        for i in 0..table.face_count() {
            for j in table.real_neighbors(i) {
                prop_assert!(j != i);
                prop_assert!(table.real_neighbors(j).any(|x| x == i));
            }
        }
        let perm = shuffled(mesh.face_count(), seed);
        let relabeled = build_neighborhood(&mesh.permute_faces(&perm).unwrap()).unwrap();
        let mut inverse = vec![0u32; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new as u32;
        }
        for (new, &old) in perm.iter().enumerate() {
            let want: Vec<u32> = table.row(old).iter().map(|&j| if j == PAD { PAD } else { inverse[j as usize] }).collect();
            prop_assert_eq!(relabeled.row(new).to_vec(), want);
        }
    }

    #[test]
    fn unpool_then_pool_is_identity_and_adjoint(seed: u64, channels in 1usize..4) {
        let hier = cube_hierarchy(3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..2 {
            let map = hier.pool_map(l);
            let x = Tensor::<f64>::randn(&[map.coarse_faces() * channels], 1.0, &mut rng).into_data();
            let y = Tensor::<f64>::randn(&[map.fine_faces() * channels], 1.0, &mut rng).into_data();
            prop_assert_eq!(map.pool_rows(&map.unpool_rows(&x, channels), channels), x.clone());
            let lhs: f64 = map.unpool_rows(&x, channels).iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = map.pool_rows(&y, channels).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() * 4.0;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn face_conv_is_affine_and_path_independent(seed: u64, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let nbr = build_neighborhood(&make_cube_hierarchy_level(2).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FaceConvParams::<f64>::init(9, 3, 2, &mut rng);
        let p = FaceConvParams { bias: Tensor::zeros(&[2]), ..p };
        let field = |v: Vec<f64>| FeatureField::new(0, 3, v).unwrap();
        let x = Tensor::<f64>::randn(&[96, 3], 1.0, &mut rng).into_data();
        let y = Tensor::<f64>::randn(&[96, 3], 1.0, &mut rng).into_data();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let fx = face_conv(&field(x.clone()), &nbr, &p).unwrap().values;
        let fy = face_conv(&field(y), &nbr, &p).unwrap().values;
        let fm = face_conv(&field(mix), &nbr, &p).unwrap().values;
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9);
        }
        par::set_sequential(true);
        let seq = face_conv(&field(x), &nbr, &p).unwrap().values;
        par::set_sequential(false);
        prop_assert_eq!(seq, fx);
    }

    #[test]
    fn renders_show_exact_face_colours(seed: u64) {
        let mesh = make_cube_hierarchy_level(2).unwrap().normalized();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors: Vec<[f32; 3]> = (0..96).map(|i| [i as f32 / 96.0, 0.5, 1.0 - i as f32 / 96.0]).collect();
        let cam = sample_pose(&mut rng, &PoseConfig { resolution: (32, 32), ..PoseConfig::default() }, &mesh);
        let out = rasterize(&mesh, &colors, &cam, [0.0, 0.0, 0.0]).unwrap();
        let fg = out.face_id.ids.iter().filter(|&&i| i >= 0).count();
        prop_assert!(fg > 0);
        prop_assert_eq!(out.coverage.iter().map(|&c| c as usize).sum::<usize>(), fg);
        for (p, &id) in out.face_id.ids.iter().enumerate() {
            if id >= 0 {
                prop_assert_eq!(&out.image.data()[3 * p..3 * p + 3], &colors[id as usize][..]);
            }
        }
    }

    #[test]
    fn first_adam_step_is_bounded_by_lr(g in prop::collection::vec(-1e3f32..1e3, 1..16), lr in 1e-4f64..0.1) {
        let n = g.len();
        let mut p = Tensor::zeros(&[n]);
        let mut state = AdamState::new(n);
        adam_step(&mut p, &Tensor::new(vec![n], g).unwrap(), &mut state, AdamConfig::with_lr(lr)).unwrap();
        for &v in p.data() {
            prop_assert!(f64::from(v.abs()) <= lr * 1.0001);
        }
    }

    #[test]
    fn slerp_keeps_norm_between_equal_norm_endpoints(seed: u64, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f32>::randn(&[1, 8], 1.0, &mut rng);
        let b = Tensor::<f32>::randn(&[1, 8], 1.0, &mut rng);
        let scale = (a.norm_squared() / b.norm_squared()).sqrt();
        let b = b.map(|v| v * scale);
        let m = slerp(&a, &b, t).unwrap();
        prop_assert!((m.norm_squared().sqrt() - a.norm_squared().sqrt()).abs() <= 1e-3 * a.norm_squared().sqrt());
    }

    #[test]
    fn checkpoints_round_trip(seed: u64, count in 0usize..5, config in "[a-z =\n]{0,40}") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ck = Checkpoint { config, ..Checkpoint::default() };
        for i in 0..count {
            let t = Tensor::randn(&[i + 1, 2], 1.0, &mut rng);
            ck.tensors.insert(format!("t{i}"), t);
            let mut s = AdamState::new(2 * (i + 1));
            s.step = i as u64;
            ck.optimizer.insert(format!("t{i}"), s);
        }
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        prop_assert_eq!(Checkpoint::read_from(&mut bytes.as_slice()).unwrap(), ck);
    }

    #[test]
    fn run_config_text_round_trips(seed: u64, steps in 1usize..1000, lr in 1e-5f64..1e-1, views in 1usize..8) {
        let mut cfg = RunConfig::default();
        cfg.train.seed = seed;
        cfg.train.steps = steps;
        cfg.train.lr_decoder = lr;
        cfg.train.views = views;
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn obj_round_trip_preserves_geometry(sphere: bool, k in 1u32..4) {
        let mesh = level(sphere, k);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        save_obj(&mesh, None, &path).unwrap();
        let back = load_obj(&path).unwrap();
        prop_assert_eq!(back.faces(), mesh.faces());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            prop_assert!((a - b).norm() <= 1e-6);
        }
    }
}
