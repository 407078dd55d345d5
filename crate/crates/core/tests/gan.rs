use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surftex::features::FeatureSpec;
use surftex::gan::train::{load_dataset, Sample};
use surftex::gan::{
    generate, generator_gradients, interpolate, latent_from_seed, path_length, weighted_objective, Discriminator,
    Generator, GeneratorConfig, Layer, LoadedGenerator, NoiseBank, RunConfig, Trainer,
};
use surftex::hierarchy::{build_hierarchy, cube_hierarchy, sphere_hierarchy, BuildOptions, MeshHierarchy};
use surftex::nn::{gradcheck, random_inputs, Binder, ParamStore, Tape, Tensor, Var};
use surftex::Error;

const TOL: f64 = 1e-4;

fn small_generator(levels: usize, features: FeatureSpec) -> GeneratorConfig {
    GeneratorConfig {
        levels,
        latent_dim: 6,
        style_dim: 5,
        mapping_depth: 2,
        enc_channels: vec![3; levels],
        dec_channels: vec![4; levels],
        features,
        demodulate: true,
    }
}

fn small_run() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.generator = small_generator(2, FeatureSpec::NormalsPlusCurvature);
    let t = &mut cfg.train;
    t.mesh_depth = 2;
    t.resolution = 16;
    t.patch_size = 4;
    t.views = 2;
    t.patches_per_view = 2;
    t.d_channels = 4;
    t.d_max_channels = 8;
    t.pd_channels = 4;
    t.eval_size = 4;
    t.eval_interval = 2;
    t.steps = 3;
    cfg
}

/// Store tensors under `prefix` as f64 gradcheck inputs, plus their names.
fn as_inputs(store: &ParamStore, prefix: &str) -> (Vec<String>, Vec<Tensor<f64>>) {
    store.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(k, t)| (k.clone(), t.cast::<f64>())).unzip()
}

fn bind(names: &[String], vars: &[Var]) -> BTreeMap<String, Var> {
    names.iter().cloned().zip(vars.iter().copied()).collect()
}

#[test]
fn encoder_emits_configured_widths() {
    let gen = Generator::new(GeneratorConfig::default()).unwrap();
    let hier = cube_hierarchy(3, 1).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    let sample = Sample::new(hier, &gen).unwrap();
    let tape = Tape::<f32>::new();
    let x = tape.constant(sample.input.clone());
    let enc = gen.encode(&tape, &Binder::frozen(&tape, &store), &sample.hier, x).unwrap();
    for (l, (e, faces)) in enc.iter().zip([384, 96, 24]).enumerate() {
        assert_eq!(tape.shape(e.unwrap()), [faces, gen.cfg.enc_channels[l]]);
    }
}

#[test]
fn encoder_without_features_emits_nothing() {
    let gen = Generator::new(small_generator(2, FeatureSpec::None)).unwrap();
    let hier = cube_hierarchy(2, 1).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(store.iter().all(|(k, _)| !k.starts_with("enc/")));
    let tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::zeros(&[96, 0]));
    let enc = gen.encode(&tape, &Binder::frozen(&tape, &store), &hier, x).unwrap();
    assert!(enc.iter().all(Option::is_none));
}

/// Rebuilds `hier` with the faces of every level shuffled; returns the
/// permutations (`new i = old perm[i]`).
fn permuted(hier: &MeshHierarchy, seed: u64) -> (MeshHierarchy, Vec<Vec<usize>>) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perms = Vec::new();
    let mut meshes = Vec::new();
    for level in hier.levels() {
        let mut p: Vec<usize> = (0..level.mesh.face_count()).collect();
        p.shuffle(&mut rng);
        meshes.push(level.mesh.permute_faces(&p).unwrap());
        perms.push(p);
    }
    (build_hierarchy(meshes, BuildOptions::default()).unwrap(), perms)
}

#[test]
fn encoder_is_permutation_consistent() {
    let gen = Generator::new(small_generator(3, FeatureSpec::NormalsPlusCurvature)).unwrap();
    let hier = cube_hierarchy(3, 1).unwrap();
    let (shuffled, perms) = permuted(&hier, 4);
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(1));
    let run = |h: MeshHierarchy| {
        let sample = Sample::new(h, &gen).unwrap();
        let tape = Tape::<f32>::new();
        let x = tape.constant(sample.input.clone());
        let enc = gen.encode(&tape, &Binder::frozen(&tape, &store), &sample.hier, x).unwrap();
        enc.iter().map(|e| tape.value(e.unwrap()).as_ref().clone()).collect::<Vec<_>>()
    };
    let (a, b) = (run(hier), run(shuffled));
    for (l, p) in perms.iter().enumerate() {
        let c = a[l].shape()[1];
        for (i, &old) in p.iter().enumerate() {
            for k in 0..c {
                let (x, y) = (a[l].data()[old * c + k], b[l].data()[i * c + k]);
                assert!((x - y).abs() <= 1e-5, "level {l} face {i}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn encoder_gradcheck_two_levels() {
    let gen = Generator::new(small_generator(2, FeatureSpec::Normals)).unwrap();
    let hier = cube_hierarchy(2, 1).unwrap();
    for seed in [1, 2, 3] {
        let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(seed));
        let (names, mut inputs) = as_inputs(&store, "enc/");
        inputs.push(random_inputs(&[&[96, 3]], seed).remove(0));
        let r = gradcheck(&inputs, seed, |t, v| {
            let (params, x) = v.split_at(names.len());
            let p = bind(&names, params);
            let enc = gen.encode(t, &p, &hier, x[0])?;
            // Both levels feed the scalar so gradients cross the pool.
            let fine = t.sum_squares(enc[0].unwrap());
            t.add(fine, t.sum_squares(enc[1].unwrap()))
        })
        .unwrap();
        assert!(r.passes(TOL), "seed {seed}: {r:?}");
    }
}

#[test]
fn mapping_depth_zero_is_normalization() {
    let mut cfg = small_generator(2, FeatureSpec::None);
    cfg.mapping_depth = 0;
    cfg.style_dim = cfg.latent_dim;
    let gen = Generator::new(cfg).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    let z = latent_from_seed(5, 6).cast::<f64>();
    let tape = Tape::<f64>::new();
    let zv = tape.constant(z.clone());
    let w = tape.value(gen.map_latent(&tape, &Binder::frozen(&tape, &store), zv).unwrap());
    let scale = 6f64.sqrt() / z.norm_squared().sqrt();
    for (a, b) in w.data().iter().zip(z.data()) {
        assert!((a - b * scale).abs() < 1e-12);
    }
}

#[test]
fn mapping_separates_latents_and_gradchecks() {
    let gen = Generator::new(small_generator(2, FeatureSpec::None)).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    let tape = Tape::<f32>::new();
    let p = Binder::frozen(&tape, &store);
    let w1 = tape.value(gen.map_latent(&tape, &p, tape.constant(latent_from_seed(1, 6))).unwrap());
    let w2 = tape.value(gen.map_latent(&tape, &p, tape.constant(latent_from_seed(2, 6))).unwrap());
    let diff: f32 = w1.data().iter().zip(w2.data()).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 1e-3, "styles collapsed: {diff}");

    for seed in [1, 2, 3] {
        let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(seed));
        let (names, mut inputs) = as_inputs(&store, "map/");
        inputs.push(random_inputs(&[&[1, 6]], seed).remove(0));
        let r = gradcheck(&inputs, seed, |t, v| {
            let (params, z) = v.split_at(names.len());
            gen.map_latent(t, &bind(&names, params), z[0])
        })
        .unwrap();
        assert!(r.passes(TOL), "seed {seed}: {r:?}");
    }
}

#[test]
fn mapping_rejects_wrong_latent_width() {
    let gen = Generator::new(small_generator(2, FeatureSpec::None)).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    let tape = Tape::<f32>::new();
    let z = tape.constant(Tensor::zeros(&[1, 7]));
    let err = gen.map_latent(&tape, &Binder::frozen(&tape, &store), z).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)));
}

fn decode(gen: &Generator, store: &ParamStore, hier: MeshHierarchy, seed: u64) -> Tensor<f32> {
    let sample = Sample::new(hier, gen).unwrap();
    let tape = Tape::<f32>::new();
    let p = Binder::frozen(&tape, store);
    let noise = NoiseBank::sample(&sample.hier.face_counts(), 9);
    let x = tape.constant(sample.input.clone());
    let z = tape.constant(latent_from_seed(seed, gen.cfg.latent_dim));
    let out = gen.forward(&tape, &p, &sample.hier, x, z, &noise).unwrap();
    tape.value(out).as_ref().clone()
}

#[test]
fn decoder_shape_range_and_determinism() {
    let gen = Generator::new(small_generator(3, FeatureSpec::NormalsPlusCurvature)).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(3));
    let a = decode(&gen, &store, cube_hierarchy(3, 1).unwrap(), 7);
    assert_eq!(a.shape(), [384, 3]);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a, decode(&gen, &store, cube_hierarchy(3, 1).unwrap(), 7));
    assert_ne!(a, decode(&gen, &store, cube_hierarchy(3, 1).unwrap(), 8));
    // Same style on a different member of the cube family.
    let s = decode(&gen, &store, sphere_hierarchy(3, 1).unwrap(), 7);
    assert_eq!(s.shape(), [384, 3]);
    assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn decoder_gradcheck() {
    let gen = Generator::new(small_generator(2, FeatureSpec::Normals)).unwrap();
    let hier = cube_hierarchy(2, 1).unwrap();
    let noise = NoiseBank::<f64>::sample(&hier.face_counts(), 2);
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(5));
    let (names, mut inputs) = as_inputs(&store, "");
    // Nonzero noise strengths so that path is exercised too.
    for (n, t) in names.iter().zip(inputs.iter_mut()) {
        if n.ends_with("/noise") {
            *t = Tensor::full(t.shape(), 0.3);
        }
    }
    inputs.push(random_inputs(&[&[96, 3]], 5).remove(0));
    inputs.push(random_inputs(&[&[1, 6]], 6).remove(0));
    let r = gradcheck(&inputs, 5, |t, v| {
        let (params, rest) = v.split_at(names.len());
        gen.forward(t, &bind(&names, params), &hier, rest[0], rest[1], &noise)
    })
    .unwrap();
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn discriminators_map_to_scalar_and_gradcheck() {
    let image_d = Discriminator::conv_stack("img", 64, 3, 8, 64).unwrap();
    let mut store = ParamStore::new();
    image_d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
    let tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::full(&[64, 64, 3], 0.5));
    assert_eq!(tape.shape(image_d.forward(&tape, &Binder::frozen(&tape, &store), x).unwrap()), [1, 1]);
    let bad = tape.constant(Tensor::zeros(&[32, 32, 3]));
    assert!(image_d.forward(&tape, &Binder::frozen(&tape, &store), bad).is_err());

    for (d, c) in [(Discriminator::conv_stack("img", 8, 3, 2, 4).unwrap(), 3), (Discriminator::conv_stack("patch", 8, 12, 3, 4).unwrap(), 12)] {
        for seed in [1, 2, 3] {
            let mut store = ParamStore::new();
            d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
            let (names, mut inputs) = as_inputs(&store, "");
            inputs.push(random_inputs(&[&[8, 8, c]], seed).remove(0));
            let r = gradcheck(&inputs, seed, |t, v| {
                let (params, x) = v.split_at(names.len());
                d.forward(t, &bind(&names, params), x[0])
            })
            .unwrap();
            assert!(r.passes(TOL), "{c} channels, seed {seed}: {r:?}");
        }
    }
}

#[test]
fn r1_on_linear_discriminator_is_analytic() {
    let d = Discriminator {
        input: [4, 5, 3],
        layers: vec![Layer::Flatten, Layer::Dense { name: "lin".into(), n_in: 60, n_out: 1 }],
    };
    let mut store = ParamStore::new();
    d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(2));
    let w2 = store.get("lin/w").unwrap().cast::<f64>().norm_squared();
    let reals = random_inputs(&[&[4, 5, 3], &[4, 5, 3]], 3);
    for gamma in [0.0, 1.0, 10.0] {
        let tape = Tape::<f64>::new();
        let p = Binder::frozen(&tape, &store);
        let r1 = tape.value(d.r1_penalty(&tape, &p, &reals, gamma).unwrap()).item();
        assert!((r1 - gamma / 2.0 * w2).abs() <= 1e-6, "gamma {gamma}: {r1}");
    }
}

#[test]
fn r1_parameter_gradient_matches_finite_differences() {
    let d = Discriminator {
        input: [5, 5, 2],
        layers: vec![
            Layer::Conv { name: "c".into(), kernel: 3, c_in: 2, c_out: 3, stride: 2, pad: 1 },
            Layer::LeakyRelu,
            Layer::Flatten,
            Layer::Dense { name: "out".into(), n_in: 27, n_out: 1 },
        ],
    };
    for seed in [1, 2, 3] {
        let mut store = ParamStore::new();
        d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let (names, inputs) = as_inputs(&store, "");
        let reals = random_inputs(&[&[5, 5, 2], &[5, 5, 2]], seed + 10);
        let r = gradcheck(&inputs, seed, |t, v| d.r1_penalty(t, &bind(&names, v), &reals, 1.5)).unwrap();
        assert!(r.passes(1e-3), "seed {seed}: {r:?}");
    }
}

#[test]
fn path_length_surrogate_matches_penalty_gradient() {
    // image = sigmoid(W style); the penalty is a function of W through |J|.
    let (n, s) = (7, 3);
    let inputs = random_inputs(&[&[n, s], &[1, s]], 4);
    let y = random_inputs(&[&[1, n]], 5).remove(0);
    let average = 0.2;
    let penalty = |w: &Tensor<f64>| {
        let tape = Tape::<f64>::new();
        let wv = tape.constant(w.clone());
        let style = tape.var(inputs[1].clone());
        path_length(&tape, style, &y, average, |st| Ok(tape.sigmoid(tape.dense(st, wv, None)?))).unwrap().penalty
    };
    let tape = Tape::<f64>::new();
    let wv = tape.var(inputs[0].clone());
    let style = tape.var(inputs[1].clone());
    let pl = path_length(&tape, style, &y, average, |st| Ok(tape.sigmoid(tape.dense(st, wv, None)?))).unwrap();
    let analytic = tape.backward(pl.surrogate).unwrap().get_or_zeros(&tape, wv);
    let h = 1e-6;
    for i in 0..n * s {
        let (mut plus, mut minus) = (inputs[0].clone(), inputs[0].clone());
        plus.data_mut()[i] += h;
        minus.data_mut()[i] -= h;
        let fd = (penalty(&plus) - penalty(&minus)) / (2.0 * h);
        let a = analytic.data()[i];
        assert!((a - fd).abs() <= 1e-3 * (a.abs() + fd.abs()).max(1e-3), "entry {i}: {a} vs {fd}");
    }
}

#[test]
fn patch_loss_enters_generator_objective_at_one_tenth() {
    let cfg = RunConfig::default();
    let (wi, wp) = (cfg.train.image_weight, cfg.train.patch_weight);
    assert_eq!(wi / wp, 10.0);
    let total = |img: f64, patch: f64| {
        let tape = Tape::<f64>::new();
        let (a, b) = (tape.var(Tensor::scalar(img)), tape.var(Tensor::scalar(patch)));
        let l = weighted_objective(&tape, a, b, wi, wp).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), g.get(a).unwrap().item(), g.get(b).unwrap().item())
    };
    let (base, di, dp) = total(0.8, 1.3);
    let (doubled, ..) = total(0.8, 2.6);
    assert!(((doubled - base) - 1.3 / 10.0).abs() <= 1e-12);
    assert_eq!((di, dp), (1.0, 0.1));
}

#[test]
fn every_generator_parameter_receives_gradient() {
    let cfg = small_run();
    let gen = Generator::new(cfg.generator.clone()).unwrap();
    let data = load_dataset(&cfg, &gen).unwrap();
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(0));
    let grads = generator_gradients(&cfg, &data, 1).unwrap();
    let zero: Vec<&String> = grads.iter().filter(|(_, g)| g.data().iter().all(|&v| v == 0.0)).map(|(k, _)| k).collect();
    assert!(zero.is_empty(), "zero gradients: {zero:?}");
    let names: Vec<&String> = store.iter().map(|(k, _)| k).collect();
    assert_eq!(grads.keys().collect::<Vec<_>>(), names);
}

#[test]
fn short_run_is_finite_and_deterministic() {
    let cfg = small_run();
    let gen = Generator::new(cfg.generator.clone()).unwrap();
    let data = load_dataset(&cfg, &gen).unwrap();
    let run = || Trainer::new(cfg.clone(), &data).unwrap().run().unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.metrics.len(), 3);
    let json = |m: &[surftex::gan::StepMetrics]| m.iter().map(|m| serde_json::to_string(m).unwrap()).collect::<Vec<_>>();
    assert_eq!(json(&a.metrics), json(&b.metrics));
    assert!(a.metrics.iter().all(|m| m.d_loss.is_finite() && m.g_loss.unwrap().is_finite()));
    assert!(a.state.g.all_finite() && a.state.d.all_finite());
}

fn trained_generator() -> (LoadedGenerator, RunConfig) {
    let mut cfg = small_run();
    cfg.train.steps = 2;
    let gen = Generator::new(cfg.generator.clone()).unwrap();
    let data = load_dataset(&cfg, &gen).unwrap();
    let out = Trainer::new(cfg.clone(), &data).unwrap().run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.rsck");
    out.state.to_checkpoint(&cfg).save(&path).unwrap();
    (LoadedGenerator::load(&path).unwrap(), cfg)
}

#[test]
fn generate_is_reproducible_and_checks_compatibility() {
    let (g, cfg) = trained_generator();
    assert_eq!(g.cfg, cfg);
    let sample = g.prepare(cube_hierarchy(2, 1).unwrap()).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outs: Vec<_> = dirs.iter().map(|d| generate(&g, &sample, 3, 2, d.path()).unwrap()).collect();
    assert_eq!(std::fs::read(&outs[0].sidecar_path).unwrap(), std::fs::read(&outs[1].sidecar_path).unwrap());
    assert_eq!(outs[0].renders.len(), 2);
    for (a, b) in outs[0].renders.iter().zip(&outs[1].renders) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
    let other = tempfile::tempdir().unwrap();
    assert_ne!(generate(&g, &sample, 4, 1, other.path()).unwrap().colors, outs[0].colors);

    let err = g.prepare(cube_hierarchy(3, 1).unwrap()).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");
}

#[test]
fn interpolation_endpoints_and_files() {
    let (g, _) = trained_generator();
    let sample = g.prepare(cube_hierarchy(2, 1).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let frames = interpolate(&g, &sample, (3, 9), 5, dir.path()).unwrap();
    assert_eq!(frames.len(), 5);
    assert_eq!(frames[0], g.colors(&sample, &latent_from_seed(3, 6)).unwrap());
    assert_eq!(frames[4], g.colors(&sample, &latent_from_seed(9, 6)).unwrap());
    let pngs = (0..5).filter(|i| dir.path().join(format!("interp_{i:02}.png")).exists()).count();
    assert_eq!(pngs, 5);
    assert!(dir.path().join("strip.png").exists());
}
