//! Central-difference gradient checks for every differentiable operator,
//! shared by the `gradcheck` command and the test suites.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureSpec;
use crate::gan::{loss_disc, loss_nonsat, Discriminator, Generator, GeneratorConfig, Layer, NoiseBank};
use crate::hierarchy::cube_hierarchy;
use crate::mesh::{make_cube_hierarchy_level, Vec3};
use crate::neighborhood::build_neighborhood;
use crate::nn::{gradcheck, random_inputs, FaceResBlockVars, GradcheckReport, ParamStore, Tensor, Var};
use crate::render::{rasterize_ids, Camera};
use crate::{Error, Result};

/// Relative-error bound every case must meet.
pub const TOLERANCE: f64 = 1e-4;

/// One named check, parameterised by seed.
pub struct Case {
    pub name: &'static str,
    run: fn(u64) -> Result<GradcheckReport>,
}

impl Case {
    pub fn run(&self, seed: u64) -> Result<GradcheckReport> {
        (self.run)(seed)
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub op: &'static str,
    pub seed: u64,
    pub report: GradcheckReport,
}

impl Row {
    pub fn passed(&self) -> bool {
        self.report.passes(TOLERANCE)
    }
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "face_conv", run: face_conv },
        Case { name: "face_conv_1tap", run: face_conv_1tap },
        Case { name: "modulated_conv", run: |s| modulated(s, true) },
        Case { name: "modulated_conv_nodemod", run: |s| modulated(s, false) },
        Case { name: "resnet_block", run: resnet_block },
        Case { name: "pool", run: |s| pooling(s, true) },
        Case { name: "unpool", run: |s| pooling(s, false) },
        Case { name: "conv2d", run: |s| conv2d(s, 1) },
        Case { name: "conv2d_stride2", run: |s| conv2d(s, 2) },
        Case { name: "conv2d_input_grad", run: conv2d_input_grad },
        Case { name: "dense", run: dense },
        Case { name: "dense_input_grad", run: dense_input_grad },
        Case { name: "activations", run: activations },
        Case { name: "mapping", run: mapping },
        Case { name: "generator", run: generator },
        Case { name: "discriminator", run: discriminator },
        Case { name: "rasterize", run: rasterize },
        Case { name: "crop_concat", run: crop_concat },
        Case { name: "gan_losses", run: gan_losses },
        Case { name: "r1_penalty", run: r1_penalty },
    ]
}

/// Runs the named cases (`"all"` selects every case) for each seed.
pub fn run(ops: &[&str], seeds: &[u64]) -> Result<Vec<Row>> {
    let all = cases();
    let selected: Vec<&Case> = if ops.contains(&"all") {
        all.iter().collect()
    } else {
        ops.iter()
            .map(|op| {
                all.iter()
                    .find(|c| c.name == *op)
                    .ok_or_else(|| Error::Precondition(format!("unknown gradient check `{op}`")))
            })
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for case in selected {
        for &seed in seeds {
            rows.push(Row { op: case.name, seed, report: case.run(seed)? });
        }
    }
    Ok(rows)
}

fn store_inputs(store: &ParamStore) -> (Vec<String>, Vec<Tensor<f64>>) {
    store.iter().map(|(k, t)| (k.clone(), t.cast::<f64>())).unzip()
}

fn bind(names: &[String], vars: &[Var]) -> BTreeMap<String, Var> {
    names.iter().cloned().zip(vars.iter().copied()).collect()
}

fn face_conv(seed: u64) -> Result<GradcheckReport> {
    let nbr = build_neighborhood(&make_cube_hierarchy_level(1)?)?;
    let inputs = random_inputs(&[&[24, 3], &[9, 3, 2], &[2]], seed);
    gradcheck(&inputs, seed, |t, v| t.face_conv(v[0], &nbr, v[1], Some(v[2])))
}

fn face_conv_1tap(seed: u64) -> Result<GradcheckReport> {
    let nbr = build_neighborhood(&make_cube_hierarchy_level(1)?)?;
    let inputs = random_inputs(&[&[24, 3], &[1, 3, 2]], seed);
    gradcheck(&inputs, seed, |t, v| t.face_conv(v[0], &nbr, v[1], None))
}

fn modulated(seed: u64, demod: bool) -> Result<GradcheckReport> {
    let nbr = build_neighborhood(&make_cube_hierarchy_level(1)?)?;
    let inputs = random_inputs(&[&[24, 3], &[9, 3, 2], &[2], &[3], &[2]], seed);
    let noise = Tensor::randn(&[24], 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    gradcheck(&inputs, seed, |t, v| {
        t.modulated_face_conv(v[0], &nbr, v[1], Some(v[2]), v[3], demod, Some((noise.clone(), v[4])))
    })
}

fn resnet_block(seed: u64) -> Result<GradcheckReport> {
    let nbr = build_neighborhood(&make_cube_hierarchy_level(1)?)?;
    let inputs = random_inputs(&[&[24, 2], &[9, 2, 3], &[3], &[9, 3, 3], &[3], &[1, 2, 3]], seed);
    gradcheck(&inputs, seed, |t, v| {
        let p = FaceResBlockVars { w1: v[1], b1: v[2], w2: v[3], b2: v[4], skip: Some(v[5]) };
        t.face_resnet_block(v[0], &nbr, p)
    })
}

fn pooling(seed: u64, down: bool) -> Result<GradcheckReport> {
    let hier = cube_hierarchy(2, 1)?;
    let map = hier.pool_map(0);
    let rows = if down { 96 } else { 24 };
    let inputs = random_inputs(&[&[rows, 3]], seed);
    gradcheck(&inputs, seed, |t, v| if down { t.pool(v[0], map) } else { t.unpool(v[0], map) })
}

fn conv2d(seed: u64, stride: usize) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[6, 5, 2], &[3, 3, 2, 3], &[3]], seed);
    gradcheck(&inputs, seed, |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride, 1))
}

fn conv2d_input_grad(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[3, 3, 3], &[3, 3, 2, 3]], seed);
    gradcheck(&inputs, seed, |t, v| t.conv2d_input_grad(v[0], v[1], (6, 5), 2, 1))
}

fn dense(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[3, 4], &[5, 4], &[5]], seed);
    gradcheck(&inputs, seed, |t, v| t.dense(v[0], v[1], Some(v[2])))
}

fn dense_input_grad(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[3, 5], &[5, 4]], seed);
    gradcheck(&inputs, seed, |t, v| t.dense_input_grad(v[0], v[1]))
}

fn activations(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[4, 3], &[4, 3], &[2, 3]], seed);
    gradcheck(&inputs, seed, |t, v| {
        let a = t.leaky_relu(t.mul(v[0], v[1])?, 0.2);
        let b = t.softplus(t.sub(v[0], t.scale(v[1], 0.5))?);
        let c = t.add(t.sigmoid(a), b)?;
        let d = t.normalize_to_sqrt_dim(t.reshape(v[2], &[1, 6])?)?;
        t.concat_cols(t.reshape(c, &[2, 6])?, t.reshape(t.concat_cols(d, d)?, &[2, 6])?)
    })
}

fn small_generator(features: FeatureSpec) -> Result<Generator> {
    Generator::new(GeneratorConfig {
        levels: 2,
        latent_dim: 4,
        style_dim: 3,
        mapping_depth: 2,
        enc_channels: vec![2, 2],
        dec_channels: vec![3, 3],
        features,
        demodulate: true,
    })
}

fn mapping(seed: u64) -> Result<GradcheckReport> {
    let gen = small_generator(FeatureSpec::None)?;
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(seed));
    let (names, mut inputs) = store_inputs(&store);
    names.iter().zip(&mut inputs).for_each(|(n, t)| {
        if !n.starts_with("map/") {
            *t = Tensor::zeros(t.shape());
        }
    });
    inputs.push(random_inputs(&[&[1, 4]], seed).remove(0));
    gradcheck(&inputs, seed, |t, v| {
        let (params, z) = v.split_at(names.len());
        gen.map_latent(t, &bind(&names, params), z[0])
    })
}

fn generator(seed: u64) -> Result<GradcheckReport> {
    let gen = small_generator(FeatureSpec::Normals)?;
    let hier = cube_hierarchy(2, 1)?;
    let noise = NoiseBank::<f64>::sample(&hier.face_counts(), seed);
    let store = gen.init_params(24, &mut ChaCha8Rng::seed_from_u64(seed));
    let (names, mut inputs) = store_inputs(&store);
    names.iter().zip(&mut inputs).for_each(|(n, t)| {
        if n.ends_with("/noise") {
            *t = Tensor::full(t.shape(), 0.3);
        }
    });
    inputs.extend(random_inputs(&[&[96, 3], &[1, 4]], seed));
    gradcheck(&inputs, seed, |t, v| {
        let (params, rest) = v.split_at(names.len());
        gen.forward(t, &bind(&names, params), &hier, rest[0], rest[1], &noise)
    })
}

fn discriminator(seed: u64) -> Result<GradcheckReport> {
    let d = Discriminator::conv_stack("d", 8, 3, 2, 4)?;
    let mut store = ParamStore::new();
    d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    let (names, mut inputs) = store_inputs(&store);
    inputs.push(random_inputs(&[&[8, 8, 3]], seed).remove(0));
    gradcheck(&inputs, seed, |t, v| {
        let (params, x) = v.split_at(names.len());
        d.forward(t, &bind(&names, params), x[0])
    })
}

fn rasterize(seed: u64) -> Result<GradcheckReport> {
    let mesh = make_cube_hierarchy_level(1)?.normalized();
    let cam = Camera::new(Vec3::new(1.6, 1.1, 1.3), Vec3::zeros(), Vec3::y(), 40.0, (16, 16))?;
    let ids = rasterize_ids(&mesh, &cam);
    let inputs = random_inputs(&[&[24, 3]], seed);
    gradcheck(&inputs, seed, |t, v| t.shade(v[0], &ids, [1.0, 0.5, 0.0]))
}

fn crop_concat(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[8, 8, 3], &[8, 8, 3]], seed);
    gradcheck(&inputs, seed, |t, v| {
        let a = t.crop(v[0], 1, 2, 4)?;
        let b = t.crop(v[1], 4, 0, 4)?;
        let c = t.crop(v[0], 4, 4, 4)?;
        t.concat_channels(&[a, b, c])
    })
}

fn gan_losses(seed: u64) -> Result<GradcheckReport> {
    let inputs = random_inputs(&[&[1, 1], &[1, 1], &[1, 1]], seed);
    gradcheck(&inputs, seed, |t, v| {
        let g = loss_nonsat(t, &v[..2])?;
        let d = loss_disc(t, &v[2..], &v[..2])?;
        t.add(g, t.scale(d, 0.7))
    })
}

fn r1_penalty(seed: u64) -> Result<GradcheckReport> {
    let d = Discriminator {
        input: [5, 5, 2],
        layers: vec![
            Layer::Conv { name: "c".into(), kernel: 3, c_in: 2, c_out: 3, stride: 2, pad: 1 },
            Layer::LeakyRelu,
            Layer::Flatten,
            Layer::Dense { name: "out".into(), n_in: 27, n_out: 1 },
        ],
    };
    let mut store = ParamStore::new();
    d.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    let (names, inputs) = store_inputs(&store);
    let reals = random_inputs(&[&[5, 5, 2], &[5, 5, 2]], seed ^ 0xd1);
    gradcheck(&inputs, seed, |t, v| d.r1_penalty(t, &bind(&names, v), &reals, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let names: std::collections::BTreeSet<_> = cases().iter().map(|c| c.name).collect();
        assert_eq!(names.len(), cases().len());
    }

    #[test]
    fn unknown_op_is_rejected() {
        assert!(matches!(run(&["nope"], &[1]), Err(Error::Precondition(_))));
    }

    #[test]
    fn single_case_passes() {
        let rows = run(&["face_conv"], &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(Row::passed));
    }
}
