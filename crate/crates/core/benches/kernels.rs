use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surftex::hierarchy::FeatureField;
use surftex::mesh::make_cube_hierarchy_level;
use surftex::neighborhood::build_neighborhood;
use surftex::nn::conv2d::{conv2d_forward, Conv2dShape};
use surftex::nn::{face_conv, FaceConvParams, Tensor};
use surftex::par;
use surftex::render::{rasterize_ids, sample_pose, PoseConfig};

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn face_conv_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nbr = build_neighborhood(&make_cube_hierarchy_level(5).unwrap()).unwrap();
    let faces = nbr.face_count();
    let p = FaceConvParams::<f32>::init(9, 32, 32, &mut rng);
    let x = FeatureField::new(0, 32, Tensor::<f32>::randn(&[faces, 32], 1.0, &mut rng).into_data()).unwrap();
    let mut g = c.benchmark_group("face_conv_6144x32");
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| face_conv(black_box(&x), &nbr, &p).unwrap()));
    }
    par::set_sequential(false);
    g.finish();
}

fn conv2d_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = Conv2dShape::new(&[64, 64, 16], &[3, 3, 16, 32], 1, 1).unwrap();
    let x = Tensor::<f32>::randn(&[64, 64, 16], 1.0, &mut rng).into_data();
    let k = Tensor::<f32>::randn(&[3, 3, 16, 32], 0.1, &mut rng).into_data();
    let mut g = c.benchmark_group("conv2d_64x64x16_to_32");
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| conv2d_forward(black_box(&x), &k, None, s)));
    }
    par::set_sequential(false);
    g.finish();
}

fn raster_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mesh = make_cube_hierarchy_level(5).unwrap().normalized();
    let cam = sample_pose(&mut rng, &PoseConfig { resolution: (256, 256), ..PoseConfig::default() }, &mesh);
    let mut g = c.benchmark_group("rasterize_ids_256");
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| rasterize_ids(black_box(&mesh), &cam)));
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, face_conv_bench, conv2d_bench, raster_bench);
criterion_main!(benches);
