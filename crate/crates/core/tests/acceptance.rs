//! End-to-end acceptance checks. Runs sequentially (timings are part of
//! several criteria) and prints one PASS/FAIL line per criterion.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surftex::features::{feature_curvatures, vertex_curvatures};
use surftex::gan::train::load_dataset;
use surftex::gan::{
    assemble_patch_batch, generate, train, Generator, LoadedGenerator, PatchConfig, PatchSource, RunConfig, Trainer,
};
use surftex::gradsuite;
use surftex::hierarchy::{cube_hierarchy, FeatureField, PoolMap};
use surftex::mesh::{make_cube_hierarchy_level, make_flat_grid, make_quad_sphere, QuadMesh, Rgb, Vec3};
use surftex::neighborhood::{build_neighborhood, vertex_valences, NeighborhoodTable, PAD};
use surftex::nn::{adam_step, face_conv, AdamConfig, AdamState, FaceConvParams, Tape, Tensor};
use surftex::render::{rasterize, rasterize_backward, rasterize_ids, shade_backward, shade_pixels, Camera};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient suite", gradient_suite),
        ("face_conv dense-matrix oracle", operator_oracle),
        ("hierarchy invariants", hierarchy_invariants),
        ("neighborhood contract", neighborhood_contract),
        ("renderer exactness", renderer_exactness),
        ("differentiable colour fit", colour_fit),
        ("curvature accuracy", curvature_accuracy),
        ("training smoke and discriminator sanity", training),
        ("patch assembly", patch_assembly),
        ("generation reproducibility", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let rows = gradsuite::run(&["all"], &[1, 2, 3]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failures: Vec<String> =
        rows.iter().filter(|r| !r.passed()).map(|r| format!("{}#{} {:.2e}", r.op, r.seed, r.report.worst())).collect();
    ensure!(failures.is_empty(), "over {:.0e}: {}", gradsuite::TOLERANCE, failures.join(", "));
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:.1?}");
    let worst = rows.iter().map(|r| r.report.worst()).fold(0.0, f64::max);
    let ops: BTreeSet<_> = rows.iter().map(|r| r.op).collect();
    Ok(format!("{} ops x 3 seeds, worst relative error {worst:.2e}", ops.len()))
}

/// Explicit `[F*C1, F*C0]` matrix assembled entry by entry from the table.
fn dense_oracle(nbr: &NeighborhoodTable, w: &[f64], c0: usize, c1: usize) -> Vec<f64> {
    let f = nbr.face_count();
    let mut m = vec![0.0; f * c1 * f * c0];
    for i in 0..f {
        let mut sources = vec![(0usize, i as u32)];
        sources.extend(nbr.row(i).iter().enumerate().map(|(s, &j)| (s + 1, j)));
        for (t, j) in sources.into_iter().filter(|&(_, j)| j != PAD) {
            for a in 0..c0 {
                for b in 0..c1 {
                    m[(i * c1 + b) * f * c0 + j as usize * c0 + a] += w[(t * c0 + a) * c1 + b];
                }
            }
        }
    }
    m
}

fn operator_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for k in [1, 2] {
        let nbr = build_neighborhood(&make_cube_hierarchy_level(k).unwrap()).unwrap();
        let f = nbr.face_count();
        for seed in [1, 2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c0, c1) = (3, 4);
            let p = FaceConvParams::<f64>::init(9, c0, c1, &mut rng);
            let p = FaceConvParams { bias: Tensor::randn(&[c1], 1.0, &mut rng), ..p };
            let x = Tensor::<f64>::randn(&[f, c0], 1.0, &mut rng).into_data();
            let y = face_conv(&FeatureField::new(0, c0, x.clone()).unwrap(), &nbr, &p).unwrap();
            let m = dense_oracle(&nbr, p.weights.data(), c0, c1);
            for r in 0..f * c1 {
                let want: f64 = m[r * f * c0..][..f * c0].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + p.bias.data()[r % c1];
                worst = worst.max((y.values[r] - want).abs());
            }
        }
    }
    ensure!(worst <= 1e-6, "max |diff| {worst:.2e}");
    Ok(format!("cube-24 and cube-96, 3 seeds, max |diff| {worst:.2e}"))
}

/// `rows x cols` matrix of a linear map on single-channel fields, by columns.
fn matrix_of(cols: usize, rows: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; cols]; rows];
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        for (i, v) in f(&e).into_iter().enumerate() {
            m[i][j] = v;
        }
        e[j] = 0.0;
    }
    m
}

fn max_transpose_gap(a: &[Vec<f64>], b: &[Vec<f64>], scale: f64) -> f64 {
    let mut gap = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            gap = gap.max((v - scale * b[j][i]).abs());
        }
    }
    gap
}

fn hierarchy_invariants() -> Outcome {
    let hier = cube_hierarchy(4, 1).unwrap();
    let counts = hier.face_counts();
    ensure!(counts == [1536, 384, 96, 24], "face counts {counts:?}");
    for (l, &c) in counts.iter().enumerate() {
        ensure!(c == counts[0] / 4usize.pow(l as u32), "level {l} breaks the 4^l ratio");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gap = 0.0f64;
    for l in 0..3 {
        let map: &PoolMap = hier.pool_map(l);
        ensure!(map.groups().iter().all(|g| g.len() == 4), "level {l} has a group without 4 members");
        let (fine, coarse) = (map.fine_faces(), map.coarse_faces());
        let x: Vec<f64> = (0..coarse * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        ensure!(map.pool_rows(&map.unpool_rows(&x, 3), 3) == x, "pool(unpool(x)) != x at level {l}");
        let pool = matrix_of(fine, coarse, |e| map.pool_rows(e, 1));
        let unpool = matrix_of(coarse, fine, |e| map.unpool_rows(e, 1));
        let pool_back = matrix_of(coarse, fine, |e| map.pool_rows_backward(e, 1));
        let unpool_back = matrix_of(fine, coarse, |e| map.unpool_rows_backward(e, 1));
        // Sum-pooling (4 x mean) is the adjoint of unpooling.
        gap = gap.max(max_transpose_gap(&unpool, &pool, 4.0));
        gap = gap.max(max_transpose_gap(&pool_back, &pool, 1.0));
        gap = gap.max(max_transpose_gap(&unpool_back, &unpool, 1.0));
    }
    ensure!(gap <= 1e-6, "adjointness gap {gap:.2e}");
    Ok(format!("groups of 4, pool(unpool) exact, transpose gap {gap:.1e}"))
}

fn neighborhood_contract() -> Outcome {
    let mesh = make_cube_hierarchy_level(3).unwrap();
    let table = build_neighborhood(&mesh).unwrap();
    let valence = vertex_valences(&mesh);
    let singular = valence.iter().filter(|&&v| v != 4).count();
    ensure!(singular == 8, "{singular} singular vertices");
    let geo = mesh.face_geometry().unwrap();
    let (mut regular, mut corner) = (0, 0);
    for (i, f) in mesh.faces().iter().enumerate() {
        if f.iter().any(|&v| valence[v as usize] != 4) {
            corner += 1;
            ensure!(table.padded_slots(i) == 1, "corner face {i} has {} sentinels", table.padded_slots(i));
            continue;
        }
        regular += 1;
        ensure!(table.padded_slots(i) == 0, "face {i} has sentinels");
        let (c, n) = (geo[i].centroid, geo[i].normal);
        let tangent = |j: u32| {
            let d = geo[j as usize].centroid - c;
            d - n * n.dot(&d)
        };
        let e0 = tangent(table.row(i)[0]);
        let mut prev = -1.0;
        for &j in table.row(i) {
            let d = tangent(j);
            let a = e0.cross(&d).dot(&n).atan2(e0.dot(&d)).rem_euclid(2.0 * PI);
            let a = if prev < 0.0 { 0.0 } else { a };
            ensure!(a > prev && a < 2.0 * PI, "face {i}: angles not strictly increasing");
            prev = a;
        }
    }
    Ok(format!("{regular} faces with 8 ordered neighbours, {corner} corner faces with one sentinel, 8 singular vertices"))
}

fn renderer_exactness() -> Outcome {
    let start = Instant::now();
    let mesh = make_cube_hierarchy_level(2).unwrap().normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let colors: Vec<Rgb> = (0..96).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let bg = [0.25f32, 0.5, 1.0];
    let cam = Camera::new(Vec3::new(1.7, 1.2, 1.4), Vec3::zeros(), Vec3::y(), 40.0, (64, 64)).unwrap();
    let out = rasterize(&mesh, &colors, &cam, bg).unwrap();
    let px = out.image.data();
    let mut fg = 0;
    for (p, &id) in out.face_id.ids.iter().enumerate() {
        let want = if id >= 0 { colors[id as usize] } else { bg };
        ensure!(px[3 * p..3 * p + 3] == want, "pixel {p} differs from its face colour");
        fg += usize::from(id >= 0);
    }
    ensure!(fg > 0, "nothing rendered");

    // Dyadic upstream gradients keep every f32 sum exact.
    let g: Vec<f32> = (0..64 * 64 * 3).map(|_| rng.random_range(-8i32..=8) as f32 / 8.0).collect();
    let back = rasterize_backward(&out, &Tensor::new(vec![64, 64, 3], g.clone()).unwrap()).unwrap();
    let mut jt = vec![[0.0f64; 3]; 96];
    for (p, &id) in out.face_id.ids.iter().enumerate() {
        if id >= 0 {
            for c in 0..3 {
                jt[id as usize][c] += f64::from(g[3 * p + c]);
            }
        }
    }
    let mut gap = 0.0f64;
    for (a, b) in back.iter().zip(&jt) {
        for c in 0..3 {
            gap = gap.max((f64::from(a[c]) - b[c]).abs());
        }
    }
    ensure!(gap <= 1e-6, "backward vs explicit transpose {gap:.2e}");
    let colors64: Vec<f64> = colors.iter().flatten().map(|&v| f64::from(v)).collect();
    let g64: Vec<f64> = g.iter().map(|&v| f64::from(v)).collect();
    let bg64 = bg.map(f64::from);
    let objective = |c: &[f64]| -> f64 { shade_pixels(c, &out.face_id, bg64).iter().zip(&g64).map(|(a, b)| a * b).sum() };
    let analytic = shade_backward(&g64, &out.face_id, 96);
    let h = 1e-3;
    let mut fd_gap = 0.0f64;
    for i in 0..colors64.len() {
        let (mut p, mut m) = (colors64.clone(), colors64.clone());
        p[i] += h;
        m[i] -= h;
        fd_gap = fd_gap.max(((objective(&p) - objective(&m)) / (2.0 * h) - analytic[i]).abs());
    }
    ensure!(fd_gap <= 1e-6, "finite differences off by {fd_gap:.2e}");

    let cube = make_cube_hierarchy_level(1).unwrap().normalized();
    let head_on = Camera::new(Vec3::new(2.0, 0.0, 0.0), Vec3::zeros(), Vec3::y(), 40.0, (64, 64)).unwrap();
    let ids = rasterize_ids(&cube, &head_on);
    let geo = cube.face_geometry().unwrap();
    let sides: BTreeSet<[i64; 3]> = ids
        .ids
        .iter()
        .filter(|&&i| i >= 0)
        .map(|&i| geo[i as usize].normal.map(|v| v.round() as i64).into())
        .collect();
    ensure!(sides.len() == 1 && sides.contains(&[1, 0, 0]), "visible sides {sides:?}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:.1?}");
    Ok(format!("{fg} foreground pixels exact, transpose gap {gap:.0e}, FD gap {fd_gap:.1e}, one side from +x"))
}

fn colour_fit() -> Outcome {
    let start = Instant::now();
    let mesh = make_cube_hierarchy_level(2).unwrap().normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let target: Vec<Rgb> = (0..96).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let bg = [1.0f32; 3];
    // Tetrahedral viewpoints: every side of the cube is seen by two of them.
    let cams: Vec<Camera> = [[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0], [-1.0, -1.0, 1.0]]
        .iter()
        .map(|d| Camera::new(Vec3::from(*d).normalize() * 2.5, Vec3::zeros(), Vec3::y(), 40.0, (64, 64)).unwrap())
        .collect();
    let targets: Vec<Tensor<f32>> = cams.iter().map(|c| rasterize(&mesh, &target, c, bg).unwrap().image).collect();
    let mut params = Tensor::full(&[96, 3], 0.5f32);
    let mut state = AdamState::new(96 * 3);
    let cfg = AdamConfig::with_lr(0.05);
    let error = |p: &Tensor<f32>| -> f64 {
        p.data().iter().zip(target.iter().flatten()).map(|(a, b)| f64::from((a - b).abs())).sum::<f64>() / 96.0 / 3.0
    };
    let mut reached = None;
    for step in 1..=500 {
        let colors: Vec<Rgb> = params.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mut grad = vec![0.0f32; 96 * 3];
        for (cam, want) in cams.iter().zip(&targets) {
            let out = rasterize(&mesh, &colors, cam, bg).unwrap();
            let n = out.image.len() as f32;
            let g: Vec<f32> = out.image.data().iter().zip(want.data()).map(|(a, b)| 2.0 * (a - b) / n).collect();
            for (acc, v) in grad.iter_mut().zip(rasterize_backward(&out, &Tensor::new(vec![64, 64, 3], g).unwrap()).unwrap().iter().flatten()) {
                *acc += v;
            }
        }
        adam_step(&mut params, &Tensor::new(vec![96, 3], grad).unwrap(), &mut state, cfg).unwrap();
        params.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        if error(&params) < 0.02 {
            reached = Some(step);
            break;
        }
    }
    let elapsed = start.elapsed();
    let err = error(&params);
    let step = reached.ok_or_else(|| format!("mean per-face error {err:.4} after 500 steps"))?;
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}");
    Ok(format!("mean per-face error {err:.4} after {step} steps"))
}

/// Breadth-first vertex distance (through shared faces) to the nearest singular vertex.
fn distance_to_singular(mesh: &QuadMesh) -> Vec<usize> {
    let valence = vertex_valences(mesh);
    let incident = mesh.vertex_faces();
    let mut dist = vec![usize::MAX; mesh.vertex_count()];
    let mut queue: VecDeque<usize> = (0..dist.len()).filter(|&v| valence[v] != 4).collect();
    queue.iter().for_each(|&v| dist[v] = 0);
    while let Some(v) = queue.pop_front() {
        for &f in &incident[v] {
            for &u in &mesh.faces()[f as usize] {
                if dist[u as usize] == usize::MAX {
                    dist[u as usize] = dist[v] + 1;
                    queue.push_back(u as usize);
                }
            }
        }
    }
    dist
}

fn curvature_accuracy() -> Outcome {
    let sphere = make_quad_sphere(4);
    let dist = distance_to_singular(&sphere);
    let curv = feature_curvatures(&sphere).unwrap();
    let (mut worst_h, mut worst_k, mut used) = (0.0f64, 0.0f64, 0);
    for (i, f) in sphere.faces().iter().enumerate() {
        // Away from the corners: no vertex within two rings of one.
        if f.iter().any(|&v| dist[v as usize] <= 2) {
            continue;
        }
        used += 1;
        worst_h = worst_h.max((curv.row(i)[0] - 1.0).abs());
        worst_k = worst_k.max((curv.row(i)[1] - 1.0).abs());
    }
    ensure!(worst_h <= 0.15 && worst_k <= 0.15, "relative error mean {worst_h:.3}, gaussian {worst_k:.3}");

    let grid = make_flat_grid(12, 9, 0.37);
    let boundary = grid.boundary_vertices();
    let mut flat = 0.0f64;
    for (v, (h, k)) in vertex_curvatures(&grid).unwrap().iter().enumerate() {
        if !boundary[v] {
            flat = flat.max(h.abs()).max(k.abs());
        }
    }
    ensure!(flat < 1e-6, "flat grid curvature {flat:.2e}");
    Ok(format!("{used} sphere faces: mean off by {worst_h:.3}, gaussian by {worst_k:.3}; flat max {flat:.1e}"))
}

fn training() -> Outcome {
    let cfg = RunConfig::default();
    let t = &cfg.train;
    ensure!(
        t.mesh_depth == 3 && t.resolution == 64 && t.views == 4 && t.patch_size == 16 && t.steps == 200,
        "default config is not the toy setting"
    );
    ensure!(t.image_weight / t.patch_weight == 10.0, "loss weighting is not 10:1");
    let json = |m: &[surftex::gan::StepMetrics]| m.iter().map(|m| serde_json::to_string(m).unwrap()).collect::<Vec<_>>();
    let start = Instant::now();
    let first = train(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "200 steps took {elapsed:.1?}");
    let second = train(&cfg).map_err(|e| e.to_string())?;
    ensure!(first.metrics.len() == 200, "{} metric lines", first.metrics.len());
    ensure!(json(&first.metrics) == json(&second.metrics), "metrics differ between identical runs");
    let finite = first.metrics.iter().all(|m| {
        m.d_loss.is_finite() && m.g_loss.is_some_and(f64::is_finite) && m.r1.is_none_or(f64::is_finite)
    });
    ensure!(finite, "non-finite loss");

    let mut frozen = RunConfig::default();
    frozen.train.freeze_generator = true;
    frozen.train.steps = 300;
    let gen = Generator::new(frozen.generator.clone()).unwrap();
    let data = load_dataset(&frozen, &gen).unwrap();
    let out = Trainer::new(frozen, &data).unwrap().run().map_err(|e| e.to_string())?;
    let acc = out.eval_accuracy();
    let first_ok = acc.iter().find(|(_, a)| *a > 0.95).map(|(s, _)| *s);
    let &(last_step, last) = acc.last().ok_or("no evaluations")?;
    ensure!(last > 0.95, "frozen-G discriminator accuracy {last:.3} at step {last_step}; history {acc:?}");
    Ok(format!(
        "200 steps in {:.0}s, deterministic, finite; frozen-G accuracy {last:.3} (first > 0.95 at step {})",
        elapsed.as_secs_f64(),
        first_ok.unwrap_or(last_step)
    ))
}

fn patch_assembly() -> Outcome {
    let cfg = PatchConfig { views: 4, per_view: 4, size: 64 };
    ensure!(cfg.stack_channels() == 48, "stack channels {}", cfg.stack_channels());
    let tape = Tape::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fg = vec![true; 128 * 128];
    let views: Vec<_> = (0..4).map(|_| tape.constant(Tensor::randn(&[128, 128, 3], 1.0, &mut rng))).collect();
    let gen: Vec<PatchSource> = views.iter().map(|&image| PatchSource { image, foreground: &fg }).collect();
    let fake = assemble_patch_batch(&tape, &gen, false, cfg, &mut rng).map_err(|e| e.to_string())?;
    let real_src = [PatchSource { image: views[0], foreground: &fg }];
    let real = assemble_patch_batch(&tape, &real_src, true, cfg, &mut rng).map_err(|e| e.to_string())?;
    ensure!(tape.shape(fake) == [64, 64, 48], "generated stack {:?}", tape.shape(fake));
    ensure!(tape.shape(real) == tape.shape(fake), "real stack {:?}", tape.shape(real));
    Ok("16 patches of 64x64 -> [64, 64, 48] on both paths".into())
}

fn reproducibility() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.train.steps = 2;
    let out = train(&cfg).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("toy.rsck");
    out.state.to_checkpoint(&cfg).save(&ckpt).unwrap();
    let runs: Vec<_> = (0..2)
        .map(|i| {
            let g = LoadedGenerator::load(&ckpt).unwrap();
            let sample = g.prepare(cube_hierarchy(3, 1).unwrap()).unwrap();
            generate(&g, &sample, 3, 4, dir.path().join(format!("run{i}"))).unwrap()
        })
        .collect();
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    ensure!(read(&runs[0].sidecar_path) == read(&runs[1].sidecar_path), "colour sidecars differ");
    ensure!(runs[0].renders.len() == 4, "{} renders", runs[0].renders.len());
    for (a, b) in runs[0].renders.iter().zip(&runs[1].renders) {
        ensure!(read(a) == read(b), "{} differs", a.display());
    }
    Ok("sidecar and 4 PNGs byte-identical across two runs".into())
}
