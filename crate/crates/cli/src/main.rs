//! `surftex` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors and violated preconditions
//! (bad input files, incompatible checkpoints), 2 for internal failures
//! (I/O, divergence, failed gradient checks).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surftex::features::{assemble_input, write_feature_file, FeatureSpec};
use surftex::gan::train::{load_dataset, Sample};
use surftex::gan::{generate, interpolate, train, LoadedGenerator, RunConfig};
use surftex::gradsuite;
use surftex::hierarchy::{build_hierarchy, BuildOptions, MeshHierarchy};
use surftex::mesh::{load_obj, make_cube_hierarchy_level, make_quad_sphere, read_colors, save_obj};
use surftex::neighborhood::build_neighborhood;
use surftex::render::{rasterize, seeded_views, write_png};
use surftex::Error;

#[derive(Parser)]
#[command(name = "surftex", version, about = "Texture generation on quad-mesh surface hierarchies")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize quad meshes.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Build or check multi-level hierarchy caches.
    #[command(subcommand)]
    Hierarchy(HierarchyCommand),
    /// Compute per-face input features.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Render a coloured mesh from random viewpoints.
    Render(RenderArgs),
    /// Run finite-difference gradient checks and print a table.
    Gradcheck(GradcheckArgs),
    /// Train a generator from a config file.
    Train(TrainArgs),
    /// Generate a textured mesh and renders from a checkpoint.
    Generate(GenerateArgs),
    /// Render textures along the interpolation between two seeds.
    Interpolate(InterpolateArgs),
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Subdivided cube with 6 * 4^depth faces.
    MakeCube(MakeMeshArgs),
    /// Subdivided cube projected onto the unit sphere.
    MakeSphere(MakeMeshArgs),
}

#[derive(Args)]
struct MakeMeshArgs {
    /// Subdivision depth (1 gives 24 faces).
    #[arg(long, default_value_t = 2)]
    depth: u32,
    /// Output OBJ path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum HierarchyCommand {
    /// Build a cache from OBJ levels ordered finest to coarsest.
    Build {
        /// Level meshes, finest first.
        #[arg(long, num_args = 2.., required = true)]
        levels: Vec<PathBuf>,
        /// Output cache path.
        #[arg(long)]
        out: PathBuf,
        /// Accept coarse faces that own no fine faces.
        #[arg(long, default_value_t = false)]
        allow_empty_groups: bool,
    },
    /// Load a cache and check every invariant.
    Validate {
        /// Cache path.
        cache: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Write the feature file for one mesh.
    Compute {
        /// Input OBJ path.
        #[arg(long)]
        mesh: PathBuf,
        /// Feature set: none, position, laplacian, curvatures, fundamental_forms, normals, normals_plus_curvature.
        #[arg(long, default_value = "normals_plus_curvature")]
        spec: String,
        /// Output feature file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RenderArgs {
    /// Input OBJ path.
    #[arg(long)]
    mesh: PathBuf,
    /// Colour sidecar; defaults to the one next to the mesh.
    #[arg(long)]
    colors: Option<PathBuf>,
    /// Number of views.
    #[arg(long, default_value_t = 4)]
    views: usize,
    /// Square image resolution.
    #[arg(long, default_value_t = 256)]
    res: usize,
    /// Viewpoint seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Comma-separated check names, or `all`.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    ops: Vec<String>,
    /// Seed for inputs and projections.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the configured checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override the configured metrics log path.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct SourceArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// Hierarchy cache to texture; defaults to the training shape of the checkpoint's config.
    #[arg(long)]
    mesh_cache: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Latent and viewpoint seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of rendered views.
    #[arg(long, default_value_t = 4)]
    views: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InterpolateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Endpoint seeds as `a,b`.
    #[arg(long, default_value = "0,1", value_parser = seed_pair)]
    seeds: (u64, u64),
    /// Number of frames including both endpoints.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn seed_pair(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two seeds as `a,b`")?;
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("bad seed `{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// Command failure with its exit code.
enum Failure {
    Lib(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_precondition() { 1 } else { 2 })
        }
        Err(Failure::Checks(n)) => {
            eprintln!("error: {n} gradient checks failed");
            ExitCode::from(2)
        }
    }
}

/// Caps the worker pool at `RSG_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("RSG_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("RSG_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("RSG_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Mesh(cmd) => {
            let (args, mesh) = match cmd {
                MeshCommand::MakeCube(a) => {
                    let m = make_cube_hierarchy_level(a.depth)?;
                    (a, m)
                }
                MeshCommand::MakeSphere(a) => {
                    if a.depth == 0 {
                        return Err(Error::Precondition("depth must be at least 1".into()).into());
                    }
                    let m = make_quad_sphere(a.depth);
                    (a, m)
                }
            };
            save_obj(&mesh, None, &args.out)?;
            println!("wrote {} ({} faces, {} vertices)", args.out.display(), mesh.face_count(), mesh.vertex_count());
        }
        Command::Hierarchy(HierarchyCommand::Build { levels, out, allow_empty_groups }) => {
            let meshes = levels.iter().map(load_obj).collect::<surftex::Result<Vec<_>>>()?;
            let hier = build_hierarchy(meshes, BuildOptions { allow_empty_groups })?;
            hier.write_cache(&out)?;
            println!("wrote {} with levels {:?}", out.display(), hier.face_counts());
        }
        Command::Hierarchy(HierarchyCommand::Validate { cache }) => {
            let hier = MeshHierarchy::read_cache(&cache)?;
            hier.validate()?;
            describe(&hier);
            println!("ok");
        }
        Command::Features(FeaturesCommand::Compute { mesh, spec, out }) => {
            let spec: FeatureSpec = spec.parse()?;
            let m = load_obj(&mesh)?;
            let nbr = build_neighborhood(&m)?;
            let f = assemble_input(&m, &nbr, spec)?;
            write_feature_file(&out, &f)?;
            println!("wrote {} ({} faces x {} channels)", out.display(), f.rows(), f.channels);
        }
        Command::Render(a) => {
            let mesh = load_obj(&a.mesh)?;
            let colors_path = a.colors.unwrap_or_else(|| surftex::mesh::sidecar_path(&a.mesh));
            let colors = read_colors(&colors_path)?;
            if a.views == 0 || a.res == 0 {
                return Err(Error::Precondition("views and res must be positive".into()).into());
            }
            std::fs::create_dir_all(&a.out).map_err(Error::from)?;
            for (i, cam) in seeded_views(&mesh, a.views, a.res, a.seed).iter().enumerate() {
                let r = rasterize(&mesh, &colors, cam, [1.0; 3])?;
                let path = a.out.join(format!("view_{i:02}.png"));
                write_png(&path, &r.image)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Gradcheck(a) => {
            let ops: Vec<&str> = a.ops.iter().map(String::as_str).collect();
            let rows = gradsuite::run(&ops, &[a.seed])?;
            println!("{:<24} {:>6} {:>12} {:>12}  result", "op", "seed", "max rel", "max abs");
            let mut failed = 0;
            for r in &rows {
                let abs = r.report.max_abs_error.iter().copied().fold(0.0, f64::max);
                let verdict = if r.passed() { "pass" } else { "FAIL" };
                failed += usize::from(!r.passed());
                println!("{:<24} {:>6} {:>12.3e} {:>12.3e}  {verdict}", r.op, r.seed, r.report.worst(), abs);
            }
            println!("{} of {} checks within {:.0e}", rows.len() - failed, rows.len(), gradsuite::TOLERANCE);
            if failed > 0 {
                return Err(Failure::Checks(failed));
            }
        }
        Command::Train(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(s) = a.steps {
                cfg.train.steps = s;
            }
            cfg.train.checkpoint = a.checkpoint.or(cfg.train.checkpoint);
            cfg.train.metrics = a.metrics.or(cfg.train.metrics);
            cfg.train.validate()?;
            let out = train(&cfg)?;
            if let Some(last) = out.metrics.last() {
                println!(
                    "{} steps; last d_loss {:.4}, g_loss {:.4}",
                    out.metrics.len(),
                    last.d_loss,
                    last.g_loss.unwrap_or(f64::NAN)
                );
            }
            if let Some(p) = &cfg.train.checkpoint {
                println!("checkpoint {}", p.display());
            }
        }
        Command::Generate(a) => {
            let (gen, sample) = load_source(&a.source)?;
            let out = generate(&gen, &sample, a.seed, a.views, &a.out)?;
            println!("wrote {} and {} renders", out.mesh_path.display(), out.renders.len());
        }
        Command::Interpolate(a) => {
            let (gen, sample) = load_source(&a.source)?;
            let frames = interpolate(&gen, &sample, a.seeds, a.steps, &a.out)?;
            println!("wrote {} frames to {}", frames.len(), a.out.display());
        }
    }
    Ok(())
}

fn load_source(a: &SourceArgs) -> surftex::Result<(LoadedGenerator, Sample)> {
    let gen = LoadedGenerator::load(&a.ckpt)?;
    let hier = match &a.mesh_cache {
        Some(p) => MeshHierarchy::read_cache(p)?,
        None => load_dataset(&gen.cfg, &gen.generator)?.remove(0).hier,
    };
    let sample = gen.prepare(hier)?;
    Ok((gen, sample))
}

fn describe(h: &MeshHierarchy) {
    for (l, level) in h.levels().iter().enumerate() {
        let nbr = &level.neighborhood;
        println!(
            "level {l}: {} faces, {} vertices, {} truncated neighbourhoods",
            level.mesh.face_count(),
            level.mesh.vertex_count(),
            nbr.truncated_faces()
        );
    }
}
