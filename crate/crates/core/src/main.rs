use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uvsplat::checks::{run_suite, Suite};
use uvsplat::io::text::{
    deform_config_from, fusion_config_from, load_camera, load_labels, load_landmarks, write_text, KeyValues, DEFORM_KEYS,
    FUSION_KEYS,
};
use uvsplat::io::views::{load_splats, save_splats, ViewManifest};
use uvsplat::io::{image, load_obj, load_uvt, save_obj};
use uvsplat::pipeline::{self, PipelineSpec};
use uvsplat::Result;

#[derive(Parser)]
#[command(name = "uvsplat", version, about = "UV-space feature splatting, normal-guided deformation and anchored splats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene: meshes, labels, cameras, normal maps, G-buffers and features.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Deform a mesh toward per-view target normals.
    Deform {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Target normals are in each view's camera frame.
        #[arg(long)]
        camera_space: bool,
    },
    /// Fuse per-view features into one UV map.
    Splat {
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Anchor splats on a mesh from a UV attribute map.
    Anchor {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        uvmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render anchored splats from a camera.
    Render {
        #[arg(long)]
        splats: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run numerical self-checks and print a pass/fail table.
    Gradcheck {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// synth, deform, splat, anchor and render in one go.
    Pipeline {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn thread_cap() -> std::result::Result<Option<usize>, String> {
    match std::env::var("UVSPLAT_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("UVSPLAT_THREADS must be a positive integer, got `{s}`")),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match thread_cap() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth { spec, out_dir, seed } => {
            let spec = PipelineSpec::load(&spec)?;
            let data = pipeline::synthesize(&spec, seed)?;
            pipeline::write_synth(&out_dir, &data)?;
            println!(
                "wrote {} views, {} landmarks to {}",
                data.cameras.len(),
                data.landmarks.len(),
                out_dir.display()
            );
        }
        Command::Deform { mesh, labels, views, landmarks, config, out, trace, camera_space } => {
            deform(&mesh, &labels, &views, &landmarks, &config, &out, &trace, camera_space)?
        }
        Command::Splat { views, config, out_dir } => {
            let kv = KeyValues::load(&config)?;
            kv.only(&FUSION_KEYS, &config)?;
            let cfg = fusion_config_from(&kv, &config)?;
            let manifest = ViewManifest::load(&views)?;
            let n = manifest.views.len();
            let mut gbuffers = Vec::with_capacity(n);
            let mut cameras = Vec::with_capacity(n);
            let mut features = Vec::with_capacity(n);
            for k in 0..n {
                gbuffers.push(manifest.gbuffer(k)?);
                cameras.push(manifest.camera(k)?);
                features.push(manifest.features(k)?);
            }
            let out = pipeline::splat(&gbuffers, &cameras, &features, &cfg)?;
            pipeline::write_fusion(&out_dir, &out)?;
            let uncovered = out.coverage.iter().filter(|c| !**c).count();
            println!("fused {n} views into {}x{}x{}, {uncovered} texels uncovered", out.res, out.res, out.channels);
        }
        Command::Anchor { mesh, uvmap, out } => {
            let mesh = load_obj(&mesh)?;
            let attrs = pipeline::uv_attributes_from_tensor(&load_uvt(&uvmap)?, &uvmap)?;
            let set = pipeline::anchor(&mesh, mesh.vertices(), &attrs)?;
            save_splats(&out, &set)?;
            println!("anchored {} splats", set.len());
        }
        Command::Render { splats, camera, out } => {
            let set = load_splats(&splats)?;
            let camera = load_camera(&camera)?;
            let img = pipeline::render(&set, &camera)?;
            image::save_rgba(&out, &img)?;
        }
        Command::Gradcheck { suite, seed } => {
            let checks = run_suite(suite, seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{c}");
                ok &= c.passed();
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Pipeline { spec, out_dir, seed } => {
            let spec = PipelineSpec::load(&spec)?;
            let report = pipeline::run_pipeline(&spec, seed, &out_dir)?;
            println!(
                "loss {:.6} -> {:.6}, {} splats, {} uncovered texels",
                report.initial_loss, report.final_loss, report.splats, report.uncovered_texels
            );
            for f in &report.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn deform(
    mesh: &Path,
    labels: &Path,
    views: &Path,
    landmarks: &Path,
    config: &Path,
    out: &Path,
    trace: &Path,
    camera_space: bool,
) -> Result<()> {
    let obj = load_obj(mesh)?;
    let sem = load_labels(labels, obj.num_vertices())?;
    let template = obj.with_semantics(sem.labels.clone(), sem.mirror.clone(), sem.weights.clone())?;
    let kv = KeyValues::load(config)?;
    kv.only(&DEFORM_KEYS, config)?;
    let mut cfg = deform_config_from(&kv, config)?;
    cfg.camera_space_targets |= camera_space;
    // Region weights in the config replace the sidecar's per-vertex weights.
    let overrides = ["w_face", "w_hair", "w_boundary", "w_other"].iter().any(|k| kv.contains(k));
    let weights = if overrides {
        cfg.region_weights.weights_for(template.labels())
    } else {
        sem.weights
    };
    let manifest = ViewManifest::load(views)?;
    let mut cameras = Vec::new();
    let mut normals = Vec::new();
    for k in 0..manifest.views.len() {
        cameras.push(manifest.camera(k)?);
        normals.push(manifest.normals(k)?);
    }
    let lm = load_landmarks(landmarks)?;
    let (positions, result) = pipeline::deform_mesh(&template, &cameras, &normals, &lm, &cfg, &weights)?;
    save_obj(out, &template, &positions)?;
    write_text(trace, &pipeline::trace_csv(&result.trace))?;
    if let (Some(a), Some(b)) = (result.trace.first(), result.trace.last()) {
        println!("loss {:.6} -> {:.6} over {} iterations", a.total, b.total, b.iter);
    }
    Ok(())
}
