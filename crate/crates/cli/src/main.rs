//! Command-line front end: run the full pipeline, or re-render, mesh and
//! evaluate a finished run from its output directory.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use splatmap_core::config::{DatasetKind, SlamConfig};
use splatmap_core::metrics::evaluate_run;
use splatmap_core::pipeline::{
    load_camera, load_dataset, load_global_map, load_trajectory, mesh_from_map,
    render_map_to_pngs, run_slam,
};
use splatmap_core::tsdf::write_ply;

#[derive(Parser)]
#[command(name = "splatmap", about = "Dense RGBD SLAM with 3D Gaussian sub-maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser)]
struct RunArgs {
    /// Path to a key=value config file; defaults apply if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root; overrides `dataset.path` from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    output: PathBuf,
    /// RNG seed; overrides `run.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Also fuse and export a mesh at the end of the run.
    #[arg(long)]
    mesh: bool,
    /// Evaluate rendering and trajectory quality after the run.
    #[arg(long)]
    eval: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run tracking and mapping over a sequence and write all artifacts.
    Run(RunArgs),
    /// Render the saved global map along the saved trajectory to PNGs.
    Render {
        /// Output directory of a finished run.
        #[arg(long)]
        run_dir: PathBuf,
        /// Where to write the PNGs (defaults to <run_dir>/renders).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fuse the saved global map into a triangle mesh (binary PLY).
    Mesh {
        #[arg(long)]
        run_dir: PathBuf,
        /// Output PLY path (defaults to <run_dir>/mesh.ply).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-run image/trajectory evaluation for a finished run.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        /// Path to the config used for the run (defaults to <run_dir>/config.txt).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(args: &RunArgs) -> Result<SlamConfig> {
    let mut cfg = match &args.config {
        Some(path) => SlamConfig::from_file(path)
            .with_context(|| format!("[config] failed to load {}", path.display()))?,
        None => SlamConfig::default(),
    };
    if let Some(path) = &args.dataset {
        cfg.dataset.path = Some(path.clone());
        if cfg.dataset.kind == DatasetKind::Synthetic {
            // a dataset path implies on-disk data; pick the layout by marker file
            cfg.dataset.kind = if path.join("rgb.txt").exists() {
                DatasetKind::Tum
            } else {
                DatasetKind::Generic
            };
        }
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if args.mesh {
        cfg.run.mesh = true;
    }
    if args.eval {
        cfg.run.eval = true;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let out = run_slam(&cfg, &args.output).context("[run] pipeline failed")?;
            println!("frames tracked: {}", out.poses.len());
            println!("global map: {} gaussians", out.global_map.len());
            println!(
                "sub-maps: {}",
                out.manifest.submap_boundaries.len()
            );
            if let Some(report) = &out.report {
                print!("{}", report.to_table());
            }
            println!("artifacts written to {}", args.output.display());
        }
        Command::Render { run_dir, output } => {
            let gaussians = load_global_map(&run_dir.join("global_map.bin"))
                .context("[render] failed to load global map")?;
            let cam = load_camera(&run_dir.join("camera.txt"))
                .context("[render] failed to load camera")?;
            let traj = load_trajectory(&run_dir.join("trajectory.txt"))
                .context("[render] failed to load trajectory")?;
            let poses: Vec<_> = traj.iter().map(|(_, p)| *p).collect();
            let cfg = SlamConfig::default();
            let out_dir = output.unwrap_or_else(|| run_dir.join("renders"));
            let n = render_map_to_pngs(&gaussians, &poses, &cam, &cfg, &out_dir)
                .context("[render] rendering failed")?;
            println!("wrote {n} images to {}", out_dir.display());
        }
        Command::Mesh { run_dir, output } => {
            let gaussians = load_global_map(&run_dir.join("global_map.bin"))
                .context("[mesh] failed to load global map")?;
            let cam = load_camera(&run_dir.join("camera.txt"))
                .context("[mesh] failed to load camera")?;
            let traj = load_trajectory(&run_dir.join("trajectory.txt"))
                .context("[mesh] failed to load trajectory")?;
            let poses: Vec<_> = traj.iter().map(|(_, p)| *p).collect();
            let cfg = SlamConfig::default();
            let mesh = mesh_from_map(&gaussians, &poses, &cam, &cfg)
                .context("[mesh] fusion failed")?;
            let out_path = output.unwrap_or_else(|| run_dir.join("mesh.ply"));
            write_ply(&out_path, &mesh).context("[mesh] failed to write PLY")?;
            println!(
                "wrote {} vertices / {} triangles to {}",
                mesh.vertices.len(),
                mesh.triangles.len(),
                out_path.display()
            );
        }
        Command::Eval { run_dir, config } => {
            let cfg_path = config.unwrap_or_else(|| run_dir.join("config.txt"));
            let cfg = SlamConfig::from_file(&cfg_path)
                .with_context(|| format!("[eval] failed to load {}", cfg_path.display()))?;
            let gaussians = load_global_map(&run_dir.join("global_map.bin"))
                .context("[eval] failed to load global map")?;
            let cam = load_camera(&run_dir.join("camera.txt"))
                .context("[eval] failed to load camera")?;
            let traj = load_trajectory(&run_dir.join("trajectory.txt"))
                .context("[eval] failed to load trajectory")?;
            let poses: Vec<_> = traj.iter().map(|(_, p)| *p).collect();
            let sequence = load_dataset(&cfg).context("[eval] failed to load dataset")?;
            if sequence.frames.len() != poses.len() {
                anyhow::bail!(
                    "[eval] trajectory has {} poses but dataset has {} frames",
                    poses.len(),
                    sequence.frames.len()
                );
            }
            let report = evaluate_run(
                &gaussians,
                &poses,
                &sequence.frames,
                &cam,
                &cfg.render,
                cfg.run.eval_every,
            )
            .context("[eval] evaluation failed")?;
            print!("{}", report.to_table());
            std::fs::write(run_dir.join("metrics.txt"), report.to_key_values())
                .context("[eval] failed to write metrics")?;
        }
    }
    Ok(())
}
