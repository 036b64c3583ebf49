use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use texdeform::formats::{load_correspondences, save_result};
use texdeform::geodesic::multi_source_geodesics;
use texdeform::obj::load_obj;
use texdeform::{DetailMode, ImageInfo, LaplacianScheme, Report, SolverConfig, StopReason};

#[derive(Debug, Parser)]
#[command(name = "texdeform", version, about = "Texture a mesh from one photo and deform it to match")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the alternating optimization and write mesh.obj, mesh.mtl and report.json.
    Run(RunArgs),
    /// Compute geodesic distances from a set of source vertices and write them as CSV.
    Geodesics(GeodesicArgs),
    /// Serve the picker API for one mesh and image.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub corr: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long = "max-iters", default_value_t = 20)]
    pub max_iters: usize,
    #[arg(long, default_value = "cotangent")]
    pub laplacian: LaplacianScheme,
    #[arg(long, default_value = "lri")]
    pub mode: DetailMode,
}

impl RunArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            beta: self.beta,
            eps: self.eps,
            tol: self.tol,
            max_iterations: self.max_iters,
            laplacian: self.laplacian,
            mode: self.mode,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Comma-separated vertex ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sources: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
}

/// Exit status of a finished `run`.
pub fn exit_code(reason: StopReason) -> u8 {
    match reason {
        StopReason::Converged => 0,
        StopReason::MaxIterations => 2,
    }
}

pub fn cmd_run(args: &RunArgs) -> texdeform::Result<StopReason> {
    let mesh = load_obj(&args.mesh)?;
    let image = ImageInfo::probe(&args.image)?;
    let corr = load_correspondences(&args.corr)?;
    let cfg = args.config();
    let result = texdeform::run(&mesh, &image, &corr, &cfg)?;
    let saved = save_result(&result, &cfg, &image, &args.out)?;
    let report = Report::new(&result, &cfg);
    println!(
        "{:?} after {} iterations: E = {:.6e} (detail {:.6e}, projection {:.6e}), {:.3} s",
        result.stop_reason,
        result.iterations,
        report.energy.total,
        report.energy.detail,
        report.energy.projection,
        result.timings.total_seconds
    );
    if !result.out_of_image.is_empty() {
        println!("{} vertices map outside the image", result.out_of_image.len());
    }
    println!("wrote {} and {}", saved.mesh.display(), saved.report.display());
    Ok(result.stop_reason)
}

pub fn cmd_geodesics(args: &GeodesicArgs) -> texdeform::Result<()> {
    let mesh = load_obj(&args.mesh)?;
    let start = Instant::now();
    let field = multi_source_geodesics(&mesh, &args.sources)?;
    let secs = start.elapsed().as_secs_f64();
    std::fs::write(&args.out, field.to_csv()).map_err(|e| texdeform::Error::io(&args.out, e))?;
    println!(
        "{} sources x {} vertices in {secs:.4} s, wrote {}",
        field.source_count(),
        field.vertex_count(),
        args.out.display()
    );
    Ok(())
}
