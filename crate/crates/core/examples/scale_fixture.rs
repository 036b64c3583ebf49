//! Runs the 5,000-vertex / 86-feature fixture and prints per-iteration stage timings.
//!
//! Usage: `scale_fixture [alpha] [max_iterations]`

use texdeform::{fixtures, optimize, ImageInfo, SolverConfig};

fn main() -> texdeform::Result<()> {
    let (mesh, corr) = fixtures::lion_scale_fixture();
    let image = ImageInfo::new(corr.width() as u32, corr.height() as u32)?;
    let alpha = std::env::args().nth(1).map_or(0.5, |a| a.parse().expect("alpha"));
    let cfg = SolverConfig {
        alpha,
        max_iterations: std::env::args().nth(2).map_or(20, |a| a.parse().expect("iterations")),
        ..Default::default()
    };
    let result = optimize::run(&mesh, &image, &corr, &cfg)?;
    println!("iter  energy        geodesics  global  deform  local   energy");
    for r in &result.history {
        let t = r.timings;
        println!(
            "{:>4}  {:<12.6e}  {:>9.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  anchor {}",
            r.iteration, r.energy.total, t.geodesics, t.global_camera, t.deform, t.local_cameras, t.energy, r.global_vertex
        );
    }
    println!(
        "{:?} after {} iterations, {:.3} s total",
        result.stop_reason, result.iterations, result.timings.total_seconds
    );
    Ok(())
}
