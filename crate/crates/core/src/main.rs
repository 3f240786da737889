//! Experiment CLI: run one configuration or a sweep file and emit the
//! result table as CSV.

use clap::Parser;
use eddy_ieti::experiment::{
    apply_spec, parse_mode, parse_ordering, parse_patches, parse_sweep, run_sweep, summarize,
    write_csv, ExperimentConfig,
};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "eddy-ieti",
    about = "Time-domain eddy current convergence experiments on multipatch spline spaces"
)]
struct Args {
    /// Spline degree.
    #[arg(long, default_value_t = 1)]
    deg: usize,

    /// Global element count per direction.
    #[arg(long, default_value_t = 2)]
    divs: usize,

    /// Number of implicit Euler steps.
    #[arg(long, default_value_t = 8)]
    steps: usize,

    /// Patch tiling as PxQxR.
    #[arg(long, default_value = "2x1x1")]
    patches: String,

    /// Relative tolerance of the interface iteration.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    /// Iteration cap of the interface iteration.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,

    /// Solver mode: "ieti" or "monolithic".
    #[arg(long, default_value = "ieti")]
    mode: String,

    /// Spanning tree ordering: "forward" or "reverse".
    #[arg(long, default_value = "forward")]
    tree_order: String,

    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Sweep file (key=value lines with comma lists); overrides the
    /// per-run flags above.
    #[arg(long)]
    sweep: Option<PathBuf>,
}

fn run(args: &Args) -> eddy_ieti::Result<Vec<u8>> {
    let mut xcfg = ExperimentConfig {
        counts: parse_patches(&args.patches)?,
        mode: parse_mode(&args.mode)?,
        ordering: parse_ordering(&args.tree_order)?,
        ..ExperimentConfig::default()
    };
    xcfg.opts.tol = args.tol;
    xcfg.opts.max_iter = args.max_iter;

    let (xcfg, degs, divs, steps) = match &args.sweep {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let spec = parse_sweep(&text)?;
            let cfg = apply_spec(&xcfg, &spec);
            (cfg, spec.degs, spec.divs, spec.steps)
        }
        None => (xcfg, vec![args.deg], vec![args.divs], vec![args.steps]),
    };

    let rows = run_sweep(&xcfg, &degs, &divs, &steps)?;
    // summary goes to stderr so the CSV stream stays clean
    eprint!("{}", summarize(&rows));
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    Ok(buf)
}

fn main() {
    env_logger::init();
    let args = Args::parse();
    match run(&args) {
        Ok(csv) => {
            let res = match &args.out {
                Some(path) => std::fs::write(path, &csv),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&csv)
                }
            };
            if let Err(e) = res {
                eprintln!("error: {e}");
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
