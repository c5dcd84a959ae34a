use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stgridpool::analysis::{
    norm_stats_with_bins, top_fraction_mask, write_norm_stats_csv, DEFAULT_BINS,
};
use stgridpool::io::{read_tensor, write_atomic, write_tensor, RunConfig, Tensor};
use stgridpool::sweep::{parse_pair, run_sweep, write_sweep_csv, SweepSpec};
use stgridpool::{
    build_schedule, st_gridpool, token_budget, Error, FrameTokens, Result, SaliencyMask,
};

#[derive(Parser)]
#[command(
    name = "stgp",
    version,
    about = "Spatiotemporal visual-token compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a token tensor file and print its token budget
    Pool {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the temporal pyramid schedule as CSV
    Schedule {
        #[arg(long)]
        frames: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the token budget for a tensor shape
    Budget {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Per-region token norm statistics as CSV
    Analyze {
        input: PathBuf,
        /// Saliency mask tensor, (H, W, 1) or (N, H, W, 1) of 0/1 values
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        norm_order: f64,
        /// Fraction of highest-norm tokens to mark in the --mask-out tensor
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// CSV destination (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Run the pipeline over a grid of configurations
    Sweep {
        input: PathBuf,
        /// TOML file with arrays for beta, norm_order, levels, base_length, kernel
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    norm_order: Option<f64>,
    /// Pooling kernel, e.g. 2x2
    #[arg(long)]
    kernel: Option<String>,
    /// Pooling stride, e.g. 2x2
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    base_length: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Frame sampling grid MxN (M columns, N rows)
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    no_ptg: bool,
    #[arg(long)]
    no_nsp: bool,
}

impl ConfigArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let kernel = self.kernel.as_deref().map(parse_pair).transpose()?;
        let stride = self.stride.as_deref().map(parse_pair).transpose()?;
        let grid = self.grid.as_deref().map(parse_pair).transpose()?;
        let flags = RunConfig {
            base_length: self.base_length,
            levels: self.levels,
            grid_m: grid.map(|g| g.0),
            grid_n: grid.map(|g| g.1),
            kernel_h: kernel.map(|k| k.0),
            kernel_w: kernel.map(|k| k.1),
            stride_h: stride.map(|s| s.0),
            stride_w: stride.map(|s| s.1),
            beta: self.beta,
            norm_order: self.norm_order,
            ptg_enabled: self.no_ptg.then_some(false),
            nsp_enabled: self.no_nsp.then_some(false),
        };
        Ok(base.merge(flags))
    }
}

fn csv_to(out: Option<&PathBuf>, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    match out {
        Some(p) => write_atomic(p, &buf),
        None => {
            print!("{}", String::from_utf8_lossy(&buf));
            Ok(())
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn masks_for(mask: Option<Tensor>, n_frames: usize) -> Result<Vec<Option<SaliencyMask>>> {
    match mask {
        None => Ok(vec![None; n_frames]),
        Some(Tensor::Grid(g)) => {
            let m = SaliencyMask::from_grid(&g)?;
            Ok(vec![Some(m); n_frames])
        }
        Some(Tensor::Frames(t)) => {
            if t.n_frames() != n_frames {
                return Err(Error::Shape(format!(
                    "mask has {} frames, input has {n_frames}",
                    t.n_frames()
                )));
            }
            t.frames()
                .map(|g| SaliencyMask::from_grid(&g).map(Some))
                .collect()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pool {
            input,
            output,
            config,
        } => {
            let cfg = config.run_config()?.resolve()?;
            let tensor = read_tensor(&input)?;
            let rank3 = matches!(tensor, Tensor::Grid(_));
            let tokens = tensor.into_frames();
            let report = token_budget(tokens.n_frames(), tokens.height(), tokens.width(), &cfg)?;
            let pooled = st_gridpool(&tokens, &cfg)?;
            let out = if rank3 {
                Tensor::Grid(pooled.frame(0)?)
            } else {
                Tensor::Frames(pooled)
            };
            write_tensor(&output, &out)?;
            json_line(&report)
        }
        Command::Schedule { frames, config } => {
            let cfg = config.run_config()?.resolve()?;
            let schedule = build_schedule(frames, &cfg.ptg)?;
            println!("level,segment,start,span_end,update_index,sample_indices");
            for level in &schedule.levels {
                for (j, s) in level.segments.iter().enumerate() {
                    let samples: Vec<String> =
                        s.sample_indices.iter().map(usize::to_string).collect();
                    println!(
                        "{},{},{},{},{},{}",
                        level.level,
                        j,
                        s.start,
                        s.span_end,
                        s.update_index,
                        samples.join(";")
                    );
                }
            }
            Ok(())
        }
        Command::Budget {
            frames,
            height,
            width,
            config,
        } => {
            let cfg = config.run_config()?.resolve()?;
            json_line(&token_budget(frames, height, width, &cfg)?)
        }
        Command::Analyze {
            input,
            mask,
            norm_order,
            fraction,
            bins,
            out,
            mask_out,
        } => {
            let tensor = read_tensor(&input)?;
            let rank3 = matches!(tensor, Tensor::Grid(_));
            let tokens: FrameTokens = tensor.into_frames();
            let masks = masks_for(mask.map(read_tensor).transpose()?, tokens.n_frames())?;
            let mut stats = Vec::with_capacity(tokens.n_frames());
            let mut top = Vec::new();
            for (i, (frame, m)) in tokens.frames().zip(&masks).enumerate() {
                stats.push((
                    i,
                    norm_stats_with_bins(&frame, m.as_ref(), norm_order, bins)?,
                ));
                if mask_out.is_some() {
                    top.push(top_fraction_mask(&frame, fraction, norm_order)?.to_grid());
                }
            }
            if let Some(path) = &mask_out {
                let t = if rank3 {
                    Tensor::Grid(top.remove(0))
                } else {
                    Tensor::Frames(FrameTokens::from_frames(top)?)
                };
                write_tensor(path, &t)?;
            }
            csv_to(out.as_ref(), |buf| write_norm_stats_csv(buf, &stats))
        }
        Command::Sweep {
            input,
            spec,
            out,
            config,
        } => {
            let base = config.run_config()?.resolve()?;
            let spec = SweepSpec::load(&spec)?;
            let tokens = read_tensor(&input)?.into_frames();
            let configs = spec.expand(&base)?;
            let rows = run_sweep(&tokens, &configs)?;
            csv_to(out.as_ref(), |buf| write_sweep_csv(buf, &rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("STGP_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("stgp: warning: {e}");
                }
            }
            _ => {
                eprintln!("stgp: error: STGP_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stgp: error: {e}");
            ExitCode::FAILURE
        }
    }
}
