//! The `geomorph` command line.

pub mod bench;
mod ops;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::image::ElemType;
use crate::io;
use crate::kernel::LaneConfig;
use crate::pipeline::{PinningMode, Pipeline, PipelineConfig};

pub use bench::{run_bench, BenchConfig, BenchRow, LaneChoice, ReportFormat};
pub use ops::{apply, Applied, OpOutput, Operator};

#[derive(Parser, Debug)]
#[command(name = "geomorph", version, about = "Pipelined 3x3 morphology on PGM and GMS1 images")]
pub struct Cli {
    #[command(flatten)]
    pub engine: EngineArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    /// Worker threads (default: available parallelism)
    #[arg(long, short = 't', env = "GEOMORPH_THREADS", global = true)]
    pub threads: Option<usize>,

    /// Thread pinning: auto, none or a CPU list such as 0,2,4-7
    #[arg(long, env = "GEOMORPH_PIN", default_value = "auto", global = true)]
    pub pin: PinningMode,

    /// Lanes per vector step (1 forces the scalar path)
    #[arg(long, global = true)]
    pub lanes: Option<usize>,
}

impl EngineArgs {
    pub fn threads(&self) -> Result<usize> {
        match self.threads {
            Some(0) => Err(Error::InvalidParameter("thread count must be at least 1".into())),
            Some(t) => Ok(t),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    pub fn lanes(&self) -> Result<Option<LaneConfig>> {
        self.lanes.map(LaneConfig::new).transpose()
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        Pipeline::new(
            PipelineConfig::new(self.threads()?)
                .pinning(self.pin.clone())
                .lanes(self.lanes()?),
        )
    }
}

#[derive(Args, Debug, Clone)]
pub struct ImageArgs {
    pub input: PathBuf,
    pub output: PathBuf,

    /// Convert the input to this element type first
    #[arg(long)]
    pub elem: Option<ElemType>,

    /// Check the result against the naive reference implementation
    #[arg(long, hide = true)]
    pub oracle: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Erosion by the (2s+1)x(2s+1) square
    Erode {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long, short)]
        size: usize,
    },
    /// Dilation by the (2s+1)x(2s+1) square
    Dilate {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long, short)]
        size: usize,
    },
    /// Suppress maxima of dynamic at most h
    Hmax {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long)]
        h: f64,
    },
    /// Image minus its h-maxima
    Dome {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long)]
        h: f64,
    },
    /// Fill minima not connected to the border
    Hfill {
        #[command(flatten)]
        io: ImageArgs,
    },
    /// Remove structures touching the border
    Raobj {
        #[command(flatten)]
        io: ImageArgs,
    },
    /// Opening by reconstruction
    Openrec {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long, short)]
        size: usize,
    },
    /// Quasi-distance transform (writes the distance as 16-bit)
    Qdt {
        #[command(flatten)]
        io: ImageArgs,
    },
    /// Granulometric sums and pattern spectrum as CSV (s,G,PS)
    Granulometry {
        input: PathBuf,
        /// CSV destination; standard output when omitted
        output: Option<PathBuf>,
        #[arg(long)]
        max_size: usize,
        #[arg(long)]
        elem: Option<ElemType>,
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Alternating sequential filter
    Asf {
        #[command(flatten)]
        io: ImageArgs,
        #[arg(long)]
        max_size: usize,
    },
    /// Throughput of filter chains over a parameter sweep
    Bench(bench::BenchArgs),
}

/// Parse `args` (program name first) and run.
pub fn run_from<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(args) => {
            let config = args.into_config(&cli.engine)?;
            let rows = run_bench(&config)?;
            bench::emit(&config, &rows)
        }
        Command::Granulometry {
            input,
            output,
            max_size,
            elem,
            oracle,
        } => {
            let (img, _) = load_as(&input, elem)?;
            let p = cli.engine.pipeline()?;
            let start = Instant::now();
            let out = ops::apply(&p, &Operator::Granulometry { max_size }, &img, oracle)?;
            let elapsed = start.elapsed();
            let OpOutput::Table(csv) = &out.output else {
                unreachable!("granulometry yields a table")
            };
            let summary = summary(out.iterations, out.converged, elapsed.as_secs_f64());
            match output {
                Some(path) => {
                    std::fs::write(path, csv)?;
                    println!("{summary}");
                }
                None => {
                    print!("{csv}");
                    eprintln!("{summary}");
                }
            }
            Ok(())
        }
        cmd => {
            let (io_args, op) = image_command(cmd);
            let (img, format) = load_as(&io_args.input, io_args.elem)?;
            let p = cli.engine.pipeline()?;
            let start = Instant::now();
            let out = ops::apply(&p, &op, &img, io_args.oracle)?;
            let elapsed = start.elapsed();
            let OpOutput::Image(result) = &out.output else {
                unreachable!("image operators yield images")
            };
            io::store(result, format, &io_args.output)?;
            println!("{}", summary(out.iterations, out.converged, elapsed.as_secs_f64()));
            Ok(())
        }
    }
}

fn image_command(cmd: Command) -> (ImageArgs, Operator) {
    match cmd {
        Command::Erode { io, size } => (io, Operator::Erode { size }),
        Command::Dilate { io, size } => (io, Operator::Dilate { size }),
        Command::Hmax { io, h } => (io, Operator::Hmax { h }),
        Command::Dome { io, h } => (io, Operator::Dome { h }),
        Command::Hfill { io } => (io, Operator::Hfill),
        Command::Raobj { io } => (io, Operator::Raobj),
        Command::Openrec { io, size } => (io, Operator::OpenRec { size }),
        Command::Qdt { io } => (io, Operator::Qdt),
        Command::Asf { io, max_size } => (io, Operator::Asf { max_size }),
        Command::Granulometry { .. } | Command::Bench(_) => unreachable!("handled by run"),
    }
}

fn load_as(path: &PathBuf, elem: Option<ElemType>) -> Result<(crate::DynImage, io::Format)> {
    let (img, format) = io::load(path)?;
    match elem {
        Some(e) if e != img.elem() => Ok((img.convert(e)?, format)),
        _ => Ok((img, format)),
    }
}

fn summary(iterations: usize, converged: bool, secs: f64) -> String {
    format!("iterations={iterations} converged={converged} time_ms={:.3}", secs * 1e3)
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geomorph: {e}");
            1
        }
    }
}
