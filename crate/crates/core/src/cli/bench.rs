//! Timing of erosion/dilation chains over a configuration sweep.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;

use super::EngineArgs;
use crate::error::{Error, Result};
use crate::image::{DynImage, ElemType, Image, Pixel};
use crate::io;
use crate::kernel::{KernelKind, LaneConfig};
use crate::pipeline::{Chain, PinningMode, Pipeline, PipelineConfig};
use crate::synth::random_image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BenchOp {
    Erode,
    Dilate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

/// Lane count of a bench run: a fixed width, or one register of the
/// element type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaneChoice {
    Max,
    Fixed(LaneConfig),
}

impl LaneChoice {
    pub fn resolve(self, elem: ElemType) -> LaneConfig {
        match self {
            LaneChoice::Fixed(l) => l,
            LaneChoice::Max => LaneConfig::new(32 / elem.size_bytes()).expect("power of two"),
        }
    }
}

impl FromStr for LaneChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "max" => Ok(LaneChoice::Max),
            n => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("lanes must be a number or `max` (got {s:?})")))?;
                LaneConfig::new(n).map(LaneChoice::Fixed)
            }
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Stage kind of the chain
    #[arg(long, value_enum, default_value = "erode")]
    pub op: BenchOp,

    /// Chain lengths
    #[arg(long, value_delimiter = ',', default_value = "512")]
    pub chain: Vec<usize>,

    /// Thread counts to sweep (default: --threads)
    #[arg(long, value_delimiter = ',')]
    pub sweep_threads: Vec<usize>,

    /// Lane counts to sweep, numbers or `max` (default: --lanes, else max)
    #[arg(long, value_delimiter = ',')]
    pub sweep_lanes: Vec<LaneChoice>,

    #[arg(long, value_delimiter = ',', default_value = "u8")]
    pub dtype: Vec<ElemType>,

    #[arg(long, value_delimiter = ',', default_value = "1024")]
    pub width: Vec<usize>,

    #[arg(long, value_delimiter = ',', default_value = "1024")]
    pub height: Vec<usize>,

    /// Benchmark this image instead of synthetic noise
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    pub warmup: usize,

    #[arg(long, default_value_t = 5)]
    pub reps: usize,

    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,

    /// Write the report here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BenchArgs {
    pub fn into_config(self, engine: &EngineArgs) -> Result<BenchConfig> {
        let threads = if self.sweep_threads.is_empty() {
            vec![engine.threads()?]
        } else {
            self.sweep_threads
        };
        let lanes = if !self.sweep_lanes.is_empty() {
            self.sweep_lanes
        } else if let Some(l) = engine.lanes()? {
            vec![LaneChoice::Fixed(l)]
        } else {
            vec![LaneChoice::Max]
        };
        let input = self.input.map(|p| io::load(p).map(|(img, _)| img)).transpose()?;
        let config = BenchConfig {
            op: self.op,
            chains: self.chain,
            threads,
            lanes,
            dtypes: self.dtype,
            widths: self.width,
            heights: self.height,
            input,
            pinning: engine.pin.clone(),
            warmup: self.warmup,
            reps: self.reps,
            format: self.format,
            out: self.out,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub op: BenchOp,
    pub chains: Vec<usize>,
    pub threads: Vec<usize>,
    pub lanes: Vec<LaneChoice>,
    pub dtypes: Vec<ElemType>,
    pub widths: Vec<usize>,
    pub heights: Vec<usize>,
    /// Replaces the synthetic image; widths and heights are then ignored.
    pub input: Option<DynImage>,
    pub pinning: PinningMode,
    pub warmup: usize,
    pub reps: usize,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            op: BenchOp::Erode,
            chains: vec![512],
            threads: vec![1],
            lanes: vec![LaneChoice::Max],
            dtypes: vec![ElemType::U8],
            widths: vec![1024],
            heights: vec![1024],
            input: None,
            pinning: PinningMode::Auto,
            warmup: 1,
            reps: 5,
            format: ReportFormat::Text,
            out: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.reps == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.chains.is_empty() || self.chains.contains(&0) {
            return bad("chain lengths must be at least 1");
        }
        if self.threads.is_empty() || self.threads.contains(&0) {
            return bad("thread counts must be at least 1");
        }
        if self.input.is_none() && (self.widths.contains(&0) || self.heights.contains(&0)) {
            return bad("image dimensions must be at least 1");
        }
        if self.lanes.is_empty() || self.dtypes.is_empty() || self.widths.is_empty() || self.heights.is_empty() {
            return bad("every sweep axis needs at least one value");
        }
        Ok(())
    }
}

/// One measured configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub command: String,
    pub op: BenchOp,
    pub width: usize,
    pub height: usize,
    pub dtype: ElemType,
    pub threads: usize,
    pub lanes: usize,
    pub pinning: String,
    pub chain: usize,
    pub reps: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// `max_ms - min_ms`.
    pub spread_ms: f64,
    /// Megapixels times stages per second at the median time.
    pub mpx_stages_per_s: f64,
    /// Median of the smallest swept thread count over this median.
    pub speedup: Option<f64>,
    /// Median of the one-lane run over this median.
    pub lane_speedup: Option<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn time_chain<T: Pixel>(p: &Pipeline, f: &Image<T>, kind: KernelKind, chain: usize, warmup: usize, reps: usize) -> Result<Vec<f64>> {
    let mut times = Vec::with_capacity(reps);
    for i in 0..warmup + reps {
        let mut g = f.clone();
        let start = Instant::now();
        p.run_chain(Chain::repeat(kind, chain), &mut g)?;
        let secs = start.elapsed().as_secs_f64();
        if i >= warmup {
            times.push(secs);
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(times)
}

struct Pools {
    pinning: PinningMode,
    pools: HashMap<(usize, usize), Pipeline>,
}

impl Pools {
    fn get(&mut self, threads: usize, lanes: LaneConfig) -> Result<&Pipeline> {
        let key = (threads, lanes.get());
        if !self.pools.contains_key(&key) {
            let p = Pipeline::new(
                PipelineConfig::new(threads)
                    .pinning(self.pinning.clone())
                    .lanes(Some(lanes)),
            )?;
            self.pools.insert(key, p);
        }
        Ok(&self.pools[&key])
    }
}

fn synthetic(elem: ElemType, w: usize, h: usize) -> DynImage {
    match elem {
        ElemType::U8 => random_image::<u8>(w, h, 42).into(),
        ElemType::U16 => random_image::<u16>(w, h, 42).into(),
        ElemType::F32 => random_image::<f32>(w, h, 42).into(),
        ElemType::F64 => random_image::<f64>(w, h, 42).into(),
    }
}

/// Run every configuration of the sweep.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let kind = match config.op {
        BenchOp::Erode => KernelKind::Erode3x3,
        BenchOp::Dilate => KernelKind::Dilate3x3,
    };
    let mut pools = Pools {
        pinning: config.pinning.clone(),
        pools: HashMap::new(),
    };
    let dims: Vec<(usize, usize)> = match &config.input {
        Some(img) => vec![img.dims()],
        None => config
            .widths
            .iter()
            .flat_map(|&w| config.heights.iter().map(move |&h| (w, h)))
            .collect(),
    };
    let min_threads = *config.threads.iter().min().expect("validated");

    let mut rows = Vec::new();
    for &dtype in &config.dtypes {
        for &(w, h) in &dims {
            let img = match &config.input {
                Some(img) if img.elem() == dtype => img.clone(),
                Some(img) => img.convert(dtype)?,
                None => synthetic(dtype, w, h),
            };
            for &chain in &config.chains {
                let group_start = rows.len();
                for &choice in &config.lanes {
                    let lanes = choice.resolve(dtype);
                    for &threads in &config.threads {
                        let p = pools.get(threads, lanes)?;
                        let times = crate::with_dyn_image!(&img, f => {
                            time_chain(p, f, kind, chain, config.warmup, config.reps)?
                        });
                        let med = median(&times);
                        rows.push(BenchRow {
                            command: "bench".into(),
                            op: config.op,
                            width: w,
                            height: h,
                            dtype,
                            threads,
                            lanes: lanes.get(),
                            pinning: config.pinning.to_string(),
                            chain,
                            reps: config.reps,
                            median_ms: med * 1e3,
                            min_ms: times[0] * 1e3,
                            max_ms: times[times.len() - 1] * 1e3,
                            spread_ms: (times[times.len() - 1] - times[0]) * 1e3,
                            mpx_stages_per_s: (w * h * chain) as f64 / 1e6 / med,
                            speedup: None,
                            lane_speedup: None,
                        });
                    }
                }
                let group: Vec<BenchRow> = rows[group_start..].to_vec();
                for row in &mut rows[group_start..] {
                    row.speedup = group
                        .iter()
                        .find(|r| r.threads == min_threads && r.lanes == row.lanes)
                        .map(|b| b.median_ms / row.median_ms);
                    row.lane_speedup = group
                        .iter()
                        .find(|r| r.lanes == 1 && r.threads == row.threads)
                        .map(|b| b.median_ms / row.median_ms);
                }
            }
        }
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

pub fn render(rows: &[BenchRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(rows)
            .map(|s| s + "\n")
            .map_err(|e| Error::Io(e.into())),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        ReportFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<6} {:>5} {:>6} {:>4} {:>3} {:>3} {:>6} {:>6} {:>10} {:>9} {:>12} {:>7} {:>7}",
                "op", "width", "height", "type", "T", "L", "pin", "chain", "median_ms", "spread", "MPx*st/s", "speedup", "lanes_x"
            );
            for r in rows {
                let op = match r.op {
                    BenchOp::Erode => "erode",
                    BenchOp::Dilate => "dilate",
                };
                let _ = writeln!(
                    s,
                    "{:<6} {:>5} {:>6} {:>4} {:>3} {:>3} {:>6} {:>6} {:>10.3} {:>9.3} {:>12.1} {:>7} {:>7}",
                    op,
                    r.width,
                    r.height,
                    r.dtype.to_string(),
                    r.threads,
                    r.lanes,
                    r.pinning,
                    r.chain,
                    r.median_ms,
                    r.spread_ms,
                    r.mpx_stages_per_s,
                    fmt_opt(r.speedup),
                    fmt_opt(r.lane_speedup)
                );
            }
            Ok(s)
        }
    }
}

pub(crate) fn emit(config: &BenchConfig, rows: &[BenchRow]) -> Result<()> {
    let text = render(rows, config.format)?;
    match &config.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
