//! `dcanvas`: distances, flows, benchmarks and clustering from the command line.
//!
//! Results go to stdout as JSON; progress and timings go to stderr.
//! Exit codes: 1 usage or size errors, 2 I/O errors, 3 solver errors.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dcanvas::classify::{run_omniglot, run_tiny_data};
use dcanvas::cluster::{ClusterOptions, ClusterReport, Clusterer};
use dcanvas::flow::{render_flow, write_frames, write_gif};
use dcanvas::io::{find_idx_pair, load_idx_dir, load_png, load_png_dir, save_png, LabeledDataset, PngOptions, Split};
use dcanvas::optimizer::hard_color_distortion;
use dcanvas::{solve_path, DigitalImage, SolveConfig, View};

#[derive(Parser)]
#[command(name = "dcanvas", version, about = "Deformable-canvas image distances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance from image B, deformed, to image A.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        png: PngArgs,
        /// Write per-stage diagnostics as JSON here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Render the transformation flow of B toward A as numbered PNG frames.
    Flow {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record every `stride`-th descent step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Also assemble `flow.gif`.
        #[arg(long)]
        gif: bool,
        #[arg(long, default_value_t = 60)]
        gif_delay_ms: u32,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        png: PngArgs,
    },
    /// Tiny-data 1-NN benchmark on an IDX dataset folder.
    Benchmark {
        dataset: Dataset,
        /// Folder with the train and test IDX files (plain or gzipped).
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_max: usize,
        /// Use only the first K test images.
        #[arg(long)]
        test_limit: Option<usize>,
        /// Write the distance matrix (rows = test, columns = train) as CSV.
        #[arg(long)]
        matrix_csv: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// One-shot 20-way protocol over Omniglot runs.
    Omniglot {
        /// Folder holding run01 ... run20.
        #[arg(long)]
        runs_dir: PathBuf,
        /// Runs to evaluate, e.g. `1..20` or `3`.
        #[arg(long, default_value = "1..20", value_parser = parse_range)]
        runs: RangeInclusive<usize>,
        /// Side length the images are averaged down to.
        #[arg(long, default_value_t = 28)]
        size: usize,
        /// Keep dark-on-light polarity.
        #[arg(long)]
        no_invert: bool,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Multi-flow clustering with archetypes.
    Cluster {
        /// A PNG folder, or a folder with IDX files (training split is used).
        #[arg(long)]
        input: PathBuf,
        /// Number of clusters, or a range such as `1..5` for an elbow curve.
        #[arg(long, value_parser = parse_range)]
        k: RangeInclusive<usize>,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep only images with this class name.
        #[arg(long)]
        label: Option<String>,
        /// Keep only the first N images (after label filtering).
        #[arg(long)]
        limit: Option<usize>,
        /// Fit a contrast transform per member.
        #[arg(long)]
        fit_color: bool,
        /// Folder for archetype PNGs and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        png: PngArgs,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Print the default configuration for a canvas size as TOML.
    Config {
        #[arg(long, default_value_t = 28)]
        size: usize,
        #[arg(long, value_enum, default_value_t = Mode::Dc)]
        mode: Mode,
        /// Print the full path instead of the default.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    Mnist,
    Emnist,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Dc,
    Dv,
}

impl From<Mode> for View {
    fn from(m: Mode) -> View {
        match m {
            Mode::Dc => View::Dc,
            Mode::Dv => View::Dv,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Solution-path configuration (TOML). Defaults to the built-in path for the image size.
    #[arg(long = "config", alias = "path")]
    config: Option<PathBuf>,
    /// Overrides the mode of the configuration.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Use the full path (finest stage at one anchor per pixel) instead of the default.
    #[arg(long, conflicts_with = "config")]
    full: bool,
}

impl SolveArgs {
    fn resolve(&self, size: usize) -> anyhow::Result<SolveConfig> {
        let mut config = match &self.config {
            Some(p) => SolveConfig::load(p)?,
            None => {
                let mode = self.mode.map_or(View::Dc, View::from);
                if self.full {
                    SolveConfig::full_path(size, mode)
                } else {
                    SolveConfig::for_size(size, mode)
                }
            }
        };
        if let Some(m) = self.mode {
            config.mode = m.into();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct PngArgs {
    /// Treat dark pixels as ink.
    #[arg(long)]
    invert: bool,
    /// Area-average images to this side length first.
    #[arg(long)]
    resize: Option<usize>,
}

impl PngArgs {
    fn options(&self) -> PngOptions {
        PngOptions {
            invert: self.invert,
            resize: self.resize.map(|s| (s, s)),
        }
    }
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let r = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.trim_start_matches('='))?,
        None => {
            let v = num(s)?;
            v..=v
        }
    };
    if r.is_empty() {
        return Err(format!("empty range {s}"));
    }
    Ok(r)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dcanvas::Error>() {
            return if e.is_solver() {
                3
            } else if e.is_io() {
                2
            } else {
                1
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("JSON value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn square_size(img: &DigitalImage) -> usize {
    img.rows().max(img.cols())
}

fn load_pair(a: &Path, b: &Path, png: &PngArgs) -> anyhow::Result<(DigitalImage, DigitalImage)> {
    let a = load_png(a, png.options())?;
    let b = load_png(b, png.options())?;
    if a.dims() != b.dims() {
        return Err(dcanvas::Error::SizeMismatch {
            expected: a.dims(),
            found: b.dims(),
        }
        .into());
    }
    Ok((a, b))
}

fn progress_printer(total: usize, label: &'static str) -> impl Fn(usize) + Sync {
    let start = Instant::now();
    let every = (total / 100).max(1);
    move |done| {
        if done % every == 0 || done == total {
            eprintln!("{label}: {done}/{total} solves, {:.1}s", start.elapsed().as_secs_f64());
        }
    }
}

fn run(command: Command) -> anyhow::Result<Value> {
    match command {
        Command::Distance {
            a,
            b,
            solve,
            png,
            diagnostics,
        } => {
            let (a, b) = load_pair(&a, &b, &png)?;
            let config = solve.resolve(square_size(&a))?;
            let start = Instant::now();
            let r = solve_path(&a, &b, &config)?;
            eprintln!("solved in {:.3}s", start.elapsed().as_secs_f64());
            if let Some(path) = diagnostics {
                let d = json!({ "stages": r.stages, "anchors": r.anchors, "affine": r.affine });
                std::fs::write(&path, serde_json::to_string_pretty(&d)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let mut v = json!({
                "mode": r.mode,
                "dc_value": r.dc_value,
                "dv_value": r.dv_value,
                "distance": r.distance(),
                "affine": r.affine,
                "iterations": r.iterations,
            });
            if config.symmetric {
                let back = solve_path(&b, &a, &config)?.distance();
                v["reverse_distance"] = json!(back);
                v["symmetric_distance"] = json!(r.distance() + back);
            }
            Ok(v)
        }
        Command::Flow {
            a,
            b,
            out,
            stride,
            gif,
            gif_delay_ms,
            solve,
            png,
        } => {
            let (a, b) = load_pair(&a, &b, &png)?;
            let mut config = solve.resolve(square_size(&a))?;
            config.record_flow = true;
            config.flow_stride = stride;
            let r = solve_path(&a, &b, &config)?;
            let cutoff = config.stages.last().map_or(1.0, |s| s.cutoff);
            let frames = render_flow(&b, &r.flow, cutoff)?;
            let paths = write_frames(&frames, &out)?;
            if gif {
                write_gif(&frames, &out.join("flow.gif"), gif_delay_ms)?;
            }
            let final_dc = hard_color_distortion(&a, &b, r.flow.last().expect("nonempty flow"), cutoff, config.nonnegative_contrast)?.0;
            Ok(json!({
                "mode": r.mode,
                "dc_value": r.dc_value,
                "dv_value": r.dv_value,
                "iterations": r.iterations,
                "frames": paths.len(),
                "final_frame_dc": final_dc,
                "frame_files": paths.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
            }))
        }
        Command::Benchmark {
            dataset,
            data_dir,
            n_max,
            test_limit,
            matrix_csv,
            solve,
            workers,
        } => {
            let train = load_idx_dir(&data_dir, Split::Train)?;
            let test = load_idx_dir(&data_dir, Split::Test)?;
            let size = train.uniform_dims()?.map_or(28, |(r, c)| r.max(c));
            let config = solve.resolve(size)?;
            let classes = train.class_counts().iter().filter(|&&c| c > 0).count();
            let total = test_limit.unwrap_or(test.len()).min(test.len()) * n_max * classes;
            let progress = progress_printer(total, "benchmark");
            let report = run_tiny_data(&train, &test, n_max, test_limit, &config, workers.workers, Some(&progress))?;
            eprintln!("benchmark finished in {:.1}s", report.elapsed.as_secs_f64());
            if let (Some(path), Some(m)) = (matrix_csv, &report.matrix) {
                std::fs::write(&path, m.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            let mut v = serde_json::to_value(&report)?;
            v["dataset"] = json!(match dataset {
                Dataset::Mnist => "mnist",
                Dataset::Emnist => "emnist",
            });
            v["config"] = serde_json::to_value(&config)?;
            Ok(v)
        }
        Command::Omniglot {
            runs_dir,
            runs,
            size,
            no_invert,
            solve,
            workers,
        } => {
            let config = solve.resolve(size)?;
            let options = PngOptions {
                invert: !no_invert,
                resize: Some((size, size)),
            };
            let total = (runs.end() - runs.start() + 1) * 400;
            let progress = progress_printer(total, "omniglot");
            let report = run_omniglot(&runs_dir, runs, options, &config, workers.workers, Some(&progress))?;
            eprintln!("omniglot finished in {:.1}s", report.elapsed.as_secs_f64());
            let mut v = serde_json::to_value(&report)?;
            v["config"] = serde_json::to_value(&config)?;
            Ok(v)
        }
        Command::Cluster {
            input,
            k,
            restarts,
            seed,
            label,
            limit,
            fit_color,
            out,
            solve,
            png,
            workers,
        } => {
            let data = load_cluster_input(&input, &png)?;
            let indices: Vec<usize> = (0..data.len())
                .filter(|&i| label.as_deref().is_none_or(|l| data.class_names[data.labels[i]] == l))
                .take(limit.unwrap_or(usize::MAX))
                .collect();
            if indices.is_empty() {
                bail!(dcanvas::Error::InvalidInput("no images selected for clustering".into()));
            }
            let data = data.subset(&indices);
            let size = data.uniform_dims()?.map_or(28, |(r, c)| r.max(c));
            let config = solve.resolve(size)?;
            let options = ClusterOptions {
                k: *k.start(),
                restarts,
                seed,
                fit_color,
                workers: workers.workers,
            };
            let start = Instant::now();
            let clusterer = Clusterer::new(&data.images, &config, fit_color)?;
            let elbow = clusterer.elbow_curve(k, &options)?;
            eprintln!("clustering finished in {:.1}s", start.elapsed().as_secs_f64());
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for r in &elbow.reports {
                    write_archetypes(r, dir)?;
                }
            }
            let v = json!({
                "source_indices": indices,
                "ks": elbow.ks,
                "wcsd": elbow.wcsd,
                "reports": elbow.reports,
                "config": config,
                "seed": seed,
                "restarts": restarts,
            });
            if let Some(dir) = &out {
                let path = dir.join("report.json");
                std::fs::write(&path, serde_json::to_string_pretty(&v)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(v)
        }
        Command::Config { size, mode, full } => {
            if size < 2 {
                bail!(dcanvas::Error::InvalidInput("size must be at least 2".into()));
            }
            let config = if full {
                SolveConfig::full_path(size, mode.into())
            } else {
                SolveConfig::for_size(size, mode.into())
            };
            print!("{}", config.to_toml_string()?);
            Ok(Value::Null)
        }
    }
}

fn load_cluster_input(input: &Path, png: &PngArgs) -> anyhow::Result<LabeledDataset> {
    if input.is_dir() && find_idx_pair(input, Split::Train).is_ok() {
        return Ok(load_idx_dir(input, Split::Train)?);
    }
    if !input.is_dir() {
        return Err(anyhow!(dcanvas::Error::Io {
            path: input.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a folder"),
        }));
    }
    Ok(load_png_dir(input, png.options())?)
}

fn write_archetypes(report: &ClusterReport, dir: &Path) -> anyhow::Result<()> {
    for (k, img) in report.archetypes.iter().enumerate() {
        save_png(img, &dir.join(format!("k{}_archetype_{k}.png", report.k)))?;
    }
    Ok(())
}
