//! The `gridsynth` command line.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 budget refusal,
//! 1 internal error.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::datagen::generate_corpus;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_corpus, EvalMode, EvalOptions};
use crate::extrapolation::{complete, extrapolate_with, ExtrapolateOptions, PartialImage};
use crate::grid::GridImage;
use crate::program::{Background, Program};
use crate::synthesis::{greedy_synthesize, oracle_synthesize, SynthesisProblem};
use config::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridsynth", version, about = "Synthesize loop programs describing repeating structure in grid images")]
pub struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; each maps to a config-file key.
#[derive(Debug, Args)]
struct CommonArgs {
    /// Grid size N (cells per side)
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Cell size M (pixels per cell side; default: image side / N)
    #[arg(long, global = true)]
    cell_m: Option<usize>,
    /// Maximum number of loops (for `gen`: loops per generated program)
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Similarity threshold on the sub-image distance
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Weight on agreement over dissimilar pairs
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Smallest number of cells a candidate loop may cover
    #[arg(long, global = true)]
    min_cover: Option<usize>,
    /// Keep adding loops even when no candidate improves the objective
    #[arg(long, global = true)]
    no_early_stop: bool,
    #[arg(long, global = true)]
    hist_bins: Option<usize>,
    #[arg(long, global = true)]
    w_emd: Option<f64>,
    #[arg(long, global = true)]
    w_struct: Option<f64>,
    /// Cells entirely of this color (`r,g,b`, or `none`) carry no structure
    #[arg(long, global = true)]
    ignore_color: Option<String>,
    #[arg(long, global = true)]
    oracle_budget: Option<u128>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Background color `r,g,b` for rendering and generation
    #[arg(long, global = true)]
    background: Option<String>,
    /// `key = value` settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn flags(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("grid_n", self.grid_n.map(|v| v.to_string()));
        put("cell_m", self.cell_m.map(|v| v.to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("eps", self.eps.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("min_cover", self.min_cover.map(|v| v.to_string()));
        put("early_stop", self.no_early_stop.then(|| "false".to_string()));
        put("hist_bins", self.hist_bins.map(|v| v.to_string()));
        put("w_emd", self.w_emd.map(|v| v.to_string()));
        put("w_struct", self.w_struct.map(|v| v.to_string()));
        put("ignore_color", self.ignore_color.clone());
        put("oracle_budget", self.oracle_budget.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("threads", self.threads.map(|v| v.to_string()));
        put("background", self.background.clone());
        out
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a program for a full image
    Synth {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the program rendered over the background color
        #[arg(long)]
        render: bool,
        /// Also write one JSON line per greedy step
        #[arg(long)]
        trace: bool,
    },
    /// Execute a program file into a PNG
    Render {
        program: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Image that cell-reference components are read from (also the background)
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Extend every loop of a program to the whole grid
    Extrapolate {
        program: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        extend_backward: bool,
        /// Also extend loops that ran for a single iteration
        #[arg(long)]
        extend_single: bool,
    },
    /// Complete a partial image from its known cells
    Complete {
        partial: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        extend_backward: bool,
        /// Also extend loops that ran for a single iteration
        #[arg(long)]
        extend_single: bool,
    },
    /// Generate a synthetic corpus
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Fraction of bottom rows to hide in the partial images
        #[arg(long)]
        occlusion: Option<f64>,
        /// Render every loop iteration with the same tile
        #[arg(long)]
        no_noise: bool,
        #[arg(long)]
        tiles_per_label: Option<usize>,
        /// Raise every loop count to the largest that fits
        #[arg(long)]
        axis_maximal: bool,
        /// Tiles from `<dir>/<label>/*.png` instead of procedural glyphs
        #[arg(long)]
        tile_dir: Option<PathBuf>,
        /// Generator spec JSON; other settings override its fields
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Evaluate synthesis or completion over a corpus directory
    Eval {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        mode: EvalMode,
        /// Per-channel byte tolerance for pixel agreement
        #[arg(long)]
        tol: Option<u8>,
        /// Report zero runtimes so the report is reproducible
        #[arg(long)]
        no_timing: bool,
    },
    /// Exhaustive search for small grids, compared against greedy
    Oracle {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => EXIT_BUDGET,
        Error::CellOutOfBounds { .. }
        | Error::Shape(_)
        | Error::InvalidInput(_)
        | Error::Config(_)
        | Error::Resolution(_)
        | Error::Parse { .. }
        | Error::Io { .. }
        | Error::Image { .. }
        | Error::Corpus { .. } => EXIT_INPUT,
    }
}

/// Parse `args`, run, and return the process exit code. `env` looks up
/// environment variables.
pub fn run<I, T>(args: I, env: impl Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli, env) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli, env: impl Fn(&str) -> Option<String>) -> Result<()> {
    let mut flags = cli.common.flags();
    match &cli.command {
        Command::Complete {
            extend_backward,
            extend_single,
            ..
        }
        | Command::Extrapolate {
            extend_backward,
            extend_single,
            ..
        } => {
            if *extend_backward {
                flags.push(("extend_backward", "true".into()));
            }
            if *extend_single {
                flags.push(("extend_single", "true".into()));
            }
        }
        Command::Gen {
            count,
            occlusion,
            no_noise,
            tiles_per_label,
            axis_maximal,
            tile_dir,
            spec,
            ..
        } => {
            let mut put = |k: &'static str, v: Option<String>| {
                if let Some(v) = v {
                    flags.push((k, v));
                }
            };
            put("count", count.map(|v| v.to_string()));
            put("occlusion", occlusion.map(|v| v.to_string()));
            put("noise", no_noise.then(|| "false".into()));
            put("tiles_per_label", tiles_per_label.map(|v| v.to_string()));
            put("axis_maximal", axis_maximal.then(|| "true".into()));
            put("tile_dir", tile_dir.as_ref().map(|p| p.display().to_string()));
            put("spec", spec.as_ref().map(|p| p.display().to_string()));
        }
        Command::Eval { tol: Some(t), .. } => flags.push(("tol", t.to_string())),
        _ => {}
    }
    let settings = Settings::merge(env, cli.common.config.as_deref(), flags)?;
    if let Some(threads) = settings.get::<usize>("threads")? {
        if threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, e.g. when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    match cli.command {
        Command::Synth { image, out, render, trace } => cmd_synth(&settings, &image, &out, render, trace),
        Command::Render { program, out, source } => cmd_render(&settings, &program, &out, source.as_deref()),
        Command::Extrapolate { program, out, .. } => cmd_extrapolate(&settings, &program, &out),
        Command::Complete { partial, mask, out, .. } => cmd_complete(&settings, &partial, &mask, &out),
        Command::Gen { out, .. } => cmd_gen(&settings, &out),
        Command::Eval { corpus, out, mode, no_timing, .. } => cmd_eval(&settings, &corpus, &out, mode, !no_timing),
        Command::Oracle { image, out } => cmd_oracle(&settings, &image, &out),
    }
}

/// `N` is required; `M` defaults to the image side divided by `N`.
fn grid_size(s: &Settings, image: &Path) -> Result<(usize, usize)> {
    let n: usize = s.require("grid_n", "--grid-n")?;
    if let Some(m) = s.get("cell_m")? {
        return Ok((n, m));
    }
    let (w, h) = image::image_dimensions(image).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(image, e),
        source => Error::Image {
            path: image.to_path_buf(),
            source,
        },
    })?;
    let side = w as usize;
    if w != h || n == 0 || side % n != 0 || side == 0 {
        return Err(Error::Shape(format!(
            "cannot infer cell size: {w}x{h} image is not a square multiple of N={n}"
        )));
    }
    Ok((n, side / n))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write(path, text.as_bytes())
}

fn read_program(path: &Path) -> Result<Program> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Program::parse(&text)
}

fn background(s: &Settings) -> Result<crate::grid::Rgb> {
    Ok(s.get_rgb("background")?.unwrap_or(crate::datagen::GeneratorSpec::default().background))
}

fn cmd_synth(s: &Settings, image: &Path, out: &Path, render: bool, trace: bool) -> Result<()> {
    let (n, m) = grid_size(s, image)?;
    let cfg = s.synthesis_config()?;
    let img = GridImage::load_png(image, n, m)?;
    let result = greedy_synthesize(&img, &cfg)?;
    create_dir(out)?;
    write(&out.join("program.prog"), result.program.to_text().as_bytes())?;
    if render {
        let r = result.program.execute(Background::Flat(background(s)?), Some(&img))?;
        r.image.save_png(out.join("render.png"))?;
    }
    if trace {
        let mut lines = Vec::new();
        for step in &result.steps {
            serde_json::to_writer(&mut lines, step).expect("step serializes");
            lines.write_all(b"\n").expect("vec write");
        }
        write(&out.join("trace.jsonl"), &lines)?;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "synth",
            "image": image.display().to_string(),
            "settings": s.echo(),
            "config": cfg,
            "pairs": result.program.len(),
            "result": result,
        }),
    )
}

fn cmd_render(s: &Settings, program: &Path, out: &Path, source: Option<&Path>) -> Result<()> {
    let p = read_program(program)?;
    let src = source.map(|path| GridImage::load_png(path, p.grid_n(), p.cell_m())).transpose()?;
    let bg = match &src {
        Some(img) if !s.is_set("background") => Background::Image(img),
        _ => Background::Flat(background(s)?),
    };
    p.execute(bg, src.as_ref())?.image.save_png(out)
}

fn extrapolate_options(s: &Settings) -> Result<ExtrapolateOptions> {
    Ok(ExtrapolateOptions {
        extend_backward: s.get_bool("extend_backward")?.unwrap_or(false),
        extend_single: s.get_bool("extend_single")?.unwrap_or(false),
    })
}

fn cmd_extrapolate(s: &Settings, program: &Path, out: &Path) -> Result<()> {
    let p = read_program(program)?;
    let n = s.get("grid_n")?.unwrap_or(p.grid_n());
    let opts = extrapolate_options(s)?;
    write(out, extrapolate_with(&p, n, opts)?.to_text().as_bytes())
}

fn cmd_complete(s: &Settings, partial: &Path, mask: &Path, out: &Path) -> Result<()> {
    let (n, m) = grid_size(s, partial)?;
    let cfg = s.synthesis_config()?;
    let opts = extrapolate_options(s)?;
    let p = PartialImage::load(partial, mask, n, m)?;
    let done = complete(&p, &cfg, opts)?;
    create_dir(out)?;
    done.image.save_png(out.join("completed.png"))?;
    done.structure.image.save_png(out.join("structure.png"))?;
    write(&out.join("partial_program.prog"), done.partial_program.program.to_text().as_bytes())?;
    write(&out.join("program.prog"), done.program.to_text().as_bytes())?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "complete",
            "partial": partial.display().to_string(),
            "mask": mask.display().to_string(),
            "settings": s.echo(),
            "config": cfg,
            "extend_backward": opts.extend_backward,
            "extend_single": opts.extend_single,
            "known_cells": p.known().count(),
            "covered_cells": done.structure.covered.count(),
            "partial_result": done.partial_program,
        }),
    )
}

fn cmd_gen(s: &Settings, out: &Path) -> Result<()> {
    let spec = s.generator_spec()?;
    let count = s.get("count")?.unwrap_or(10);
    let occlusion = s.get("occlusion")?.unwrap_or(1.0 / 3.0);
    let entries = generate_corpus(&spec, count, occlusion, out)?;
    write_json(
        &out.join("gen.json"),
        &json!({
            "command": "gen",
            "settings": s.echo(),
            "count": entries.len(),
            "occlusion": occlusion,
            "spec_hash": spec.hash(),
        }),
    )
}

fn cmd_eval(s: &Settings, corpus: &Path, out: &Path, mode: EvalMode, timing: bool) -> Result<()> {
    let cfg = s.synthesis_config()?;
    let opts = EvalOptions {
        mode,
        tol: s.get("tol")?.unwrap_or(0),
        grid_n: s.get("grid_n")?,
        cell_m: s.get("cell_m")?,
        ignore_background: !s.is_set("ignore_color"),
        timing,
    };
    let report = evaluate_corpus(corpus, &cfg, &opts)?;
    create_dir(out)?;
    let mut lines = Vec::new();
    for r in &report.instances {
        serde_json::to_writer(&mut lines, r).expect("record serializes");
        lines.push(b'\n');
    }
    write(&out.join("instances.jsonl"), &lines)?;
    write_json(
        &out.join("report.json"),
        &json!({
            "command": "eval",
            "corpus": corpus.display().to_string(),
            "settings": s.echo(),
            "report": report,
        }),
    )
}

fn cmd_oracle(s: &Settings, image: &Path, out: &Path) -> Result<()> {
    let (n, m) = grid_size(s, image)?;
    let cfg = s.synthesis_config()?;
    let img = GridImage::load_png(image, n, m)?;
    let oracle = oracle_synthesize(&img, &cfg)?;
    let greedy = SynthesisProblem::from_image(&img, &cfg, None)?.greedy(&cfg)?;
    create_dir(out)?;
    write(&out.join("oracle.prog"), oracle.program.to_text().as_bytes())?;
    write(&out.join("greedy.prog"), greedy.program.to_text().as_bytes())?;
    let ratio = if oracle.objective > 0.0 { Some(greedy.objective / oracle.objective) } else { None };
    write_json(
        &out.join("comparison.json"),
        &json!({
            "command": "oracle",
            "image": image.display().to_string(),
            "settings": s.echo(),
            "config": cfg,
            "oracle": oracle,
            "greedy": greedy,
            "greedy_over_oracle": ratio,
        }),
    )
}
