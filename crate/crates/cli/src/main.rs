use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use slicecast::{
    bench, diff_images, synthetic, BenchSweep, Image, LookupMode, Method, Renderer, Resolution, ScalarType, Scene,
    SceneConfig, ShadingMode, SyntheticShape,
};

#[derive(Parser)]
#[command(name = "slicecast", version, about = "Slice-based ray casting volume renderer")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic datasets, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one frame from a scene config.
    Render(RenderArgs),
    /// Time a sweep over slice counts, buffer resolutions and methods.
    Bench(BenchArgs),
    /// Compare two images.
    Diff(DiffArgs),
    /// Write a synthetic volume as raw data plus descriptor.
    GenDataset(GenArgs),
}

#[derive(Args)]
struct SceneOverrides {
    /// Scene config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_shading)]
    shading: Option<ShadingMode>,
    /// `raycast` or `half-angle`.
    #[arg(long, value_parser = parse_renderer)]
    renderer: Option<Renderer>,
    #[arg(long)]
    n_slices: Option<usize>,
    /// Light buffer resolution, `WxH`.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<Resolution>,
    /// Output image size, `WxH`.
    #[arg(long, value_parser = parse_resolution)]
    viewport: Option<Resolution>,
    /// Eye-ray sample spacing.
    #[arg(long)]
    step: Option<f64>,
    /// `nearest` or `linear` inter-slice lookup.
    #[arg(long, value_parser = parse_lookup)]
    interpolation: Option<LookupMode>,
    #[arg(long)]
    compensation: Option<f64>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneOverrides,
    /// Output image; `.ppm` writes PPM, anything else PNG.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneOverrides,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "none,phong,has,sbrc,shell,cone")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    slices: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_resolution, default_value = "128,256,512")]
    resolutions: Vec<Resolution>,
    /// Timed repeats per configuration (one extra warm-up run is discarded).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Args)]
struct DiffArgs {
    a: PathBuf,
    b: PathBuf,
    /// Fail when the largest per-channel difference exceeds this.
    #[arg(long)]
    max_abs: Option<f64>,
    /// Fail when the mean difference exceeds this.
    #[arg(long)]
    mean_abs: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_shape, default_value = "sphere-blob")]
    shape: SyntheticShape,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_parser = parse_scalar, default_value = "u8")]
    scalar_type: ScalarType,
    /// Raw output path; the descriptor is written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn parse_shading(s: &str) -> Result<ShadingMode, String> {
    s.parse().map_err(|e: slicecast::Error| e.to_string())
}

fn parse_renderer(s: &str) -> Result<Renderer, String> {
    match s {
        "raycast" => Ok(Renderer::Raycast),
        "half-angle" | "half_angle" => Ok(Renderer::HalfAngle),
        _ => Err(format!("unknown renderer `{s}`")),
    }
}

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    s.parse().map_err(|e: slicecast::Error| e.to_string())
}

fn parse_lookup(s: &str) -> Result<LookupMode, String> {
    match s {
        "nearest" => Ok(LookupMode::Nearest),
        "linear" => Ok(LookupMode::Linear),
        _ => Err(format!("unknown interpolation `{s}`")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: slicecast::Error| e.to_string())
}

fn parse_shape(s: &str) -> Result<SyntheticShape, String> {
    s.parse().map_err(|e: slicecast::Error| e.to_string())
}

fn parse_scalar(s: &str) -> Result<ScalarType, String> {
    ScalarType::parse(s).map_err(|e| e.to_string())
}

impl SceneOverrides {
    /// Loads the config, applies flag overrides and returns it with the
    /// directory relative paths resolve against.
    fn load(&self, seed: Option<u64>) -> Result<(SceneConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(path) => {
                let cfg = SceneConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, base)
            }
            None => (SceneConfig::default(), PathBuf::from(".")),
        };
        if let Some(s) = self.shading {
            cfg.render.shading = s;
        }
        if let Some(r) = self.renderer {
            cfg.renderer = r;
        }
        if let Some(n) = self.n_slices {
            cfg.buffer.n_slices = n;
        }
        if let Some(r) = self.resolution {
            cfg.buffer.resolution = [r.width, r.height];
        }
        if let Some(v) = self.viewport {
            cfg.render.viewport = [v.width, v.height];
        }
        if let Some(s) = self.step {
            cfg.render.step = s;
        }
        if let Some(i) = self.interpolation {
            cfg.buffer.interpolation = i;
        }
        if let Some(c) = self.compensation {
            cfg.buffer.compensation_n = c;
        }
        if let Some(seed) = seed {
            cfg.set_seed(seed);
        }
        Ok((cfg, base))
    }
}

fn cmd_render(args: &RenderArgs, seed: Option<u64>) -> Result<()> {
    let (cfg, base) = args.scene.load(seed)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from("render.png"));
    let scene = Scene::load(cfg, &base)?;
    let frame = scene.render_frame()?;
    frame.image.save(&out)?;
    println!(
        "build_ms={:.3} render_ms={:.3} pass_count={} size={}x{} out={}",
        frame.build_ms,
        frame.render_ms,
        frame.pass_count,
        frame.image.width(),
        frame.image.height(),
        out.display()
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs, seed: Option<u64>) -> Result<()> {
    let (cfg, base) = args.scene.load(seed)?;
    let scene = Scene::load(cfg, &base)?;
    let sweep = BenchSweep {
        methods: args.methods.clone(),
        n_slices: args.slices.clone(),
        resolutions: args.resolutions.clone(),
        repeats: args.repeats,
    };
    let rows = bench::run_sweep(&scene, &sweep, |r| {
        info!(
            "{} slices={} res={} build={:.2}ms render={:.2}ms",
            r.method, r.n_slices, r.buffer_resolution, r.build_ms, r.render_ms
        );
    })?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(BufWriter::new(file), &rows)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => bench::write_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_diff(args: &DiffArgs) -> Result<bool> {
    let a = Image::load(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let b = Image::load(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    let m = diff_images(&a, &b)?;
    println!("max_abs={:.6} mean_abs={:.6}", m.max_abs, m.mean_abs);
    for (name, (mx, mean)) in ["r", "g", "b", "a"]
        .iter()
        .zip(m.channel_max_abs.iter().zip(&m.channel_mean_abs))
    {
        println!("{name}: max_abs={mx:.6} mean_abs={mean:.6}");
    }
    Ok(m.within(args.max_abs, args.mean_abs))
}

fn cmd_gen(args: &GenArgs, seed: Option<u64>) -> Result<()> {
    if args.out.extension().is_some_and(|e| e == "json") {
        bail!("output must be the raw file, not the descriptor");
    }
    let v = synthetic::generate(args.shape, args.size, seed.unwrap_or(0))?;
    v.write_raw(&args.out, args.scalar_type)?;
    println!(
        "wrote {} {}^3 {:?} to {}",
        args.shape,
        args.size,
        args.scalar_type,
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Render(a) => cmd_render(a, cli.seed)?,
        Command::Bench(a) => cmd_bench(a, cli.seed)?,
        Command::Diff(a) => {
            if !cmd_diff(a)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::GenDataset(a) => cmd_gen(a, cli.seed)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
