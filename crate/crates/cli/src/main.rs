use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scene_synth::align::{align_depth, AlignConfig, LocalConfig, MAX_PAIRS};
use scene_synth::camera::{build_trajectory, Intrinsics, TrajectoryPattern};
use scene_synth::field::{render_view, DEFAULT_OPACITY_FLOOR};
use scene_synth::io::{
    decode_checkpoint, decode_mask_png, decode_pbm, decode_pfm, encode_pfm, encode_png, write_atomic,
    ProviderSection, Recorder, RunConfig, RunDir, PROVIDER_URL_ENV,
};
use scene_synth::optim::EvalConfig;
use scene_synth::pipeline::{self, init_sweep, oracle_report, SweepParam};
use scene_synth::rng::{stream_rng, Stream};
use scene_synth::Error;

#[derive(Parser)]
#[command(name = "scene-synth", version, about = "Text-driven 3D scene synthesis on a voxel radiance field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a config file into its run directory.
    Generate(GenerateArgs),
    /// Render a checkpoint along a trajectory.
    Render(RenderArgs),
    /// Score a checkpoint against the oracle scene of a config.
    Eval(EvalArgs),
    /// Align an estimated depth map to a rendered one.
    Align(AlignArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; defaults to `output_dir` from the config, relative to
    /// the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue an interrupted run in the same directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many updates in total.
    #[arg(long)]
    max_updates: Option<usize>,
    /// Use the remote provider at this URL.
    #[arg(long, env = PROVIDER_URL_ENV)]
    provider_url: Option<String>,
}

#[derive(Args)]
struct CameraArgs {
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 90.0)]
    fov_deg: f64,
    /// Camera position `x,y,z`.
    #[arg(long, default_value = "0,0,0", value_parser = parse_vec3)]
    position: [f64; 3],
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Trajectory spec, e.g. `orbit:8`.
    #[arg(long)]
    traj: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long, default_value_t = 192)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_OPACITY_FLOOR)]
    opacity_floor: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Run config whose oracle scene, trajectory and camera are the truth.
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long, default_value_t = 100)]
    poses: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Support counts to sweep, e.g. `0,2,4,8,12`.
    #[arg(long, value_delimiter = ',')]
    sweep_count: Vec<f64>,
    /// Support shifts to sweep, e.g. `0.1,0.2,0.3,0.4`.
    #[arg(long, value_delimiter = ',')]
    sweep_shift: Vec<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// Rendered depth (PFM).
    #[arg(long)]
    rendered: PathBuf,
    /// Estimated depth (PFM).
    #[arg(long)]
    estimated: PathBuf,
    /// Region excluded from the fit (PBM, or PNG with white = excluded).
    #[arg(long)]
    mask: PathBuf,
    /// Aligned depth output (PFM).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 90.0)]
    fov_deg: f64,
    #[arg(long, default_value_t = MAX_PAIRS)]
    max_pairs: usize,
    #[arg(long, default_value_t = 17)]
    lattice: usize,
    #[arg(long, default_value_t = 0.1)]
    smoothness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::NumericAbort { .. } => (4, "numeric_abort"),
            e if e.is_provider_failure() => (3, "provider"),
            Error::Config(_) | Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => (2, "usage"),
            Error::Format(_) | Error::Checkpoint(_) => (2, "bad_input"),
            Error::Alignment(_) => (1, "alignment"),
            _ => (1, "io"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([*x, *y, *z]),
        _ => Err("expected three finite numbers `x,y,z`".into()),
    }
}

fn read_input(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(value: &serde_json::Value, to: Option<&Path>) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    match to {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_config(path: &Path, url: Option<&str>) -> Outcome<(String, RunConfig)> {
    let text = read_text(path)?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(url) = url {
        log::info!("provider overridden to {url}");
        cfg = cfg.with_remote_url(url)?;
    }
    Ok((text, cfg))
}

fn generate(a: GenerateArgs) -> Outcome {
    let (text, cfg) = load_config(&a.config, a.provider_url.as_deref())?;
    let root = match a.out {
        Some(o) => o,
        None => a.config.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir),
    };
    let provider = cfg.provider()?;
    let limit = a.max_updates.unwrap_or(usize::MAX);

    let existing = RunDir::open(&root).ok();
    let (dir, state) = match existing {
        Some(dir) if a.resume => {
            if dir.config_text()? != text {
                log::warn!("config differs from the run's snapshot; resuming with the snapshot");
            }
            let mut snap = dir.config()?;
            if let Some(url) = a.provider_url.as_deref() {
                snap = snap.with_remote_url(url)?;
            }
            dir.repair_log()?;
            let state = if dir.updates()?.is_empty() {
                None
            } else {
                Some(dir.load_state(&snap, None)?)
            };
            (dir, state)
        }
        Some(_) => {
            return Err(Failure::usage(format!(
                "{} already holds a run; pass --resume to continue it",
                root.display()
            )))
        }
        None => (RunDir::create(&root, &text)?, None),
    };
    let mut recorder = Recorder::new(&dir);
    let mut state = match state {
        Some(s) => s,
        None if limit == 0 => return Err(Failure::usage("--max-updates must be positive")),
        None => pipeline::initialize(provider.as_ref(), cfg.trajectory()?, cfg.pipeline()?, &mut recorder)?,
    };
    while state.history.len() < limit && pipeline::update_next(&mut state, provider.as_ref(), &mut recorder)? {
        log::info!("update {} of {} done", state.history.len(), state.trajectory.len());
    }
    emit(
        &json!({
            "run_dir": root,
            "updates": state.history.len(),
            "complete": state.is_complete(),
            "grid_hash": state.grid_hash(),
        }),
        None,
    )
}

fn render(a: RenderArgs) -> Outcome {
    let grid = decode_checkpoint(&read_input(&a.ckpt)?)?;
    let pattern: TrajectoryPattern = a.traj.parse()?;
    let intrinsics = Intrinsics::from_fov(a.camera.fov_deg, a.camera.width, a.camera.height)?;
    let views = build_trajectory(&pattern, &intrinsics, a.camera.position.into())?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    let digits = views.len().saturating_sub(1).to_string().len().max(4);
    let mut frames = Vec::new();
    for v in &views {
        let r = render_view(&grid, v, a.steps, a.opacity_floor)?;
        let stem = format!("frame_{:0digits$}", v.id);
        write_atomic(&a.out.join(format!("{stem}.png")), &encode_png(&r.image.quantized()))?;
        write_atomic(&a.out.join(format!("{stem}_depth.pfm")), &encode_pfm(&r.depth))?;
        frames.push(stem);
    }
    emit(&json!({ "frames": frames }), None)
}

fn eval(a: EvalArgs) -> Outcome {
    let (_, cfg) = load_config(&a.oracle, None)?;
    let ProviderSection::Oracle { scene, .. } = &cfg.provider else {
        return Err(Failure::usage("evaluation needs an oracle config; remote runs have no ground truth"));
    };
    let grid = decode_checkpoint(&read_input(&a.ckpt)?)?;
    let pipe = cfg.pipeline()?;
    let ev = EvalConfig {
        poses: a.poses,
        steps: pipe.fit.loss.steps,
        seed: a.seed,
        ..EvalConfig::default()
    };
    ev.validate()?;
    let trajectory = cfg.trajectory()?;
    let mut report = oracle_report(&grid, scene, &trajectory, &ev, pipe.opacity_floor)?;
    let provider = cfg.provider()?;
    for (param, values) in [
        (SweepParam::SupportCount, &a.sweep_count),
        (SweepParam::SupportShift, &a.sweep_shift),
    ] {
        if !values.is_empty() {
            report
                .sweeps
                .extend(init_sweep(provider.as_ref(), scene, &trajectory[0], &pipe, &ev, param, values)?);
        }
    }
    emit(&serde_json::to_value(&report).expect("report serializes"), a.report.as_deref())
}

fn align(a: AlignArgs) -> Outcome {
    let rendered = decode_pfm(&read_input(&a.rendered)?)?;
    let estimated = decode_pfm(&read_input(&a.estimated)?)?;
    let mask_bytes = read_input(&a.mask)?;
    let mask = if mask_bytes.starts_with(b"P4") {
        decode_pbm(&mask_bytes)?
    } else {
        decode_mask_png(&mask_bytes)?
    };
    if rendered.dims() != estimated.dims() || rendered.dims() != mask.dims() {
        return Err(Failure::usage("rendered depth, estimated depth and mask differ in size"));
    }
    let intrinsics = Intrinsics::from_fov(a.fov_deg, rendered.width(), rendered.height())?;
    let cfg = AlignConfig {
        max_pairs: a.max_pairs,
        local: LocalConfig {
            lattice: a.lattice,
            smoothness: a.smoothness,
        },
    };
    cfg.local.validate()?;
    let mut rng = stream_rng(a.seed, Stream::PairSampling, 0);
    let aligned = align_depth(&rendered.restricted(&mask.known()), &estimated, &intrinsics, &cfg, &mut rng)?;
    if let Some(out) = &a.out {
        write_atomic(out, &encode_pfm(&aligned.depth))?;
    }
    emit(
        &json!({
            "scale": aligned.global.scale,
            "offset": aligned.global.offset,
            "overlap_pixels": aligned.overlap_pixels,
            "rmse_raw": aligned.rmse_raw,
            "rmse_global": aligned.rmse_global,
            "rmse_local": aligned.rmse_local,
            "fallback": aligned.fallback,
        }),
        None,
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Align(a) => align(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "{}",
                json!({ "status": "error", "kind": f.kind, "exit_code": f.code, "message": f.message })
            );
            ExitCode::from(f.code)
        }
    }
}
