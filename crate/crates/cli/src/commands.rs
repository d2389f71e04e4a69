use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use gcpid::config::{DenoiseConfig, SigmaSource};
use gcpid::estimator::{estimate_sigma_map, load_weights, NoiseClassifier, SigmaMap};
use gcpid::experiments::{run_experiment, ExperimentConfig, ExperimentReport};
use gcpid::io::{
    load_container, load_cube, load_image, load_raw_mosaic, save_container, save_cube, save_image, write_atomic,
    RawLevels,
};
use gcpid::metrics::{serialize_db, MetricReport};
use gcpid::parallel::Execution;
use gcpid::pipeline::{
    denoise_hsi, denoise_raw, denoise_srgb, denoise_video, hsi_band_group, hsi_medium_group, pack_bayer, BayerLayout,
    HsiConfig, VideoConfig,
};
use gcpid::{GcpError, PlanarImage};

use crate::args::{
    Cli, Command, DenoiseKind, EstimateArgs, ExperimentArgs, Format, MetricsArgs, RawArgs, Tuning, WEIGHTS_ENV,
};

const SCHEMA_VERSION: u32 = 1;
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(GcpError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e {
                GcpError::InvalidConfig(_) | GcpError::UnknownExperiment(_) => 1,
                GcpError::Numeric(_) => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<GcpError> for CliError {
    fn from(e: GcpError) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let exec = Execution::from_threads(cli.threads);
    match cli.command {
        Command::Denoise { kind } => denoise(kind, exec, cli.format),
        Command::Estimate(a) => estimate(a, exec, cli.format),
        Command::Experiment(a) => experiment(a, exec, cli.format),
        Command::Metrics(a) => metrics(a, cli.format),
    }
}

fn missing(path: &Path) -> CliError {
    GcpError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
    }
    .into()
}

fn require_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(path))
    }
}

/// The directory an output will be written into must already exist.
fn require_output_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(missing(p)),
        _ => Ok(()),
    }
}

fn is_container(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("gcpt"))
}

fn config_from(t: &Tuning, exec: Execution) -> DenoiseConfig {
    let d = DenoiseConfig::default();
    DenoiseConfig {
        patch_size: t.ps.unwrap_or(d.patch_size),
        window: t.window.unwrap_or(d.window),
        group_size: t.k.unwrap_or(d.group_size),
        lambda: t.lambda.unwrap_or(d.lambda),
        tau_mult: t.tau_mult.unwrap_or(d.tau_mult),
        stride: t.stride.unwrap_or(d.stride),
        execution: exec,
        ..d
    }
}

fn weights_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| {
        std::env::var_os(WEIGHTS_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

enum Sigma {
    Fixed(f64),
    Weights(PathBuf),
}

fn emit<T: Serialize>(report: &T, format: Format, text: impl FnOnce() -> String, file: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| GcpError::Numeric(e.to_string()))?;
    if let Some(path) = file {
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    match format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{}", text()),
    }
    Ok(())
}

fn check_finite(frames: &[PlanarImage]) -> Result<()> {
    if frames.iter().all(|f| f.data().iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(GcpError::Numeric("denoised output contains non-finite values".into()).into())
    }
}

// ---------------------------------------------------------------------------
// frame sequences

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| GcpError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(GcpError::EmptyImage.into());
    }
    Ok(files)
}

fn load_frames(path: &Path) -> Result<(Vec<PlanarImage>, Option<Vec<String>>)> {
    if is_container(path) {
        return Ok((load_container(path)?, None));
    }
    let files = list_frames(path)?;
    let frames = files.iter().map(load_image).collect::<gcpid::Result<Vec<_>>>()?;
    let names = files
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    Ok((frames, Some(names)))
}

fn save_frames(frames: &[PlanarImage], path: &Path, names: Option<&[String]>, depth: u32) -> Result<()> {
    if is_container(path) {
        return Ok(save_container(frames, path)?);
    }
    std::fs::create_dir_all(path).map_err(|e| GcpError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    for (i, f) in frames.iter().enumerate() {
        let name = match names {
            Some(n) => n[i].clone(),
            None => format!("frame_{i:04}.png"),
        };
        save_image(f, path.join(name), depth)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Metrics {
    Single(MetricReport),
    Frames {
        #[serde(serialize_with = "serialize_db")]
        psnr: f64,
        ssim: f64,
        frames: Vec<MetricReport>,
    },
}

impl Metrics {
    fn compare(reference: &[PlanarImage], test: &[PlanarImage]) -> Result<Self> {
        if reference.len() != test.len() {
            return Err(GcpError::DimensionMismatch(format!(
                "{} reference frames for {} frames",
                reference.len(),
                test.len()
            ))
            .into());
        }
        if reference.len() == 1 {
            return Ok(Metrics::Single(MetricReport::compare(&reference[0], &test[0])?));
        }
        let frames = reference
            .iter()
            .zip(test)
            .map(|(r, t)| MetricReport::compare(r, t))
            .collect::<gcpid::Result<Vec<_>>>()?;
        // PSNR over every sample of every frame
        let (mut sse, mut n) = (0.0, 0usize);
        for (r, t) in reference.iter().zip(test) {
            sse += r
                .data()
                .iter()
                .zip(t.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            n += r.data().len();
        }
        let psnr = if sse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0 * 255.0 / (sse / n as f64)).log10()
        };
        let ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / frames.len() as f64;
        Ok(Metrics::Frames { psnr, ssim, frames })
    }

    fn text(&self) -> String {
        let (p, s) = match self {
            Metrics::Single(m) => (m.psnr, m.ssim),
            Metrics::Frames { psnr, ssim, .. } => (*psnr, *ssim),
        };
        format!("psnr {p:.4} dB\nssim {s:.6}\n")
    }
}

#[derive(Debug, Serialize)]
struct ConfigReport {
    patch_size: usize,
    window: usize,
    group_size: usize,
    lambda: f64,
    tau_mult: f64,
    stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<usize>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
enum SigmaReport {
    Fixed { value: f64 },
    Weights { path: PathBuf, maps: Vec<SigmaMap> },
}

#[derive(Debug, Serialize)]
struct DenoiseReport {
    schema_version: u32,
    command: &'static str,
    kind: &'static str,
    input: PathBuf,
    output: PathBuf,
    config: ConfigReport,
    sigma: SigmaReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
}

fn map_text(m: &SigmaMap) -> String {
    let cols = m.grid.cols();
    let rows = |v: &[f64]| {
        v.chunks(cols)
            .map(|r| r.iter().map(|s| format!("{s:8.3}")).collect::<String>() + "\n")
            .collect::<String>()
    };
    format!(
        "{}x{} image, {}x{} tiles of {} ({:?} grid)\nraw sigma\n{}smoothed sigma\n{}",
        m.grid.height,
        m.grid.width,
        m.grid.rows(),
        cols,
        m.grid.tile,
        m.space,
        rows(&m.raw),
        rows(&m.smoothed)
    )
}

// ---------------------------------------------------------------------------
// denoise

fn denoise(kind: DenoiseKind, exec: Execution, format: Format) -> Result<()> {
    let (name, args, raw) = match kind {
        DenoiseKind::Image(a) => ("image", a, None),
        DenoiseKind::Raw { common, raw } => ("raw", common, Some(raw)),
        DenoiseKind::Video(a) => ("video", a, None),
        DenoiseKind::Hsi(a) => ("hsi", a, None),
    };
    let sigma = match (args.sigma, weights_path(args.weights.clone())) {
        (Some(s), _) => Sigma::Fixed(s),
        (None, Some(p)) => Sigma::Weights(p),
        (None, None) => {
            return Err(CliError::Usage(format!(
                "a noise level is required: pass --sigma or --weights, or set {WEIGHTS_ENV}"
            )))
        }
    };

    require_input(&args.input)?;
    if let Some(r) = &args.reference {
        require_input(r)?;
    }
    if let Sigma::Weights(p) = &sigma {
        require_input(p)?;
    }
    require_output_parent(&args.output)?;
    if let Some(r) = &args.report {
        require_output_parent(r)?;
    }
    let layout = match &raw {
        Some(r) => r.layout.parse::<BayerLayout>()?,
        None => BayerLayout::default(),
    };
    let mut cfg = config_from(&args.tuning, exec);
    if let Sigma::Fixed(s) = sigma {
        cfg.sigma = SigmaSource::Fixed(s);
    }
    cfg.validate()?;
    let vcfg = VideoConfig::new(cfg.clone(), args.frames);
    if name == "video" {
        vcfg.validate()?;
    }
    let net = match &sigma {
        Sigma::Weights(p) => Some(load_weights(p)?),
        Sigma::Fixed(_) => None,
    };

    let (inputs, names) = match name {
        "image" => (vec![load_image(&args.input)?], None),
        "raw" => (vec![load_raw_mosaic(&args.input, raw_levels(raw.as_ref()))?], None),
        "video" => load_frames(&args.input)?,
        _ => (vec![load_cube(&args.input)?], None),
    };
    let references = match &args.reference {
        None => None,
        Some(r) => Some(match name {
            "image" => vec![load_image(r)?],
            "raw" => vec![load_raw_mosaic(r, raw_levels(raw.as_ref()))?],
            "video" => load_frames(r)?.0,
            _ => vec![load_cube(r)?],
        }),
    };

    let maps = match &net {
        Some(net) => {
            let guides = guide_frames(name, &inputs, layout)?;
            let maps = estimate_maps(&guides, net, exec)?;
            cfg.sigma = SigmaSource::Maps(Arc::new(maps.clone()));
            Some(maps)
        }
        None => None,
    };

    let outputs = match name {
        "image" => vec![denoise_srgb(&inputs[0], &cfg)?],
        "raw" => vec![denoise_raw(&inputs[0], layout, &cfg)?],
        "video" => denoise_video(
            &inputs,
            &VideoConfig {
                base: cfg.clone(),
                ..vcfg
            },
        )?,
        _ => vec![denoise_hsi(&inputs[0], &HsiConfig { base: cfg.clone() })?],
    };
    check_finite(&outputs)?;
    let metrics = match &references {
        Some(r) => Some(Metrics::compare(r, &outputs)?),
        None => None,
    };

    match name {
        "image" | "raw" => save_image(&outputs[0], &args.output, args.depth)?,
        "video" => save_frames(&outputs, &args.output, names.as_deref(), args.depth)?,
        _ => save_cube(&outputs[0], &args.output)?,
    }

    let report = DenoiseReport {
        schema_version: SCHEMA_VERSION,
        command: "denoise",
        kind: name,
        input: args.input.clone(),
        output: args.output.clone(),
        config: ConfigReport {
            patch_size: cfg.patch_size,
            window: cfg.window,
            group_size: cfg.group_size,
            lambda: cfg.lambda,
            tau_mult: cfg.tau_mult,
            stride: cfg.stride,
            frames: (name == "video").then_some(args.frames),
        },
        sigma: match (&sigma, maps) {
            (Sigma::Weights(p), Some(maps)) => SigmaReport::Weights { path: p.clone(), maps },
            (Sigma::Fixed(s), _) => SigmaReport::Fixed { value: *s },
            _ => unreachable!("weights always yield maps"),
        },
        metrics,
    };
    emit(
        &report,
        format,
        || {
            let mut s = format!("wrote {}\n", report.output.display());
            if let SigmaReport::Weights { maps, .. } = &report.sigma {
                for m in maps {
                    s += &map_text(m);
                }
            }
            if let Some(m) = &report.metrics {
                s += &m.text();
            }
            s
        },
        args.report.as_deref(),
    )
}

fn raw_levels(raw: Option<&RawArgs>) -> RawLevels {
    raw.map(|r| RawLevels {
        black: r.black,
        white: r.white,
    })
    .unwrap_or_default()
}

/// Frames on which the pipeline for `kind` searches, and so the frames
/// whose noise levels govern thresholding.
fn guide_frames(kind: &str, inputs: &[PlanarImage], layout: BayerLayout) -> Result<Vec<PlanarImage>> {
    Ok(match kind {
        "raw" => vec![pack_bayer(&inputs[0], layout)?],
        "hsi" => vec![hsi_band_group(&inputs[0], hsi_medium_group(inputs[0].channels()))?],
        _ => inputs.to_vec(),
    })
}

fn estimate_maps(frames: &[PlanarImage], net: &NoiseClassifier, exec: Execution) -> Result<Vec<SigmaMap>> {
    Ok(frames
        .iter()
        .map(|f| estimate_sigma_map(f, net, exec))
        .collect::<gcpid::Result<Vec<_>>>()?)
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Debug, Serialize)]
struct EstimateReport {
    schema_version: u32,
    command: &'static str,
    input: PathBuf,
    weights: PathBuf,
    maps: Vec<SigmaMap>,
}

fn estimate(a: EstimateArgs, exec: Execution, format: Format) -> Result<()> {
    let weights =
        weights_path(a.weights).ok_or_else(|| CliError::Usage(format!("pass --weights or set {WEIGHTS_ENV}")))?;
    require_input(&a.input)?;
    require_input(&weights)?;
    let net = load_weights(&weights)?;
    let frames = if is_container(&a.input) {
        load_container(&a.input)?
    } else {
        vec![load_image(&a.input)?]
    };
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        input: a.input,
        weights,
        maps: estimate_maps(&frames, &net, exec)?,
    };
    emit(&report, format, || report.maps.iter().map(map_text).collect(), None)
}

// ---------------------------------------------------------------------------
// experiment

fn experiment(a: ExperimentArgs, exec: Execution, format: Format) -> Result<()> {
    if let Some(r) = &a.report {
        require_output_parent(r)?;
    }
    let ec = ExperimentConfig {
        base: config_from(&a.tuning, exec),
        seed: a.seed,
        references: a.refs,
    };
    let report = run_experiment(&a.name, &ec)?;
    emit(&report, format, || experiment_text(&report), a.report.as_deref())
}

fn experiment_text(r: &ExperimentReport) -> String {
    let body = match r {
        ExperimentReport::Identity(r) => r
            .cases
            .iter()
            .map(|c| format!("{:6} max |out-in| {:.3e} in {:.2} s\n", c.name, c.max_abs_diff, c.seconds))
            .collect(),
        ExperimentReport::SuccessRate(r) => {
            let mut s = String::from("seed   green   mean    gcp\n");
            for x in &r.seeds {
                s += &format!("{:<6} {:.4}  {:.4}  {:.4}\n", x.seed, x.green_only, x.mean_only, x.gcp_guided);
            }
            s + &format!(
                "mean   {:.4}  {:.4}  {:.4}\n",
                r.mean.green_only, r.mean.mean_only, r.mean.gcp_guided
            )
        }
        ExperimentReport::TauSweep(r) => {
            let mut s: String = r
                .grid
                .iter()
                .zip(&r.psnr)
                .map(|(g, p)| format!("sigma {g:7.2}  psnr {p:.3} dB\n"))
                .collect();
            s += &format!("gain at sigma {}: {:.3} dB\n", r.true_sigma, r.gain_db);
            s
        }
        ExperimentReport::Scaling(r) => format!(
            "{} -> {} references: ratio {:.3} (limit {}), {:.3} per reference\nrow stride only, {} references: ratio {:.3}\n",
            r.base_references,
            r.dense_references,
            r.ratio,
            r.max_ratio,
            r.ratio_per_reference,
            r.row_references,
            r.row_ratio
        ),
    };
    format!("{body}{}: {}\n", r.name(), if r.pass() { "PASS" } else { "FAIL" })
}

// ---------------------------------------------------------------------------
// metrics

fn metrics(a: MetricsArgs, format: Format) -> Result<()> {
    require_input(&a.reference)?;
    require_input(&a.test)?;
    let load = |p: &Path| -> Result<Vec<PlanarImage>> {
        Ok(if is_container(p) {
            load_container(p)?
        } else {
            vec![load_image(p)?]
        })
    };
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        command: "metrics",
        metrics: Metrics::compare(&load(&a.reference)?, &load(&a.test)?)?,
        reference: a.reference,
        test: a.test,
    };
    emit(&report, format, || report.metrics.text(), None)
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    schema_version: u32,
    command: &'static str,
    reference: PathBuf,
    test: PathBuf,
    #[serde(flatten)]
    metrics: Metrics,
}
