use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bubbleflow::imagestack::{
    build_calibration, read_stack, write_tiff_stack, SequenceFormat, SequenceMeta, DEFAULT_CLAMP_MAX, DEFAULT_HOT_SIGMA,
};
use bubbleflow::pipeline::artifacts::{read_csv, read_detections, Manifest, ProfileRow};
use bubbleflow::pipeline::{diag, inspect_frames, run_pipeline, InputConfig, PipelineConfig};
use bubbleflow::synth::{render_sequence, score_detections, score_velocity, GroundTruth, ScenarioSpec};
use bubbleflow::track::{ProfileBin, VelocityProfile};
use bubbleflow::{Error, Result, Roi};

#[derive(Parser)]
#[command(name = "bubbleflow", version, about = "Bubble detection and velocimetry in radiograph sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a sequence as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the worker count of the config.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        dump_intermediate: bool,
        /// Region of interest `x,y,w,h` in pixels.
        #[arg(long)]
        roi: Option<String>,
    },
    /// Render a synthetic scenario with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against ground truth; prints JSON.
    Score {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Velocity profile CSV to compare with the truth as well.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        bin_height: f64,
        #[arg(long, default_value_t = 5.0)]
        match_radius: f64,
        #[arg(long, default_value_t = bubbleflow::frame::DEFAULT_PIXEL_PITCH_MM)]
        pitch: f64,
    },
    /// Average dark and open-beam frames into a calibration file.
    Calibrate {
        #[arg(long)]
        dark: PathBuf,
        #[arg(long)]
        flat: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HOT_SIGMA)]
        hot_sigma: f64,
        /// Read headerless u16 frames of this size (`WxH`) instead of TIFF.
        #[arg(long)]
        raw: Option<String>,
    },
    /// Write detection overlays for a range of frames.
    Inspect {
        #[arg(long)]
        config: PathBuf,
        /// Frame range `start..end` (end exclusive) or a single index.
        #[arg(long)]
        frames: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<std::ops::Range<usize>> {
    let bad = || Error::InvalidParameter(format!("frame range '{s}' must be N or A..B"));
    match s.split_once("..") {
        Some((a, b)) => Ok(a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?),
        None => {
            let i: usize = s.trim().parse().map_err(|_| bad())?;
            Ok(i..i + 1)
        }
    }
}

fn parse_raw_format(s: &str) -> Result<SequenceFormat> {
    let bad = || Error::InvalidParameter(format!("raw size '{s}' must be WxH"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok(SequenceFormat::RawU16 {
        width: w.parse().map_err(|_| bad())?,
        height: h.parse().map_err(|_| bad())?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn synth(spec_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::Read {
        path: spec_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = ScenarioSpec::from_toml(&text)?;
    let scene = render_sequence(&spec, seed)?;
    fs::create_dir_all(out).map_err(|e| Error::Write {
        path: out.to_path_buf(),
        message: e.to_string(),
    })?;
    write_tiff_stack(&out.join("frames.tif"), &scene.raw)?;
    write_tiff_stack(&out.join("dark.tif"), &scene.darks)?;
    write_tiff_stack(&out.join("flat.tif"), &scene.flats)?;
    scene.truth.write_csv(&out.join("truth.csv"))?;
    write_text(&out.join("scenario.toml"), &spec.to_toml()?)?;
    let pipeline = PipelineConfig {
        input: InputConfig {
            frames: "frames.tif".into(),
            format: SequenceFormat::TiffStack,
            dark: Some("dark.tif".into()),
            flat: Some("flat.tif".into()),
            calibration: None,
            hot_sigma: DEFAULT_HOT_SIGMA,
            clamp_max: DEFAULT_CLAMP_MAX,
        },
        meta: SequenceMeta {
            frame_rate: spec.frame_rate,
            pixel_pitch: spec.pixel_pitch,
            slab_thickness: spec.slab_thickness,
            ..Default::default()
        },
        cff: Default::default(),
        segment: Default::default(),
        filter: Default::default(),
        gate: Default::default(),
        bins: Default::default(),
        output: "result".into(),
        workers: 1,
        dump_intermediate: false,
    };
    write_text(&out.join("pipeline.toml"), &pipeline.to_toml()?)?;
    let mut manifest = Manifest {
        status: "ok".into(),
        ..Default::default()
    };
    for name in ["frames.tif", "dark.tif", "flat.tif", "truth.csv", "scenario.toml", "pipeline.toml"] {
        manifest.record(out, name)?;
    }
    manifest.write(out)?;
    diag(
        "synth",
        None,
        format_args!("{} frames, {} truth states, seed {seed}", spec.frames, scene.truth.states.len()),
    );
    Ok(())
}

fn score(
    detections: &Path,
    truth: &Path,
    profile: Option<&Path>,
    bin_height: f64,
    radius: f64,
    pitch: f64,
) -> Result<()> {
    let dets = read_detections(detections)?;
    let truth = GroundTruth::read_csv(truth)?;
    let det_score = score_detections(&dets, &truth, radius, pitch);
    let velocity = match profile {
        Some(p) => {
            let rows: Vec<ProfileRow> = read_csv(p)?;
            let bins = rows
                .iter()
                .map(|r| ProfileBin {
                    y_low: r.y_bin - 0.5 * bin_height,
                    y_high: r.y_bin + 0.5 * bin_height,
                    n: r.n,
                    vx_mean: r.vx_mean,
                    vx_err: r.vx_err,
                    vy_mean: r.vy_mean,
                    vy_err: r.vy_err,
                })
                .collect();
            Some(score_velocity(&VelocityProfile { bin_height, bins }, &truth)?)
        }
        None => None,
    };
    let report = serde_json::json!({ "detections": det_score, "velocity": velocity });
    println!("{}", serde_json::to_string_pretty(&report).expect("plain data serialises"));
    Ok(())
}

fn calibrate(dark: &Path, flat: &Path, out: &Path, hot_sigma: f64, raw: Option<&str>) -> Result<()> {
    let format = raw.map(parse_raw_format).transpose()?.unwrap_or(SequenceFormat::TiffStack);
    let meta = SequenceMeta::default();
    let darks = read_stack(dark, format)?.to_frames(&meta)?;
    let flats = read_stack(flat, format)?.to_frames(&meta)?;
    let cal = build_calibration(&darks, &flats, hot_sigma)?;
    cal.save(out)?;
    diag(
        "calibrate",
        None,
        format_args!("{}x{}, {} hot pixels", cal.width(), cal.height(), cal.hot_pixel_count()),
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            workers,
            dump_intermediate,
            roi,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.dump_intermediate |= dump_intermediate;
            if let Some(r) = roi {
                cfg.meta.roi = Some(Roi::parse(&r)?);
            }
            run_pipeline(&cfg).map(|_| ())
        }
        Command::Synth { spec, seed, out } => synth(&spec, seed, &out),
        Command::Score {
            detections,
            truth,
            profile,
            bin_height,
            match_radius,
            pitch,
        } => score(&detections, &truth, profile.as_deref(), bin_height, match_radius, pitch),
        Command::Calibrate {
            dark,
            flat,
            out,
            hot_sigma,
            raw,
        } => calibrate(&dark, &flat, &out, hot_sigma, raw.as_deref()),
        Command::Inspect { config, frames, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let written = inspect_frames(&cfg, parse_range(&frames)?, &out)?;
            diag("inspect", None, format_args!("{} overlays in {}", written.len(), out.display()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
