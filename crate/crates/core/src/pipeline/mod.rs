//! End-to-end processing of one radiograph sequence: calibration, curvature
//! flow filtering and detection run frame-parallel, then filtering, linking
//! and statistics run on the collected detections.

pub mod artifacts;
mod config;
mod inspect;

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{curvature_flow_filter, CffParams};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::imagestack::{
    build_calibration, crop, normalize, read_stack, write_f64_pages, CalibrationSet, RawStack,
};
use crate::segment::{detect_bubbles, Detection};
use crate::track::{
    bin_velocity_profile, compute_velocities, correlate_parameters, envelope_stats, filter_detections,
    link_trajectories, CaseData, Correlation, EnvelopeStats, FilterOutcome, Trajectory, VelocityProfile,
    VelocitySample,
};

use artifacts::{
    envelope_rows, profile_rows, trajectory_rows, write_csv_with_header, write_detections, write_samples, Manifest,
};

pub use config::{BinConfig, CffConfig, InputConfig, PipelineConfig};
pub use inspect::{inspect_frames, overlay_rgb};

/// Writes one structured diagnostic line to stderr.
pub fn diag(stage: &str, frame: Option<usize>, message: impl std::fmt::Display) {
    match frame {
        Some(f) => eprintln!("stage={stage} frame={f} msg=\"{message}\""),
        None => eprintln!("stage={stage} frame=- msg=\"{message}\""),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub mean_thickness: f64,
    pub max_spread: f64,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub cff: CffParams,
    pub raw_detections: usize,
    pub kept_detections: usize,
    pub rejected: BTreeMap<String, usize>,
    pub trajectories: usize,
    pub velocity_samples: usize,
    pub envelope: Option<EnvelopeSummary>,
    pub correlations: Vec<Correlation>,
    /// Statistics skipped for lack of data.
    pub notes: Vec<String>,
}

/// In-memory results of a run, next to what was written to disk.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub raw_detections: Vec<Detection>,
    pub filtered: FilterOutcome,
    pub trajectories: Vec<Trajectory>,
    pub samples: Vec<VelocitySample>,
    pub profile: Option<VelocityProfile>,
    pub envelope: Option<EnvelopeStats>,
    pub stats: RunStats,
    pub manifest: Manifest,
}

/// Loads the sequence and the calibration, both cropped to the configured
/// region of interest.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<(RawStack, CalibrationSet)> {
    let stack = read_stack(&cfg.input.frames, cfg.input.format)?;
    cfg.meta.validate(stack.width, stack.height)?;
    let cal = match &cfg.input.calibration {
        Some(p) => CalibrationSet::load(p, cfg.input.clamp_max)?,
        None => {
            let dark = read_stack(cfg.input.dark.as_ref().expect("validated"), cfg.input.format)?;
            let flat = read_stack(cfg.input.flat.as_ref().expect("validated"), cfg.input.format)?;
            let mut cal = build_calibration(
                &dark.to_frames(&cfg.meta)?,
                &flat.to_frames(&cfg.meta)?,
                cfg.input.hot_sigma,
            )?;
            cal.clamp_max = cfg.input.clamp_max;
            cal
        }
    };
    if cal.width() != stack.width || cal.height() != stack.height {
        return Err(Error::DimensionMismatch {
            index: 0,
            got_w: stack.width,
            got_h: stack.height,
            want_w: cal.width(),
            want_h: cal.height(),
        });
    }
    let cal = match cfg.meta.roi {
        Some(roi) => cal.crop(roi)?,
        None => cal,
    };
    Ok((stack, cal))
}

/// Normalised, region-of-interest cropped frame `index`.
pub fn normalized_frame(stack: &RawStack, cal: &CalibrationSet, cfg: &PipelineConfig, index: usize) -> Result<Frame> {
    let raw = stack.frame(index, &cfg.meta)?;
    let raw = match cfg.meta.roi {
        Some(roi) => crop(&raw, roi)?,
        None => raw,
    };
    normalize(&raw, cal)
}

struct FrameResult {
    detections: Vec<Detection>,
}

fn process_frame(
    stack: &RawStack,
    cal: &CalibrationSet,
    cfg: &PipelineConfig,
    cff: &CffParams,
    index: usize,
) -> Result<FrameResult> {
    let norm = normalized_frame(stack, cal, cfg, index).map_err(|e| e.in_stage("normalize"))?;
    let smooth = curvature_flow_filter(&norm, cff).map_err(|e| e.in_stage("denoise"))?;
    let detections = detect_bubbles(&smooth, &cfg.segment).map_err(|e| e.in_stage("detect"))?;
    if cfg.dump_intermediate {
        let dir = cfg.output.join("intermediate");
        write_f64_pages(&dir.join(format!("frame_{index:05}.tif")), &[&norm, &smooth])
            .map_err(|e| e.in_stage("detect"))?;
    }
    Ok(FrameResult { detections })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))
}

/// Runs every stage and writes the artifacts plus `manifest.json` into the
/// output directory. On failure the manifest lists what was written so far
/// and names the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::write(&cfg.output, e).in_stage("config"))?;
    let mut manifest = Manifest {
        status: "running".into(),
        ..Default::default()
    };
    match run_stages(cfg, &mut manifest) {
        Ok(mut out) => {
            manifest.status = "ok".into();
            manifest.write(&cfg.output).map_err(|e| e.in_stage("write"))?;
            out.manifest = manifest;
            Ok(out)
        }
        Err(e) => {
            let stage = e.stage().unwrap_or("unknown");
            diag(stage, None, &e);
            manifest.status = "failed".into();
            manifest.failed_stage = Some(stage.to_string());
            manifest.error = Some(e.to_string());
            if let Err(w) = manifest.write(&cfg.output) {
                diag("write", None, w);
            }
            Err(e)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, manifest: &mut Manifest) -> Result<PipelineOutput> {
    let out_dir = cfg.output.as_path();
    let save = |m: &mut Manifest, name: &str| m.record(out_dir, name).map_err(|e| e.in_stage("write"));
    let started = Instant::now();

    let (stack, cal) = load_inputs(cfg).map_err(|e| e.in_stage("load"))?;
    diag(
        "load",
        None,
        format_args!("{} frames of {}x{}, {} hot pixels", stack.len(), stack.width, stack.height, cal.hot_pixel_count()),
    );

    let first = normalized_frame(&stack, &cal, cfg, 0).map_err(|e| e.in_stage("normalize"))?;
    let cff = cfg.cff.resolve(&first).map_err(|e| e.in_stage("denoise"))?;
    diag("denoise", None, format_args!("k={} tau={} dt={}", cff.k, cff.tau, cff.dt));
    if cfg.dump_intermediate {
        fs::create_dir_all(out_dir.join("intermediate")).map_err(|e| Error::write(out_dir, e).in_stage("write"))?;
    }

    let pool = build_pool(cfg.workers).map_err(|e| e.in_stage("config"))?;
    let per_frame: Vec<Result<FrameResult>> = pool.install(|| {
        (0..stack.len())
            .into_par_iter()
            .map(|i| process_frame(&stack, &cal, cfg, &cff, i))
            .collect()
    });
    let mut raw_detections = Vec::new();
    for (i, r) in per_frame.into_iter().enumerate() {
        match r {
            Ok(fr) => raw_detections.extend(fr.detections),
            Err(e) => {
                diag(e.stage().unwrap_or("detect"), Some(i), &e);
                return Err(e);
            }
        }
    }
    if cfg.dump_intermediate {
        for i in 0..stack.len() {
            save(manifest, &format!("intermediate/frame_{i:05}.tif"))?;
        }
    }
    diag(
        "detect",
        None,
        format_args!("{} detections in {:.1} s", raw_detections.len(), started.elapsed().as_secs_f64()),
    );
    write_detections(&out_dir.join("raw_detections.csv"), &raw_detections).map_err(|e| e.in_stage("write"))?;
    save(manifest, "raw_detections.csv")?;

    let pitch = cfg.meta.pixel_pitch;
    let filtered = filter_detections(&raw_detections, &cfg.filter, pitch);
    let mut rejected = BTreeMap::new();
    for r in &filtered.rejected {
        *rejected.entry(r.reason.as_str().to_string()).or_insert(0) += 1;
    }
    diag("filter", None, format_args!("kept {}, rejected {:?}", filtered.kept.len(), rejected));
    write_detections(&out_dir.join("detections.csv"), &filtered.kept).map_err(|e| e.in_stage("write"))?;
    save(manifest, "detections.csv")?;

    let trajectories = link_trajectories(&filtered.kept, &cfg.gate, cfg.meta.frame_rate, pitch);
    diag("link", None, format_args!("{} trajectories", trajectories.len()));
    write_csv_with_header(
        &out_dir.join("trajectories.csv"),
        &["traj_id", "frame", "t", "x", "y", "a", "b", "theta"],
        &trajectory_rows(&trajectories),
    )
    .map_err(|e| e.in_stage("write"))?;
    save(manifest, "trajectories.csv")?;

    let samples: Vec<VelocitySample> = trajectories
        .iter()
        .flat_map(|t| compute_velocities(t, cfg.meta.frame_rate))
        .collect();
    write_samples(&out_dir.join("velocities.csv"), &samples).map_err(|e| e.in_stage("write"))?;
    save(manifest, "velocities.csv")?;

    let mut notes = Vec::new();
    let profile = match bin_velocity_profile(&samples, cfg.bins.bin_height) {
        Ok(p) => Some(p),
        Err(Error::EmptyInput(_)) => {
            notes.push("velocity profile skipped: no trajectory with three or more detections".to_string());
            None
        }
        Err(e) => return Err(e.in_stage("profile")),
    };
    let rows = profile.as_ref().map(profile_rows).unwrap_or_default();
    write_csv_with_header(
        &out_dir.join("velocity_profile.csv"),
        &["y_bin", "vx_mean", "vx_err", "vy_mean", "vy_err", "n"],
        &rows,
    )
    .map_err(|e| e.in_stage("write"))?;
    save(manifest, "velocity_profile.csv")?;

    let envelope = match envelope_stats(&filtered.kept, cfg.bins.bin_height, cfg.bins.snip_m) {
        Ok(e) => Some(e),
        Err(e @ Error::TooFewBins { .. }) => {
            notes.push(format!("envelope skipped: {e}"));
            None
        }
        Err(e) => return Err(e.in_stage("envelope")),
    };
    let rows = envelope.as_ref().map(envelope_rows).unwrap_or_default();
    write_csv_with_header(&out_dir.join("envelope.csv"), &["y_bin", "left", "right"], &rows)
        .map_err(|e| e.in_stage("write"))?;
    save(manifest, "envelope.csv")?;
    for n in &notes {
        diag("statistics", None, n);
    }

    let correlations = correlate_parameters(&[CaseData {
        flow_rate: cfg.meta.flow_rate,
        detections: &filtered.kept,
        samples: &samples,
    }]);

    let stats = RunStats {
        frames: stack.len(),
        width: first.width,
        height: first.height,
        cff,
        raw_detections: raw_detections.len(),
        kept_detections: filtered.kept.len(),
        rejected,
        trajectories: trajectories.len(),
        velocity_samples: samples.len(),
        envelope: envelope.as_ref().map(|e| EnvelopeSummary {
            mean_thickness: e.mean_thickness,
            max_spread: e.max_spread,
        }),
        correlations,
        notes,
    };
    let stats_path = out_dir.join("stats.json");
    let text = serde_json::to_string_pretty(&stats).map_err(|e| Error::write(&stats_path, e).in_stage("write"))?;
    fs::write(&stats_path, text + "\n").map_err(|e| Error::write(&stats_path, e).in_stage("write"))?;
    save(manifest, "stats.json")?;
    diag("done", None, format_args!("{:.1} s", started.elapsed().as_secs_f64()));

    Ok(PipelineOutput {
        raw_detections,
        filtered,
        trajectories,
        samples,
        profile,
        envelope,
        stats,
        manifest: Manifest::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;
    use crate::imagestack::write_tiff_stack;
    use crate::synth::{render_sequence, BubbleTrack, ScenarioSpec};

    fn scene_config(dir: &Path, frames: usize) -> PipelineConfig {
        let spec = ScenarioSpec {
            frames,
            width: 128,
            height: 192,
            photon_scale: 8000.0,
            bubbles: vec![BubbleTrack {
                y0: 2.0,
                vy: 60.0,
                ..Default::default()
            }],
            ..Default::default()
        };
        let scene = render_sequence(&spec, 3).unwrap();
        write_tiff_stack(&dir.join("frames.tif"), &scene.raw).unwrap();
        write_tiff_stack(&dir.join("dark.tif"), &scene.darks).unwrap();
        write_tiff_stack(&dir.join("flat.tif"), &scene.flats).unwrap();
        let text = "output = \"out\"\n[input]\nframes = \"frames.tif\"\ndark = \"dark.tif\"\nflat = \"flat.tif\"\n[cff]\ntau = 2.0\n";
        fs::write(dir.join("run.toml"), text).unwrap();
        PipelineConfig::load(&dir.join("run.toml")).unwrap()
    }

    #[test]
    fn small_scene_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = scene_config(dir.path(), 12);
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.stats.frames, 12);
        assert_eq!(out.trajectories.len(), 1);
        assert_eq!(out.trajectories[0].len(), 12);
        assert!(out.samples.iter().all(|s| (s.vy - 60.0).abs() < 3.0));
        // 12 frames cover too few elevation bins for the envelope
        assert!(out.envelope.is_none());
        let m = Manifest::read(&cfg.output).unwrap();
        assert_eq!(m.status, "ok");
        for name in ["detections.csv", "trajectories.csv", "velocity_profile.csv", "envelope.csv", "stats.json"] {
            assert!(m.hash_of(name).is_some(), "{name}");
        }
    }

    #[test]
    fn worker_count_does_not_change_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = scene_config(dir.path(), 6);
        let one = run_pipeline(&cfg).unwrap().manifest;
        cfg.workers = 3;
        cfg.output = dir.path().join("out3");
        let three = run_pipeline(&cfg).unwrap().manifest;
        assert_eq!(one.artifacts, three.artifacts);
    }

    #[test]
    fn failure_names_stage_and_leaves_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = scene_config(dir.path(), 3);
        cfg.segment.route = crate::segment::Route::Otsu;
        cfg.segment.free_surface = true;
        // no surface in the scene
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage(), Some("detect"));
        let m = Manifest::read(&cfg.output).unwrap();
        assert_eq!(m.status, "failed");
        assert_eq!(m.failed_stage.as_deref(), Some("detect"));
        assert!(m.artifacts.is_empty());
    }
}
