//! Subcommands of the `actrack` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use actrack_core::metrics::{clear_mot, DEFAULT_IOU_MIN};
use actrack_core::synth::{generate_scene, scenario_suite, ScenarioSpec};
use actrack_core::{run_sequence, DetectionSet, Tracker, TrackerConfig, TrackSet};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{read_scene_spec, read_tracker_overrides};
use crate::io_mot::{self, format_appearance, format_detections, format_gt, format_results};
use crate::output::OutputSet;

pub const DEFAULT_WINDOW: u32 = 25;

#[derive(Debug, Parser)]
#[command(name = "actrack", version, about = "Sliding-window multi-object tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track one detection file.
    Track(TrackArgs),
    /// Final energy and tracking quality over several window lengths.
    Sweep(SweepArgs),
    /// CLEAR-MOT scores of a result file.
    Eval(EvalArgs),
    /// Write a synthetic sequence.
    Synth(SynthArgs),
    /// Per-frame energy for one or more window lengths.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Clear threshold.
    #[arg(long)]
    pub cthre: Option<f64>,
    /// Ambiguity threshold.
    #[arg(long)]
    pub athre: Option<f64>,
    /// key = value overrides, applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub det: PathBuf,
    /// seqinfo.ini; its frame rate sets the default window (one second).
    #[arg(long)]
    pub seqinfo: Option<PathBuf>,
    /// Descriptor file `frame,det_index,v1,...,vK`.
    #[arg(long)]
    pub appearance: Option<PathBuf>,
    /// Window length in frames.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub window: Option<u32>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `frame,energy` rows.
    #[arg(long)]
    pub energy_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, requires = "gt", conflicts_with = "preset")]
    pub det: Option<PathBuf>,
    #[arg(long, requires = "det")]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub appearance: Option<PathBuf>,
    /// Synthetic preset instead of files; seed k generates scene k.
    #[arg(long, required_unless_present = "det")]
    pub preset: Option<String>,
    #[arg(long, default_value = "1,2,5,10,20", value_parser = parse_windows)]
    pub windows: WindowList,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub res: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_MIN)]
    pub iou: f64,
    /// Sequence column; defaults to the ground-truth file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    /// key = value scene description.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub outdir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long)]
    pub appearance: Option<PathBuf>,
    #[arg(long, default_value = "25", value_parser = parse_windows)]
    pub windows: WindowList,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowList(pub Vec<u32>);

/// Comma-separated positive window lengths.
pub fn parse_windows(s: &str) -> Result<WindowList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let w: u32 = part.trim().parse().map_err(|_| format!("{part:?} is not a window length"))?;
        if w == 0 {
            return Err("window lengths must be at least 1".into());
        }
        out.push(w);
    }
    Ok(WindowList(out))
}

/// Drop repeated windows, keeping the first occurrence.
pub fn dedup_windows(windows: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(windows.len());
    for &w in windows {
        if out.contains(&w) {
            log::warn!("window length {w} listed more than once; running it once");
        } else {
            out.push(w);
        }
    }
    out
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track(a) => track(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Eval(a) => eval(&a),
        Command::Synth(a) => synth(&a),
        Command::Energy(a) => energy(&a),
    }
}

/// Configuration plus the optional `iou` override of the config file.
fn tracker_config(window: u32, tuning: &TuningArgs) -> Result<(TrackerConfig, Option<f64>)> {
    let mut cfg = TrackerConfig::with_window(window);
    let mut iou = None;
    if let Some(path) = &tuning.config {
        iou = read_tracker_overrides(path, &mut cfg).with_context(|| format!("reading {}", path.display()))?;
    }
    if let Some(c) = tuning.cthre {
        cfg.affinity.c_thre = c;
    }
    if let Some(a) = tuning.athre {
        cfg.affinity.a_thre = a;
    }
    cfg.validate()?;
    Ok((cfg, iou))
}

fn load_detections(det: &Path, appearance: Option<&Path>) -> Result<DetectionSet> {
    let mut dets = io_mot::parse_det_file(det)?.detections;
    if let Some(path) = appearance {
        let table = io_mot::read_appearance(path)?;
        io_mot::attach_appearance(&mut dets, table).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(dets)
}

fn fmt_f(v: f64) -> String {
    // Adding zero folds -0.0 into 0.0.
    format!("{:.6}", v + 0.0)
}

fn energy_rows(trace: &[(u32, f64)], window: Option<u32>) -> String {
    let mut s = String::new();
    let prefix = window.map(|w| format!("{w},")).unwrap_or_default();
    if trace.is_empty() {
        writeln!(s, "{prefix}0,{}", fmt_f(0.0)).unwrap();
    }
    for &(f, e) in trace {
        writeln!(s, "{prefix}{f},{}", fmt_f(e)).unwrap();
    }
    s
}

fn track(a: &TrackArgs) -> Result<()> {
    let mut window = DEFAULT_WINDOW;
    if let Some(path) = &a.seqinfo {
        window = io_mot::read_seqinfo(path)?.default_window();
    }
    let (mut cfg, _) = tracker_config(window, &a.tuning)?;
    if let Some(w) = a.window {
        cfg.window_length = w;
    }
    let dets = load_detections(&a.det, a.appearance.as_deref())?;
    log::info!("tracking {} detections with window {}", dets.len(), cfg.window_length);
    let run = run_sequence(&dets, &cfg)?;

    let mut out = OutputSet::new();
    out.add(&a.out, format_results(&run.tracks));
    if let Some(path) = &a.energy_csv {
        out.add(path, format!("frame,energy\n{}", energy_rows(&run.energy, None)));
    }
    out.commit()?;
    Ok(())
}

struct SweepJob<'a> {
    window: u32,
    dets: &'a DetectionSet,
    gt: &'a TrackSet,
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let windows = dedup_windows(&a.windows.0);
    let (base, iou) = tracker_config(windows[0], &a.tuning)?;
    let iou = iou.unwrap_or(DEFAULT_IOU_MIN);

    // One (detections, gt) pair per seed.
    let scenes: Vec<(DetectionSet, TrackSet)> = match (&a.preset, &a.det, &a.gt) {
        (Some(name), _, _) => {
            let spec = scenario_suite(name)?.remove(0);
            (1..=a.seeds)
                .map(|seed| {
                    let s = generate_scene(&spec.clone().with_seed(seed))?;
                    Ok((s.detections, s.gt))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(det), Some(gt)) => {
            let dets = load_detections(det, a.appearance.as_deref())?;
            let gt = io_mot::parse_gt_file(gt)?.tracks;
            (1..=a.seeds).map(|_| (dets.clone(), gt.clone())).collect()
        }
        _ => bail!("sweep needs --preset or both --det and --gt"),
    };

    // Rows come out window-major, seeds ascending within a window.
    let jobs: Vec<SweepJob> = windows
        .iter()
        .flat_map(|&window| scenes.iter().map(move |(dets, gt)| SweepJob { window, dets, gt }))
        .collect();
    let rows: Vec<String> = jobs
        .par_iter()
        .map(|job| -> Result<String> {
            let cfg = TrackerConfig { window_length: job.window, ..base };
            let start = Instant::now();
            let run = run_sequence(job.dets, &cfg)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let m = clear_mot(job.gt, &run.tracks, iou)?;
            Ok(format!("{},{},{},{},{:.3}\n", job.window, fmt_f(run.final_energy), fmt_f(m.mota), m.ids, ms))
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("window_length,final_energy,mota,ids,runtime_ms\n");
    rows.iter().for_each(|r| csv.push_str(r));
    let mut out = OutputSet::new();
    out.add(&a.out, csv);
    out.commit()?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let gt = io_mot::parse_gt_file(&a.gt)?.tracks;
    let res = io_mot::parse_gt_file(&a.res).context("result file")?.tracks;
    let m = clear_mot(&gt, &res, a.iou)?;
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a.gt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sequence".into()),
    };
    let csv = format!(
        "sequence,mota,motp,mt,ml,fp,fn,ids,fg\n{name},{},{},{},{},{},{},{},{}\n",
        fmt_f(m.mota),
        fmt_f(m.motp),
        m.mt,
        m.ml,
        m.fp,
        m.fn_,
        m.ids,
        m.fg
    );
    let mut out = OutputSet::new();
    out.add(&a.out, csv);
    out.commit()?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec: ScenarioSpec = match (&a.preset, &a.spec) {
        (Some(name), None) => scenario_suite(name)?.remove(0),
        (None, Some(path)) => read_scene_spec(path).with_context(|| format!("reading {}", path.display()))?,
        _ => bail!("give exactly one of --preset and --spec"),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let scene = generate_scene(&spec)?;
    fs::create_dir_all(&a.outdir).with_context(|| format!("creating {}", a.outdir.display()))?;
    let mut out = OutputSet::new();
    out.add(a.outdir.join("det.txt"), format_detections(&scene.detections));
    out.add(a.outdir.join("gt.txt"), format_gt(&scene.gt));
    out.add(a.outdir.join("appearance.txt"), format_appearance(&scene.detections));
    out.commit()?;
    Ok(())
}

fn energy(a: &EnergyArgs) -> Result<()> {
    let windows = dedup_windows(&a.windows.0);
    let (base, _) = tracker_config(windows[0], &a.tuning)?;
    let dets = load_detections(&a.det, a.appearance.as_deref())?;
    let mut csv = String::from(if windows.len() == 1 { "frame,energy\n" } else { "window_length,frame,energy\n" });
    for &w in &windows {
        let mut tracker = Tracker::new(TrackerConfig { window_length: w, ..base })?;
        let run = actrack_core::optimizer::run_with(&mut tracker, &dets)?;
        csv.push_str(&energy_rows(&run.energy, (windows.len() > 1).then_some(w)));
    }
    let mut out = OutputSet::new();
    out.add(&a.out, csv);
    out.commit()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn window_lists() {
        assert_eq!(parse_windows("1, 2,5").unwrap(), WindowList(vec![1, 2, 5]));
        assert!(parse_windows("1,0").is_err());
        assert!(parse_windows("a").is_err());
        assert_eq!(dedup_windows(&[5, 1, 5, 2, 1]), vec![5, 1, 2]);
    }

    #[test]
    fn energy_rows_of_empty_trace() {
        assert_eq!(energy_rows(&[], None), "0,0.000000\n");
        assert_eq!(energy_rows(&[(1, -0.0), (2, -1.5)], Some(3)), "3,1,0.000000\n3,2,-1.500000\n");
    }
}
