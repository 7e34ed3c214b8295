//! Flat `key = value` files: tracker overrides and synthetic scene specs.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors so typos do not pass silently.

use std::path::Path;

use actrack_core::synth::{scenario_suite, OcclusionEvent, RandomOcclusions, ScenarioSpec, OCCLUSION_LENGTH_P};
use actrack_core::TrackerConfig;
use thiserror::Error;

use crate::io_mot::{read_text, MotError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] MotError),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("unknown key {key:?} on line {line}")]
    UnknownKey { line: usize, key: String },
}

/// `(line, key, value)` triples in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Line { line: i + 1, msg: "expected key = value".into() })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Line { line, msg: format!("invalid value {v:?} for {key}") })
}

/// Apply tracker overrides. Returns the `iou` override when present.
pub fn apply_tracker_overrides(text: &str, cfg: &mut TrackerConfig) -> Result<Option<f64>, ConfigError> {
    let mut iou = None;
    for (line, key, v) in parse_pairs(text)? {
        let a = &mut cfg.affinity;
        match key.as_str() {
            "window" | "window_length" => cfg.window_length = value(line, &key, &v)?,
            "min_track_length" => cfg.min_track_length = value(line, &key, &v)?,
            "c_thre" | "cthre" => a.c_thre = value(line, &key, &v)?,
            "a_thre" | "athre" => a.a_thre = value(line, &key, &v)?,
            "var_mot" => a.var_mot = value(line, &key, &v)?,
            "var_shp" => a.var_shp = value(line, &key, &v)?,
            "discount" => a.discount = value(line, &key, &v)?,
            "process_noise" => a.process_noise = value(line, &key, &v)?,
            "measurement_noise" => a.measurement_noise = value(line, &key, &v)?,
            "init_velocity_var" => a.init_velocity_var = value(line, &key, &v)?,
            "shape_smoothing" => a.shape_smoothing = value(line, &key, &v)?,
            "iou" => iou = Some(value(line, &key, &v)?),
            _ => return Err(ConfigError::UnknownKey { line, key }),
        }
    }
    Ok(iou)
}

pub fn read_tracker_overrides(path: &Path, cfg: &mut TrackerConfig) -> Result<Option<f64>, ConfigError> {
    apply_tracker_overrides(&read_text(path)?, cfg)
}

/// Scene spec from key/value text. `preset = NAME` (first) starts from a
/// preset; `occlusion = target:start:length` may repeat.
pub fn parse_scene_spec(text: &str) -> Result<ScenarioSpec, ConfigError> {
    let pairs = parse_pairs(text)?;
    let mut spec = ScenarioSpec::default();
    for (line, key, v) in pairs {
        match key.as_str() {
            "preset" => {
                let seed = spec.seed;
                spec = scenario_suite(&v)
                    .map_err(|e| ConfigError::Line { line, msg: e.to_string() })?
                    .remove(0)
                    .with_seed(seed);
            }
            "name" => spec.name = v,
            "n_targets" => spec.n_targets = value(line, &key, &v)?,
            "n_frames" => spec.n_frames = value(line, &key, &v)?,
            "image_width" => spec.image_size.0 = value(line, &key, &v)?,
            "image_height" => spec.image_size.1 = value(line, &key, &v)?,
            "speed_min" => spec.speed_range.0 = value(line, &key, &v)?,
            "speed_max" => spec.speed_range.1 = value(line, &key, &v)?,
            "crossing" => spec.crossing = value(line, &key, &v)?,
            "occlusion" => {
                let parts: Vec<&str> = v.split(':').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ConfigError::Line { line, msg: "occlusion expects target:start:length".into() });
                }
                spec.occlusions.push(OcclusionEvent {
                    target: value(line, &key, parts[0])?,
                    start: value(line, &key, parts[1])?,
                    length: value(line, &key, parts[2])?,
                });
            }
            "random_occlusion_rate" => {
                let r = spec.random_occlusions.get_or_insert(RandomOcclusions {
                    rate: 0.0,
                    length_p: OCCLUSION_LENGTH_P,
                    max_length: 125,
                });
                r.rate = value(line, &key, &v)?;
            }
            "occlusion_length_p" | "occlusion_max_length" => {
                let Some(r) = spec.random_occlusions.as_mut() else {
                    return Err(ConfigError::Line { line, msg: format!("{key} needs random_occlusion_rate first") });
                };
                if key == "occlusion_length_p" {
                    r.length_p = value(line, &key, &v)?;
                } else {
                    r.max_length = value(line, &key, &v)?;
                }
            }
            "miss_rate" => spec.miss_rate = value(line, &key, &v)?,
            "clutter_rate" => spec.clutter_rate = value(line, &key, &v)?,
            "duplicate_rate" => spec.duplicate_rate = value(line, &key, &v)?,
            "appearance_noise" => spec.appearance_noise = value(line, &key, &v)?,
            "appearance_bins" => spec.appearance_bins = value(line, &key, &v)?,
            "center_jitter" => spec.center_jitter = value(line, &key, &v)?,
            "size_jitter" => spec.size_jitter = value(line, &key, &v)?,
            "velocity_noise" => spec.velocity_noise = value(line, &key, &v)?,
            "seed" => spec.seed = value(line, &key, &v)?,
            _ => return Err(ConfigError::UnknownKey { line, key }),
        }
    }
    Ok(spec)
}

pub fn read_scene_spec(path: &Path) -> Result<ScenarioSpec, ConfigError> {
    parse_scene_spec(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_overrides() {
        let mut cfg = TrackerConfig::default();
        let iou = apply_tracker_overrides("# comment\nwindow = 7\nc_thre=0.6\n\niou = 0.3\n", &mut cfg).unwrap();
        assert_eq!(cfg.window_length, 7);
        assert_eq!(cfg.affinity.c_thre, 0.6);
        assert_eq!(iou, Some(0.3));
        assert!(matches!(
            apply_tracker_overrides("windw = 3", &mut cfg),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(apply_tracker_overrides("window = x", &mut cfg).is_err());
        assert!(apply_tracker_overrides("window", &mut cfg).is_err());
    }

    #[test]
    fn scene_spec_from_preset_and_keys() {
        let s = parse_scene_spec("preset = crossing\nn_frames = 30\nocclusion = 1:5:3\nseed = 9\n").unwrap();
        assert!(s.crossing);
        assert_eq!(s.n_targets, 2);
        assert_eq!(s.n_frames, 30);
        assert_eq!(s.occlusions, vec![OcclusionEvent { target: 1, start: 5, length: 3 }]);
        assert_eq!(s.seed, 9);

        let s = parse_scene_spec("random_occlusion_rate = 2\nocclusion_max_length = 10\n").unwrap();
        assert_eq!(s.random_occlusions.unwrap().max_length, 10);
        assert!(parse_scene_spec("occlusion_length_p = 0.5\n").is_err());
        assert!(parse_scene_spec("preset = nope\n").is_err());
        assert!(parse_scene_spec("occlusion = 1:2\n").is_err());
    }
}
