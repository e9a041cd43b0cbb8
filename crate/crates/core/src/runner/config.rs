//! Experiment configuration and named presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{LossWeights, SpeedField, WaveProblem};
use crate::training::{AdamConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureChoice {
    DeepONet,
    GreenONet,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub length_scale: f64,
    pub sensors: usize,
    pub samples: usize,
    /// 0 disables test-loss evaluation.
    pub test_samples: usize,
    pub residual_points: usize,
    pub boundary_points: usize,
    pub initial_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub width: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub minibatches: usize,
    pub lr0: f64,
    pub decay: f64,
    pub eval_every: usize,
    pub shuffle: bool,
    pub weights: LossWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scale: Scale,
    pub architecture: ArchitectureChoice,
    pub seed: u64,
    pub problem: WaveProblem,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
}

pub const PRESETS: [&str; 8] = [
    "exp1-paper",
    "exp1-desk",
    "exp2-paper",
    "exp2-desk",
    "exp3-paper",
    "exp3-desk",
    "exp2d-paper",
    "exp2d-desk",
];

struct Row {
    dim: usize,
    speed: SpeedField,
    l: f64,
    m: usize,
    n: usize,
    p: (usize, usize, usize),
    w: (f64, f64, f64),
    lr0: f64,
    decay: f64,
    epochs: usize,
    mb: usize,
}

fn paper_row(exp: &str) -> Option<Row> {
    let homogeneous = SpeedField::Homogeneous { c: 1.0 };
    Some(match exp {
        "exp1" => Row {
            dim: 1,
            speed: homogeneous,
            l: 0.5,
            m: 21,
            n: 1000,
            p: (10, 10, 10),
            w: (0.1, 10.0, 10.0),
            lr0: 1e-3,
            decay: 0.9995,
            epochs: 5000,
            mb: 16,
        },
        "exp2" => Row {
            dim: 1,
            speed: homogeneous,
            l: 0.1,
            m: 60,
            n: 3000,
            p: (30, 3, 3),
            w: (0.2, 100.0, 100.0),
            lr0: 5e-4,
            decay: 0.999,
            epochs: 2000,
            mb: 128,
        },
        "exp3" => Row {
            dim: 1,
            speed: SpeedField::Heaviside { x0: 0.5 },
            l: 0.3,
            m: 30,
            n: 2000,
            p: (15, 3, 3),
            w: (1.0, 100.0, 100.0),
            lr0: 1e-3,
            decay: 0.9995,
            epochs: 2500,
            mb: 32,
        },
        "exp2d" => Row {
            dim: 2,
            speed: homogeneous,
            l: 1.0,
            m: 49,
            n: 50000,
            p: (1, 1, 1),
            w: (1.0, 100.0, 100.0),
            lr0: 1e-3,
            decay: 0.9995,
            epochs: 400,
            mb: 100,
        },
        _ => return None,
    })
}

/// `(N, epochs, minibatches)` at desk scale.
fn desk_sizes(exp: &str) -> (usize, usize, usize) {
    match exp {
        "exp1" => (100, 500, 16),
        "exp2" => (300, 200, 32),
        "exp3" => (200, 250, 16),
        _ => (5000, 40, 50),
    }
}

/// A named preset such as `exp1-desk`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let unknown = || {
        Error::Config(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESETS.join(", ")
        ))
    };
    let (exp, scale) = name.rsplit_once('-').ok_or_else(unknown)?;
    let row = paper_row(exp).ok_or_else(unknown)?;
    let (scale, n, epochs, mb, width, depth) = match scale {
        "paper" => (Scale::Paper, row.n, row.epochs, row.mb, 50, 6),
        "desk" => {
            let (n, e, mb) = desk_sizes(exp);
            (Scale::Desk, n, e, mb, 20, 3)
        }
        _ => return Err(unknown()),
    };
    let final_time = if row.dim == 1 { 2.0 } else { 1.5 };
    Ok(ExperimentConfig {
        name: name.to_string(),
        scale,
        architecture: ArchitectureChoice::Both,
        seed: 0,
        problem: WaveProblem {
            dim: row.dim,
            final_time,
            speed: row.speed,
        },
        data: DataConfig {
            length_scale: row.l,
            sensors: row.m,
            samples: n,
            test_samples: (n / 10).max(20),
            residual_points: row.p.0,
            boundary_points: row.p.1,
            initial_points: row.p.2,
        },
        network: NetworkConfig { width, depth },
        training: TrainingConfig {
            epochs,
            minibatches: mb,
            lr0: row.lr0,
            decay: row.decay,
            eval_every: 10,
            shuffle: true,
            weights: LossWeights {
                w_r: row.w.0,
                w_bc: row.w.1,
                w_ic: row.w.2,
            },
        },
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // a new speed kind replaces the old table wholesale
                    Some(slot) if k != "speed" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl ExperimentConfig {
    /// Parse TOML, optionally overlaid on a preset.
    pub fn from_toml_str(text: &str, base: Option<&str>) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let value = match base {
            Some(name) => {
                let mut v = toml::Value::try_from(preset(name)?).expect("preset serializes");
                merge(&mut v, over);
                v
            }
            None => over,
        };
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, base: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every offending field with the reason.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.name.trim().is_empty() {
            bad.push("name: must not be empty".into());
        }
        if let Err(e) = self.problem.validate() {
            bad.push(format!("problem: {e}"));
        }
        let d = &self.data;
        if !(d.length_scale > 0.0 && d.length_scale.is_finite()) {
            bad.push(format!("data.length_scale: must be positive, got {}", d.length_scale));
        }
        match self.problem.dim {
            1 if d.sensors < 2 => bad.push(format!("data.sensors: need at least 2, got {}", d.sensors)),
            2 => {
                let side = (d.sensors as f64).sqrt().round() as usize;
                if side * side != d.sensors || side < 2 {
                    bad.push(format!(
                        "data.sensors: must be a perfect square of at least 4 in 2D, got {}",
                        d.sensors
                    ));
                }
            }
            _ => {}
        }
        for (field, v) in [
            ("data.samples", d.samples),
            ("data.residual_points", d.residual_points),
            ("data.boundary_points", d.boundary_points),
            ("data.initial_points", d.initial_points),
            ("network.width", self.network.width),
            ("network.depth", self.network.depth),
        ] {
            if v == 0 {
                bad.push(format!("{field}: must be at least 1"));
            }
        }
        if self.training.minibatches > d.samples && d.samples > 0 {
            bad.push(format!(
                "training.minibatches: {} exceeds data.samples {}",
                self.training.minibatches, d.samples
            ));
        }
        bad.extend(
            self.train_config()
                .problems()
                .into_iter()
                .map(|p| format!("training.{p}")),
        );
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.problems();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidFields(bad))
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            minibatches: t.minibatches,
            lr0: t.lr0,
            decay: t.decay,
            adam: AdamConfig::default(),
            seed: self.seed.wrapping_add(2),
            weights: t.weights,
            eval_every: t.eval_every,
            shuffle: t.shuffle,
            divergence_threshold: 1e6,
        }
    }

    pub fn train_set_seed(&self) -> u64 {
        self.seed
    }

    pub fn test_set_seed(&self) -> u64 {
        self.seed ^ 0x7e57_0000_0000_0000
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_presets() {
        let e1 = preset("exp1-paper").unwrap();
        assert_eq!(e1.data.sensors, 21);
        assert_eq!(e1.data.length_scale, 0.5);
        assert_eq!(e1.data.samples, 1000);
        assert_eq!(e1.training.weights, LossWeights { w_r: 0.1, w_bc: 10.0, w_ic: 10.0 });
        assert_eq!((e1.training.lr0, e1.training.decay), (1e-3, 0.9995));
        assert_eq!((e1.training.epochs, e1.training.minibatches), (5000, 16));
        assert_eq!((e1.network.width, e1.network.depth), (50, 6));

        let e3 = preset("exp3-paper").unwrap();
        assert_eq!(e3.problem.speed, SpeedField::Heaviside { x0: 0.5 });
        assert_eq!((e3.data.length_scale, e3.data.sensors, e3.data.samples), (0.3, 30, 2000));
        assert_eq!(
            (e3.data.residual_points, e3.data.boundary_points, e3.data.initial_points),
            (15, 3, 3)
        );
        assert_eq!(e3.training.weights, LossWeights { w_r: 1.0, w_bc: 100.0, w_ic: 100.0 });
        assert_eq!((e3.training.epochs, e3.training.minibatches), (2500, 32));

        let e2 = preset("exp2-paper").unwrap();
        assert_eq!((e2.data.length_scale, e2.data.sensors, e2.training.lr0), (0.1, 60, 5e-4));
        let e2d = preset("exp2d-paper").unwrap();
        assert_eq!((e2d.problem.dim, e2d.data.sensors, e2d.data.samples), (2, 49, 50000));
        assert_eq!(e2d.problem.final_time, 1.5);
    }

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("exp9-desk").is_err());
    }

    #[test]
    fn overlay_and_round_trip() {
        let cfg = ExperimentConfig::from_toml_str("seed = 7\n[training]\nepochs = 3\n", Some("exp1-desk")).unwrap();
        assert_eq!((cfg.seed, cfg.training.epochs), (7, 3));
        assert_eq!(cfg.data.samples, 100);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml(), None).unwrap();
        assert_eq!(again, cfg);
        let het = ExperimentConfig::from_toml_str(
            "[problem.speed]\nkind = \"heaviside\"\nx0 = 0.25\n",
            Some("exp1-desk"),
        )
        .unwrap();
        assert_eq!(het.problem.speed, SpeedField::Heaviside { x0: 0.25 });
    }

    #[test]
    fn validation_lists_every_field() {
        let text = "[data]\nsamples = 0\nlength_scale = -1.0\n[training]\ndecay = 2.0\n";
        match ExperimentConfig::from_toml_str(text, Some("exp1-desk")) {
            Err(Error::InvalidFields(f)) => {
                let joined = f.join("\n");
                for field in ["data.length_scale", "data.samples", "training.decay"] {
                    assert!(joined.contains(field), "{joined}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_toml_reports_offset() {
        match ExperimentConfig::from_toml_str("seed = = 3", None) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= 10),
            other => panic!("{other:?}"),
        }
    }
}
