//! Model checkpoints: a JSON manifest next to one WOPN file per network.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Architecture, DeepONet, GreenONet, OperatorModel, SensorGrid};
use crate::error::{Error, Result};
use crate::network::FnnParams;
use crate::physics::WaveProblem;

const FORMAT: &str = "greenonet-model";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub dim: usize,
    /// One entry per sensor.
    pub sensors: Vec<Vec<f64>>,
    /// Role (`branch`, `trunk`, `kernel`) to file name, relative to the
    /// manifest.
    pub networks: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<WaveProblem>,
}

/// A model together with the problem it was trained for, if recorded.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub model: OperatorModel,
    pub problem: Option<WaveProblem>,
}

/// Write `<dir>/<stem>.json` and its network files; returns the manifest
/// path.
pub fn save_model(
    model: &OperatorModel,
    problem: Option<&WaveProblem>,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sensors = model.sensors();
    let mut networks = BTreeMap::new();
    let mut write_net = |role: &str, net: &FnnParams| -> Result<()> {
        let name = format!("{stem}.{role}.wopn");
        net.save(dir.join(&name))?;
        networks.insert(role.to_string(), name);
        Ok(())
    };
    match model {
        OperatorModel::DeepONet(m) => {
            write_net("branch", &m.branch)?;
            write_net("trunk", &m.trunk)?;
        }
        OperatorModel::GreenONet(m) => write_net("kernel", &m.kernel)?,
    }
    let manifest = ModelManifest {
        format: FORMAT.into(),
        version: 1,
        architecture: model.architecture(),
        dim: sensors.dim(),
        sensors: (0..sensors.len()).map(|i| sensors.point(i)).collect(),
        networks,
        problem: problem.cloned(),
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if manifest.format != FORMAT || manifest.version != 1 {
        return Err(Error::Validation(format!(
            "{} is not a version 1 {FORMAT} manifest",
            path.display()
        )));
    }
    let m = manifest.sensors.len();
    if manifest.sensors.iter().any(|p| p.len() != manifest.dim) {
        return Err(Error::Validation(format!(
            "every sensor must have {} coordinates",
            manifest.dim
        )));
    }
    let flat: Vec<f64> = (0..manifest.dim)
        .flat_map(|d| manifest.sensors.iter().map(move |p| p[d]))
        .collect();
    let sensors = SensorGrid::new(Array2::from_shape_vec((manifest.dim, m), flat).unwrap())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let net = |role: &str| -> Result<FnnParams> {
        let name = manifest.networks.get(role).ok_or_else(|| {
            Error::Validation(format!("manifest lists no {role} network"))
        })?;
        FnnParams::load(base.join(name))
    };
    let model = match manifest.architecture {
        Architecture::DeepONet => DeepONet::new(net("branch")?, net("trunk")?, sensors)?.into(),
        Architecture::GreenONet => GreenONet::new(net("kernel")?, sensors)?.into(),
    };
    if let Some(p) = &manifest.problem {
        p.validate()?;
        if p.dim != manifest.dim {
            return Err(Error::Validation(format!(
                "problem dimension {} does not match sensors {}",
                p.dim, manifest.dim
            )));
        }
    }
    Ok(SavedModel {
        model,
        problem: manifest.problem,
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    text.split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column.saturating_sub(1)
}
