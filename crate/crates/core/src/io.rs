//! On-disk artifacts: single-model files, tree files and ensemble manifests.
//!
//! Everything is pretty-printed JSON with a trailing newline. Struct fields
//! serialize in declaration order and tables use ordered maps, so identical
//! inputs produce byte-identical files. Doubles are written with the
//! shortest representation that parses back to the same value.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Standardizer, Task};
use crate::ensemble::{ElcnConfig, ElcnModel, LINK};
use crate::error::{LcnError, Result};
use crate::network::{predict_eval, LcnParameters, Variant};
use crate::training::TrainConfig;
use crate::tree::{tree_predict, ObliqueTree};

pub const MODEL_FORMAT: &str = "lcn-model/v1";
pub const TREE_FORMAT: &str = "lcn-tree/v1";
pub const ENSEMBLE_FORMAT: &str = "lcn-ensemble/v1";

/// Column names, task and input transform shared by every artifact kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub task: Task,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
}

impl ModelMeta {
    /// Applies the stored standardization, if any.
    pub fn prepare(&self, x: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    #[serde(flatten)]
    pub meta: ModelMeta,
    /// Configuration the model was trained with.
    pub train_config: Option<TrainConfig>,
    pub params: LcnParameters,
}

impl ModelFile {
    pub fn new(meta: ModelMeta, train_config: Option<TrainConfig>, params: LcnParameters) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            meta,
            train_config,
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub format: String,
    #[serde(flatten)]
    pub meta: ModelMeta,
    pub tree: ObliqueTree,
}

impl TreeFile {
    pub fn new(meta: ModelMeta, tree: ObliqueTree) -> Self {
        TreeFile {
            format: TREE_FORMAT.into(),
            meta,
            tree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    /// How component outputs combine (summed before any link function).
    pub link: String,
    pub base_variant: Variant,
    #[serde(flatten)]
    pub meta: ModelMeta,
    pub config: ElcnConfig,
    /// Component model files, relative to the manifest's directory.
    pub components: Vec<String>,
}

fn to_text<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| LcnError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = to_text(value, path)?;
    fs::write(path, text).map_err(|e| LcnError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LcnError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| LcnError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn check_format(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(LcnError::data(
            Some(path),
            format!("expected a `{expected}` file, found `{found}`"),
        ));
    }
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    write_json(path, model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let m: ModelFile = read_json(path)?;
    check_format(path, &m.format, MODEL_FORMAT)?;
    Ok(m)
}

pub fn save_tree(path: impl AsRef<Path>, tree: &TreeFile) -> Result<()> {
    write_json(path, tree)
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<TreeFile> {
    let path = path.as_ref();
    let t: TreeFile = read_json(path)?;
    check_format(path, &t.format, TREE_FORMAT)?;
    Ok(t)
}

fn component_name(stage: usize) -> String {
    format!("component_{stage:04}.json")
}

/// Writes ensemble components as they finish, then the manifest.
#[derive(Debug)]
pub struct EnsembleWriter {
    dir: PathBuf,
    meta: ModelMeta,
    config: ElcnConfig,
    components: Vec<String>,
}

impl EnsembleWriter {
    /// Creates `dir` if needed.
    pub fn create(dir: impl AsRef<Path>, meta: ModelMeta, config: ElcnConfig) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| LcnError::io(&dir, e))?;
        Ok(EnsembleWriter {
            dir,
            meta,
            config,
            components: Vec::new(),
        })
    }

    pub fn write_component(&mut self, stage: usize, params: LcnParameters) -> Result<()> {
        let name = component_name(stage);
        let stage_config = TrainConfig {
            seed: crate::rng::stage_seed(self.config.train.seed, stage),
            ..self.config.train.clone()
        };
        let file = ModelFile::new(self.meta.clone(), Some(stage_config), params);
        save_model(self.dir.join(&name), &file)?;
        self.components.push(name);
        Ok(())
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        let manifest = EnsembleManifest {
            format: ENSEMBLE_FORMAT.into(),
            link: LINK.into(),
            base_variant: self.config.architecture.variant,
            meta: self.meta,
            config: self.config,
            components: self.components,
        };
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

/// Loads a manifest and every component it lists.
pub fn load_ensemble(manifest_path: impl AsRef<Path>) -> Result<(EnsembleManifest, ElcnModel)> {
    let path = manifest_path.as_ref();
    let manifest: EnsembleManifest = read_json(path)?;
    check_format(path, &manifest.format, ENSEMBLE_FORMAT)?;
    if manifest.link != LINK {
        return Err(LcnError::data(Some(path), format!("unsupported link `{}`", manifest.link)));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let components = manifest
        .components
        .iter()
        .map(|c| load_model(dir.join(c)).map(|m| m.params))
        .collect::<Result<Vec<_>>>()?;
    let model = ElcnModel::new(components)?;
    Ok((manifest, model))
}

/// Any artifact that can make predictions.
#[derive(Debug, Clone)]
pub enum Predictor {
    Network(ModelFile),
    Tree(TreeFile),
    Ensemble(EnsembleManifest, ElcnModel),
}

impl Predictor {
    /// Detects the artifact kind from its `format` field.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let value: serde_json::Value = read_json(path)?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => Ok(Predictor::Network(load_model(path)?)),
            Some(TREE_FORMAT) => Ok(Predictor::Tree(load_tree(path)?)),
            Some(ENSEMBLE_FORMAT) => {
                let (m, e) = load_ensemble(path)?;
                Ok(Predictor::Ensemble(m, e))
            }
            other => Err(LcnError::data(
                Some(path),
                format!("unrecognized artifact format {other:?}"),
            )),
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        match self {
            Predictor::Network(m) => &m.meta,
            Predictor::Tree(t) => &t.meta,
            Predictor::Ensemble(m, _) => &m.meta,
        }
    }

    /// Output on a raw (unstandardized) feature row.
    pub fn predict(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let x = self.meta().prepare(raw);
        match self {
            Predictor::Network(m) => predict_eval(&m.params, &x),
            Predictor::Tree(t) => tree_predict(&t.tree, &x),
            Predictor::Ensemble(_, e) => crate::ensemble::elcn_predict(e, &x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use crate::tree::lcn_to_tree;

    fn meta() -> ModelMeta {
        ModelMeta {
            task: Task::Classification,
            feature_names: vec!["a".into(), "b".into()],
            label_names: vec!["y".into()],
            standardizer: Some(Standardizer {
                mean: vec![0.5, -0.25],
                std: vec![2.0, 0.1],
            }),
        }
    }

    #[test]
    fn model_round_trip_is_exact_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = LcnParameters::init_seeded(&Architecture::new(4, Variant::Lcn).with_head_hidden(vec![3]), 2, 1, 9)
            .unwrap();
        let file = ModelFile::new(meta(), Some(TrainConfig::classification()), p);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_model(&a, &file).unwrap();
        let back = load_model(&a).unwrap();
        assert_eq!(back, file);
        save_model(&b, &back).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert!(String::from_utf8(fs::read(&a).unwrap())
            .unwrap()
            .contains("jacobian_rows_then_bias_features/v1"));
    }

    #[test]
    fn predictor_detects_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p = LcnParameters::init_seeded(&Architecture::new(3, Variant::Lcn), 2, 1, 1).unwrap();
        let mp = dir.path().join("m.json");
        let tp = dir.path().join("t.json");
        save_model(&mp, &ModelFile::new(meta(), None, p.clone())).unwrap();
        save_tree(&tp, &TreeFile::new(meta(), lcn_to_tree(&p).unwrap())).unwrap();
        let net = Predictor::load(&mp).unwrap();
        let tree = Predictor::load(&tp).unwrap();
        let x = [0.3, 0.7];
        assert_eq!(net.predict(&x).unwrap(), tree.predict(&x).unwrap());
        assert!(load_tree(&mp).is_err());
    }

    #[test]
    fn ensemble_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ElcnConfig::classification();
        cfg.architecture = Architecture::new(3, Variant::Alcn);
        let mut w = EnsembleWriter::create(dir.path().join("ens"), meta(), cfg.clone()).unwrap();
        let comps: Vec<LcnParameters> =
            (0..2).map(|s| LcnParameters::init_seeded(&cfg.architecture, 2, 1, s).unwrap()).collect();
        for (i, c) in comps.iter().enumerate() {
            w.write_component(i + 1, c.clone()).unwrap();
        }
        let path = w.finish().unwrap();
        let (manifest, model) = load_ensemble(&path).unwrap();
        assert_eq!(manifest.components, vec!["component_0001.json", "component_0002.json"]);
        assert_eq!(model.components(), comps.as_slice());
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(LINK) && text.contains("amsgrad"));
    }
}
