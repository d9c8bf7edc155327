//! On-disk layout of a trained model: `model.wgt` plus `model.json` (graph
//! manifest, band selection and input transform) and `train_log.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prepare::InputTransform;
use super::train::TrainLog;
use crate::bandselect::BandSelection;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelManifest};
use crate::nn::{load_weights, save_weights, ModelGraph};

pub const WEIGHTS_FILE: &str = "model.wgt";
pub const MANIFEST_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const BUNDLE_SCHEMA: &str = "trainedmodel/1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub graph: ModelGraph,
    pub bands: BandSelection,
    pub input: InputTransform,
    pub log: Option<TrainLog>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    schema: String,
    model: ModelManifest,
    bands: BandSelection,
    input: InputTransform,
}

impl TrainedModel {
    fn build_arg(&self) -> usize {
        match self.kind {
            ModelKind::LiuNet1d => self.graph.input_shape()[0],
            ModelKind::UNet2dSimple => self.bands.len(),
        }
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest::describe(self.kind, self.build_arg(), &self.graph)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        save_weights(&self.graph, dir.join(WEIGHTS_FILE))?;
        let file = BundleFile {
            schema: BUNDLE_SCHEMA.into(),
            model: self.manifest(),
            bands: self.bands.clone(),
            input: self.input.clone(),
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&file)? + "\n",
        )?;
        if let Some(log) = &self.log {
            fs::write(
                dir.join(TRAIN_LOG_FILE),
                serde_json::to_string_pretty(log)? + "\n",
            )?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let file: BundleFile = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if file.schema != BUNDLE_SCHEMA {
            return Err(Error::UnsupportedFormat(format!(
                "schema {:?}",
                file.schema
            )));
        }
        if file.input.channels != file.bands.channel_indices {
            return Err(Error::ShapeMismatch(
                "input transform and band selection disagree".into(),
            ));
        }
        let mut graph = file.model.rebuild()?;
        load_weights(&mut graph, dir.join(WEIGHTS_FILE))?;
        let log_path = dir.join(TRAIN_LOG_FILE);
        let log = if log_path.exists() {
            Some(serde_json::from_str(&fs::read_to_string(log_path)?)?)
        } else {
            None
        };
        Ok(Self {
            kind: file.model.kind,
            graph,
            bands: file.bands,
            input: file.input,
            log,
        })
    }
}
