//! The two lightweight segmentation networks.
//!
//! * `liunet1d`: per-pixel spectral classifier. Four blocks of
//!   valid conv1d (k=6) → ReLU → max-pool 2 with 6/12/18/24 filters,
//!   then a dense layer over the flattened features and a softmax.
//! * `unet2dsimple`: two-level U-Net on 252×252 crops. 3×3 same
//!   convolutions with 6/12/12/6/6 filters, nearest upsampling, skip
//!   concatenation of pre-pool encoder activations, 1×1 head, per-pixel
//!   softmax.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::NUM_CLASSES;
use crate::nn::{weights_file_size, Layer, LayerKind, ModelGraph, Node};

pub const LIUNET_KERNEL: usize = 6;
pub const LIUNET_FILTERS: [usize; 4] = [6, 12, 18, 24];
pub const POOL: usize = 2;
/// Spatial size of the crops fed to the 2D network.
pub const UNET_CROP: usize = 252;
pub const UNET_FILTERS: [usize; 5] = [6, 12, 12, 6, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "liunet1d")]
    LiuNet1d,
    #[serde(rename = "unet2dsimple")]
    UNet2dSimple,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LiuNet1d => "liunet1d",
            ModelKind::UNet2dSimple => "unet2dsimple",
        }
    }

    /// Display name used in reports.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::LiuNet1d => "1D LiuNet",
            ModelKind::UNet2dSimple => "2D UNet-Simple",
        }
    }

    /// `arg` is the spectral input length for the 1D net and the channel
    /// count for the 2D net.
    pub fn build(self, arg: usize) -> Result<ModelGraph> {
        match self {
            ModelKind::LiuNet1d => build_liunet_1d(arg),
            ModelKind::UNet2dSimple => build_unet2d_simple(arg),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liunet1d" => Ok(ModelKind::LiuNet1d),
            "unet2dsimple" => Ok(ModelKind::UNet2dSimple),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?}"
            ))),
        }
    }
}

fn node(name: &str, layer: Layer, inputs: &[usize]) -> Node {
    Node {
        name: name.to_string(),
        layer,
        inputs: inputs.to_vec(),
    }
}

/// Spectral length left after the four conv/pool blocks, if any.
fn liunet_final_length(input_length: usize) -> Option<usize> {
    let mut len = input_length;
    for _ in LIUNET_FILTERS {
        len = len.checked_sub(LIUNET_KERNEL - 1)?;
        len /= POOL;
        if len == 0 {
            return None;
        }
    }
    Some(len)
}

/// Shortest spectrum the 1D network accepts.
pub fn liunet_min_length() -> usize {
    (1..)
        .find(|&l| liunet_final_length(l).is_some())
        .expect("some length works")
}

pub fn build_liunet_1d(input_length: usize) -> Result<ModelGraph> {
    let final_len = liunet_final_length(input_length).ok_or(Error::InputTooShort {
        length: input_length,
        needed: liunet_min_length(),
    })?;
    let mut nodes = Vec::new();
    let mut channels = 1;
    for (i, &filters) in LIUNET_FILTERS.iter().enumerate() {
        let v = nodes.len();
        nodes.push(node(
            &format!("conv{}", i + 1),
            Layer::conv1d(LIUNET_KERNEL, channels, filters),
            &[v],
        ));
        nodes.push(node(&format!("relu{}", i + 1), Layer::Relu, &[v + 1]));
        nodes.push(node(
            &format!("pool{}", i + 1),
            Layer::MaxPool1d { pool: POOL },
            &[v + 2],
        ));
        channels = filters;
    }
    let v = nodes.len();
    nodes.push(node(
        "fc",
        Layer::dense(final_len * channels, NUM_CLASSES),
        &[v],
    ));
    nodes.push(node("softmax", Layer::Softmax, &[v + 1]));
    ModelGraph::new(
        ModelKind::LiuNet1d.as_str(),
        vec![input_length, 1],
        NUM_CLASSES,
        nodes,
    )
}

pub fn build_unet2d_simple(channels: usize) -> Result<ModelGraph> {
    if channels == 0 {
        return Err(Error::InvalidArgument(
            "2D network needs at least one channel".into(),
        ));
    }
    let [e1, e2, b, d1, d2] = UNET_FILTERS;
    let nodes = vec![
        node("enc1", Layer::conv2d(3, channels, e1), &[0]), // v1
        node("enc1_relu", Layer::Relu, &[1]),               // v2, skip 2
        node("pool1", Layer::MaxPool2d { pool: POOL }, &[2]), // v3
        node("enc2", Layer::conv2d(3, e1, e2), &[3]),       // v4
        node("enc2_relu", Layer::Relu, &[4]),               // v5, skip 1
        node("pool2", Layer::MaxPool2d { pool: POOL }, &[5]), // v6
        node("bottleneck", Layer::conv2d(3, e2, b), &[6]),  // v7
        node("bottleneck_relu", Layer::Relu, &[7]),         // v8
        node("up1", Layer::UpsampleNearest2d { factor: POOL }, &[8]), // v9
        node("cat1", Layer::Concat, &[9, 5]),               // v10
        node("dec1", Layer::conv2d(3, b + e2, d1), &[10]),  // v11
        node("dec1_relu", Layer::Relu, &[11]),              // v12
        node("up2", Layer::UpsampleNearest2d { factor: POOL }, &[12]), // v13
        node("cat2", Layer::Concat, &[13, 2]),              // v14
        node("dec2", Layer::conv2d(3, d1 + e1, d2), &[14]), // v15
        node("dec2_relu", Layer::Relu, &[15]),              // v16
        node("head", Layer::conv2d(1, d2, NUM_CLASSES), &[16]), // v17
        node("softmax", Layer::Softmax, &[17]),             // v18
    ];
    ModelGraph::new(
        ModelKind::UNet2dSimple.as_str(),
        vec![UNET_CROP, UNET_CROP, channels],
        NUM_CLASSES,
        nodes,
    )
}

/// Leading extent (spectral length, or image height) of the input and of
/// every convolution, pooling and upsampling output, with consecutive
/// repeats collapsed.
pub fn extent_chain(model: &ModelGraph) -> Vec<usize> {
    let shapes = model.value_shapes();
    let mut chain = vec![shapes[0][0]];
    for (i, n) in model.nodes().iter().enumerate() {
        let resizes = matches!(
            n.layer,
            Layer::Conv1d { .. }
                | Layer::Conv2d { .. }
                | Layer::MaxPool1d { .. }
                | Layer::MaxPool2d { .. }
                | Layer::UpsampleNearest2d { .. }
        );
        let extent = shapes[i + 1][0];
        if resizes && chain.last() != Some(&extent) {
            chain.push(extent);
        }
    }
    chain
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSize {
    pub name: String,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub parameter_count: usize,
    /// Four bytes per parameter.
    pub bytes_in_memory: usize,
    /// Size of the serialized `.wgt` file.
    pub bytes_on_disk: usize,
    pub layers: Vec<LayerSize>,
}

impl SizeReport {
    pub fn megabytes_in_memory(&self) -> f64 {
        self.bytes_in_memory as f64 / 1e6
    }

    pub fn megabytes_on_disk(&self) -> f64 {
        self.bytes_on_disk as f64 / 1e6
    }
}

pub fn size_report(model: &ModelGraph) -> SizeReport {
    let layers: Vec<LayerSize> = model
        .nodes()
        .iter()
        .filter(|n| n.layer.parameter_count() > 0)
        .map(|n| LayerSize {
            name: n.name.clone(),
            parameters: n.layer.parameter_count(),
        })
        .collect();
    let parameter_count = layers.iter().map(|l| l.parameters).sum();
    SizeReport {
        parameter_count,
        bytes_in_memory: 4 * parameter_count,
        bytes_on_disk: if parameter_count == 0 {
            0
        } else {
            weights_file_size(model)
        },
        layers,
    }
}

pub const MANIFEST_SCHEMA: &str = "modelmanifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub name: String,
    pub inputs: Vec<usize>,
    pub layer: LayerKind,
    pub output_shape: Vec<usize>,
}

/// Everything needed to rebuild a model before loading its weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema: String,
    pub kind: ModelKind,
    /// Input length (1D) or channel count (2D) passed to the builder.
    pub build_arg: usize,
    pub input_shape: Vec<usize>,
    pub parameter_count: usize,
    pub layers: Vec<ManifestLayer>,
}

impl ModelManifest {
    pub fn describe(kind: ModelKind, build_arg: usize, model: &ModelGraph) -> Self {
        let shapes = model.value_shapes();
        Self {
            schema: MANIFEST_SCHEMA.into(),
            kind,
            build_arg,
            input_shape: model.input_shape().to_vec(),
            parameter_count: model.parameter_count(),
            layers: model
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, n)| ManifestLayer {
                    name: n.name.clone(),
                    inputs: n.inputs.clone(),
                    layer: n.layer.kind(),
                    output_shape: shapes[i + 1].clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the (uninitialised) graph and checks it against the layer list.
    pub fn rebuild(&self) -> Result<ModelGraph> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::UnsupportedFormat(format!(
                "schema {:?}",
                self.schema
            )));
        }
        let model = self.kind.build(self.build_arg)?;
        let fresh = Self::describe(self.kind, self.build_arg, &model);
        if fresh.layers != self.layers || fresh.input_shape != self.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "manifest layer list does not match a fresh {} build",
                self.kind
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn liunet_parameter_count_by_hand() {
        let m = build_liunet_1d(98).unwrap();
        let r = size_report(&m);
        let per_layer: Vec<usize> = r.layers.iter().map(|l| l.parameters).collect();
        assert_eq!(per_layer, vec![42, 444, 1314, 2616, 75]);
        assert_eq!(r.parameter_count, 4491);
        assert_eq!(r.bytes_in_memory, 4 * 4491);
        assert!(r.bytes_on_disk >= r.bytes_in_memory);
    }

    #[test]
    fn liunet_chain_for_98() {
        let m = build_liunet_1d(98).unwrap();
        assert_eq!(extent_chain(&m), vec![98, 93, 46, 41, 20, 15, 7, 2, 1]);
        assert_eq!(m.output_shape(), &[3]);
    }

    #[test]
    fn liunet_minimum_length_is_91() {
        assert_eq!(liunet_min_length(), 91);
        assert!(build_liunet_1d(91).is_ok());
        assert!(matches!(
            build_liunet_1d(90),
            Err(Error::InputTooShort { needed: 91, .. })
        ));
        assert!(matches!(
            build_liunet_1d(6),
            Err(Error::InputTooShort { .. })
        ));
    }

    #[test]
    fn liunet_size_constant_over_scenarios() {
        for l in [91, 96, 98] {
            assert_eq!(build_liunet_1d(l).unwrap().parameter_count(), 4491);
        }
        // a longer spectrum leaves more than one position for the dense layer
        assert!(build_liunet_1d(198).unwrap().parameter_count() > 4491);
    }

    #[test]
    fn unet_parameter_count_by_hand() {
        let m = build_unet2d_simple(1).unwrap();
        let per_layer: Vec<usize> = size_report(&m)
            .layers
            .iter()
            .map(|l| l.parameters)
            .collect();
        assert_eq!(per_layer, vec![60, 660, 1308, 1302, 654, 21]);
        assert_eq!(m.parameter_count(), 4005);
        assert_eq!(build_unet2d_simple(6).unwrap().parameter_count(), 4275);
        assert_eq!(build_unet2d_simple(98).unwrap().parameter_count(), 9243);
        assert!(build_unet2d_simple(0).is_err());
    }

    #[test]
    fn unet_param_count_is_affine_in_channels() {
        let base = build_unet2d_simple(1).unwrap().parameter_count();
        for c in [1, 6, 98] {
            assert_eq!(
                build_unet2d_simple(c).unwrap().parameter_count(),
                base + 54 * (c - 1)
            );
        }
    }

    #[test]
    fn unet_chain() {
        let m = build_unet2d_simple(4).unwrap();
        assert_eq!(extent_chain(&m), vec![252, 126, 63, 126, 252]);
        assert_eq!(m.output_shape(), &[252, 252, 3]);
    }

    #[test]
    fn empty_model_has_no_size() {
        let g = ModelGraph::new("empty", vec![3], 3, vec![]).unwrap();
        let r = size_report(&g);
        assert_eq!(
            (r.parameter_count, r.bytes_in_memory, r.bytes_on_disk),
            (0, 0, 0)
        );
    }

    #[test]
    fn manifest_round_trip_and_rebuild() {
        let m = build_unet2d_simple(6).unwrap();
        let man = ModelManifest::describe(ModelKind::UNet2dSimple, 6, &m);
        let back: ModelManifest = serde_json::from_str(&man.to_json().unwrap()).unwrap();
        assert_eq!(back, man);
        assert_eq!(back.rebuild().unwrap().parameter_count(), 4275);

        let mut tampered = man.clone();
        tampered.layers[0].output_shape = vec![1, 1, 1];
        assert!(tampered.rebuild().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "liunet1d".parse::<ModelKind>().unwrap(),
            ModelKind::LiuNet1d
        );
        assert_eq!(ModelKind::UNet2dSimple.to_string(), "unet2dsimple");
        assert!("nnunet".parse::<ModelKind>().is_err());
    }
}
