use serde::{Deserialize, Serialize};

use super::ModelError;

fn default_input_dim() -> usize {
    9
}
fn default_mlp1() -> Vec<usize> {
    vec![64, 64]
}
fn default_mlp2() -> Vec<usize> {
    vec![64, 128, 256]
}
fn default_seg_head() -> Vec<usize> {
    vec![128, 64]
}
fn default_tnet_shared() -> Vec<usize> {
    vec![32, 64]
}
fn default_tnet_dense() -> Vec<usize> {
    vec![32]
}
fn default_points_per_block() -> usize {
    1024
}

/// Layer widths and options of the segmentation network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointNetConfig {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    /// Shared per-point layers whose output is the local feature.
    #[serde(default = "default_mlp1")]
    pub mlp1_widths: Vec<usize>,
    /// Per-point layers feeding the max-pool; the last width is the global
    /// feature size.
    #[serde(default = "default_mlp2")]
    pub mlp2_widths: Vec<usize>,
    #[serde(default = "default_seg_head")]
    pub seg_head_widths: Vec<usize>,
    /// 0 means "take it from the class vocabulary" in run configurations.
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default)]
    pub use_tnet: bool,
    #[serde(default = "default_tnet_shared")]
    pub tnet_shared_widths: Vec<usize>,
    #[serde(default = "default_tnet_dense")]
    pub tnet_dense_widths: Vec<usize>,
    #[serde(default = "default_points_per_block")]
    pub points_per_block: usize,
}

/// One affine layer: `weight` is [fan_in × fan_out].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    fn new(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self {
            name: name.into(),
            fan_in,
            fan_out,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

impl PointNetConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            input_dim: default_input_dim(),
            mlp1_widths: default_mlp1(),
            mlp2_widths: default_mlp2(),
            seg_head_widths: default_seg_head(),
            num_classes,
            use_tnet: false,
            tnet_shared_widths: default_tnet_shared(),
            tnet_dense_widths: default_tnet_dense(),
            points_per_block: default_points_per_block(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1".into());
        }
        if self.points_per_block == 0 {
            return bad("points_per_block must be at least 1".into());
        }
        if self.mlp1_widths.is_empty() || self.mlp2_widths.is_empty() {
            return bad("mlp1_widths and mlp2_widths must be non-empty".into());
        }
        let mut all = self
            .mlp1_widths
            .iter()
            .chain(&self.mlp2_widths)
            .chain(&self.seg_head_widths);
        if all.any(|&w| w == 0) {
            return bad("layer widths must be at least 1".into());
        }
        if self.use_tnet {
            if self.input_dim < 3 {
                return bad("the T-Net needs at least 3 input columns (XYZ)".into());
            }
            if self.tnet_shared_widths.is_empty()
                || self
                    .tnet_shared_widths
                    .iter()
                    .chain(&self.tnet_dense_widths)
                    .any(|&w| w == 0)
            {
                return bad("T-Net widths must be non-empty and at least 1".into());
            }
        }
        Ok(())
    }

    fn chain(prefix: &str, fan_in: usize, widths: &[usize], out: &mut Vec<LayerShape>) -> usize {
        let mut prev = fan_in;
        for (i, &w) in widths.iter().enumerate() {
            out.push(LayerShape::new(format!("{prefix}.{i}"), prev, w));
            prev = w;
        }
        prev
    }

    pub fn mlp1_layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        Self::chain("mlp1", self.input_dim, &self.mlp1_widths, &mut out);
        out
    }

    pub fn mlp2_layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        Self::chain("mlp2", self.local_feature_dim(), &self.mlp2_widths, &mut out);
        out
    }

    /// Hidden segmentation-head layers followed by the logits layer.
    pub fn seg_layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        let fan_in = self.local_feature_dim() + self.global_feature_dim();
        let last = Self::chain("seg", fan_in, &self.seg_head_widths, &mut out);
        out.push(LayerShape::new("seg.out", last, self.num_classes));
        out
    }

    /// Shared T-Net layers, dense T-Net layers, and the 9-way output layer.
    pub fn tnet_layers(&self) -> (Vec<LayerShape>, Vec<LayerShape>, LayerShape) {
        let mut shared = Vec::new();
        let pooled = Self::chain("tnet.shared", 3, &self.tnet_shared_widths, &mut shared);
        let mut dense = Vec::new();
        let last = Self::chain("tnet.dense", pooled, &self.tnet_dense_widths, &mut dense);
        (shared, dense, LayerShape::new("tnet.out", last, 9))
    }

    pub fn local_feature_dim(&self) -> usize {
        *self.mlp1_widths.last().expect("validated")
    }

    pub fn global_feature_dim(&self) -> usize {
        *self.mlp2_widths.last().expect("validated")
    }

    /// Every affine layer of the network in forward order.
    pub fn layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        if self.use_tnet {
            let (shared, dense, last) = self.tnet_layers();
            out.extend(shared);
            out.extend(dense);
            out.push(last);
        }
        out.extend(self.mlp1_layers());
        out.extend(self.mlp2_layers());
        out.extend(self.seg_layers());
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(LayerShape::param_count).sum()
    }
}
