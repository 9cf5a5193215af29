use serde::{Deserialize, Serialize};

use super::{CellGraph, NODE_INPUT_DIM};
use crate::error::{Error, Result};
use crate::features::DESCRIPTOR_LEN;
use crate::tensor::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Which node input channels reach the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Descriptors and centroid.
    #[default]
    AppearanceSpatial,
    /// Descriptors only.
    Appearance,
    /// Centroid only.
    Spatial,
}

impl FeatureSet {
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            FeatureSet::AppearanceSpatial => 0..NODE_INPUT_DIM,
            FeatureSet::Appearance => 0..DESCRIPTOR_LEN,
            FeatureSet::Spatial => DESCRIPTOR_LEN..NODE_INPUT_DIM,
        }
    }

    pub fn dim(self) -> usize {
        self.channels().len()
    }
}

/// Channel-wise z-score statistics, fitted on training graphs only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Identity transform, for models that see raw inputs.
    pub fn identity() -> Self {
        NormalizationStats {
            mean: vec![0.0; NODE_INPUT_DIM],
            std: vec![1.0; NODE_INPUT_DIM],
        }
    }

    /// Population mean and standard deviation over every node of every graph.
    pub fn fit<'a>(graphs: impl IntoIterator<Item = &'a CellGraph>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; NODE_INPUT_DIM];
        let inputs: Vec<Tensor> = graphs.into_iter().map(CellGraph::node_inputs).collect();
        for x in &inputs {
            for r in 0..x.rows() {
                for (s, v) in sum.iter_mut().zip(x.row(r)) {
                    *s += v;
                }
            }
            count += x.rows();
        }
        if count == 0 {
            return Err(Error::invalid("cannot fit normalization on an empty training set"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = [0.0; NODE_INPUT_DIM];
        for x in &inputs {
            for r in 0..x.rows() {
                for ((s, v), m) in sq.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormalizationStats { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != NODE_INPUT_DIM || self.std.len() != NODE_INPUT_DIM {
            return Err(Error::invalid(format!(
                "normalization stats need {NODE_INPUT_DIM} channels"
            )));
        }
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("normalization stats must be finite with positive std"));
        }
        Ok(())
    }

    /// Normalized model inputs for `graph`, restricted to `features`.
    pub fn apply(&self, graph: &CellGraph, features: FeatureSet) -> Tensor {
        let raw = graph.node_inputs();
        let channels = features.channels();
        let offset = channels.start;
        Tensor::from_fn(raw.rows(), channels.len(), |r, c| {
            let ch = c + offset;
            (raw.get(r, ch) - self.mean[ch]) / self.std[ch]
        })
    }

    /// Short stable identifier, recorded alongside artifacts that depend on it.
    pub fn id(&self) -> String {
        // FNV-1a over the exact bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.mean.iter().chain(&self.std) {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}
