//! Cell graphs: sampled nuclei as nodes, spatial proximity as edges.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Descriptor, DESCRIPTOR_LEN};
use crate::tensor::{CsrMatrix, Tensor};

pub mod bundle;
mod edges;
mod normalize;
mod sampling;

pub use edges::{knn_edges, reweight, Adjacency, EdgeConfig};
pub use normalize::{FeatureSet, NormalizationStats, STD_FLOOR};
pub use sampling::{
    farthest_point_sample, farthest_point_sample_from, fused_sample, sample_nodes, SamplerConfig, SamplingMode,
};

/// Per-node input width: the scalar descriptors followed by the centroid.
pub const NODE_INPUT_DIM: usize = DESCRIPTOR_LEN + 2;

pub const N_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grade {
    Normal,
    LowGrade,
    HighGrade,
}

impl Grade {
    pub const ALL: [Grade; N_CLASSES] = [Grade::Normal, Grade::LowGrade, Grade::HighGrade];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Grade> {
        Grade::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Grade::Normal => "normal",
            Grade::LowGrade => "low-grade",
            Grade::HighGrade => "high-grade",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Grade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grade::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown grade {s:?}")))
    }
}

/// Construction settings recorded with every graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub sampler: SamplerConfig,
    pub edges: EdgeConfig,
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.edges.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGraph {
    /// `(row, col)` centroid per node, in pixels.
    pub coords: Vec<[f64; 2]>,
    pub descriptors: Vec<[f64; DESCRIPTOR_LEN]>,
    pub adjacency: Adjacency,
    /// Re-weighted row-stochastic propagation operator.
    pub operator: CsrMatrix,
    pub label: Option<Grade>,
    pub config: GraphConfig,
    pub seed: u64,
    /// Source image, shared by all patches cut from it.
    pub image_id: Option<String>,
}

impl CellGraph {
    /// Validates and derives the operator from `adjacency` and `config.edges.p`.
    pub fn new(
        coords: Vec<[f64; 2]>,
        descriptors: Vec<[f64; DESCRIPTOR_LEN]>,
        adjacency: Adjacency,
        label: Option<Grade>,
        config: GraphConfig,
        seed: u64,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if descriptors.len() != n || adjacency.n() != n {
            return Err(Error::invalid(format!(
                "graph parts disagree: {n} coords, {} descriptors, {} adjacency rows",
                descriptors.len(),
                adjacency.n()
            )));
        }
        let finite = coords
            .iter()
            .flatten()
            .chain(descriptors.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite node value"));
        }
        let operator = reweight(&adjacency, config.edges.p);
        Ok(CellGraph {
            coords,
            descriptors,
            adjacency,
            operator,
            label,
            config,
            seed,
            image_id: None,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Raw `n x NODE_INPUT_DIM` inputs: descriptors then `(row, col)`.
    pub fn node_inputs(&self) -> Tensor {
        Tensor::from_fn(self.n(), NODE_INPUT_DIM, |r, c| {
            if c < DESCRIPTOR_LEN {
                self.descriptors[r][c]
            } else {
                self.coords[r][c - DESCRIPTOR_LEN]
            }
        })
    }

    /// Same graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CellGraph {
        let n = self.n();
        let mut coords = vec![[0.0; 2]; n];
        let mut descriptors = vec![[0.0; DESCRIPTOR_LEN]; n];
        for i in 0..n {
            coords[perm[i]] = self.coords[i];
            descriptors[perm[i]] = self.descriptors[i];
        }
        let adjacency = self.adjacency.permuted(perm);
        let operator = reweight(&adjacency, self.config.edges.p);
        CellGraph {
            coords,
            descriptors,
            adjacency,
            operator,
            ..self.clone()
        }
    }
}

/// Sampling, edge construction, and re-weighting for one image's nuclei.
pub fn assemble_graph(
    descriptors: &[Descriptor],
    config: &GraphConfig,
    label: Option<Grade>,
    seed: u64,
) -> Result<CellGraph> {
    if descriptors.is_empty() {
        return Err(Error::EmptyGraph);
    }
    config.edges.validate()?;
    let all_coords: Vec<[f64; 2]> = descriptors.iter().map(|d| [d.centroid.0, d.centroid.1]).collect();
    let keep = sample_nodes(&all_coords, &config.sampler, seed)?;
    let coords: Vec<[f64; 2]> = keep.iter().map(|&i| all_coords[i]).collect();
    let values = keep.iter().map(|&i| descriptors[i].values).collect();
    let adjacency = knn_edges(&coords, &config.edges)?;
    CellGraph::new(coords, values, adjacency, label, config.clone(), seed)
}
