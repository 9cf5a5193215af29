//! Synthetic tissue: glands drawn as rings of elliptical nuclei, with a
//! disruption level that scatters the rings and coarsens the nuclei.
//!
//! Disruption `t` moves every nucleus from its ring position a fraction `t`
//! of the way to an independent uniform position, enlarges nuclei, darkens
//! them, and widens the spread of their size and intensity.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_descriptors, IntensityImage, LabelMap};
use crate::graph::{assemble_graph, CellGraph, Grade, GraphConfig};

/// Placement attempts per nucleus before it is dropped.
pub const MAX_RETRIES: usize = 64;

const BACKGROUND: f64 = 215.0;
const BACKGROUND_NOISE: f64 = 4.0;
/// Border kept free so every nucleus lies fully inside the canvas.
const MARGIN: f64 = 7.0;

/// Per-image layout and appearance parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub label: Grade,
    pub n_glands: usize,
    pub nuclei_per_gland: usize,
    pub ring_radius: f64,
    /// Half-width of the uniform radial jitter around the ring.
    pub radius_jitter: f64,
    /// 0 keeps perfect rings, 1 is uniform scatter.
    pub disruption: f64,
    /// Multiplier on within-nucleus pixel noise.
    pub feature_noise: f64,
    /// Side of the square canvas in pixels.
    pub canvas: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::for_grade(Grade::Normal, 0)
    }
}

impl SynthConfig {
    pub fn for_grade(label: Grade, seed: u64) -> Self {
        SynthConfig {
            label,
            n_glands: 9,
            nuclei_per_gland: 22,
            ring_radius: 32.0,
            radius_jitter: 1.5,
            disruption: default_disruption(label),
            feature_noise: 1.0,
            canvas: 320,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("synth config: {msg}")));
        if !(0.0..=1.0).contains(&self.disruption) {
            return bad("disruption must lie in [0, 1]");
        }
        if self.n_glands == 0 || self.nuclei_per_gland == 0 {
            return bad("need at least one gland and one nucleus per gland");
        }
        if !(self.ring_radius > 0.0) || !(self.radius_jitter >= 0.0) || !(self.feature_noise >= 0.0) {
            return bad("radius must be positive, jitter and noise non-negative");
        }
        let cell = self.canvas as f64 / grid_side(self.n_glands) as f64;
        if 2.0 * (self.ring_radius + self.radius_jitter + MARGIN) > cell {
            return bad("canvas too small for the requested glands");
        }
        Ok(())
    }

    /// Smallest allowed distance between nucleus centres.
    pub fn min_separation(&self) -> f64 {
        2.0 * max_semi_major(self.disruption) + 1.0
    }
}

pub fn default_disruption(label: Grade) -> f64 {
    match label {
        Grade::Normal => 0.0,
        Grade::LowGrade => 0.5,
        Grade::HighGrade => 1.0,
    }
}

fn grid_side(n_glands: usize) -> usize {
    (1..).find(|g| g * g >= n_glands).expect("finite")
}

fn max_semi_major(t: f64) -> f64 {
    3.2 + 1.8 * t
}

/// One planned nucleus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NucleusSpec {
    /// `(row, col)` centre.
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub intensity: f64,
    /// Gland the nucleus was drawn from.
    pub gland: usize,
}

/// Gland centres on a jittered square grid, in row-major order.
pub fn gland_centers<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vec<[f64; 2]> {
    let g = grid_side(cfg.n_glands);
    let cell = cfg.canvas as f64 / g as f64;
    let slack = (cell / 2.0 - cfg.ring_radius - cfg.radius_jitter - MARGIN).max(0.0);
    let jitter = slack.min(0.1 * cell);
    (0..cfg.n_glands)
        .map(|k| {
            let (gr, gc) = ((k / g) as f64, (k % g) as f64);
            let mut offset = || {
                if jitter > 0.0 {
                    rng.gen_range(-jitter..=jitter)
                } else {
                    0.0
                }
            };
            [(gr + 0.5) * cell + offset(), (gc + 0.5) * cell + offset()]
        })
        .collect()
}

/// Nucleus centres, shapes and intensities. Candidates closer than
/// [`SynthConfig::min_separation`] to an accepted nucleus are redrawn, up to
/// [`MAX_RETRIES`] times, then dropped.
pub fn place_nuclei<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<NucleusSpec>> {
    cfg.validate()?;
    let t = cfg.disruption;
    let size = cfg.canvas as f64;
    let min_sep_sq = cfg.min_separation().powi(2);
    let tone = Normal::new(100.0 - 45.0 * t, 4.0 + 14.0 * t).expect("positive spread");
    let centers = gland_centers(cfg, rng);
    let mut out: Vec<NucleusSpec> = Vec::with_capacity(cfg.n_glands * cfg.nuclei_per_gland);
    let step = std::f64::consts::TAU / cfg.nuclei_per_gland as f64;
    for (gland, &center) in centers.iter().enumerate() {
        let phase = rng.gen_range(0.0..step);
        for j in 0..cfg.nuclei_per_gland {
            for _ in 0..MAX_RETRIES {
                let theta = phase + j as f64 * step + rng.gen_range(-0.15..=0.15) * step;
                let radius = cfg.ring_radius
                    + if cfg.radius_jitter > 0.0 {
                        rng.gen_range(-cfg.radius_jitter..=cfg.radius_jitter)
                    } else {
                        0.0
                    };
                let ring = [center[0] + radius * theta.sin(), center[1] + radius * theta.cos()];
                let scatter = [
                    rng.gen_range(MARGIN..size - MARGIN),
                    rng.gen_range(MARGIN..size - MARGIN),
                ];
                let pos = [
                    (1.0 - t) * ring[0] + t * scatter[0],
                    (1.0 - t) * ring[1] + t * scatter[1],
                ];
                let spread = 0.2 + 0.6 * t;
                let semi_major = (3.0 + 1.2 * t + rng.gen_range(-1.0..=1.0) * spread).min(max_semi_major(t));
                let semi_minor = (2.4 + 0.2 * t + rng.gen_range(-1.0..=1.0) * (0.2 + 0.3 * t)).min(semi_major);
                let angle = rng.gen_range(0.0..std::f64::consts::PI);
                let intensity = tone.sample(rng).clamp(10.0, 180.0);
                let clear = out.iter().all(|n| {
                    let (dr, dc) = (n.center[0] - pos[0], n.center[1] - pos[1]);
                    dr * dr + dc * dc >= min_sep_sq
                });
                if clear {
                    out.push(NucleusSpec {
                        center: pos,
                        semi_major,
                        semi_minor,
                        angle,
                        intensity,
                        gland,
                    });
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub labels: LabelMap,
    pub image: IntensityImage,
    pub label: Grade,
    pub nuclei: Vec<NucleusSpec>,
}

fn render<R: Rng + ?Sized>(cfg: &SynthConfig, nuclei: &[NucleusSpec], rng: &mut R) -> (LabelMap, IntensityImage) {
    let n = cfg.canvas;
    let mut labels = LabelMap::zeros(n, n);
    let bg = Normal::new(BACKGROUND, BACKGROUND_NOISE).expect("positive spread");
    let mut values: Vec<f64> = (0..n * n).map(|_| bg.sample(rng)).collect();
    let pixel_noise = cfg.feature_noise * (4.0 + 12.0 * cfg.disruption);
    for (k, nuc) in nuclei.iter().enumerate() {
        let (sin, cos) = nuc.angle.sin_cos();
        let reach = nuc.semi_major.ceil() as isize + 1;
        let (cr, cc) = (nuc.center[0].round() as isize, nuc.center[1].round() as isize);
        for r in cr - reach..=cr + reach {
            for c in cc - reach..=cc + reach {
                if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
                    continue;
                }
                let (dr, dc) = (r as f64 - nuc.center[0], c as f64 - nuc.center[1]);
                let u = (dr * cos + dc * sin) / nuc.semi_major;
                let v = (-dr * sin + dc * cos) / nuc.semi_minor;
                if u * u + v * v <= 1.0 {
                    let (r, c) = (r as usize, c as usize);
                    labels.set(r, c, k as u32 + 1);
                    let noise = if pixel_noise > 0.0 {
                        rng.gen_range(-1.0..=1.0) * pixel_noise
                    } else {
                        0.0
                    };
                    values[r * n + c] = nuc.intensity + noise;
                }
            }
        }
    }
    // Integral values survive an 8-bit graymap round trip unchanged.
    for v in &mut values {
        *v = v.round().clamp(0.0, 255.0);
    }
    let image = IntensityImage::new(n, n, values).expect("sized above");
    (labels, image)
}

/// Generates one image from `rng`.
pub fn generate_image_with<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthImage> {
    let nuclei = place_nuclei(cfg, rng)?;
    let (labels, image) = render(cfg, &nuclei, rng);
    Ok(SynthImage {
        labels,
        image,
        label: cfg.label,
        nuclei,
    })
}

/// Generates one image seeded by `cfg.seed`.
pub fn generate_image(cfg: &SynthConfig) -> Result<SynthImage> {
    generate_image_with(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub per_class: usize,
    /// Share of every class assigned to training.
    pub train_fraction: f64,
    /// Layout template; `label`, `disruption` and `seed` are set per sample.
    pub image: SynthConfig,
    /// Disruption level per class, in grade order.
    pub disruption: [f64; 3],
    pub graph: GraphConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            per_class: 100,
            train_fraction: 2.0 / 3.0,
            image: SynthConfig::default(),
            disruption: Grade::ALL.map(default_disruption),
            graph: GraphConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One generated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub split: Split,
    pub graph: CellGraph,
}

/// Configuration for sample `index`, drawn from its own stream of `seed`.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Class of sample `index`: classes cycle so any prefix stays balanced.
pub fn class_of(index: usize) -> Grade {
    Grade::ALL[index % Grade::ALL.len()]
}

/// Train/test assignment. Within each class the `k`-th sample (in index
/// order) goes to training when `k` is among the class's first
/// `round(per_class * train_fraction)` positions of a seeded permutation.
pub fn split_assignment(cfg: &DatasetConfig) -> Vec<Split> {
    let n_classes = Grade::ALL.len();
    let total = cfg.per_class * n_classes;
    let n_train_total = (total as f64 * cfg.train_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut splits = vec![Split::Test; total];
    let base = n_train_total / n_classes;
    let extra = n_train_total % n_classes;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (class..total).step_by(n_classes).collect();
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut rng);
        let take = (base + usize::from(class < extra)).min(members.len());
        for &i in &members[..take] {
            splits[i] = Split::Train;
        }
    }
    splits
}

/// Image and graph for sample `index`.
pub fn generate_sample_image(cfg: &DatasetConfig, index: usize) -> Result<(SynthImage, u64)> {
    let grade = class_of(index);
    let mut rng = sample_rng(cfg.seed, index);
    let image_cfg = SynthConfig {
        label: grade,
        disruption: cfg.disruption[grade.index()],
        seed: cfg.seed,
        ..cfg.image.clone()
    };
    let image = generate_image_with(&image_cfg, &mut rng)?;
    let graph_seed = rng.next_u64();
    Ok((image, graph_seed))
}

pub fn generate_sample(cfg: &DatasetConfig, index: usize, split: Split) -> Result<(Sample, SynthImage)> {
    let (image, graph_seed) = generate_sample_image(cfg, index)?;
    let descriptors = build_descriptors(&image.labels, &image.image)?;
    let mut graph = assemble_graph(&descriptors, &cfg.graph, Some(image.label), graph_seed)?;
    let name = format!("sample_{index:05}");
    graph.image_id = Some(name.clone());
    Ok((Sample { name, split, graph }, image))
}

/// Balanced labeled dataset: image generation, nuclear descriptors and graph
/// assembly for every sample.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    if cfg.per_class == 0 {
        return Err(Error::invalid("per_class must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::invalid("train_fraction must lie in [0, 1]"));
    }
    if cfg.disruption.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("disruption must not decrease with grade"));
    }
    split_assignment(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, split)| generate_sample(cfg, i, split).map(|(s, _)| s))
        .collect()
}

/// Splits samples into `(train, test)` graph lists.
pub fn partition(samples: &[Sample]) -> (Vec<CellGraph>, Vec<CellGraph>) {
    let pick = |split| {
        samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.graph.clone())
            .collect()
    };
    (pick(Split::Train), pick(Split::Test))
}
