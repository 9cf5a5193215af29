//! Per-nucleus appearance and shape descriptors from an instance label map.
//!
//! Each nucleus yields sixteen scalar descriptors plus its centroid, which
//! together make up the seventeen nuclear descriptors used as node features.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pnm::PnmImage;

mod glcm;
mod intensity;
mod shape;

pub use glcm::{glcm_features, GlcmFeatures, GLCM_LEVELS};
pub use intensity::{intensity_stats, IntensityStats, ENTROPY_BINS};
pub use shape::{convex_hull_area, shape_features, ShapeFeatures};

/// Chebyshev radius of the background ring used for the fore/background
/// intensity difference.
pub const BACKGROUND_RING: usize = 3;

/// Number of scalar descriptors per nucleus, not counting the centroid.
pub const DESCRIPTOR_LEN: usize = 16;

pub const DESCRIPTOR_NAMES: [&str; DESCRIPTOR_LEN] = [
    "mean_intensity",
    "fg_bg_difference",
    "intensity_std",
    "intensity_skewness",
    "intensity_entropy",
    "glcm_dissimilarity",
    "glcm_homogeneity",
    "glcm_energy",
    "glcm_asm",
    "eccentricity",
    "area",
    "major_axis_length",
    "minor_axis_length",
    "perimeter",
    "solidity",
    "orientation",
];

/// Nucleus instance labels: 0 is background, every positive value is one
/// nucleus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid(format!(
                "label map has {} entries for {height}x{width}",
                labels.len()
            )));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        LabelMap {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, label: u32) {
        self.labels[r * self.width + c] = label;
    }

    pub fn from_pnm(img: &PnmImage) -> Result<Self> {
        if img.channels != 1 {
            return Err(Error::invalid("label map must be a single-channel graymap"));
        }
        LabelMap::new(
            img.height,
            img.width,
            img.samples.iter().map(|&s| u32::from(s)).collect(),
        )
    }

    /// 16-bit graymap encoding; labels above 65535 do not fit.
    pub fn to_pnm(&self) -> Result<PnmImage> {
        let samples = self
            .labels
            .iter()
            .map(|&l| u16::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds 65535"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(PnmImage {
            width: self.width,
            height: self.height,
            maxval: 65535,
            channels: 1,
            samples,
        })
    }
}

/// Grayscale intensities on the 0..=255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl IntensityImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "intensity image has {} entries for {height}x{width}",
                values.len()
            )));
        }
        Ok(IntensityImage { height, width, values })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }

    /// Graymaps are rescaled to 0..=255; pixmaps are converted with luma
    /// weights 0.299/0.587/0.114.
    pub fn from_pnm(img: &PnmImage) -> Result<Self> {
        let scale = 255.0 / f64::from(img.maxval);
        let values = match img.channels {
            1 => img.samples.iter().map(|&s| f64::from(s) * scale).collect(),
            3 => img
                .samples
                .chunks_exact(3)
                .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) * scale)
                .collect(),
            n => return Err(Error::invalid(format!("unsupported channel count {n}"))),
        };
        IntensityImage::new(img.height, img.width, values)
    }

    /// 8-bit graymap, values rounded and clamped.
    pub fn to_pnm(&self) -> PnmImage {
        PnmImage {
            width: self.width,
            height: self.height,
            maxval: 255,
            channels: 1,
            samples: self.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u16).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }

    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }
}

/// One segmented nucleus.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRegion {
    pub label: u32,
    /// `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    pub foreground: Vec<f64>,
    /// Intensities of non-nucleus pixels within [`BACKGROUND_RING`] of the
    /// nucleus.
    pub background: Vec<f64>,
}

impl InstanceRegion {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Region membership over the bounding box padded by `pad`, row-major,
    /// with the padded box's origin in image coordinates (may be negative).
    pub(crate) fn local_mask(&self, pad: usize) -> LocalMask {
        let h = self.bbox.height() + 2 * pad;
        let w = self.bbox.width() + 2 * pad;
        let mut mask = vec![false; h * w];
        for &(r, c) in &self.pixels {
            mask[(r - self.bbox.min_row + pad) * w + (c - self.bbox.min_col + pad)] = true;
        }
        LocalMask {
            height: h,
            width: w,
            origin: (
                self.bbox.min_row as isize - pad as isize,
                self.bbox.min_col as isize - pad as isize,
            ),
            mask,
        }
    }
}

pub(crate) struct LocalMask {
    pub height: usize,
    pub width: usize,
    pub origin: (isize, isize),
    pub mask: Vec<bool>,
}

impl LocalMask {
    #[inline]
    pub fn at(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.height
            && (c as usize) < self.width
            && self.mask[r as usize * self.width + c as usize]
    }
}

pub fn extract_instances(labels: &LabelMap, img: &IntensityImage) -> Result<Vec<InstanceRegion>> {
    if labels.height != img.height || labels.width != img.width {
        return Err(Error::Shape {
            op: "extract_instances",
            lhs: (labels.height, labels.width),
            rhs: (img.height, img.width),
        });
    }
    let mut groups: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for r in 0..labels.height {
        for c in 0..labels.width {
            let l = labels.get(r, c);
            if l != 0 {
                groups.entry(l).or_default().push((r, c));
            }
        }
    }
    let ring = BACKGROUND_RING;
    let regions = groups
        .into_iter()
        .map(|(label, pixels)| {
            let mut bbox = BoundingBox {
                min_row: usize::MAX,
                min_col: usize::MAX,
                max_row: 0,
                max_col: 0,
            };
            for &(r, c) in &pixels {
                bbox.min_row = bbox.min_row.min(r);
                bbox.min_col = bbox.min_col.min(c);
                bbox.max_row = bbox.max_row.max(r);
                bbox.max_col = bbox.max_col.max(c);
            }
            let foreground = pixels.iter().map(|&(r, c)| img.get(r, c)).collect();
            let mut region = InstanceRegion {
                label,
                pixels,
                bbox,
                foreground,
                background: Vec::new(),
            };
            // Dilate the local mask by a (2*ring+1) square, separably.
            let local = region.local_mask(ring);
            let (h, w) = (local.height, local.width);
            let mut horiz = vec![false; h * w];
            for r in 0..h {
                for c in 0..w {
                    let lo = c.saturating_sub(ring);
                    let hi = (c + ring).min(w - 1);
                    horiz[r * w + c] = (lo..=hi).any(|cc| local.mask[r * w + cc]);
                }
            }
            for r in 0..h {
                for c in 0..w {
                    let lo = r.saturating_sub(ring);
                    let hi = (r + ring).min(h - 1);
                    if !(lo..=hi).any(|rr| horiz[rr * w + c]) {
                        continue;
                    }
                    let ir = local.origin.0 + r as isize;
                    let ic = local.origin.1 + c as isize;
                    if ir < 0 || ic < 0 || ir as usize >= labels.height || ic as usize >= labels.width {
                        continue;
                    }
                    let (ir, ic) = (ir as usize, ic as usize);
                    if labels.get(ir, ic) == 0 {
                        region.background.push(img.get(ir, ic));
                    }
                }
            }
            region
        })
        .collect();
    Ok(regions)
}

/// Sixteen scalar descriptors of one nucleus plus its centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: [f64; DESCRIPTOR_LEN],
    /// `(row, col)` in image coordinates.
    pub centroid: (f64, f64),
}

pub fn describe(region: &InstanceRegion, img: &IntensityImage) -> Result<Descriptor> {
    let i = intensity_stats(region)?;
    let g = glcm_features(region, img)?;
    let s = shape_features(region)?;
    Ok(Descriptor {
        values: [
            i.mean,
            i.fg_bg_diff,
            i.std,
            i.skewness,
            i.entropy,
            g.dissimilarity,
            g.homogeneity,
            g.energy,
            g.asm,
            s.eccentricity,
            s.area,
            s.major_axis,
            s.minor_axis,
            s.perimeter,
            s.solidity,
            s.orientation,
        ],
        centroid: s.centroid,
    })
}

/// One descriptor per nucleus, in ascending label order.
pub fn build_descriptors(labels: &LabelMap, img: &IntensityImage) -> Result<Vec<Descriptor>> {
    extract_instances(labels, img)?
        .iter()
        .map(|region| describe(region, img))
        .collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn square(label: u32, top: usize, left: usize, side: usize, map: &mut LabelMap) {
        for r in top..top + side {
            for c in left..left + side {
                map.set(r, c, label);
            }
        }
    }

    pub fn disk(label: u32, center: (f64, f64), radius: f64, map: &mut LabelMap) {
        for r in 0..map.height {
            for c in 0..map.width {
                let dr = r as f64 - center.0;
                let dc = c as f64 - center.1;
                if dr * dr + dc * dc <= radius * radius {
                    map.set(r, c, label);
                }
            }
        }
    }

    pub fn flat(height: usize, width: usize, value: f64) -> IntensityImage {
        IntensityImage::new(height, width, vec![value; height * width]).unwrap()
    }

    pub fn region_of(labels: &LabelMap, img: &IntensityImage, label: u32) -> InstanceRegion {
        extract_instances(labels, img)
            .unwrap()
            .into_iter()
            .find(|r| r.label == label)
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::test_support::*;
    use super::*;

    #[test]
    fn empty_map_has_no_instances() {
        let labels = LabelMap::zeros(8, 8);
        let img = flat(8, 8, 10.0);
        assert!(extract_instances(&labels, &img).unwrap().is_empty());
        assert!(build_descriptors(&labels, &img).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let labels = LabelMap::zeros(8, 8);
        let img = flat(8, 9, 10.0);
        assert!(extract_instances(&labels, &img).is_err());
    }

    #[test]
    fn single_square() {
        let mut labels = LabelMap::zeros(12, 12);
        square(1, 3, 4, 5, &mut labels);
        let regions = extract_instances(&labels, &flat(12, 12, 1.0)).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].area(), 25);
        assert_eq!(regions[0].label, 1);
    }

    #[test]
    fn touching_squares_are_disjoint() {
        let mut labels = LabelMap::zeros(12, 16);
        square(1, 2, 2, 4, &mut labels);
        square(2, 2, 6, 4, &mut labels);
        let regions = extract_instances(&labels, &flat(12, 16, 1.0)).unwrap();
        assert_eq!(regions.len(), 2);
        let a: HashSet<_> = regions[0].pixels.iter().copied().collect();
        let b: HashSet<_> = regions[1].pixels.iter().copied().collect();
        assert!(a.is_disjoint(&b));
        // Pixel-set oracle: rebuild from the map directly.
        for (region, label) in regions.iter().zip([1u32, 2]) {
            let expected: HashSet<_> = (0..12)
                .flat_map(|r| (0..16).map(move |c| (r, c)))
                .filter(|&(r, c)| labels.get(r, c) == label)
                .collect();
            assert_eq!(region.pixels.iter().copied().collect::<HashSet<_>>(), expected);
        }
        // Dilated box is rows 0..=8, cols 0..=8 after clipping; the
        // neighbour covers 4x3 of it and never counts as background.
        assert_eq!(regions[0].background.len(), 81 - 16 - 12);
    }

    #[test]
    fn background_ring_is_chebyshev_three() {
        let mut labels = LabelMap::zeros(20, 20);
        labels.set(10, 10, 1);
        let region = region_of(&labels, &flat(20, 20, 5.0), 1);
        assert_eq!(region.background.len(), 7 * 7 - 1);

        // Clipped at the image border.
        let mut corner = LabelMap::zeros(20, 20);
        corner.set(0, 0, 1);
        let region = region_of(&corner, &flat(20, 20, 5.0), 1);
        assert_eq!(region.background.len(), 4 * 4 - 1);
    }

    #[test]
    fn rgb_input_uses_luma() {
        let img = PnmImage {
            width: 1,
            height: 1,
            maxval: 255,
            channels: 3,
            samples: vec![100, 200, 50],
        };
        let gray = IntensityImage::from_pnm(&img).unwrap();
        assert!((gray.values[0] - (29.9 + 117.4 + 5.7)).abs() < 1e-9);
    }

    #[test]
    fn one_nucleus_gives_one_full_descriptor() {
        let mut labels = LabelMap::zeros(16, 16);
        square(7, 4, 4, 6, &mut labels);
        let d = build_descriptors(&labels, &flat(16, 16, 80.0)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].values.len() + 1, 17);
        assert_eq!(d[0].centroid, (6.5, 6.5));
    }
}
