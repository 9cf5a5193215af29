use super::intensity::quantize;
use super::{InstanceRegion, IntensityImage};
use crate::error::{Error, Result};

pub const GLCM_LEVELS: usize = 8;

/// Unit offsets for 0°, 45°, 90° and 135° as `(d_row, d_col)`.
const OFFSETS: [(isize, isize); 4] = [(0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlcmFeatures {
    pub dissimilarity: f64,
    pub homogeneity: f64,
    pub energy: f64,
    pub asm: f64,
}

/// Normalized symmetric co-occurrence matrix over pixel pairs that both lie
/// inside the region, accumulated over all four orientations. `None` when the
/// region has no such pair.
pub fn cooccurrence(region: &InstanceRegion, img: &IntensityImage) -> Option<[[f64; GLCM_LEVELS]; GLCM_LEVELS]> {
    let local = region.local_mask(0);
    let level = |r: usize, c: usize| quantize(img.get(r, c), GLCM_LEVELS);
    let mut counts = [[0u64; GLCM_LEVELS]; GLCM_LEVELS];
    let mut total = 0u64;
    for &(r, c) in &region.pixels {
        let lr = r as isize - local.origin.0;
        let lc = c as isize - local.origin.1;
        for (dr, dc) in OFFSETS {
            if local.at(lr + dr, lc + dc) {
                let (nr, nc) = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                let (i, j) = (level(r, c), level(nr, nc));
                counts[i][j] += 1;
                counts[j][i] += 1;
                total += 2;
            }
        }
    }
    if total == 0 {
        return None;
    }
    let mut p = [[0.0; GLCM_LEVELS]; GLCM_LEVELS];
    for i in 0..GLCM_LEVELS {
        for j in 0..GLCM_LEVELS {
            p[i][j] = counts[i][j] as f64 / total as f64;
        }
    }
    Some(p)
}

pub fn glcm_features(region: &InstanceRegion, img: &IntensityImage) -> Result<GlcmFeatures> {
    if region.pixels.is_empty() {
        return Err(Error::invalid("empty region"));
    }
    let Some(p) = cooccurrence(region, img) else {
        // A single pixel has no pairs; treat it like a constant image.
        return Ok(GlcmFeatures {
            dissimilarity: 0.0,
            homogeneity: 1.0,
            energy: 1.0,
            asm: 1.0,
        });
    };
    let mut dissimilarity = 0.0;
    let mut homogeneity = 0.0;
    let mut asm = 0.0;
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let d = i.abs_diff(j) as f64;
            dissimilarity += v * d;
            homogeneity += v / (1.0 + d * d);
            asm += v * v;
        }
    }
    let energy = asm.sqrt();
    Ok(GlcmFeatures {
        dissimilarity,
        homogeneity,
        energy,
        asm: energy * energy,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::LabelMap;
    use super::*;

    #[test]
    fn constant_region() {
        let mut labels = LabelMap::zeros(10, 10);
        square(1, 2, 2, 5, &mut labels);
        let img = flat(10, 10, 140.0);
        let g = glcm_features(&region_of(&labels, &img, 1), &img).unwrap();
        assert_eq!((g.dissimilarity, g.homogeneity, g.asm, g.energy), (0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn two_pixel_extremes() {
        // Vertical pair: only the 90° offset sees it. Levels 0 and 7 give
        // P[0][7] = P[7][0] = 1/2.
        let mut labels = LabelMap::zeros(4, 3);
        labels.set(1, 1, 1);
        labels.set(2, 1, 1);
        let mut img = flat(4, 3, 0.0);
        img.values[2 * 3 + 1] = 255.0;
        let region = region_of(&labels, &img, 1);
        let p = cooccurrence(&region, &img).unwrap();
        assert_eq!(p[0][7], 0.5);
        assert_eq!(p[7][0], 0.5);
        let g = glcm_features(&region, &img).unwrap();
        assert_eq!(g.dissimilarity, 7.0);
        assert!((g.homogeneity - 1.0 / 50.0).abs() < 1e-15);
        assert!((g.asm - 0.5).abs() < 1e-15);
        assert_eq!(g.asm, g.energy * g.energy);
    }

    #[test]
    fn single_pixel_convention() {
        let mut labels = LabelMap::zeros(3, 3);
        labels.set(1, 1, 4);
        let img = flat(3, 3, 20.0);
        let g = glcm_features(&region_of(&labels, &img, 4), &img).unwrap();
        assert_eq!((g.dissimilarity, g.homogeneity, g.energy, g.asm), (0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn diagonal_offsets_count_inside_pairs_only() {
        // An L of three pixels (0,0), (1,0), (1,1). Inside pairs: 0° from
        // (1,0), 90° from (1,0), 135° from (1,1). The 45° partner (0,1) of
        // (1,0) is outside.
        let mut labels = LabelMap::zeros(2, 2);
        labels.set(0, 0, 1);
        labels.set(1, 0, 1);
        labels.set(1, 1, 1);
        let img = IntensityImage::new(2, 2, vec![0.0, 0.0, 40.0, 80.0]).unwrap();
        let p = cooccurrence(&region_of(&labels, &img, 1), &img).unwrap();
        // Levels: (0,0)=0, (1,0)=1, (1,1)=2. Pairs (1,0) (1,2) (2,0), each
        // counted both ways out of 6.
        let sixth = 1.0 / 6.0;
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)] {
            assert_eq!(p[i][j], sixth);
        }
    }
}
