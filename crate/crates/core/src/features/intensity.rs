use super::InstanceRegion;
use crate::error::{Error, Result};

/// Histogram bins over 0..=255 for the intensity entropy.
pub const ENTROPY_BINS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityStats {
    pub mean: f64,
    pub fg_bg_diff: f64,
    pub std: f64,
    pub skewness: f64,
    pub entropy: f64,
}

/// Uniform binning of 0..=255 into `bins` levels.
#[inline]
pub(crate) fn quantize(value: f64, bins: usize) -> usize {
    let b = (value.clamp(0.0, 255.0) * bins as f64 / 256.0) as usize;
    b.min(bins - 1)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn intensity_stats(region: &InstanceRegion) -> Result<IntensityStats> {
    let fg = &region.foreground;
    if fg.is_empty() {
        return Err(Error::invalid("empty region"));
    }
    let mu = mean(fg);
    let n = fg.len() as f64;
    let m2 = fg.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let m3 = fg.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / n;
    let flat = fg.iter().all(|&v| v == fg[0]);
    let skewness = if flat { 0.0 } else { m3 / m2.powf(1.5) };
    let fg_bg_diff = if region.background.is_empty() {
        0.0
    } else {
        mu - mean(&region.background)
    };
    let mut hist = [0usize; ENTROPY_BINS];
    for &v in fg {
        hist[quantize(v, ENTROPY_BINS)] += 1;
    }
    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(IntensityStats {
        mean: mu,
        fg_bg_diff,
        std: if flat { 0.0 } else { m2.sqrt() },
        skewness,
        entropy: entropy.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{BoundingBox, InstanceRegion};
    use super::*;

    fn region(fg: Vec<f64>, bg: Vec<f64>) -> InstanceRegion {
        InstanceRegion {
            label: 1,
            pixels: (0..fg.len()).map(|c| (0, c)).collect(),
            bbox: BoundingBox {
                min_row: 0,
                min_col: 0,
                max_row: 0,
                max_col: fg.len().saturating_sub(1),
            },
            foreground: fg,
            background: bg,
        }
    }

    #[test]
    fn constant_nucleus_is_degenerate() {
        let s = intensity_stats(&region(vec![73.0; 40], vec![])).unwrap();
        assert_eq!((s.std, s.skewness, s.entropy, s.fg_bg_diff), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.mean, 73.0);
    }

    #[test]
    fn fore_background_difference() {
        let s = intensity_stats(&region(vec![200.0; 9], vec![100.0; 16])).unwrap();
        assert_eq!(s.fg_bg_diff, 100.0);
    }

    #[test]
    fn uniform_histogram_entropy() {
        let fg: Vec<f64> = (0..8).flat_map(|b| [b as f64 * 32.0 + 5.0; 3]).collect();
        let s = intensity_stats(&region(fg, vec![])).unwrap();
        assert!((s.entropy - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sample_moments() {
        // {0, 0, 0, 4}: mean 1, m2 = 3, m3 = (−1−1−1+27)/4 = 6.
        let s = intensity_stats(&region(vec![0.0, 0.0, 0.0, 4.0], vec![])).unwrap();
        assert_eq!(s.mean, 1.0);
        assert!((s.std - 3f64.sqrt()).abs() < 1e-15);
        assert!((s.skewness - 6.0 / 3f64.powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn empty_region_is_an_error() {
        assert!(intensity_stats(&region(vec![], vec![])).is_err());
    }

    #[test]
    fn quantize_bins() {
        assert_eq!(quantize(0.0, 8), 0);
        assert_eq!(quantize(31.9, 8), 0);
        assert_eq!(quantize(32.0, 8), 1);
        assert_eq!(quantize(255.0, 8), 7);
        assert_eq!(quantize(300.0, 8), 7);
    }
}
