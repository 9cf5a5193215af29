use std::collections::VecDeque;
use std::f64::consts::SQRT_2;

use super::InstanceRegion;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeFeatures {
    pub eccentricity: f64,
    pub area: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub perimeter: f64,
    pub solidity: f64,
    /// Angle of the major axis from the column axis towards increasing rows,
    /// in `(-π/2, π/2]`.
    pub orientation: f64,
    /// `(row, col)`.
    pub centroid: (f64, f64),
}

/// Moore neighbourhood, clockwise on screen starting west.
const DIRS: [(isize, isize); 8] = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)];

fn dir_index(d: (isize, isize)) -> usize {
    DIRS.iter().position(|&x| x == d).expect("unit offset")
}

pub fn shape_features(region: &InstanceRegion) -> Result<ShapeFeatures> {
    let n = region.pixels.len();
    if n == 0 {
        return Err(Error::invalid("empty region"));
    }
    let nf = n as f64;
    let (sum_r, sum_c) = region
        .pixels
        .iter()
        .fold((0usize, 0usize), |(a, b), &(r, c)| (a + r, b + c));
    let centroid = (sum_r as f64 / nf, sum_c as f64 / nf);

    // Second central moments with the 1/12 variance of a unit pixel.
    let (mut rr, mut cc, mut rc) = (0.0, 0.0, 0.0);
    for &(r, c) in &region.pixels {
        let dr = r as f64 - centroid.0;
        let dc = c as f64 - centroid.1;
        rr += dr * dr;
        cc += dc * dc;
        rc += dr * dc;
    }
    let (rr, cc, rc) = (rr / nf + 1.0 / 12.0, cc / nf + 1.0 / 12.0, rc / nf);
    let half_trace = (rr + cc) / 2.0;
    let spread = (((rr - cc) / 2.0).powi(2) + rc * rc).sqrt();
    let l1 = half_trace + spread;
    let l2 = (half_trace - spread).max(0.0);
    let major_axis = 4.0 * l1.sqrt();
    let minor_axis = 4.0 * l2.sqrt();
    let eccentricity = (1.0 - l2 / l1).max(0.0).sqrt();
    let orientation = 0.5 * (2.0 * rc).atan2(cc - rr);

    let hull = convex_hull_area(&region.pixels);
    let solidity = if hull > 0.0 { (nf / hull).min(1.0) } else { 1.0 };

    Ok(ShapeFeatures {
        eccentricity,
        area: nf,
        major_axis,
        minor_axis,
        perimeter: perimeter(region),
        solidity,
        orientation,
        centroid,
    })
}

/// Area of the convex hull of pixel centres (monotone chain + shoelace).
pub fn convex_hull_area(pixels: &[(usize, usize)]) -> f64 {
    let mut pts: Vec<(i64, i64)> = pixels.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let twice: i64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.unsigned_abs() as f64 / 2.0
}

/// Length of the traced outer contour of every 8-connected component, with
/// axial steps weighing 1 and diagonal steps √2.
fn perimeter(region: &InstanceRegion) -> f64 {
    let local = region.local_mask(1);
    let (h, w) = (local.height, local.width);
    let mut seen = vec![false; h * w];
    let mut total = 0.0;
    for start in 0..h * w {
        if !local.mask[start] || seen[start] {
            continue;
        }
        // Flood the component so each one is traced once.
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for (dr, dc) in DIRS {
                let (nr, nc) = (r + dr, c + dc);
                if local.at(nr, nc) {
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        total += trace_contour(&local, ((start / w) as isize, (start % w) as isize));
    }
    total
}

/// Moore-neighbour tracing from the raster-first pixel of a component, whose
/// west neighbour is background. Stops on re-entering the start pixel in the
/// direction of the first move.
fn trace_contour(local: &super::LocalMask, start: (isize, isize)) -> f64 {
    let mut current = start;
    let mut backtrack = 0usize;
    let mut first_dir = None;
    let mut length = 0.0;
    loop {
        let Some(d) = (1..=8)
            .map(|k| (backtrack + k) % 8)
            .find(|&d| local.at(current.0 + DIRS[d].0, current.1 + DIRS[d].1))
        else {
            return 0.0;
        };
        match first_dir {
            None => first_dir = Some(d),
            Some(f) if current == start && d == f => return length,
            Some(_) => {}
        }
        let next = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
        let prev = DIRS[(d + 7) % 8];
        let prev_pos = (current.0 + prev.0, current.1 + prev.1);
        backtrack = dir_index((prev_pos.0 - next.0, prev_pos.1 - next.1));
        length += if d % 2 == 0 { 1.0 } else { SQRT_2 };
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::super::test_support::*;
    use super::super::LabelMap;
    use super::*;

    fn shape_of(labels: &LabelMap) -> ShapeFeatures {
        let img = flat(labels.height, labels.width, 0.0);
        shape_features(&region_of(labels, &img, 1)).unwrap()
    }

    #[test]
    fn digital_disk() {
        let mut labels = LabelMap::zeros(50, 50);
        disk(1, (25.0, 25.0), 20.0, &mut labels);
        let s = shape_of(&labels);
        assert!(s.eccentricity <= 0.05, "eccentricity {}", s.eccentricity);
        assert!(s.solidity >= 0.98, "solidity {}", s.solidity);
        let rel = (s.perimeter - 2.0 * PI * 20.0).abs() / (2.0 * PI * 20.0);
        assert!(rel <= 0.05, "perimeter {} off by {rel}", s.perimeter);
        assert_eq!(s.centroid, (25.0, 25.0));
    }

    #[test]
    fn single_pixel() {
        let mut labels = LabelMap::zeros(5, 5);
        labels.set(2, 3, 1);
        let s = shape_of(&labels);
        assert_eq!((s.area, s.eccentricity, s.solidity, s.perimeter), (1.0, 0.0, 1.0, 0.0));
        assert!(s.major_axis > 0.0);
        assert_eq!(s.major_axis, s.minor_axis);
    }

    #[test]
    fn bars_align_with_their_axis() {
        let mut horizontal = LabelMap::zeros(5, 14);
        for c in 2..12 {
            horizontal.set(2, c, 1);
        }
        let s = shape_of(&horizontal);
        assert!(s.orientation.abs() < 1e-12);
        assert!(s.minor_axis < s.major_axis);
        assert_eq!(s.perimeter, 18.0);

        let mut vertical = LabelMap::zeros(14, 5);
        for r in 2..12 {
            vertical.set(r, 2, 1);
        }
        let s = shape_of(&vertical);
        assert!((s.orientation - PI / 2.0).abs() < 1e-12);

        let mut diagonal = LabelMap::zeros(14, 14);
        for i in 2..12 {
            diagonal.set(i, i, 1);
        }
        let s = shape_of(&diagonal);
        assert!((s.orientation - PI / 4.0).abs() < 1e-12);
        assert!((s.perimeter - 18.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn square_perimeter_and_hull() {
        let mut labels = LabelMap::zeros(10, 10);
        square(1, 2, 2, 5, &mut labels);
        let s = shape_of(&labels);
        // Contour through boundary pixel centres: 4 sides of 4 steps.
        assert_eq!(s.perimeter, 16.0);
        assert_eq!(
            convex_hull_area(&region_of(&labels, &flat(10, 10, 0.0), 1).pixels),
            16.0
        );
        assert_eq!(s.solidity, 1.0);
    }

    #[test]
    fn concave_shape_has_lower_solidity() {
        // A U shape: 7x7 square with a 5x5 notch from the top.
        let mut labels = LabelMap::zeros(11, 11);
        square(1, 2, 2, 7, &mut labels);
        for r in 2..7 {
            for c in 3..8 {
                labels.set(r, c, 0);
            }
        }
        let s = shape_of(&labels);
        assert!(s.solidity < 0.9, "solidity {}", s.solidity);
        assert!(s.solidity > 0.0);
    }

    #[test]
    fn disconnected_components_sum_perimeters() {
        let mut labels = LabelMap::zeros(10, 20);
        square(1, 2, 2, 3, &mut labels);
        square(1, 2, 10, 3, &mut labels);
        assert_eq!(shape_of(&labels).perimeter, 16.0);
    }
}
