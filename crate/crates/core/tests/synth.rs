use cgcnet::features::build_descriptors;
use cgcnet::graph::{bundle, Grade};
use cgcnet::synth::{generate_dataset, generate_image, place_nuclei, DatasetConfig, Split, SynthConfig, MAX_RETRIES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least-squares circle through `points` (algebraic fit): centre and radius.
#[allow(clippy::needless_range_loop)]
fn fit_circle(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    // Solve for (a, b, c) in x² + y² + a·x + b·y + c = 0 via the normal equations.
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for p in points {
        let row = [p[0], p[1], 1.0];
        let rhs = -(p[0] * p[0] + p[1] * p[1]);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            v[i] += row[i] * rhs;
        }
    }
    // Gaussian elimination; the system is small and well conditioned.
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        v.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        x[r] = (v[r] - (r + 1..3).map(|c| m[r][c] * x[c]).sum::<f64>()) / m[r][r];
    }
    let center = [-x[0] / 2.0, -x[1] / 2.0];
    let radius = (center[0] * center[0] + center[1] * center[1] - x[2]).sqrt();
    (center, radius)
}

#[test]
fn undisrupted_gland_is_a_ring() {
    for seed in 0..20 {
        let cfg = SynthConfig {
            n_glands: 1,
            nuclei_per_gland: 12,
            canvas: 120,
            disruption: 0.0,
            seed,
            ..SynthConfig::for_grade(Grade::Normal, seed)
        };
        let img = generate_image(&cfg).unwrap();
        let centroids: Vec<[f64; 2]> = build_descriptors(&img.labels, &img.image)
            .unwrap()
            .iter()
            .map(|d| [d.centroid.0, d.centroid.1])
            .collect();
        assert_eq!(centroids.len(), 12);
        let (center, radius) = fit_circle(&centroids);
        // Rasterization moves a centroid by well under half a pixel.
        let tol = cfg.radius_jitter + 0.5;
        assert!((radius - cfg.ring_radius).abs() <= tol, "seed {seed}: radius {radius}");
        for p in &centroids {
            let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
            assert!(
                (r - cfg.ring_radius).abs() <= tol,
                "seed {seed}: residual {}",
                r - cfg.ring_radius
            );
        }
    }
}

fn nearest_neighbor(points: &[[f64; 2]], i: usize) -> f64 {
    points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, q)| ((q[0] - points[i][0]).powi(2) + (q[1] - points[i][1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Uniform scatter over the placement box under the same hard-core
/// separation and retry budget.
fn uniform_scatter(n: usize, lo: f64, hi: f64, min_sep: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..MAX_RETRIES {
            let p = [rng.gen_range(lo..hi), rng.gen_range(lo..hi)];
            if out
                .iter()
                .all(|q| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) >= min_sep * min_sep)
            {
                out.push(p);
                break;
            }
        }
    }
    out
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.3 {
        // The alternating series converges slowly here and Q(0.3) > 0.9999.
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn full_disruption_matches_uniform_scatter() {
    let seeds = 300;
    let mut generated = Vec::with_capacity(seeds);
    let mut reference = Vec::with_capacity(seeds);
    let mut pick = ChaCha8Rng::seed_from_u64(77);
    let mut uniform = ChaCha8Rng::seed_from_u64(78);
    for seed in 0..seeds as u64 {
        let cfg = SynthConfig::for_grade(Grade::HighGrade, seed);
        assert_eq!(cfg.disruption, 1.0);
        let nuclei = place_nuclei(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let centers: Vec<[f64; 2]> = nuclei.iter().map(|n| n.center).collect();
        // One distance per image keeps the samples independent.
        generated.push(nearest_neighbor(&centers, pick.gen_range(0..centers.len())));

        let n = cfg.n_glands * cfg.nuclei_per_gland;
        let scatter = uniform_scatter(n, 7.0, cfg.canvas as f64 - 7.0, cfg.min_separation(), &mut uniform);
        reference.push(nearest_neighbor(&scatter, pick.gen_range(0..scatter.len())));
    }
    let p = ks_p_value(generated, reference);
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn ks_detects_a_different_distribution() {
    let a: Vec<f64> = (0..300).map(|i| i as f64 / 300.0).collect();
    let b: Vec<f64> = (0..300).map(|i| 0.2 + i as f64 / 300.0).collect();
    assert!(ks_p_value(a.clone(), b) < 0.01);
    assert!(ks_p_value(a.clone(), a) > 0.99);
}

#[test]
fn dataset_cardinality_balance_and_round_trip() {
    let cfg = DatasetConfig::default();
    let samples = generate_dataset(&cfg).unwrap();
    assert_eq!(samples.len(), 300);
    assert_eq!(samples.iter().filter(|s| s.split == Split::Train).count(), 200);
    for grade in Grade::ALL {
        let of_class: Vec<_> = samples.iter().filter(|s| s.graph.label == Some(grade)).collect();
        assert_eq!(of_class.len(), 100);
        let n_train = of_class.iter().filter(|s| s.split == Split::Train).count();
        assert!((66..=67).contains(&n_train));
    }
    for s in &samples {
        let g = &s.graph;
        assert!(g.n() > 0);
        for (i, j) in g.adjacency.edges() {
            assert!(i < j && j < g.n());
        }
        let meta = bundle::BundleMeta::of(g, None);
        let (back, _) = bundle::decode(
            &bundle::encode_meta(&meta),
            &bundle::encode_nodes(g),
            &bundle::encode_edges(&g.adjacency),
        )
        .unwrap();
        assert_eq!(&back, g);
    }
    assert_eq!(generate_dataset(&cfg).unwrap(), samples);
}

#[test]
fn normal_tissue_clusters_more_than_high_grade() {
    let (mut normal, mut high) = (0.0, 0.0);
    for seed in 0..50 {
        let cfg = DatasetConfig {
            per_class: 1,
            seed,
            ..DatasetConfig::default()
        };
        for s in generate_dataset(&cfg).unwrap() {
            match s.graph.label.unwrap() {
                Grade::Normal => normal += s.graph.adjacency.mean_clustering() / 50.0,
                Grade::HighGrade => high += s.graph.adjacency.mean_clustering() / 50.0,
                Grade::LowGrade => {}
            }
        }
    }
    assert!(normal > high, "normal {normal:.3} vs high grade {high:.3}");
}
