use cgcnet::graph::NormalizationStats;
use cgcnet::model::{Model, ModelConfig};
use cgcnet::synth::{generate_dataset, DatasetConfig};
use cgcnet::viz::{cluster_color, cluster_ids, render_svg};

/// Tag names in document order, with closing tags prefixed by '/'.
fn tags(svg: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in svg.split('<').skip(1) {
        let body = &chunk[..chunk.find('>').expect("unterminated tag")];
        let name: String = body
            .trim_end_matches('/')
            .split_whitespace()
            .next()
            .unwrap()
            .to_string();
        out.push(name.clone());
        if body.ends_with('/') {
            out.push(format!("/{name}"));
        }
    }
    out
}

fn balanced(svg: &str) -> bool {
    let mut stack = Vec::new();
    for t in tags(svg) {
        if let Some(name) = t.strip_prefix('/') {
            if stack.pop().as_deref() != Some(name) {
                return false;
            }
        } else {
            stack.push(t);
        }
    }
    stack.is_empty()
}

#[test]
fn single_cluster_model_paints_one_color() {
    let samples = generate_dataset(&DatasetConfig {
        per_class: 1,
        ..DatasetConfig::default()
    })
    .unwrap();
    let g = &samples[0].graph;
    let stats = NormalizationStats::fit([g]).unwrap();
    // One stage pooling to one cluster, and two stages ending in one.
    let configs = [(vec![32], vec![1], 1), (vec![32, 32], vec![4, 1], 2)];
    for (hidden_dims, cluster_sizes, stage) in configs {
        let cfg = ModelConfig {
            hidden_dims,
            cluster_sizes,
            ..ModelConfig::default()
        };
        let model = Model::new(cfg, 0).unwrap();
        let ids = cluster_ids(&model.assignments(g, &stats).unwrap(), stage).unwrap();
        assert!(ids.iter().all(|&id| id == 0));
        let svg = render_svg(g, &ids, "one").unwrap();
        assert!(balanced(&svg));
        assert_eq!(svg.matches("<circle").count(), g.n());
        let fills: std::collections::BTreeSet<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| l.split("fill=\"").nth(1).unwrap())
            .collect();
        assert_eq!(fills.len(), 1);
    }
}

#[test]
fn trained_clusters_render_deterministically() {
    let samples = generate_dataset(&DatasetConfig {
        per_class: 1,
        seed: 3,
        ..DatasetConfig::default()
    })
    .unwrap();
    let g = &samples[1].graph;
    let stats = NormalizationStats::fit([g]).unwrap();
    let model = Model::new(ModelConfig::default(), 5).unwrap();
    let ids = cluster_ids(&model.assignments(g, &stats).unwrap(), 2).unwrap();
    let svg = render_svg(g, &ids, "stage 2").unwrap();
    assert!(balanced(&svg));
    assert_eq!(tags(&svg).iter().filter(|t| *t == "circle").count(), g.n());
    let again = Model::new(ModelConfig::default(), 5).unwrap();
    let ids_again = cluster_ids(&again.assignments(g, &stats).unwrap(), 2).unwrap();
    assert_eq!(render_svg(g, &ids_again, "stage 2").unwrap(), svg);
    for &id in &ids {
        assert!(svg.contains(&format!("fill=\"{}\"", cluster_color(id))));
    }
}
