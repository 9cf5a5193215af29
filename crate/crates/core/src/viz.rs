//! SVG export of learned cluster assignments.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::CellGraph;
use crate::model::argmax;
use crate::tensor::Tensor;

/// Colours indexed by cluster id, repeating past the end.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

pub fn cluster_color(id: usize) -> &'static str {
    PALETTE[id % PALETTE.len()]
}

/// Cluster id of every original node at `stage` (1-based): the argmax of the
/// first assignment, then mapped through the argmax of each later one.
pub fn cluster_ids(assignments: &[Tensor], stage: usize) -> Result<Vec<usize>> {
    if stage == 0 || stage > assignments.len() {
        return Err(Error::invalid(format!(
            "stage {stage} out of range 1..={}",
            assignments.len()
        )));
    }
    let first = &assignments[0];
    let mut ids: Vec<usize> = (0..first.rows()).map(|r| argmax(first.row(r))).collect();
    for w in assignments[..stage].windows(2) {
        let (prev, s) = (&w[0], &w[1]);
        if s.rows() != prev.cols() {
            return Err(Error::invalid("assignment chain shapes do not line up"));
        }
        let map: Vec<usize> = (0..s.rows()).map(|r| argmax(s.row(r))).collect();
        ids.iter_mut().for_each(|id| *id = map[*id]);
    }
    Ok(ids)
}

/// Nodes as circles at their centroids, coloured by `ids`; edges as thin
/// lines; a legend listing the clusters present.
pub fn render_svg(graph: &CellGraph, ids: &[usize], title: &str) -> Result<String> {
    if ids.len() != graph.n() {
        return Err(Error::invalid(format!("{} ids for {} nodes", ids.len(), graph.n())));
    }
    let pad = 10.0;
    let (mut min_r, mut max_r, mut min_c, mut max_c) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &graph.coords {
        min_r = min_r.min(p[0]);
        max_r = max_r.max(p[0]);
        min_c = min_c.min(p[1]);
        max_c = max_c.max(p[1]);
    }
    let mut present: Vec<usize> = ids.to_vec();
    present.sort_unstable();
    present.dedup();
    let legend_h = 14.0 * present.len() as f64 + 8.0;
    let width = (max_c - min_c) + 2.0 * pad + 90.0;
    let height = ((max_r - min_r) + 2.0 * pad).max(legend_h + pad);
    let x = |c: f64| c - min_c + pad;
    let y = |r: f64| r - min_r + pad;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g stroke="#999999" stroke-width="0.5">"##);
    for (i, j) in graph.adjacency.edges() {
        let (a, b) = (graph.coords[i], graph.coords[j]);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            x(a[1]),
            y(a[0]),
            x(b[1]),
            y(b[0])
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g stroke="#000000" stroke-width="0.3">"##);
    for (p, &id) in graph.coords.iter().zip(ids) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            x(p[1]),
            y(p[0]),
            cluster_color(id)
        );
    }
    let _ = writeln!(s, "</g>");
    let lx = (max_c - min_c) + 2.0 * pad + 8.0;
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="10">"#);
    for (k, &id) in present.iter().enumerate() {
        let ly = pad + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{ly:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">cluster {id}</text>"#,
            cluster_color(id),
            lx + 14.0,
            ly + 9.0
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Adjacency, GraphConfig};

    fn line_graph(n: usize) -> CellGraph {
        let coords = (0..n).map(|i| [0.0, 10.0 * i as f64]).collect();
        let adj = Adjacency::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap();
        CellGraph::new(coords, vec![[0.0; 16]; n], adj, None, GraphConfig::default(), 0).unwrap()
    }

    #[test]
    fn chain_through_stages() {
        let s1 = Tensor::from_rows(&[vec![0.9, 0.1, 0.0], vec![0.2, 0.3, 0.5], vec![0.1, 0.8, 0.1]]).unwrap();
        let s2 = Tensor::from_rows(&[vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
        let both = [s1, s2];
        assert_eq!(cluster_ids(&both, 1).unwrap(), vec![0, 2, 1]);
        assert_eq!(cluster_ids(&both, 2).unwrap(), vec![1, 0, 0]);
        assert!(cluster_ids(&both, 0).is_err());
        assert!(cluster_ids(&both, 3).is_err());
    }

    #[test]
    fn svg_has_one_circle_per_node() {
        let g = line_graph(5);
        let svg = render_svg(&g, &[0, 0, 1, 1, 3], "a < b").unwrap();
        assert_eq!(svg.matches("<circle").count(), 5);
        assert_eq!(svg.matches("<line").count(), 4);
        assert!(svg.contains("cluster 3"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg, render_svg(&g, &[0, 0, 1, 1, 3], "a < b").unwrap());
        assert!(render_svg(&g, &[0], "").is_err());
    }
}
