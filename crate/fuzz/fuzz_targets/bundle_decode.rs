#![no_main]

use cgcnet::graph::bundle;
use libfuzzer_sys::fuzz_target;

// Input layout: meta.json, nodes.csv and edges.csv separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut parts = text.splitn(3, '\0');
    let (Some(meta), Some(nodes), Some(edges)) = (parts.next(), parts.next(), parts.next()) else {
        let _ = bundle::parse_meta(text);
        let _ = bundle::parse_nodes(text);
        let _ = bundle::parse_edges(text, 64);
        return;
    };
    if let Ok((graph, meta)) = bundle::decode(meta, nodes, edges) {
        let again = bundle::decode(
            &bundle::encode_meta(&meta),
            &bundle::encode_nodes(&graph),
            &bundle::encode_edges(&graph.adjacency),
        )
        .unwrap();
        assert_eq!(again.0, graph);
    }
});
