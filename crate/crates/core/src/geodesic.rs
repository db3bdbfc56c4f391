//! Multi-source shortest paths on the superpixel graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::superpixel::SuperpixelGraph;

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node index for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from every node in `sources` at distance zero. Unreachable
/// nodes are left at `f64::INFINITY`.
pub fn multi_source_dijkstra(graph: &SuperpixelGraph, sources: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if dist[s] > 0.0 {
            dist[s] = 0.0;
            heap.push(Frontier { dist: 0.0, node: s });
        }
    }
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    dist
}
