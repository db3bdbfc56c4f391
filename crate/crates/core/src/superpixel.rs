//! SLIC superpixels and the region adjacency graph built on top of them.

use std::collections::{BTreeSet, VecDeque};

use crate::color::srgb_to_lab;
use crate::{Error, ImageBuffer, Result};

/// Floor added to every graph edge weight.
pub const EDGE_WEIGHT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub k_target: usize,
    pub compactness: f64,
    pub max_iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k_target: 1600,
            compactness: 10.0,
            max_iters: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelCenter {
    pub centroid_x: f64,
    pub centroid_y: f64,
    /// Mean CIELAB color of the member pixels.
    pub mean_color: [f64; 3],
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelPartition {
    pub width: usize,
    pub height: usize,
    /// Superpixel index of every pixel, row-major.
    pub labels: Vec<u32>,
    pub centers: Vec<SuperpixelCenter>,
}

impl SuperpixelPartition {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Builds a partition from an explicit label map, recomputing centers.
    /// Labels must cover `0..k` with no gaps.
    pub fn from_labels(img: &ImageBuffer, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != img.pixel_count() {
            return Err(Error::LengthMismatch {
                expected: img.pixel_count(),
                found: labels.len(),
            });
        }
        let k = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let lab: Vec<[f64; 3]> = img.pixels().map(srgb_to_lab).collect();
        let centers = compute_centers(img.width(), &labels, &lab, k);
        if let Some(empty) = centers.iter().position(|c| c.pixel_count == 0) {
            return Err(Error::InvalidParameter(format!("superpixel {empty} has no pixels")));
        }
        Ok(Self {
            width: img.width(),
            height: img.height(),
            labels,
            centers,
        })
    }
}

fn compute_centers(width: usize, labels: &[u32], lab: &[[f64; 3]], k: usize) -> Vec<SuperpixelCenter> {
    let mut sums = vec![[0.0f64; 5]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let s = &mut sums[l as usize];
        s[0] += (i % width) as f64;
        s[1] += (i / width) as f64;
        s[2] += lab[i][0];
        s[3] += lab[i][1];
        s[4] += lab[i][2];
        counts[l as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let n = c.max(1) as f64;
            SuperpixelCenter {
                centroid_x: s[0] / n,
                centroid_y: s[1] / n,
                mean_color: [s[2] / n, s[3] / n, s[4] / n],
                pixel_count: c,
            }
        })
        .collect()
}

/// Picks the `(nx, ny)` seeding lattice whose cell count is closest to
/// `k_target`, preferring square cells and then more columns.
fn seed_lattice(width: usize, height: usize, k_target: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut best_key = (usize::MAX, f64::INFINITY);
    for nx in 1..=k_target.min(width) {
        let ny = ((k_target as f64 / nx as f64).round() as usize).clamp(1, height);
        let count_err = (nx * ny).abs_diff(k_target);
        let aspect = ((width as f64 / nx as f64) / (height as f64 / ny as f64)).ln().abs();
        let key = (count_err, aspect);
        if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 <= best_key.1 + 1e-12) {
            best = (nx, ny);
            best_key = key;
        }
    }
    best
}

/// SLIC clustering in `labxy` space followed by a connectivity pass.
///
/// Deterministic: centers are visited in index order and ties in the
/// assignment step go to the lower-indexed center.
pub fn slic(img: &ImageBuffer, params: &SlicParams) -> Result<SuperpixelPartition> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    if params.k_target < 1 || params.k_target > n {
        return Err(Error::InvalidParameter(format!(
            "k_target must be in [1, {n}], got {}",
            params.k_target
        )));
    }
    if !(params.compactness.is_finite() && params.compactness > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "compactness must be positive, got {}",
            params.compactness
        )));
    }
    if params.max_iters < 1 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }

    let lab: Vec<[f64; 3]> = img.pixels().map(srgb_to_lab).collect();
    let step = (n as f64 / params.k_target as f64).sqrt();
    let spatial_scale = params.compactness / step;
    let radius = step.ceil() as isize;

    let (nx, ny) = seed_lattice(w, h, params.k_target);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    // center = [x, y, L, a, b]
    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * sx - 0.5;
            let cy = (j as f64 + 0.5) * sy - 0.5;
            let px = (cx.round() as usize).min(w - 1);
            let py = (cy.round() as usize).min(h - 1);
            let c = lab[py * w + px];
            centers.push([cx, cy, c[0], c[1], c[2]]);
        }
    }

    // Initial labels: the seeding cell each pixel falls in.
    let mut labels: Vec<u32> = (0..n)
        .map(|i| {
            let cx = ((i % w) * nx / w).min(nx - 1);
            let cy = ((i / w) * ny / h).min(ny - 1);
            (cy * nx + cx) as u32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; n];

    for _ in 0..params.max_iters {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c[0].round() as isize - radius).max(0) as usize;
            let x1 = (c[0].round() as isize + radius).min(w as isize - 1);
            let y0 = (c[1].round() as isize - radius).max(0) as usize;
            let y1 = (c[1].round() as isize + radius).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let i = y * w + x;
                    let p = lab[i];
                    let dc = (p[0] - c[2]).powi(2) + (p[1] - c[3]).powi(2) + (p[2] - c[4]).powi(2);
                    let ds = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    let d = dc + ds * spatial_scale * spatial_scale;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as u32;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 5]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s[0] += (i % w) as f64;
            s[1] += (i / w) as f64;
            s[2] += lab[i][0];
            s[3] += lab[i][1];
            s[4] += lab[i][2];
            counts[l as usize] += 1;
        }
        let mut max_shift = 0.0f64;
        for ((c, s), &cnt) in centers.iter_mut().zip(&sums).zip(&counts) {
            if cnt == 0 {
                continue;
            }
            let m = cnt as f64;
            let next = [s[0] / m, s[1] / m, s[2] / m, s[3] / m, s[4] / m];
            max_shift = max_shift.max(((next[0] - c[0]).powi(2) + (next[1] - c[1]).powi(2)).sqrt());
            *c = next;
        }
        if max_shift < 0.25 {
            break;
        }
    }

    let labels = enforce_connectivity(w, h, &labels);
    let k = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let centers = compute_centers(w, &labels, &lab, k);
    Ok(SuperpixelPartition {
        width: w,
        height: h,
        labels,
        centers,
    })
}

fn neighbors4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < w).then(|| i + 1);
    let up = (y > 0).then(|| i - w);
    let down = (y + 1 < h).then(|| i + w);
    [left, right, up, down].into_iter().flatten()
}

/// Keeps the largest 4-connected component of every label and merges each
/// remaining fragment into the adjacent settled superpixel it shares the
/// longest border with. Labels are compacted to `0..K` preserving order.
fn enforce_connectivity(w: usize, h: usize, labels: &[u32]) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    // (label, pixels)
    let mut components: Vec<(u32, Vec<usize>)> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let l = labels[start];
        let mut pixels = vec![start];
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbors4(i, w, h) {
                if comp[j] == usize::MAX && labels[j] == l {
                    comp[j] = id;
                    pixels.push(j);
                    queue.push_back(j);
                }
            }
        }
        components.push((l, pixels));
    }

    let max_label = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut largest = vec![usize::MAX; max_label];
    for (id, (l, pixels)) in components.iter().enumerate() {
        let cur = &mut largest[*l as usize];
        if *cur == usize::MAX || components[*cur].1.len() < pixels.len() {
            *cur = id;
        }
    }

    let mut out = labels.to_vec();
    let mut settled = vec![false; n];
    for &id in largest.iter().filter(|&&id| id != usize::MAX) {
        for &p in &components[id].1 {
            settled[p] = true;
        }
    }
    let mut pending: Vec<usize> = (0..components.len())
        .filter(|&id| largest[components[id].0 as usize] != id)
        .collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &id in &pending {
            let mut border: Vec<(u32, usize)> = Vec::new();
            for &p in &components[id].1 {
                for q in neighbors4(p, w, h) {
                    if settled[q] && comp[q] != id {
                        match border.iter_mut().find(|(l, _)| *l == out[q]) {
                            Some(e) => e.1 += 1,
                            None => border.push((out[q], 1)),
                        }
                    }
                }
            }
            let Some(&(target, _)) = border
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            else {
                still.push(id);
                continue;
            };
            for &p in &components[id].1 {
                out[p] = target;
                settled[p] = true;
            }
        }
        assert!(still.len() < pending.len(), "orphan absorption made no progress");
        pending = still;
    }

    let mut remap = vec![u32::MAX; max_label];
    let mut used: Vec<u32> = out.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    used.sort_unstable();
    for (new, old) in used.into_iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    out.iter().map(|&l| remap[l as usize]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted graph over superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelGraph {
    node_count: usize,
    edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SuperpixelGraph {
    /// Validates and indexes an edge list: no self-edges, no duplicates,
    /// finite nonnegative weights.
    pub fn from_edges(node_count: usize, edges: Vec<GraphEdge>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            if e.a >= node_count || e.b >= node_count {
                return Err(Error::InvalidParameter(format!("edge ({}, {}) out of range", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(Error::InvalidParameter(format!("self-edge at node {}", e.a)));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::InvalidParameter(format!("bad edge weight {}", e.weight)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.node_count
    }
}

/// Region adjacency graph: one edge per pair of 4-adjacent superpixels,
/// weighted by the CIELAB distance between their mean colors plus
/// [`EDGE_WEIGHT_FLOOR`].
pub fn build_graph(part: &SuperpixelPartition) -> SuperpixelGraph {
    let (w, h) = (part.width, part.height);
    let mut pairs = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let l = part.labels[y * w + x];
            if x + 1 < w {
                let r = part.labels[y * w + x + 1];
                if r != l {
                    pairs.insert((l.min(r) as usize, l.max(r) as usize));
                }
            }
            if y + 1 < h {
                let d = part.labels[(y + 1) * w + x];
                if d != l {
                    pairs.insert((l.min(d) as usize, l.max(d) as usize));
                }
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| {
            let ca = part.centers[a].mean_color;
            let cb = part.centers[b].mean_color;
            let d = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt();
            GraphEdge {
                a,
                b,
                weight: d + EDGE_WEIGHT_FLOOR,
            }
        })
        .collect();
    SuperpixelGraph::from_edges(part.len(), edges).expect("adjacency edges are well formed")
}
