#![allow(dead_code)]

use geoseg::bilateral::BilateralGrid;
use geoseg::{ImageBuffer, Label, ScribbleMap};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Up to `max_patches` flat Voronoi patches plus per-pixel noise of
/// amplitude `noise`.
pub fn patchy_image(rng: &mut impl Rng, w: usize, h: usize, max_patches: usize, noise: u8) -> ImageBuffer {
    let patches = rng.gen_range(1..=max_patches.max(1));
    let centers: Vec<(usize, usize, [u8; 3])> = (0..patches)
        .map(|_| (rng.gen_range(0..w), rng.gen_range(0..h), rng.gen()))
        .collect();
    let mut jitter: Vec<[i16; 3]> = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let n = noise as i16;
        jitter.push([0; 3].map(|_: i16| if n == 0 { 0 } else { rng.gen_range(-n..=n) }));
    }
    ImageBuffer::from_fn(w, h, |x, y| {
        let base = centers
            .iter()
            .min_by_key(|(px, py, _)| x.abs_diff(*px).pow(2) + y.abs_diff(*py).pow(2))
            .unwrap()
            .2;
        let j = jitter[y * w + x];
        [0, 1, 2].map(|c| (base[c] as i16 + j[c]).clamp(0, 255) as u8)
    })
}

/// Scatters `per_class` single-pixel seeds of each class on distinct pixels.
pub fn random_scribbles(rng: &mut impl Rng, w: usize, h: usize, per_class: usize) -> ScribbleMap {
    assert!(2 * per_class <= w * h);
    let mut map = ScribbleMap::new(w, h);
    for label in [Label::Foreground, Label::Background] {
        let mut placed = 0;
        while placed < per_class {
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            if map.get(x, y) == Label::Unlabeled {
                map.set(x, y, label);
                placed += 1;
            }
        }
    }
    map
}

/// `Ŵ` as a dense matrix, one column per unit vector.
pub fn dense_w_hat(grid: &BilateralGrid) -> DMatrix<f64> {
    let n = grid.pixel_count();
    let mut w = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = grid.apply_w_hat(&e).unwrap();
        e[j] = 0.0;
        w.set_column(j, &DVector::from_vec(col));
    }
    w
}

/// Minimizer of `Σ cᵢ(vᵢ − tᵢ)² + λ vᵀ(I − Ŵ)v` over all pixel vectors.
pub fn dense_smooth(w: &DMatrix<f64>, target: &[f64], confidence: &[f64], lambda: f64) -> DVector<f64> {
    let n = target.len();
    let mut a = -lambda * w;
    for i in 0..n {
        a[(i, i)] += lambda + confidence[i];
    }
    let b = DVector::from_iterator(n, (0..n).map(|i| confidence[i] * target[i]));
    a.lu().solve(&b).expect("dense system is nonsingular")
}

pub fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
