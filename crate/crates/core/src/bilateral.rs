//! Fast bilateral solver on a simplified bilateral grid.
//!
//! Every pixel is splatted with a hard assignment to the vertex of its
//! quantized `(x, y, l, u, v)` coordinate, so the splat matrix `S` has exactly
//! one nonzero per pixel and `S Sᵀ = diag(m)` where `m` counts the pixels per
//! vertex. Only occupied vertices are materialized.
//!
//! The blur `B` adds, for every one of the five grid dimensions, the two
//! adjacent vertices with weight 1, plus the vertex itself with weight
//! [`BLUR_CENTER_WEIGHT`]. After [`BilateralGrid::bistochastize`] the
//! normalized affinity
//!
//! ```text
//! Ŵ = Sᵀ diag(m)⁻¹ diag(n) B diag(n) diag(m)⁻¹ S
//! ```
//!
//! is symmetric with unit row sums. [`fbs_solve`] minimizes
//! `Σ cᵢ (vᵢ − tᵢ)² + λ/2 Σ Ŵᵢⱼ (vᵢ − vⱼ)²` over vertex values by solving
//! `A y = b` with `A = λ (diag(m) − diag(n) B diag(n)) + diag(S c)` and
//! `b = S (c ∘ t)`, then slices `v = Sᵀ y`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, YuvImage};

/// Center tap of the blur: the `[1, 2, 1]` kernel's center counted once per
/// dimension, five dimensions.
pub const BLUR_CENTER_WEIGHT: f64 = 10.0;
const NO_NEIGHBOR: u32 = u32::MAX;
const DIMS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub sigma_xy: f64,
    pub sigma_l: f64,
    pub sigma_uv: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            sigma_xy: 8.0,
            sigma_l: 0.06,
            sigma_uv: 0.06,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_xy", self.sigma_xy),
            ("sigma_l", self.sigma_l),
            ("sigma_uv", self.sigma_uv),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BistochasticReport {
    pub iterations: usize,
    pub max_relative_change: f64,
    pub converged: bool,
}

impl BistochasticReport {
    /// `NonConvergence` when the last change is still above `10 × tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.max_relative_change > 10.0 * tol {
            return Err(Error::NonConvergence {
                iterations: self.iterations,
                change: self.max_relative_change,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilateralGrid {
    pixel_to_vertex: Vec<u32>,
    /// `[2d]` is the −1 neighbor and `[2d + 1]` the +1 neighbor along dimension `d`.
    neighbors: Vec<[u32; 2 * DIMS]>,
    splat_counts: Vec<f64>,
    n_vec: Vec<f64>,
}

impl BilateralGrid {
    /// Quantizes every pixel to `⌊coord / σ⌋` in all five dimensions.
    pub fn build(reference: &YuvImage, params: &GridParams) -> Result<Self> {
        params.validate()?;
        let w = reference.width;
        let n = reference.pixel_count();
        let mut index: HashMap<[i64; DIMS], u32> = HashMap::new();
        let mut coords: Vec<[i64; DIMS]> = Vec::new();
        let mut pixel_to_vertex = Vec::with_capacity(n);
        let mut splat_counts: Vec<f64> = Vec::new();
        for i in 0..n {
            let key = [
                ((i % w) as f64 / params.sigma_xy).floor() as i64,
                ((i / w) as f64 / params.sigma_xy).floor() as i64,
                (reference.luma[i] / params.sigma_l).floor() as i64,
                (reference.chroma_u[i] / params.sigma_uv).floor() as i64,
                (reference.chroma_v[i] / params.sigma_uv).floor() as i64,
            ];
            let v = *index.entry(key).or_insert_with(|| {
                coords.push(key);
                splat_counts.push(0.0);
                (coords.len() - 1) as u32
            });
            splat_counts[v as usize] += 1.0;
            pixel_to_vertex.push(v);
        }
        let neighbors = coords
            .iter()
            .map(|c| {
                let mut nb = [NO_NEIGHBOR; 2 * DIMS];
                for d in 0..DIMS {
                    for (slot, delta) in [(2 * d, -1), (2 * d + 1, 1)] {
                        let mut k = *c;
                        k[d] += delta;
                        if let Some(&j) = index.get(&k) {
                            nb[slot] = j;
                        }
                    }
                }
                nb
            })
            .collect();
        let vertex_count = coords.len();
        Ok(Self {
            pixel_to_vertex,
            neighbors,
            splat_counts,
            n_vec: vec![1.0; vertex_count],
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.splat_counts.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_to_vertex.len()
    }

    pub fn pixel_to_vertex(&self) -> &[u32] {
        &self.pixel_to_vertex
    }

    /// Pixels per vertex, the diagonal of `S Sᵀ`.
    pub fn splat_counts(&self) -> &[f64] {
        &self.splat_counts
    }

    /// Bistochastization scale per vertex.
    pub fn n_vec(&self) -> &[f64] {
        &self.n_vec
    }

    /// Live neighbors of vertex `v` across all five dimensions.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[v]
            .iter()
            .filter(|&&j| j != NO_NEIGHBOR)
            .map(|&j| j as usize)
    }

    /// `S x`: sums pixel values into their vertices.
    pub fn splat(&self, pixel_values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.pixel_count(), pixel_values.len())?;
        let mut out = vec![0.0; self.vertex_count()];
        for (&v, &x) in self.pixel_to_vertex.iter().zip(pixel_values) {
            out[v as usize] += x;
        }
        Ok(out)
    }

    /// `Sᵀ y`: every pixel reads its vertex value.
    pub fn slice(&self, vertex_values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.vertex_count(), vertex_values.len())?;
        Ok(self.pixel_to_vertex.iter().map(|&v| vertex_values[v as usize]).collect())
    }

    pub fn blur(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.vertex_count(), x.len())?;
        Ok(self.blur_unchecked(x))
    }

    fn blur_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.neighbors
            .par_iter()
            .enumerate()
            .map(|(v, nb)| {
                let mut acc = BLUR_CENTER_WEIGHT * x[v];
                for &j in nb {
                    if j != NO_NEIGHBOR {
                        acc += x[j as usize];
                    }
                }
                acc
            })
            .collect()
    }

    /// Fixed-point iteration `n ← sqrt(n ∘ m / B n)` from `n = 1`, stopping
    /// once the largest relative change drops below `tol`.
    pub fn bistochastize(&mut self, max_iters: usize, tol: f64) -> BistochasticReport {
        let mut n = vec![1.0; self.vertex_count()];
        let mut change = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iters {
            iterations += 1;
            let bn = self.blur_unchecked(&n);
            let next: Vec<f64> = n
                .iter()
                .zip(&self.splat_counts)
                .zip(&bn)
                .map(|((&n, &m), &b)| (n * m / b).sqrt())
                .collect();
            change = next
                .iter()
                .zip(&n)
                .map(|(a, b)| (a - b).abs() / b)
                .fold(0.0, f64::max);
            n = next;
            if change < tol {
                break;
            }
        }
        self.n_vec = n;
        BistochasticReport {
            iterations,
            max_relative_change: change,
            converged: change < tol,
        }
    }

    /// Matrix-free `Ŵ x` for a pixel-space vector.
    pub fn apply_w_hat(&self, pixel_values: &[f64]) -> Result<Vec<f64>> {
        let w = self.normalized_splat(pixel_values)?;
        let bw = self.blur_unchecked(&w);
        let out: Vec<f64> = bw
            .iter()
            .zip(&self.n_vec)
            .zip(&self.splat_counts)
            .map(|((&b, &n), &m)| n * b / m)
            .collect();
        self.slice(&out)
    }

    /// `xᵀ (I − Ŵ) x` without materializing `Ŵ`.
    pub fn smoothness(&self, pixel_values: &[f64]) -> Result<f64> {
        let w = self.normalized_splat(pixel_values)?;
        let bw = self.blur_unchecked(&w);
        let xwx: f64 = w.iter().zip(&bw).map(|(a, b)| a * b).sum();
        let xx: f64 = pixel_values.iter().map(|x| x * x).sum();
        Ok(xx - xwx)
    }

    /// `diag(n) diag(m)⁻¹ S x`.
    fn normalized_splat(&self, pixel_values: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.splat(pixel_values)?;
        for ((z, &n), &m) in z.iter_mut().zip(&self.n_vec).zip(&self.splat_counts) {
            *z *= n / m;
        }
        Ok(z)
    }

    /// Connected components of the vertex adjacency, as a label per vertex.
    fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.vertex_count()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.vertex_count() {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for j in self.neighbors(v) {
                    if comp[j] == usize::MAX {
                        comp[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Builds the grid for `reference` and bistochastizes it with the default
/// schedule (20 iterations, tolerance `1e-5`).
pub fn build_bistochastic_grid(reference: &YuvImage, params: &GridParams) -> Result<(BilateralGrid, BistochasticReport)> {
    let mut grid = BilateralGrid::build(reference, params)?;
    let report = grid.bistochastize(20, 1e-5);
    Ok((grid, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbsProblem {
    pub target: Vec<f64>,
    pub confidence: Vec<f64>,
    pub lambda: f64,
}

impl FbsProblem {
    fn validate(&self, pixel_count: usize) -> Result<()> {
        check_len(pixel_count, self.target.len())?;
        check_len(pixel_count, self.confidence.len())?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.target.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("target contains non-finite values".into()));
        }
        if self.confidence.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidParameter("confidence must be finite and nonnegative".into()));
        }
        if !self.confidence.iter().any(|&c| c > 0.0) {
            return Err(Error::InvalidParameter("confidence is zero everywhere".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbsSolution {
    /// Sliced pixel-space solution.
    pub values: Vec<f64>,
    /// Bilateral-space solution `y`.
    pub vertex_values: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖A y − b‖ / ‖b‖`.
    pub residual: f64,
}

impl FbsSolution {
    /// `CgNonConvergence` when the final residual exceeds `10 × tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.residual > 10.0 * tol {
            return Err(Error::CgNonConvergence {
                iterations: self.iterations,
                residual: self.residual,
            });
        }
        Ok(())
    }
}

/// The bilateral-space system `A y = b`, applied matrix-free.
pub struct BilateralSystem<'a> {
    grid: &'a BilateralGrid,
    lambda: f64,
    splat_confidence: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> BilateralSystem<'a> {
    pub fn new(grid: &'a BilateralGrid, problem: &FbsProblem) -> Result<Self> {
        problem.validate(grid.pixel_count())?;
        let weighted: Vec<f64> = problem
            .confidence
            .iter()
            .zip(&problem.target)
            .map(|(c, t)| c * t)
            .collect();
        Ok(Self {
            grid,
            lambda: problem.lambda,
            splat_confidence: grid.splat(&problem.confidence)?,
            rhs: grid.splat(&weighted)?,
        })
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let ny: Vec<f64> = y.iter().zip(&g.n_vec).map(|(y, n)| y * n).collect();
        let bny = g.blur_unchecked(&ny);
        (0..y.len())
            .into_par_iter()
            .map(|v| {
                let smooth = g.splat_counts[v] * y[v] - g.n_vec[v] * bny[v];
                self.lambda * smooth + self.splat_confidence[v] * y[v]
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let g = self.grid;
        (0..g.vertex_count())
            .map(|v| {
                let n = g.n_vec[v];
                self.lambda * (g.splat_counts[v] - BLUR_CENTER_WEIGHT * n * n) + self.splat_confidence[v]
            })
            .collect()
    }

    /// `½ yᵀ A y − bᵀ y`.
    pub fn objective(&self, y: &[f64]) -> f64 {
        let ay = self.apply(y);
        0.5 * dot(y, &ay) - dot(&self.rhs, y)
    }

    /// Every connected block of `A` needs some confidence mass; with
    /// `λ = 0` that means every single vertex.
    fn check_nonsingular(&self) -> Result<()> {
        if self.lambda == 0.0 {
            if let Some(v) = self.splat_confidence.iter().position(|&c| c <= 0.0) {
                return Err(Error::SingularSystem(format!(
                    "vertex {v} has zero confidence and lambda is 0"
                )));
            }
            return Ok(());
        }
        let comp = self.grid.components();
        let count = comp.iter().max().map_or(0, |m| m + 1);
        let mut mass = vec![0.0; count];
        for (v, &c) in comp.iter().enumerate() {
            mass[c] += self.splat_confidence[v];
        }
        if let Some(c) = mass.iter().position(|&m| m <= 0.0) {
            return Err(Error::SingularSystem(format!(
                "grid component {c} carries no confidence"
            )));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the bilateral-space problem and slices the result back to pixels.
/// Returns `CgNonConvergence` if the residual at the iteration cap exceeds
/// `10 × tol`; use [`fbs_solve_report`] to get the partial solution instead.
pub fn fbs_solve(grid: &BilateralGrid, problem: &FbsProblem, cg: &CgSettings) -> Result<FbsSolution> {
    let sol = fbs_solve_report(grid, problem, cg)?;
    sol.check(cg.tol)?;
    Ok(sol)
}

pub fn fbs_solve_report(grid: &BilateralGrid, problem: &FbsProblem, cg: &CgSettings) -> Result<FbsSolution> {
    let system = BilateralSystem::new(grid, problem)?;
    system.check_nonsingular()?;
    let b = system.rhs();

    let mean_target = problem.target.iter().sum::<f64>() / problem.target.len() as f64;
    let mut y: Vec<f64> = b
        .iter()
        .zip(&system.splat_confidence)
        .map(|(&b, &c)| if c > 0.0 { b / c } else { mean_target })
        .collect();

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        let zeros = vec![0.0; grid.vertex_count()];
        return Ok(FbsSolution {
            values: grid.slice(&zeros)?,
            vertex_values: zeros,
            iterations: 0,
            residual: 0.0,
        });
    }

    let precond: Vec<f64> = system
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let ay = system.apply(&y);
    let mut r: Vec<f64> = b.iter().zip(&ay).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    let mut iterations = 0;
    while residual >= cg.tol && iterations < cg.max_iters {
        let ap = system.apply(&p);
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "system is not positive definite (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..y.len() {
            y[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..z.len() {
            z[i] = r[i] * precond[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        residual = dot(&r, &r).sqrt() / b_norm;
    }

    Ok(FbsSolution {
        values: grid.slice(&y)?,
        vertex_values: y,
        iterations,
        residual,
    })
}
