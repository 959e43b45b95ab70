//! Reconstruction and generation metrics.
//!
//! * CD: squared Euclidean distance, sum of the two directed means.
//! * EMD: mean Euclidean distance under an exact optimal bijection.
//! * MMD, COV and 1-NNA are computed from a pairwise shape distance (CD or
//!   EMD) between two sets of clouds.

use std::fmt::Write as _;

use crate::analytic::GmmField;
use crate::cloud::{squared_distance, PointCloud};
use crate::rng;
use crate::{Error, Result};

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::shape(
            "metric",
            format!("clouds have dimensions {} and {}", x.dim(), y.dim()),
        ));
    }
    Ok(())
}

/// Uniform grid over a point set for exact nearest-neighbour queries.
struct Grid<'a> {
    cloud: &'a PointCloud,
    lo: Vec<f64>,
    cell: f64,
    res: Vec<usize>,
    /// `start[c]..start[c + 1]` indexes `items` for cell `c`.
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(cloud: &'a PointCloud) -> Self {
        let d = cloud.dim();
        let (lo, hi) = cloud.bounds();
        let extent = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| b - a)
            .fold(0.0f64, f64::max);
        // about two points per cell along the occupied extent
        let per_axis = (cloud.len() as f64 / 2.0).powf(1.0 / d as f64).ceil().max(1.0);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let res: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (((b - a) / cell).floor() as usize + 1).min(1 << 12))
            .collect();
        let mut grid = Self {
            cloud,
            lo,
            cell,
            res,
            start: Vec::new(),
            items: Vec::new(),
        };
        let cells: usize = grid.res.iter().product();
        let keys: Vec<usize> = cloud.iter().map(|p| grid.flat(&grid.coords(p))).collect();
        let mut count = vec![0usize; cells + 1];
        for &k in &keys {
            count[k + 1] += 1;
        }
        for c in 0..cells {
            count[c + 1] += count[c];
        }
        let mut fill = count.clone();
        let mut items = vec![0; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        grid.start = count;
        grid.items = items;
        grid
    }

    fn coords(&self, p: &[f64]) -> Vec<isize> {
        p.iter()
            .zip(&self.lo)
            .zip(&self.res)
            .map(|((v, l), &r)| (((v - l) / self.cell).floor() as isize).clamp(0, r as isize - 1))
            .collect()
    }

    fn flat(&self, c: &[isize]) -> usize {
        let mut k = 0;
        for (v, r) in c.iter().zip(&self.res) {
            k = k * r + *v as usize;
        }
        k
    }

    /// Squared distance from `q` to the outside of the box of cells within
    /// Chebyshev radius `ring` of `center`.
    fn ring_clearance(&self, q: &[f64], center: &[isize], ring: isize) -> f64 {
        let mut best = f64::INFINITY;
        for (k, &c) in center.iter().enumerate() {
            let lo_edge = self.lo[k] + (c - ring) as f64 * self.cell;
            let hi_edge = self.lo[k] + (c + ring + 1) as f64 * self.cell;
            if c - ring > 0 {
                best = best.min(q[k] - lo_edge);
            }
            if c + ring < self.res[k] as isize - 1 {
                best = best.min(hi_edge - q[k]);
            }
        }
        if best.is_finite() {
            best.max(0.0).powi(2)
        } else {
            f64::INFINITY
        }
    }

    fn nearest_squared(&self, q: &[f64]) -> f64 {
        let center = self.coords(q);
        let d = center.len();
        let max_ring = *self.res.iter().max().unwrap() as isize;
        let mut best = f64::INFINITY;
        let mut offset = vec![0isize; d];
        for ring in 0..=max_ring {
            // visit cells on the shell at Chebyshev distance `ring`
            let side = 2 * ring + 1;
            let total = (side as usize).pow(d as u32);
            for idx in 0..total {
                let mut rem = idx;
                let mut on_shell = false;
                let mut inside = true;
                for k in (0..d).rev() {
                    let o = (rem % side as usize) as isize - ring;
                    rem /= side as usize;
                    offset[k] = center[k] + o;
                    on_shell |= o.abs() == ring;
                    inside &= offset[k] >= 0 && offset[k] < self.res[k] as isize;
                }
                if !on_shell || !inside {
                    continue;
                }
                let c = self.flat(&offset);
                for &i in &self.items[self.start[c]..self.start[c + 1]] {
                    best = best.min(squared_distance(q, self.cloud.point(i)));
                }
            }
            if best <= self.ring_clearance(q, &center, ring) {
                break;
            }
        }
        best
    }
}

fn directed_mean(x: &PointCloud, y: &PointCloud) -> f64 {
    let grid = Grid::new(y);
    x.iter().map(|p| grid.nearest_squared(p)).sum::<f64>() / x.len() as f64
}

/// Symmetric Chamfer distance using a uniform-grid nearest-neighbour search.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_pair(x, y)?;
    Ok(directed_mean(x, y) + directed_mean(y, x))
}

/// Chamfer distance by the O(nm) double loop.
pub fn chamfer_naive(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_pair(x, y)?;
    let directed = |a: &PointCloud, b: &PointCloud| {
        a.iter()
            .map(|p| b.iter().map(|q| squared_distance(p, q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64
    };
    Ok(directed(x, y) + directed(y, x))
}

/// Minimum-cost perfect matching of a square cost matrix (row-major `n x n`).
/// Returns `assignment[row] = column`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // shortest augmenting paths with potentials, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched[j] - 1] = j - 1;
    }
    assignment
}

/// Exact Earth Mover's distance between equal-size clouds.
pub fn emd(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_pair(x, y)?;
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "EMD needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let mut cost = Vec::with_capacity(n * n);
    for p in x.iter() {
        for q in y.iter() {
            cost.push(squared_distance(p, q).sqrt());
        }
    }
    let assignment = hungarian(&cost, n);
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum::<f64>()
        / n as f64)
}

/// Shape-to-shape distance used by the set metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Chamfer,
    Emd,
}

impl Distance {
    pub fn name(self) -> &'static str {
        match self {
            Distance::Chamfer => "cd",
            Distance::Emd => "emd",
        }
    }

    pub fn eval(self, x: &PointCloud, y: &PointCloud) -> Result<f64> {
        match self {
            Distance::Chamfer => chamfer(x, y),
            Distance::Emd => emd(x, y),
        }
    }
}

/// `out[i * b.len() + j] = base(a[i], b[j])`.
pub fn distance_matrix(a: &[PointCloud], b: &[PointCloud], base: Distance) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(base.eval(x, y)?);
        }
    }
    Ok(out)
}

fn non_empty(generated: &[PointCloud], reference: &[PointCloud]) -> Result<()> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::invalid("shape sets must be non-empty"));
    }
    Ok(())
}

/// Minimum matching distance: mean over reference shapes of the distance to
/// the closest generated shape.
pub fn mmd(generated: &[PointCloud], reference: &[PointCloud], base: Distance) -> Result<f64> {
    non_empty(generated, reference)?;
    let m = distance_matrix(reference, generated, base)?;
    let g = generated.len();
    Ok(m.chunks_exact(g)
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / reference.len() as f64)
}

/// Fraction of reference shapes that are the nearest reference of at least
/// one generated shape. Ties go to the lowest reference index.
pub fn coverage(generated: &[PointCloud], reference: &[PointCloud], base: Distance) -> Result<f64> {
    non_empty(generated, reference)?;
    let m = distance_matrix(generated, reference, base)?;
    let r = reference.len();
    let mut hit = vec![false; r];
    for row in m.chunks_exact(r) {
        let mut best = 0;
        for j in 1..r {
            if row[j] < row[best] {
                best = j;
            }
        }
        hit[best] = true;
    }
    Ok(hit.iter().filter(|h| **h).count() as f64 / r as f64)
}

/// Leave-one-out 1-nearest-neighbour accuracy on `a ∪ b`, labelled by
/// origin. When the nearest distance is attained in both sets the
/// neighbour is taken from `a`.
pub fn one_nna(a: &[PointCloud], b: &[PointCloud], base: Distance) -> Result<f64> {
    non_empty(a, b)?;
    let all: Vec<&PointCloud> = a.iter().chain(b).collect();
    let n = all.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = base.eval(all[i], all[j])?;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut correct = 0usize;
    for i in 0..n {
        let nearest = |range: std::ops::Range<usize>| {
            range
                .filter(|&j| j != i)
                .map(|j| d[i * n + j])
                .fold(f64::INFINITY, f64::min)
        };
        let to_a = nearest(0..a.len());
        let to_b = nearest(a.len()..n);
        let predicted_a = to_a <= to_b;
        if predicted_a == (i < a.len()) {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// CD and EMD between two independent samplings of the same shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBound {
    pub cd: f64,
    pub emd: f64,
}

/// Two independent with-replacement samplings of `n` points from
/// `source`'s support.
pub fn oracle_samplings(source: &GmmField, n: usize, seed: u64) -> (PointCloud, PointCloud) {
    (
        source.sample_perturbed(0.0, n, rng::derive(seed, &[0])),
        source.sample_perturbed(0.0, n, rng::derive(seed, &[1])),
    )
}

/// Mean CD and EMD between two independent `n`-point samplings of `source`,
/// averaged over `seeds`.
pub fn oracle_bound(source: &GmmField, n: usize, seeds: &[u64]) -> Result<OracleBound> {
    if seeds.is_empty() || n == 0 {
        return Err(Error::invalid("oracle bound needs n >= 1 and at least one seed"));
    }
    let (mut cd, mut e) = (0.0, 0.0);
    for &s in seeds {
        let (x, y) = oracle_samplings(source, n, s);
        cd += chamfer(&x, &y)?;
        e += emd(&x, &y)?;
    }
    let k = seeds.len() as f64;
    Ok(OracleBound {
        cd: cd / k,
        emd: e / k,
    })
}

/// Named metric values with the usual table scalings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    /// Normalization applied to the clouds before evaluation.
    pub normalization: String,
    pub seeds: Vec<u64>,
    entries: Vec<(String, f64)>,
}

/// Display multiplier for a metric name.
pub fn display_scale(name: &str) -> f64 {
    match name {
        "cd" => 1e4,
        "emd" => 1e2,
        "mmd_cd" => 1e3,
        "mmd_emd" => 1e2,
        _ => 1.0,
    }
}

impl MetricReport {
    pub fn new(normalization: impl Into<String>, seeds: Vec<u64>) -> Self {
        Self {
            normalization: normalization.into(),
            seeds,
            entries: Vec::new(),
        }
    }

    /// Adds a raw (unscaled) value. Fails on negative or non-finite input.
    pub fn push(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::NonFinite(format!("metric {name} = {value}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// `key=value` lines; each metric appears raw and scaled.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cd_convention=squared_l2_sum_of_directed_means");
        let _ = writeln!(s, "emd_convention=mean_l2_exact_assignment");
        let _ = writeln!(s, "normalization={}", self.normalization);
        let seeds: Vec<String> = self.seeds.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "seeds={}", seeds.join(","));
        for (name, v) in &self.entries {
            let scale = display_scale(name);
            let _ = writeln!(s, "{name}={v:.17e}");
            if scale != 1.0 {
                let _ = writeln!(s, "{name}_x{scale:e}={:.6}", v * scale);
            }
        }
        s
    }

    pub fn csv_header(&self) -> String {
        let names: Vec<&str> = self.entries.iter().map(|(n, _)| n.as_str()).collect();
        format!("label,{}", names.join(","))
    }

    /// One CSV row of scaled values.
    pub fn csv_row(&self, label: &str) -> String {
        let vals: Vec<String> = self
            .entries
            .iter()
            .map(|(n, v)| format!("{:.6}", v * display_scale(n)))
            .collect();
        format!("{label},{}", vals.join(","))
    }
}
