//! Point clouds and the bounding-box normalizations used for training and
//! evaluation.

use crate::{Error, Result};

/// A non-empty set of finite points sharing one dimension (2 or 3).
///
/// Coordinates are stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!(
                "point dimension must be 2 or 3, got {dim}"
            )));
        }
        if coords.is_empty() {
            return Err(Error::invalid("point cloud must be non-empty"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "coordinate count {} is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coordinate {} of point {}",
                i % dim,
                i / dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| Error::invalid("point cloud must be non-empty"))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.iter() {
            for (acc, v) in c.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Per-axis (min, max).
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Largest pairwise distance, computed by brute force.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(squared_distance(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }

    /// New cloud with points in the order given by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform scale about a center: `y = (x - center) * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct BBoxTransform {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl BBoxTransform {
    pub fn apply_point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * self.scale)
            .collect()
    }

    pub fn invert_point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(y, c)| y / self.scale + c)
            .collect()
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        self.map(cloud, |p| self.apply_point(p))
    }

    pub fn invert(&self, cloud: &PointCloud) -> PointCloud {
        self.map(cloud, |p| self.invert_point(p))
    }

    fn map(&self, cloud: &PointCloud, f: impl Fn(&[f64]) -> Vec<f64>) -> PointCloud {
        let coords = cloud.iter().flat_map(f).collect();
        PointCloud {
            dim: cloud.dim,
            coords,
        }
    }
}

fn bbox_transform(cloud: &PointCloud) -> (BBoxTransform, f64) {
    let (lo, hi) = cloud.bounds();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let half_extent = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| 0.5 * (b - a))
        .fold(0.0, f64::max);
    let scale = if half_extent > 0.0 {
        1.0 / half_extent
    } else {
        1.0
    };
    (BBoxTransform { center, scale }, half_extent)
}

/// Centers the bounding box at the origin and scales uniformly so every
/// coordinate lies in `[-1, 1]`.
///
/// A cloud whose points all coincide is only centered (scale 1).
pub fn normalize_unit_cube(cloud: &PointCloud) -> (PointCloud, BBoxTransform) {
    let (t, _) = bbox_transform(cloud);
    (t.apply(cloud), t)
}

/// Evaluation normalization: bounding box centered, longest side exactly 2.
pub fn normalize_eval(cloud: &PointCloud) -> Result<PointCloud> {
    let (t, half_extent) = bbox_transform(cloud);
    if half_extent == 0.0 {
        return Err(Error::invalid(
            "cannot evaluation-normalize a cloud with zero extent",
        ));
    }
    Ok(t.apply(cloud))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud2(pts: &[[f64; 2]]) -> PointCloud {
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn rejects_bad_clouds() {
        assert!(PointCloud::new(2, vec![]).is_err());
        assert!(PointCloud::new(4, vec![0.0; 4]).is_err());
        assert!(PointCloud::new(2, vec![0.0; 3]).is_err());
        assert!(PointCloud::new(2, vec![0.0, f64::NAN]).is_err());
        assert!(PointCloud::from_points(&[vec![0.0, 1.0], vec![0.0, 1.0, 2.0]]).is_err());
    }

    #[test]
    fn unit_cube_example() {
        let (out, t) = normalize_unit_cube(&cloud2(&[[0.0, 0.0], [2.0, 4.0]]));
        assert_eq!(out.coords(), &[-0.5, -1.0, 0.5, 1.0]);
        assert_eq!(t.center, vec![1.0, 2.0]);
        assert_eq!(t.scale, 0.5);
    }

    #[test]
    fn unit_cube_identity_case() {
        let c = cloud2(&[[-1.0, -1.0], [1.0, 1.0]]);
        let (out, t) = normalize_unit_cube(&c);
        assert_eq!(out, c);
        assert_eq!(t.scale, 1.0);
    }

    #[test]
    fn single_point_is_centered_with_unit_scale() {
        let (out, t) = normalize_unit_cube(&cloud2(&[[3.0, 7.0]]));
        assert_eq!(out.coords(), &[0.0, 0.0]);
        assert_eq!(t.scale, 1.0);
        assert!(normalize_eval(&cloud2(&[[3.0, 7.0], [3.0, 7.0]])).is_err());
    }

    #[test]
    fn eval_examples() {
        let out = normalize_eval(&cloud2(&[[0.0, 0.0], [4.0, 1.0]])).unwrap();
        assert_eq!(out.coords(), &[-1.0, -0.25, 1.0, 0.25]);
        assert_eq!(normalize_eval(&out).unwrap(), out);

        let c3 = PointCloud::from_points(&[[0.0, 0.0, 0.0], [2.0, 1.0, 0.5]]).unwrap();
        let out = normalize_eval(&c3).unwrap();
        assert_eq!(out.coords(), &[-1.0, -0.5, -0.25, 1.0, 0.5, 0.25]);
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        (2usize..=3, 1usize..40).prop_flat_map(|(dim, n)| {
            prop::collection::vec(-50.0f64..50.0, n * dim)
                .prop_map(move |c| PointCloud::new(dim, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn unit_cube_is_idempotent_and_bounded(c in arb_cloud()) {
            let (once, _) = normalize_unit_cube(&c);
            let (twice, t2) = normalize_unit_cube(&once);
            for (a, b) in once.coords().iter().zip(twice.coords()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((t2.scale - 1.0).abs() < 1e-12 || c.diameter() == 0.0);
            prop_assert!(once.coords().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }

        #[test]
        fn transform_round_trip(c in arb_cloud()) {
            let (out, t) = normalize_unit_cube(&c);
            let back = t.invert(&out);
            for (a, b) in c.coords().iter().zip(back.coords()) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }
}
