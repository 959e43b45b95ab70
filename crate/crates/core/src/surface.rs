//! Surfaces implied by a score field.
//!
//! Near the data the score of the finest level behaves like
//! `g(x) ~ (p(x) - x) / sigma^2`, with `p(x)` the closest surface point, so
//! `sigma^2 * |g|` approximates the unsigned distance to the surface.
//!
//! * [`cast_ray`] / [`render`] sphere-trace that distance in 3D.
//! * [`extract_contour_2d`] runs marching squares in 2D.
//! * [`filter_local_minima`] drops zero-gradient points that are not density
//!   maxima.
//!
//! Units of the iso-level `delta` per [`FieldScale`]:
//!
//! | mode            | marched quantity     | surface offset of a hit      |
//! |-----------------|----------------------|------------------------------|
//! | `SigmaSquared`  | `sigma_k^2 * |g|`    | `delta` (a distance)         |
//! | `Raw`           | `|g|`                | `delta * sigma_k^2`          |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::field::{norm, ScoreField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldScale {
    Raw,
    #[default]
    SigmaSquared,
}

impl FieldScale {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(FieldScale::Raw),
            "sigma_squared" => Some(FieldScale::SigmaSquared),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldScale::Raw => "raw",
            FieldScale::SigmaSquared => "sigma_squared",
        }
    }

    fn factor(self, sigma_k: f64) -> f64 {
        match self {
            FieldScale::Raw => 1.0,
            FieldScale::SigmaSquared => sigma_k * sigma_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCastConfig {
    pub step_rate: f64,
    pub max_steps: usize,
    pub iso_level: f64,
    pub max_travel: f64,
    /// RGB in `[0, 1]`.
    pub background: [f64; 3],
    pub field_scale: FieldScale,
}

impl Default for RayCastConfig {
    fn default() -> Self {
        Self {
            step_rate: 1.0,
            max_steps: 64,
            iso_level: 0.005,
            max_travel: 4.0,
            background: [1.0, 1.0, 1.0],
            field_scale: FieldScale::SigmaSquared,
        }
    }
}

impl RayCastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_rate > 0.0 && self.iso_level > 0.0 && self.max_travel > 0.0) {
            return Err(Error::invalid("step_rate, iso_level and max_travel must be positive"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("background colour components must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayHit {
    Hit {
        point: [f64; 3],
        normal: [f64; 3],
        travel: f64,
    },
    /// The ray converged but the field vanishes there, so no normal exists.
    Degenerate { point: [f64; 3], travel: f64 },
    Miss,
}

impl RayHit {
    pub fn point(&self) -> Option<[f64; 3]> {
        match *self {
            RayHit::Hit { point, .. } | RayHit::Degenerate { point, .. } => Some(point),
            RayHit::Miss => None,
        }
    }
}

/// Marches all rays in lockstep so the field is evaluated in batches.
fn march<F: ScoreField + ?Sized>(
    field: &F,
    sigma_k: f64,
    origin: [f64; 3],
    dirs: &[[f64; 3]],
    config: &RayCastConfig,
) -> Result<Vec<RayHit>> {
    config.validate()?;
    if field.dim() != 3 {
        return Err(Error::shape("ray caster", "field must be three-dimensional"));
    }
    let scale = config.field_scale.factor(sigma_k);
    let n = dirs.len();
    let mut d = vec![0.0; n];
    let mut x = vec![0.0; 3 * n];
    let mut g = Vec::new();
    let position = |x: &mut [f64], d: &[f64]| {
        for (i, u) in dirs.iter().enumerate() {
            for k in 0..3 {
                x[3 * i + k] = origin[k] + d[i] * u[k];
            }
        }
    };
    for _ in 0..config.max_steps {
        position(&mut x, &d);
        g = field.score_batch(&x, sigma_k);
        for i in 0..n {
            let f = scale * norm(&g[3 * i..3 * i + 3]);
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("field norm along ray {i}")));
            }
            d[i] += config.step_rate * (f - config.iso_level);
        }
    }
    if config.max_steps == 0 {
        position(&mut x, &d);
        g = field.score_batch(&x, sigma_k);
    }
    Ok((0..n)
        .map(|i| {
            if d[i] >= config.max_travel {
                return RayHit::Miss;
            }
            let point = [x[3 * i], x[3 * i + 1], x[3 * i + 2]];
            let gi = &g[3 * i..3 * i + 3];
            let len = norm(gi);
            if len == 0.0 {
                RayHit::Degenerate { point, travel: d[i] }
            } else {
                RayHit::Hit {
                    point,
                    normal: [-gi[0] / len, -gi[1] / len, -gi[2] / len],
                    travel: d[i],
                }
            }
        })
        .collect())
}

/// Sphere-traces one ray: `k_max` updates `d += gamma * (F(o + d u) - delta)`,
/// then a hit if `d < d_max`. The normal is `-g / |g|` at the last sample.
pub fn cast_ray<F: ScoreField + ?Sized>(
    field: &F,
    sigma_k: f64,
    origin: [f64; 3],
    dir: [f64; 3],
    config: &RayCastConfig,
) -> Result<RayHit> {
    Ok(march(field, sigma_k, origin, &[dir], config)?[0])
}

/// Pinhole camera: one unit ray direction per pixel, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub origin: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub dirs: Vec<[f64; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm(&a);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("degenerate camera vector"));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

impl Camera {
    /// Perspective camera at `eye` looking at `target` with vertical field
    /// of view `fov_deg`. Rays pass through pixel centres.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid("camera needs a positive size and 0 < fov < 180"));
        }
        let forward = unit(sub(target, eye))?;
        let right = unit(cross(forward, up))?;
        let true_up = cross(right, forward);
        let half = (fov_deg.to_radians() / 2.0).tan();
        let aspect = width as f64 / height as f64;
        let mut dirs = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let sx = ((c as f64 + 0.5) / width as f64 * 2.0 - 1.0) * half * aspect;
                let sy = (1.0 - (r as f64 + 0.5) / height as f64 * 2.0) * half;
                dirs.push(unit([
                    forward[0] + sx * right[0] + sy * true_up[0],
                    forward[1] + sx * right[1] + sy * true_up[1],
                    forward[2] + sx * right[2] + sy * true_up[2],
                ])?);
            }
        }
        Ok(Self {
            origin: eye,
            width,
            height,
            dirs,
        })
    }
}

/// 8-bit RGB image, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// Light direction for Lambertian shading, pointing towards the light.
pub const LIGHT_DIR: [f64; 3] = [
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
];

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone)]
pub struct Render {
    pub image: Image,
    pub rays: Vec<RayHit>,
}

/// Casts every camera ray. Hits are shaded `max(0, n . l)` in grey;
/// degenerate hits are black; misses take the background colour.
pub fn render<F: ScoreField + ?Sized>(
    field: &F,
    sigma_k: f64,
    camera: &Camera,
    config: &RayCastConfig,
) -> Result<Render> {
    let rays = march(field, sigma_k, camera.origin, &camera.dirs, config)?;
    let bg = config.background.map(to_byte);
    let pixels = rays
        .iter()
        .map(|r| match r {
            RayHit::Hit { normal, .. } => {
                let s: f64 = normal.iter().zip(&LIGHT_DIR).map(|(a, b)| a * b).sum();
                [to_byte(s.max(0.0)); 3]
            }
            RayHit::Degenerate { .. } => [0, 0, 0],
            RayHit::Miss => bg,
        })
        .collect();
    Ok(Render {
        image: Image {
            width: camera.width,
            height: camera.height,
            pixels,
        },
        rays,
    })
}

/// Node lattice for contour extraction: `resolution` nodes per axis over
/// `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourGrid {
    pub resolution: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ContourGrid {
    pub fn square(resolution: usize, half_width: f64) -> Self {
        Self {
            resolution,
            lo: [-half_width, -half_width],
            hi: [half_width, half_width],
        }
    }

    pub fn cell_size(&self) -> [f64; 2] {
        let m = (self.resolution - 1) as f64;
        [(self.hi[0] - self.lo[0]) / m, (self.hi[1] - self.lo[1]) / m]
    }

    fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.cell_size();
        [self.lo[0] + i as f64 * h[0], self.lo[1] + j as f64 * h[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    /// The last point connects back to the first.
    pub closed: bool,
}

/// Iso-contours of `G(x) = sigma_k^2 |g(x, sigma_k)|` at `G = delta * sigma_k^2`,
/// i.e. where `|g| = delta`.
///
/// `G` is unsigned, so marching squares runs on a signed copy. Nodes with
/// `G` above two cell widths split into connected regions: regions touching
/// the grid border are outside, enclosed ones inside. A node nearer the
/// surface takes the side of the region it reaches by stepping along `-g`,
/// away from the surface. Crossings are placed by linear interpolation of
/// the signed values along cell edges. Open curves enclose no region and
/// yield no contour.
pub fn extract_contour_2d<F: ScoreField + ?Sized>(
    field: &F,
    sigma_k: f64,
    grid: &ContourGrid,
    delta: f64,
) -> Result<Vec<Polyline>> {
    if field.dim() != 2 {
        return Err(Error::shape("contour", "field must be two-dimensional"));
    }
    let n = grid.resolution;
    if n < 2 || !(grid.hi[0] > grid.lo[0] && grid.hi[1] > grid.lo[1]) {
        return Err(Error::invalid("contour grid needs >= 2 nodes per axis and positive extent"));
    }
    let mut nodes = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.extend(grid.node(i, j));
        }
    }
    let g = field.score_batch(&nodes, sigma_k);
    let s2 = sigma_k * sigma_k;
    let idx = |i: usize, j: usize| j * n + i;
    let value: Vec<f64> = g.chunks_exact(2).map(|v| s2 * norm(v)).collect();
    let [hx, hy] = grid.cell_size();
    let band = 2.0 * hx.max(hy);
    let neighbours = |k: usize| {
        let (i, j) = (k % n, k / n);
        [
            (i > 0).then(|| idx(i - 1, j)),
            (i + 1 < n).then(|| idx(i + 1, j)),
            (j > 0).then(|| idx(i, j - 1)),
            (j + 1 < n).then(|| idx(i, j + 1)),
        ]
        .into_iter()
        .flatten()
    };

    // far regions: +1 when touching the border, -1 when enclosed
    let mut sign = vec![0i8; n * n];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n * n {
        if sign[start] != 0 || value[start] <= band {
            continue;
        }
        let mut members = vec![start];
        let mut border = false;
        sign[start] = 1;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % n, k / n);
            border |= i == 0 || j == 0 || i + 1 == n || j + 1 == n;
            for m in neighbours(k) {
                if sign[m] == 0 && value[m] > band {
                    sign[m] = 1;
                    members.push(m);
                    queue.push_back(m);
                }
            }
        }
        if !border {
            for m in members {
                sign[m] = -1;
            }
        }
    }
    let nearest = |x: &[f64]| -> Option<usize> {
        let i = ((x[0] - grid.lo[0]) / hx).round();
        let j = ((x[1] - grid.lo[1]) / hy).round();
        let inside = (0.0..n as f64).contains(&i) && (0.0..n as f64).contains(&j);
        inside.then(|| idx(i as usize, j as usize))
    };
    // march from each near node along -g in half-cell steps; every ridge
    // passed on the way (forward-pointing score turning backward) flips the side
    let far_sign = sign.clone();
    let h = hx.min(hy);
    let max_steps = (16.0 * band / h).ceil() as usize;
    let mut x = [0.0; 2];
    let mut gx = [0.0; 2];
    for k in 0..n * n {
        if far_sign[k] != 0 {
            continue;
        }
        sign[k] = 1;
        let g0 = &g[2 * k..2 * k + 2];
        let len = norm(g0);
        if len == 0.0 || !len.is_finite() {
            continue;
        }
        let dir = [-g0[0] / len, -g0[1] / len];
        x.copy_from_slice(&nodes[2 * k..2 * k + 2]);
        let mut flips = 1i8;
        let mut forward = false;
        sign[k] = 'walk: {
            for _ in 0..max_steps {
                x[0] += 0.5 * h * dir[0];
                x[1] += 0.5 * h * dir[1];
                // leaving the grid counts as reaching the outside
                let Some(m) = nearest(&x) else { break 'walk flips };
                field.score_into(&x, sigma_k, &mut gx);
                let ahead = gx[0] * dir[0] + gx[1] * dir[1] > 0.0;
                if forward && !ahead {
                    flips = -flips;
                }
                forward = ahead;
                if far_sign[m] != 0 && !ahead {
                    break 'walk far_sign[m] * flips;
                }
            }
            flips
        };
    }

    // nodes on the ridge itself have no clear side; drop single-node islands
    let walked = sign.clone();
    for k in 0..n * n {
        if far_sign[k] == 0 && neighbours(k).all(|m| walked[m] == -walked[k]) {
            sign[k] = -walked[k];
        }
    }
    let iso = delta * s2;
    let signed: Vec<f64> = (0..n * n)
        .map(|k| {
            let v = (value[k] - iso).max(0.0);
            if sign[k] > 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    let below: Vec<bool> = (0..n * n).map(|k| sign[k] < 0).collect();

    // edge keys: horizontal (i, j)->(i+1, j) is 2k, vertical (i, j)->(i, j+1) is 2k+1
    let edge_point = |a: usize, b: usize| -> [f64; 2] {
        let (va, vb) = (signed[a], signed[b]);
        let t = if va == vb { 0.5 } else { va / (va - vb) };
        let t = t.clamp(0.0, 1.0);
        [
            nodes[2 * a] + t * (nodes[2 * b] - nodes[2 * a]),
            nodes[2 * a + 1] + t * (nodes[2 * b + 1] - nodes[2 * a + 1]),
        ]
    };
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut points: HashMap<usize, [f64; 2]> = HashMap::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let c = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
            // edges of the cell in order bottom, right, top, left
            let edges = [
                (2 * c[0], c[0], c[1]),
                (2 * c[1] + 1, c[1], c[2]),
                (2 * c[3], c[3], c[2]),
                (2 * c[0] + 1, c[0], c[3]),
            ];
            let cut: Vec<usize> = (0..4)
                .filter(|&e| below[edges[e].1] != below[edges[e].2])
                .collect();
            for &e in &cut {
                let (key, a, b) = edges[e];
                points.entry(key).or_insert_with(|| edge_point(a, b));
            }
            match cut.len() {
                2 => segments.push((edges[cut[0]].0, edges[cut[1]].0)),
                4 => {
                    // saddle: resolve by the mean of the corner values
                    let centre: f64 = c.iter().map(|&k| signed[k]).sum::<f64>() / 4.0;
                    if (centre < 0.0) == below[c[0]] {
                        segments.push((edges[0].0, edges[1].0));
                        segments.push((edges[2].0, edges[3].0));
                    } else {
                        segments.push((edges[0].0, edges[3].0));
                        segments.push((edges[1].0, edges[2].0));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(chain(&segments, &points))
}

/// Joins segments that share edge keys into polylines.
fn chain(segments: &[(usize, usize)], points: &HashMap<usize, [f64; 2]>) -> Vec<Polyline> {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adj.entry(a).or_default().push(s);
        adj.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let other = |s: usize, k: usize| {
        let (a, b) = segments[s];
        if a == k {
            b
        } else {
            a
        }
    };
    let walk = |start_seg: usize, from: usize, used: &mut Vec<bool>| -> Vec<usize> {
        let mut keys = vec![from];
        let mut seg = start_seg;
        loop {
            used[seg] = true;
            let next = other(seg, *keys.last().unwrap());
            keys.push(next);
            match adj[&next].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => return keys,
            }
        }
    };
    // open chains first, starting from keys with a single segment
    let mut ends: Vec<usize> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    ends.sort_unstable();
    for k in ends {
        let s = adj[&k][0];
        if used[s] {
            continue;
        }
        let keys = walk(s, k, &mut used);
        out.push(Polyline {
            points: keys.iter().map(|k| points[k]).collect(),
            closed: false,
        });
    }
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let mut keys = walk(s, segments[s].0, &mut used);
        let closed = keys.len() > 2 && keys.first() == keys.last();
        if closed {
            keys.pop();
        }
        out.push(Polyline {
            points: keys.iter().map(|k| points[k]).collect(),
            closed,
        });
    }
    out
}

/// SVG drawing of polylines in the square `[lo, hi]^2`, `size` pixels wide.
pub fn contours_to_svg(lines: &[Polyline], lo: [f64; 2], hi: [f64; 2], size: usize) -> String {
    let sx = size as f64 / (hi[0] - lo[0]);
    let sy = size as f64 / (hi[1] - lo[1]);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for line in lines {
        let mut d = String::new();
        for (i, p) in line.points.iter().enumerate() {
            let x = (p[0] - lo[0]) * sx;
            let y = (hi[1] - p[1]) * sy;
            let _ = write!(d, "{}{x:.3} {y:.3} ", if i == 0 { "M" } else { "L" });
        }
        if line.closed {
            d.push('Z');
        }
        let _ = writeln!(
            s,
            "<path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
            d.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// CSV with columns `contour,closed,x,y`.
pub fn contours_to_csv(lines: &[Polyline]) -> String {
    let mut s = String::from("contour,closed,x,y\n");
    for (i, line) in lines.iter().enumerate() {
        for p in &line.points {
            let _ = writeln!(s, "{i},{},{:.16e},{:.16e}", line.closed as u8, p[0], p[1]);
        }
    }
    s
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
fn symmetric_eigenvalues(mut a: Vec<f64>, d: usize) -> Vec<f64> {
    for _ in 0..50 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Relative size of a positive curvature that still counts as flat.
const FLAT_TOLERANCE: f64 = 0.1;

/// Keeps the points where log-density is locally a ridge or peak.
///
/// The Hessian of log-density is the Jacobian of the score, estimated by
/// central differences with `h = sigma_k / 10` and symmetrised. A point is
/// kept when its most curved direction bends down and no direction bends up
/// by more than a tenth of that; minima and saddles are removed.
pub fn filter_local_minima<F: ScoreField + ?Sized>(
    field: &F,
    points: &[Vec<f64>],
    sigma_k: f64,
) -> Vec<Vec<f64>> {
    let d = field.dim();
    let h = sigma_k / 10.0;
    points
        .iter()
        .filter(|x| {
            let mut hess = vec![0.0; d * d];
            let mut xp = x.to_vec();
            for j in 0..d {
                xp[j] = x[j] + h;
                let gp = field.score(&xp, sigma_k);
                xp[j] = x[j] - h;
                let gm = field.score(&xp, sigma_k);
                xp[j] = x[j];
                for i in 0..d {
                    hess[i * d + j] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            for i in 0..d {
                for j in 0..i {
                    let m = 0.5 * (hess[i * d + j] + hess[j * d + i]);
                    hess[i * d + j] = m;
                    hess[j * d + i] = m;
                }
            }
            let ev = symmetric_eigenvalues(hess, d);
            let (lo, hi) = (ev[0], ev[d - 1]);
            lo < 0.0 && hi <= FLAT_TOLERANCE * lo.abs()
        })
        .cloned()
        .collect()
}
