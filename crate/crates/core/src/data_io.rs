//! Synthetic shapes, point cloud files and datasets.
//!
//! File grammars:
//!
//! * `xyz`: one point per line, 2 or 3 whitespace-separated numbers. Blank
//!   lines and lines starting with `#` are skipped.
//! * `csv`: header `x,y` or `x,y,z`, then one point per line.
//! * `ply_ascii`: `ply` / `format ascii 1.0` header with a `vertex` element
//!   whose properties include `x`, `y` and optionally `z`. Other vertex
//!   properties are ignored with a warning; other elements are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::cloud::{normalize_unit_cube, BBoxTransform, PointCloud};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Circle { radius: f64 },
    /// Axis-aligned square centred at the origin.
    Square { side: f64 },
    /// Star polygon alternating between the two radii.
    Star { tips: usize, outer: f64, inner: f64 },
    /// Open strokes, sampled jointly by arc length.
    Glyph { strokes: Vec<Vec<[f64; 2]>> },
    Sphere { radius: f64 },
    /// Two equal spheres centred at `(±separation/2, 0, 0)`.
    TwoSpheres { radius: f64, separation: f64 },
}

impl ShapeKind {
    pub fn dim(&self) -> usize {
        match self {
            ShapeKind::Sphere { .. } | ShapeKind::TwoSpheres { .. } => 3,
            _ => 2,
        }
    }

    /// A stroke glyph for the digits `0`-`9`, fitted to `[-0.5, 0.5]^2`.
    pub fn digit(d: u8) -> Option<Self> {
        let (l, r, t, b, m) = (-0.3, 0.3, 0.5, -0.5, 0.0);
        let strokes: Vec<Vec<[f64; 2]>> = match d {
            0 => vec![vec![[l, b], [r, b], [r, t], [l, t], [l, b]]],
            1 => vec![vec![[-0.1, 0.35], [0.0, t], [0.0, b]]],
            2 => vec![vec![[l, t], [r, t], [r, m], [l, m], [l, b], [r, b]]],
            3 => vec![vec![[l, t], [r, t], [r, b], [l, b]], vec![[l, m], [r, m]]],
            4 => vec![vec![[l, t], [l, m], [r, m]], vec![[r, t], [r, b]]],
            5 => vec![vec![[r, t], [l, t], [l, m], [r, m], [r, b], [l, b]]],
            6 => vec![vec![[r, t], [l, t], [l, b], [r, b], [r, m], [l, m]]],
            7 => vec![vec![[l, t], [r, t], [0.0, b]]],
            8 => vec![
                vec![[l, b], [r, b], [r, t], [l, t], [l, b]],
                vec![[l, m], [r, m]],
            ],
            9 => vec![vec![[r, m], [l, m], [l, t], [r, t], [r, b], [l, b]]],
            _ => return None,
        };
        Some(ShapeKind::Glyph { strokes })
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            ShapeKind::Circle { radius } | ShapeKind::Sphere { radius } => positive("radius", *radius),
            ShapeKind::Square { side } => positive("side", *side),
            ShapeKind::Star { tips, outer, inner } => {
                positive("outer radius", *outer)?;
                positive("inner radius", *inner)?;
                if *tips < 2 {
                    return Err(Error::invalid("a star needs at least 2 tips"));
                }
                Ok(())
            }
            ShapeKind::Glyph { strokes } => {
                if strokes.iter().all(|s| polyline_length(s) == 0.0) {
                    return Err(Error::invalid("glyph has zero total stroke length"));
                }
                if strokes.iter().flatten().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("glyph vertices must be finite"));
                }
                Ok(())
            }
            ShapeKind::TwoSpheres { radius, separation } => {
                positive("radius", *radius)?;
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(Error::invalid("separation must be non-negative"));
                }
                Ok(())
            }
        }
    }

    /// Closed outline of the 2D polygonal shapes.
    fn polygon(&self) -> Option<Vec<[f64; 2]>> {
        match *self {
            ShapeKind::Square { side } => {
                let h = side / 2.0;
                Some(vec![[-h, -h], [h, -h], [h, h], [-h, h], [-h, -h]])
            }
            ShapeKind::Star { tips, outer, inner } => {
                let mut v: Vec<[f64; 2]> = (0..2 * tips)
                    .map(|i| {
                        let a = std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / tips as f64;
                        let r = if i % 2 == 0 { outer } else { inner };
                        [r * a.cos(), r * a.sin()]
                    })
                    .collect();
                v.push(v[0]);
                Some(v)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n_points: usize,
    /// Standard deviation of isotropic Gaussian jitter.
    pub noise: f64,
    pub seed: u64,
}

impl ShapeSpec {
    /// `kind` with 800 points in 2D or 2048 in 3D, no jitter.
    pub fn new(kind: ShapeKind, seed: u64) -> Self {
        let n_points = if kind.dim() == 2 { 800 } else { 2048 };
        Self {
            kind,
            n_points,
            noise: 0.0,
            seed,
        }
    }
}

fn polyline_length(v: &[[f64; 2]]) -> f64 {
    v.windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

/// Point at arc length `s` along a set of strokes.
fn point_at(strokes: &[Vec<[f64; 2]>], mut s: f64) -> [f64; 2] {
    let mut last = [0.0, 0.0];
    for stroke in strokes {
        for w in stroke.windows(2) {
            let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            if s <= len && len > 0.0 {
                let t = s / len;
                return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
            }
            s -= len;
            last = w[1];
        }
    }
    last
}

/// Samples `spec` uniformly by arc length or surface area. Curves use
/// jittered stratified positions, so each of `n` equal-length pieces holds
/// exactly one point.
pub fn generate(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.kind.validate()?;
    if spec.n_points == 0 {
        return Err(Error::invalid("n_points must be at least 1"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid("noise must be non-negative"));
    }
    let n = spec.n_points;
    let mut r = rng::seeded(spec.seed);
    let dim = spec.kind.dim();
    let mut coords = Vec::with_capacity(n * dim);

    let strata = |r: &mut rng::Rng| -> Vec<f64> {
        let offset: f64 = r.random();
        (0..n)
            .map(|i| ((i as f64 + r.random::<f64>() + offset) / n as f64).fract())
            .collect()
    };

    match &spec.kind {
        ShapeKind::Circle { radius } => {
            for u in strata(&mut r) {
                let a = u * std::f64::consts::TAU;
                coords.extend([radius * a.cos(), radius * a.sin()]);
            }
        }
        ShapeKind::Square { .. } | ShapeKind::Star { .. } => {
            let poly = spec.kind.polygon().expect("polygonal shape");
            let strokes = vec![poly];
            let total = polyline_length(&strokes[0]);
            for u in strata(&mut r) {
                coords.extend(point_at(&strokes, u * total));
            }
        }
        ShapeKind::Glyph { strokes } => {
            let total: f64 = strokes.iter().map(|s| polyline_length(s)).sum();
            // glyph strokes are open, so no wrap-around offset
            for i in 0..n {
                let u = (i as f64 + r.random::<f64>()) / n as f64;
                coords.extend(point_at(strokes, u * total));
            }
        }
        ShapeKind::Sphere { radius } => {
            let mut v = [0.0; 3];
            for _ in 0..n {
                sphere_point(&mut r, &mut v);
                coords.extend(v.iter().map(|c| radius * c));
            }
        }
        ShapeKind::TwoSpheres { radius, separation } => {
            let mut v = [0.0; 3];
            for i in 0..n {
                sphere_point(&mut r, &mut v);
                let cx = if i < n.div_ceil(2) { -separation / 2.0 } else { separation / 2.0 };
                coords.extend([cx + radius * v[0], radius * v[1], radius * v[2]]);
            }
        }
    }

    if spec.noise > 0.0 {
        for c in coords.iter_mut() {
            *c += spec.noise * rng::standard_normal(&mut r);
        }
    }
    PointCloud::new(dim, coords)
}

fn sphere_point(r: &mut rng::Rng, v: &mut [f64; 3]) {
    loop {
        rng::fill_normal(r, v);
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|c| *c /= norm);
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Xyz,
    PlyAscii,
    Csv,
}

impl Format {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "xyz" => Some(Format::Xyz),
            "ply" | "ply_ascii" => Some(Format::PlyAscii),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }

    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        Self::parse(path.extension()?.to_str()?)
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Xyz => "xyz",
            Format::PlyAscii => "ply_ascii",
            Format::Csv => "csv",
        }
    }
}

/// Formats a coordinate with 17 significant digits.
pub fn format_coord(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn cloud_to_string(cloud: &PointCloud, format: Format) -> String {
    let mut s = String::new();
    let d = cloud.dim();
    match format {
        Format::Xyz => {}
        Format::Csv => s.push_str(if d == 2 { "x,y\n" } else { "x,y,z\n" }),
        Format::PlyAscii => {
            let _ = write!(
                s,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\n",
                cloud.len()
            );
            if d == 3 {
                s.push_str("property double z\n");
            }
            s.push_str("end_header\n");
        }
    }
    let sep = if format == Format::Csv { "," } else { " " };
    for p in cloud.iter() {
        let row: Vec<String> = p.iter().map(|v| format_coord(*v)).collect();
        s.push_str(&row.join(sep));
        s.push('\n');
    }
    s
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: Format) -> Result<()> {
    fs::write(path, cloud_to_string(cloud, format)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: &Path, format: Format) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text, format).map_err(|e| match e {
        Error::Parse { line, detail, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        },
        other => other,
    })
}

fn parse_error(line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: "<input>".into(),
        line,
        detail: detail.into(),
    }
}

fn parse_row(fields: &[&str], line: usize, coords: &mut Vec<f64>) -> Result<()> {
    for f in fields {
        let v: f64 = f
            .parse()
            .map_err(|_| parse_error(line, format!("invalid number '{f}'")))?;
        if !v.is_finite() {
            return Err(parse_error(line, format!("non-finite coordinate '{f}'")));
        }
        coords.push(v);
    }
    Ok(())
}

/// Parses a cloud from text. Errors carry 1-based line numbers.
pub fn parse_cloud(text: &str, format: Format) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut coords = Vec::new();
    let dim;
    match format {
        Format::Xyz => {
            let mut d = None;
            for (no, l) in lines {
                if l.is_empty() || l.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = l.split_whitespace().collect();
                match d {
                    None if fields.len() == 2 || fields.len() == 3 => d = Some(fields.len()),
                    None => return Err(parse_error(no, format!("expected 2 or 3 values, got {}", fields.len()))),
                    Some(d) if d != fields.len() => {
                        return Err(parse_error(no, format!("expected {d} values, got {}", fields.len())))
                    }
                    _ => {}
                }
                parse_row(&fields, no, &mut coords)?;
            }
            dim = d.ok_or_else(|| parse_error(0, "no points"))?;
        }
        Format::Csv => {
            let (no, header) = lines.next().ok_or_else(|| parse_error(1, "missing header"))?;
            dim = match header.replace(' ', "").as_str() {
                "x,y" => 2,
                "x,y,z" => 3,
                other => return Err(parse_error(no, format!("expected header 'x,y[,z]', got '{other}'"))),
            };
            for (no, l) in lines {
                if l.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = l.split(',').map(str::trim).collect();
                if fields.len() != dim {
                    return Err(parse_error(no, format!("expected {dim} values, got {}", fields.len())));
                }
                parse_row(&fields, no, &mut coords)?;
            }
        }
        Format::PlyAscii => {
            let (cols, count, d) = parse_ply_header(&mut lines)?;
            dim = d;
            let mut read = 0;
            for (no, l) in lines {
                if read == count {
                    if !l.is_empty() {
                        return Err(parse_error(no, "data after the last vertex"));
                    }
                    continue;
                }
                let fields: Vec<&str> = l.split_whitespace().collect();
                if fields.len() != cols.len() {
                    return Err(parse_error(
                        no,
                        format!("expected {} values, got {}", cols.len(), fields.len()),
                    ));
                }
                let mut picked = [""; 3];
                for (slot, name) in cols.iter().enumerate() {
                    if let Some(axis) = ["x", "y", "z"].iter().position(|a| a == name) {
                        picked[axis] = fields[slot];
                    }
                }
                parse_row(&picked[..dim], no, &mut coords)?;
                read += 1;
            }
            if read != count {
                return Err(parse_error(0, format!("header announces {count} vertices, found {read}")));
            }
        }
    }
    PointCloud::new(dim, coords)
}

/// Returns the vertex property names, the vertex count and the dimension.
fn parse_ply_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(Vec<String>, usize, usize)> {
    let mut expect = |want: &str| -> Result<()> {
        match lines.next() {
            Some((_, l)) if l == want => Ok(()),
            Some((no, l)) => Err(parse_error(no, format!("expected '{want}', got '{l}'"))),
            None => Err(parse_error(0, format!("expected '{want}'"))),
        }
    };
    expect("ply")?;
    expect("format ascii 1.0")?;
    let mut count = None;
    let mut cols = Vec::new();
    for (no, l) in lines.by_ref() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| parse_error(no, "invalid vertex count"))?);
            }
            ["element", other, ..] => {
                return Err(parse_error(no, format!("unsupported element '{other}'")));
            }
            ["property", "list", ..] => return Err(parse_error(no, "list properties are not supported")),
            ["property", _, name] if count.is_some() => cols.push(name.to_string()),
            ["end_header"] => {
                let count = count.ok_or_else(|| parse_error(no, "no vertex element"))?;
                let has = |a: &str| cols.iter().any(|c| c == a);
                if !has("x") || !has("y") {
                    return Err(parse_error(no, "vertex element lacks x or y"));
                }
                let dim = if has("z") { 3 } else { 2 };
                let extra: Vec<&str> = cols
                    .iter()
                    .map(String::as_str)
                    .filter(|c| !["x", "y", "z"].contains(c))
                    .collect();
                if !extra.is_empty() {
                    warn!("ignoring vertex properties {}", extra.join(", "));
                }
                return Ok((cols, count, dim));
            }
            _ => return Err(parse_error(no, format!("unexpected header line '{l}'"))),
        }
    }
    Err(parse_error(0, "missing end_header"))
}

/// Normalized shapes split into train and test parts.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<PointCloud>,
    pub test: Vec<PointCloud>,
    /// Transforms from the raw generated shapes, train then test.
    pub transforms: Vec<BBoxTransform>,
}

impl Dataset {
    /// Training indices grouped into shuffled batches of `batch` shapes;
    /// the last batch may be smaller.
    pub fn batches(&self, batch: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng::seeded(seed));
        order.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
    }
}

/// Generates and normalizes every spec. The first `round(train * n)` shapes
/// form the training part.
pub fn make_dataset(specs: &[ShapeSpec], train: f64, test: f64) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(Error::invalid("dataset needs at least one shape spec"));
    }
    if !(train >= 0.0 && test >= 0.0 && ((train + test) - 1.0).abs() < 1e-9) {
        return Err(Error::invalid(format!(
            "split fractions must be non-negative and sum to 1, got {train} and {test}"
        )));
    }
    let n_train = (train * specs.len() as f64).round() as usize;
    let mut clouds = Vec::with_capacity(specs.len());
    let mut transforms = Vec::with_capacity(specs.len());
    for s in specs {
        let (c, t) = normalize_unit_cube(&generate(s)?);
        clouds.push(c);
        transforms.push(t);
    }
    let test = clouds.split_off(n_train);
    Ok(Dataset {
        train: clouds,
        test,
        transforms,
    })
}
