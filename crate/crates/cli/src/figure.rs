//! Static SVG figures: scatter plots and heatmap/quiver panels.

use std::fmt::Write as _;

/// Panel side in pixels.
const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;

/// One square panel over `[-extent, extent]^2`.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub extent: f64,
    /// Row-major heat values, `res x res`, first row at the top.
    pub heat: Vec<f64>,
    pub res: usize,
    /// Arrow tails and unit directions.
    pub arrows: Vec<([f64; 2], [f64; 2])>,
    pub points: Vec<[f64; 2]>,
}

fn ramp(t: f64) -> (u8, u8, u8) {
    // dark blue -> teal -> yellow
    let t = t.clamp(0.0, 1.0);
    let stops = [(0.0, [38.0, 20.0, 90.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [250.0, 230.0, 35.0])];
    let (a, b) = if t < 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - a.0) / (b.0 - a.0);
    let c = |k: usize| (a.1[k] + u * (b.1[k] - a.1[k])).round() as u8;
    (c(0), c(1), c(2))
}

fn panel_svg(s: &mut String, p: &Panel, x0: f64) {
    let e = p.extent;
    let map = |q: [f64; 2]| {
        (
            x0 + (q[0] + e) / (2.0 * e) * PANEL,
            MARGIN + (e - q[1]) / (2.0 * e) * PANEL,
        )
    };
    if p.res > 0 && p.heat.len() == p.res * p.res {
        let lo = p.heat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.heat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cell = PANEL / p.res as f64;
        for r in 0..p.res {
            for c in 0..p.res {
                let v = p.heat[r * p.res + c];
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let (cr, cg, cb) = ramp(t);
                let _ = writeln!(
                    s,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({cr},{cg},{cb})\"/>",
                    x0 + c as f64 * cell,
                    MARGIN + r as f64 * cell,
                    cell + 0.05,
                    cell + 0.05
                );
            }
        }
    } else {
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.2}\" y=\"{MARGIN:.2}\" width=\"{PANEL:.2}\" height=\"{PANEL:.2}\" fill=\"white\" stroke=\"black\"/>"
        );
    }
    for q in &p.points {
        let (x, y) = map(*q);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.2\" fill=\"black\"/>");
    }
    let len = 0.6 * PANEL / (p.arrows.len() as f64).sqrt().max(1.0);
    for (tail, dir) in &p.arrows {
        let (x, y) = map(*tail);
        let (dx, dy) = (dir[0] * len, -dir[1] * len);
        let (hx, hy) = (x + dx, y + dy);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{hx:.2}\" y2=\"{hy:.2}\" stroke=\"white\" stroke-width=\"1\"/>"
        );
        // arrow head: two short strokes at +-150 degrees from the shaft
        for side in [-1.0f64, 1.0] {
            let a = side * 2.618;
            let (c, sn) = (a.cos(), a.sin());
            let (ux, uy) = (dx * c - dy * sn, dx * sn + dy * c);
            let _ = writeln!(
                s,
                "<line x1=\"{hx:.2}\" y1=\"{hy:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"white\" stroke-width=\"1\"/>",
                hx + 0.3 * ux,
                hy + 0.3 * uy
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        x0 + PANEL / 2.0,
        MARGIN - 8.0,
        p.title
    );
}

/// Panels laid out left to right.
pub fn panels(panels: &[Panel]) -> String {
    let width = MARGIN + panels.len() as f64 * (PANEL + MARGIN);
    let height = PANEL + 2.0 * MARGIN;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, p) in panels.iter().enumerate() {
        panel_svg(&mut s, p, MARGIN + i as f64 * (PANEL + MARGIN));
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of the first two coordinates of a flat point list.
pub fn scatter(title: &str, coords: &[f64], dim: usize, extent: f64) -> String {
    let points = coords.chunks_exact(dim).map(|p| [p[0], p[1]]).collect();
    panels(&[Panel {
        title: title.to_string(),
        extent,
        points,
        ..Default::default()
    }])
}
