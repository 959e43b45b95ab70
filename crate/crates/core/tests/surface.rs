use gradfield::surface::{self, Camera, ContourGrid, RayCastConfig, RayHit};
use gradfield::{GmmField, PointCloud};
use proptest::prelude::*;

fn even_circle(n: usize, radius: f64) -> PointCloud {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    PointCloud::from_points(&pts).unwrap()
}

fn square_outline(per_side: usize) -> PointCloud {
    let mut pts = Vec::new();
    for i in 0..per_side {
        let t = -0.5 + i as f64 / per_side as f64;
        pts.extend([[t, -0.5], [0.5, t], [-t, 0.5], [-0.5, -t]]);
    }
    PointCloud::from_points(&pts).unwrap()
}

#[test]
fn circle_contour_is_one_closed_loop_near_the_radius() {
    let f = GmmField::new(even_circle(500, 0.5)).with_cutoff(true);
    for res in [64, 256] {
        let grid = ContourGrid::square(res, 1.0);
        let lines = surface::extract_contour_2d(&f, 0.01, &grid, 0.005).unwrap();
        assert_eq!(lines.len(), 1, "resolution {res}");
        assert!(lines[0].closed);
        let cell = grid.cell_size()[0];
        let worst = lines[0]
            .points
            .iter()
            .map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 0.5).abs())
            .fold(0.0, f64::max);
        assert!(worst < 2.0 * cell, "resolution {res}: {worst}");
    }
}

#[test]
fn square_contour_stays_within_two_cells_of_the_outline() {
    let f = GmmField::new(square_outline(100)).with_cutoff(true);
    let grid = ContourGrid::square(128, 1.0);
    let lines = surface::extract_contour_2d(&f, 0.01, &grid, 0.005).unwrap();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].closed);
    let cell = grid.cell_size()[0];
    let to_square = |p: &[f64; 2]| {
        let (ax, ay) = (p[0].abs(), p[1].abs());
        if ax.max(ay) >= 0.5 {
            ((ax - 0.5).max(0.0).powi(2) + (ay - 0.5).max(0.0).powi(2)).sqrt().max((ax.max(ay) - 0.5).abs())
        } else {
            0.5 - ax.max(ay)
        }
    };
    let forward = lines[0].points.iter().map(to_square).fold(0.0, f64::max);
    assert!(forward < 2.0 * cell, "contour to outline {forward}");
    // every corner region is visited
    for corner in [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]] {
        let near = lines[0]
            .points
            .iter()
            .map(|p| ((p[0] - corner[0]).powi(2) + (p[1] - corner[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(near < 2.0 * cell, "corner {corner:?}: {near}");
    }
}

#[test]
fn single_point_render_is_a_symmetric_disk() {
    let f = GmmField::new(PointCloud::from_points(&[[0.0, 0.0, 0.0]]).unwrap());
    let cam = Camera::look_at([0.0, 0.0, -2.0], [0.0; 3], [0.0, 1.0, 0.0], 2.0, 33, 33).unwrap();
    let cfg = RayCastConfig {
        iso_level: 0.02,
        ..Default::default()
    };
    let r = surface::render(&f, 0.01, &cam, &cfg).unwrap();
    let n = 33;
    let hit = |i: usize, j: usize| matches!(r.rays[i * n + j], RayHit::Hit { .. });
    assert!(hit(16, 16));
    assert!(!hit(0, 0));
    for i in 0..n {
        for j in 0..n {
            assert_eq!(hit(i, j), hit(n - 1 - i, j));
            assert_eq!(hit(i, j), hit(i, n - 1 - j));
            // the light lies on the x = y plane, which the camera maps to the
            // image diagonal
            assert_eq!(r.image.pixels[i * n + j], r.image.pixels[j * n + i]);
        }
    }
}

#[test]
fn sphere_hits_lie_on_the_offset_surface() {
    let f = GmmField::new(PointCloud::from_points(&[[0.1, -0.2, 0.3]]).unwrap());
    let cfg = RayCastConfig::default();
    let hit = surface::cast_ray(&f, 0.01, [0.1, -0.2, -1.7], [0.0, 0.0, 1.0], &cfg).unwrap();
    let RayHit::Hit { point, normal, travel } = hit else { panic!("expected a hit") };
    assert!((travel - (2.0 - cfg.iso_level)).abs() < 1e-12);
    assert!((point[2] - (0.3 - cfg.iso_level)).abs() < 1e-12);
    assert!((normal[2] + 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// On a single-point field the marched quantity is the exact distance, so
    /// rays aimed within the iso-sphere converge onto it and rays passing
    /// well outside it leave within the step budget.
    #[test]
    fn single_point_rays_terminate(
        theta in 0.0f64..std::f64::consts::TAU,
        phi in 0.2f64..3.0,
        offset in 0.0f64..1.0,
        hit in any::<bool>(),
    ) {
        let p = [0.0, 0.0, 0.0];
        let f = GmmField::new(PointCloud::from_points(&[p]).unwrap());
        let cfg = RayCastConfig::default();
        let delta = cfg.iso_level;
        let origin = [2.0 * phi.sin() * theta.cos(), 2.0 * phi.sin() * theta.sin(), 2.0 * phi.cos()];
        let inward = [-origin[0] / 2.0, -origin[1] / 2.0, -origin[2] / 2.0];
        // a unit vector orthogonal to the inward direction
        let helper = if inward[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut side = [
            inward[1] * helper[2] - inward[2] * helper[1],
            inward[2] * helper[0] - inward[0] * helper[2],
            inward[0] * helper[1] - inward[1] * helper[0],
        ];
        let s = (side[0] * side[0] + side[1] * side[1] + side[2] * side[2]).sqrt();
        side.iter_mut().for_each(|v| *v /= s);
        let approach = if hit { 0.9 * delta * offset } else { 1.5 * delta + offset };
        // closest approach of origin + t dir to the point equals `approach`
        let sin = approach / 2.0;
        let cos = (1.0 - sin * sin).sqrt();
        let dir = [
            cos * inward[0] + sin * side[0],
            cos * inward[1] + sin * side[1],
            cos * inward[2] + sin * side[2],
        ];
        let r = surface::cast_ray(&f, 0.01, origin, dir, &cfg).unwrap();
        match (hit, r) {
            (true, RayHit::Hit { point, normal, .. }) => {
                let d = (point[0] * point[0] + point[1] * point[1] + point[2] * point[2]).sqrt();
                prop_assert!((d - delta).abs() < 1e-3 * delta, "distance {d}");
                let nl = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
                prop_assert!((nl - 1.0).abs() < 1e-9);
            }
            (false, RayHit::Miss) => {}
            (h, other) => prop_assert!(false, "aimed to hit: {h}, got {other:?}"),
        }
    }
}
