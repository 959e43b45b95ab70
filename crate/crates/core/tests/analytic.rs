use gradfield::data_io::{generate, ShapeKind, ShapeSpec};
use gradfield::{rng, GmmField, PointCloud, ScoreField};
use proptest::prelude::*;
use rand::Rng as _;

fn fd_gradient(f: &GmmField, x: &[f64], sigma: f64) -> Vec<f64> {
    // step proportional to sigma keeps truncation and rounding balanced
    let h = 1e-4 * sigma;
    (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += h;
            m[k] -= h;
            (f.log_density(&p, sigma) - f.log_density(&m, sigma)) / (2.0 * h)
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

#[test]
fn score_is_the_gradient_of_log_density() {
    let square = generate(&ShapeSpec {
        n_points: 400,
        ..ShapeSpec::new(ShapeKind::Square { side: 1.0 }, 3)
    })
    .unwrap();
    let mut r = rng::seeded(4);
    let random: Vec<f64> = (0..200).map(|_| r.random_range(-1.0..1.0)).collect();
    let clouds = [square, PointCloud::new(2, random).unwrap()];
    for cloud in clouds {
        let f = GmmField::new(cloud);
        for sigma in [1.0, 0.1, 0.01] {
            for _ in 0..20 {
                let x = [r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)];
                let e = rel(&f.score(&x, sigma), &fd_gradient(&f, &x, sigma));
                assert!(e < 1e-5, "sigma {sigma} at {x:?}: {e:e}");
            }
        }
    }
}

#[test]
fn single_point_distance_estimate_is_exact() {
    let f = GmmField::new(PointCloud::from_points(&[[0.2, -0.3, 0.1]]).unwrap());
    for sigma in [1.0, 0.01, 1e-4] {
        let d = f.distance_estimate(&[1.2, 0.7, -0.9], sigma);
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn tiny_sigma_picks_the_nearest_point() {
    let f = GmmField::new(PointCloud::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap());
    let w = f.weights(&[0.9, 0.2], 1e-4);
    assert!(w[1] > 1.0 - 1e-9);
}

#[test]
fn cutoff_agrees_with_exact_mixture() {
    let cloud = generate(&ShapeSpec::new(ShapeKind::Circle { radius: 0.5 }, 5)).unwrap();
    let exact = GmmField::new(cloud.clone());
    let cut = GmmField::new(cloud).with_cutoff(true);
    let mut r = rng::seeded(6);
    for sigma in [1.0, 0.1, 0.01] {
        for _ in 0..50 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            assert!(rel(&cut.score(&x, sigma), &exact.score(&x, sigma)) < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn weights_sum_to_one(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
        x in (-3.0f64..3.0, -3.0f64..3.0),
        log_sigma in -4.0f64..2.0,
    ) {
        let cloud = PointCloud::from_points(&pts.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>()).unwrap();
        let f = GmmField::new(cloud);
        let w = f.weights(&[x.0, x.1], 10f64.powf(log_sigma));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn mean_shift_stays_in_the_hull_box(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..30),
        x in (-3.0f64..3.0, -3.0f64..3.0),
        log_sigma in -3.0f64..1.0,
    ) {
        let points: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let f = GmmField::new(PointCloud::from_points(&points).unwrap());
        let sigma = 10f64.powf(log_sigma);
        let g = f.score(&[x.0, x.1], sigma);
        let m = [x.0 + sigma * sigma * g[0], x.1 + sigma * sigma * g[1]];
        for k in 0..2 {
            let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m[k] >= lo - 1e-9 && m[k] <= hi + 1e-9);
        }
    }
}
