//! The score-field capability: anything that maps a query point and a noise
//! level to an estimate of the gradient of the log-density.

/// A gradient field of log-density, `x, sigma -> grad_x log p_sigma(x)`.
///
/// Implementations must be deterministic and return finite values for
/// finite queries. Conditioning on a shape latent is the implementor's
/// business (see `model::ConditionedDecoder`).
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;

    /// Writes the score at `x` into `out` (both of length `dim()`).
    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]);

    fn score(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, sigma, &mut out);
        out
    }

    /// Scores for a row-major batch of points. The result must equal
    /// evaluating each row separately.
    fn score_batch(&self, points: &[f64], sigma: f64) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; points.len()];
        for (x, o) in points.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.score_into(x, sigma, o);
        }
        out
    }
}

impl<F: ScoreField + ?Sized> ScoreField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        (**self).score_into(x, sigma, out)
    }

    fn score_batch(&self, points: &[f64], sigma: f64) -> Vec<f64> {
        (**self).score_batch(points, sigma)
    }
}

/// A field defined by a closure; handy for tests and analytic fields.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScoreField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        (self.f)(x, sigma, out)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero if either vector vanishes.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
