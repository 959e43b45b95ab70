//! Central finite-difference checks of analytic parameter gradients.

use rand::Rng as _;

use super::layers::Module;
use super::tensor::Tensor;
use crate::rng;

/// One probed parameter entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares `analytic` (in `Module::params` order) with central differences
/// of `loss` at `probes` parameter entries drawn uniformly from `seed`.
/// Parameters are restored after every probe.
pub fn probe_parameters<M: Module + ?Sized>(
    module: &mut M,
    analytic: &[Tensor],
    probes: usize,
    h: f64,
    seed: u64,
    mut loss: impl FnMut(&mut M) -> f64,
) -> Vec<Probe> {
    let sizes: Vec<usize> = module.params().iter().map(|t| t.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "one gradient per parameter tensor");
    let total: usize = sizes.iter().sum();
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        let index = flat;
        let original = module.params()[tensor].data()[index];
        module.params_mut()[tensor].data_mut()[index] = original + h;
        let plus = loss(module);
        module.params_mut()[tensor].data_mut()[index] = original - h;
        let minus = loss(module);
        module.params_mut()[tensor].data_mut()[index] = original;
        out.push(Probe {
            tensor,
            index,
            analytic: analytic[tensor].data()[index],
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    out
}
