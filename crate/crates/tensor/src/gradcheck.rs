//! Central finite differences, used to check analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamId, ParamStore};

/// Relative error in the form used by the gradient checks:
/// `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// `(f(x + h) - f(x - h)) / 2h` for coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let up = f(&xp);
    xp[i] = x[i] - h;
    let down = f(&xp);
    (up - down) / (2.0 * h)
}

/// One checked coordinate.
#[derive(Debug, Clone)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn relative_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }

    /// Relative error with a caller-chosen denominator floor, for losses
    /// large enough that finite differences cannot resolve tiny gradients.
    pub fn relative_error_floored(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / (self.analytic.abs() + self.numeric.abs()).max(floor)
    }

    /// Whether the gradient is large enough to be resolved at `floor`.
    pub fn resolved(&self, floor: f64) -> bool {
        self.analytic.abs() + self.numeric.abs() >= floor
    }
}

/// Samples `count` random parameter coordinates and compares the analytic
/// gradients `grads` (indexed by [`ParamId`]) against central differences
/// of `loss`, which must evaluate the loss for a given store.
pub fn check_params(
    store: &ParamStore,
    grads: &[Option<Vec<f64>>],
    loss: &mut dyn FnMut(&ParamStore) -> f64,
    count: usize,
    h: f64,
    seed: u64,
) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(ParamId, usize)> = store
        .ids()
        .flat_map(|id| (0..store.get(id).len()).map(move |k| (id, k)))
        .collect();
    let picks = sample(&mut rng, coords.len(), count.min(coords.len()));
    let mut work = store.clone();
    picks
        .into_iter()
        .map(|pick| {
            let (id, k) = coords[pick];
            let orig = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + h;
            let up = loss(&work);
            work.get_mut(id).data_mut()[k] = orig - h;
            let down = loss(&work);
            work.get_mut(id).data_mut()[k] = orig;
            Probe {
                param: store.name(id).to_string(),
                index: k,
                analytic: grads[id.0].as_ref().map_or(0.0, |g| g[k]),
                numeric: (up - down) / (2.0 * h),
            }
        })
        .collect()
}
