use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::ensemble::TreeEnsemble;

use super::{AttackConfig, AttackError};

/// Independent random stream for one (example, start) pair.
pub fn start_rng(seed: u64, example: u64, start: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((example << 32) | (start & 0xffff_ffff));
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialPoint {
    /// Refined point next to the decision boundary.
    pub point: Vec<f64>,
    /// The accepted Gaussian draw before refinement.
    pub raw: Vec<f64>,
    /// Draws needed, including the accepted one.
    pub draws: usize,
}

/// Draws `x0 + N(0, stddev^2 I)` until the model no longer predicts `y0`.
pub fn draw_initial<R: Rng + ?Sized>(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    stddev: f64,
    max_redraws: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, usize), AttackError> {
    let normal = Normal::new(0.0, stddev).map_err(|e| AttackError::Config(e.to_string()))?;
    for draw in 1..=max_redraws {
        let x: Vec<f64> = x0.iter().map(|&v| v + rng.sample(normal)).collect();
        if ensemble.predict_class(&x) != y0 {
            return Ok((x, draw));
        }
    }
    Err(AttackError::InitExhausted(max_redraws))
}

/// Bisection on the segment from `x0` (class `y0`) to the adversarial
/// `x_adv`, keeping the adversarial end, until the parameter bracket is
/// narrower than `tolerance`.
pub fn bisect_to_boundary(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    x_adv: &[f64],
    tolerance: f64,
) -> Vec<f64> {
    let at = |s: f64| -> Vec<f64> {
        x0.iter()
            .zip(x_adv)
            .map(|(&a, &b)| a + s * (b - a))
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<Vec<f64>> = None;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        if ensemble.predict_class(&p) != y0 {
            hi = mid;
            best = Some(p);
        } else {
            lo = mid;
        }
    }
    best.unwrap_or_else(|| x_adv.to_vec())
}

/// One refined adversarial starting point.
pub fn generate_initial<R: Rng + ?Sized>(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    config: &AttackConfig,
    rng: &mut R,
) -> Result<InitialPoint, AttackError> {
    let (raw, draws) = draw_initial(
        ensemble,
        x0,
        y0,
        config.init_stddev,
        config.max_redraws,
        rng,
    )?;
    let point = bisect_to_boundary(ensemble, x0, y0, &raw, config.bisection_tolerance);
    Ok(InitialPoint { point, raw, draws })
}
