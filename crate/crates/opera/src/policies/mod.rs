//! Online decision rules: the guaranteed adaptive policies, LP-guided
//! heuristics, baselines, and the Monte Carlo estimators they rely on.

pub mod adaptive;
pub mod heuristics;
pub mod tables;

pub use adaptive::{AdaptiveBatch, AdaptiveShare};
pub use heuristics::{EpsGreedy, GreedyPolicy, Opera1, Opera2, RandomPolicy};
pub use tables::{estimate_tables, PolicyTables};

/// The scaling constant of the adaptive policies for a given capacity:
/// the unique root of `gamma = (1 - gamma)^(kappa + 1)` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaValue {
    pub kappa: usize,
    pub gamma: f64,
}

pub fn gamma_fixed_point(kappa: usize) -> GammaValue {
    assert!(kappa >= 1, "kappa must be >= 1");
    // f(g) = g - (1-g)^(kappa+1) is strictly increasing on [0,1] with
    // f(0) = -1 and f(1) = 1; bisect to 1e-12.
    let e = (kappa + 1) as f64;
    let f = |g: f64| g - (1.0 - g).powf(e);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    GammaValue {
        kappa,
        gamma: 0.5 * (lo + hi),
    }
}
