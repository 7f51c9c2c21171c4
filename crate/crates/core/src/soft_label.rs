//! Accuracy–cost-aware soft targets.
//!
//! For a sample with correctness row `y` and cost row `c`, the target puts
//! mass only on correct models, tilted towards cheap ones:
//! `t(j) ∝ 1{y_j = 1} · exp(−λ·c_j)`. `λ = 0` is uniform over the correct
//! set and `λ = +∞` is uniform over its cheapest members.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Cost-penalty strength; `+∞` is allowed.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Lambda(f64);

impl Lambda {
    pub const ZERO: Lambda = Lambda(0.0);
    pub const INFINITY: Lambda = Lambda(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be ≥ 0, got {value}")));
        }
        Ok(Lambda(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `{0, 10, 100, 1000, 10000, +∞}`.
    pub fn default_grid() -> Vec<Lambda> {
        [0.0, 10.0, 100.0, 1000.0, 10000.0, f64::INFINITY].into_iter().map(Lambda).collect()
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(Lambda::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse lambda `{s}`")))
                .and_then(Lambda::new),
        }
    }
}

// JSON has no infinity, so λ serializes as a string ("100", "inf").
impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftTarget {
    pub probs: Vec<f64>,
    pub lambda: Lambda,
}

impl SoftTarget {
    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = j;
        }
    }
    best
}

pub fn soft_target(y_row: &[u8], c_row: &[f64], lambda: Lambda) -> Result<SoftTarget> {
    if y_row.len() != c_row.len() {
        return Err(Error::DimMismatch { expected: y_row.len(), found: c_row.len() });
    }
    let min_cost = y_row
        .iter()
        .zip(c_row)
        .filter(|(y, _)| **y == 1)
        .map(|(_, &c)| c)
        .fold(f64::INFINITY, f64::min);
    if min_cost.is_infinite() {
        return Err(Error::NoCorrectModel);
    }

    let mut probs: Vec<f64> = if lambda.is_infinite() {
        y_row
            .iter()
            .zip(c_row)
            .map(|(&y, &c)| if y == 1 && c == min_cost { 1.0 } else { 0.0 })
            .collect()
    } else {
        // exp(−λ(c − c_min)) ∈ (0, 1]; the shift cancels in the normalization.
        let l = lambda.value();
        y_row
            .iter()
            .zip(c_row)
            .map(|(&y, &c)| if y == 1 { (-l * (c - min_cost)).exp() } else { 0.0 })
            .collect()
    };
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(SoftTarget { probs, lambda })
}

pub fn expected_cost(target: &SoftTarget, c_row: &[f64]) -> f64 {
    target.probs.iter().zip(c_row).map(|(p, c)| p * c).sum()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

pub const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy `Σ_j t(j)·(−ln p_j)`; equals `KL(t‖p) + H(t)`.
pub fn soft_loss(predicted: &[f64], target: &SoftTarget) -> f64 {
    target
        .probs
        .iter()
        .zip(predicted)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| -t * p.max(PROB_FLOOR).ln())
        .sum()
}

/// `KL(t‖p)`.
pub fn kl_divergence(target: &SoftTarget, predicted: &[f64]) -> f64 {
    soft_loss(predicted, target) - entropy(&target.probs)
}

/// Brute-force check of the closed form against an entropy-regularized
/// objective.
///
/// Minimizes `Σ_j q_j·λ·c_j − τ·H(q)` over a lattice on the simplex of the
/// correct models (spacing `grid_step`) and returns the L∞ distance between
/// the lattice minimizer and [`soft_target`] at `λ/τ`. A coarse-to-fine
/// search finds a starting point, then unit transfers between coordinates
/// are applied until none improves; for a separable convex objective that
/// exchange-stable point is the exact lattice minimizer.
pub fn verify_optimality(y_row: &[u8], c_row: &[f64], lambda: f64, tau: f64, grid_step: f64) -> Result<f64> {
    if !(tau > 0.0) || !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument("need finite λ ≥ 0 and τ > 0".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid step {grid_step} out of (0, 0.5]")));
    }
    let correct: Vec<usize> = (0..y_row.len()).filter(|&j| y_row[j] == 1).collect();
    match correct.len() {
        0 => return Err(Error::NoCorrectModel),
        k if k > 4 => return Err(Error::UnsupportedArity(k)),
        _ => {}
    }
    let costs: Vec<f64> = correct.iter().map(|&j| c_row[j]).collect();
    let lattice = (1.0 / grid_step).round() as i64;
    let best = grid_minimize(&costs, lambda, tau, lattice);

    let closed = soft_target(y_row, c_row, Lambda::new(lambda / tau)?)?;
    let mut grid_q = vec![0.0; y_row.len()];
    for (slot, &j) in correct.iter().enumerate() {
        grid_q[j] = best[slot] as f64 / lattice as f64;
    }
    Ok(grid_q
        .iter()
        .zip(&closed.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn regularized_objective(q: &[i64], costs: &[f64], lambda: f64, tau: f64, lattice: i64) -> f64 {
    let n = lattice as f64;
    q.iter()
        .zip(costs)
        .map(|(&qi, &c)| {
            let p = qi as f64 / n;
            let ent = if qi > 0 { p * p.ln() } else { 0.0 };
            p * lambda * c + tau * ent
        })
        .sum()
}

/// Integer lattice points `q ∈ ℕ^k` with `Σ q = lattice`, searched over
/// shrinking windows.
fn grid_minimize(costs: &[f64], lambda: f64, tau: f64, lattice: i64) -> Vec<i64> {
    let k = costs.len();
    if k == 1 {
        return vec![lattice];
    }
    // Start with a step that gives ~40 points per axis.
    let mut step = (lattice / 40).max(1);
    let mut center: Vec<i64> = vec![lattice / k as i64; k];
    let mut radius = lattice; // first level covers the whole simplex
    loop {
        let lo: Vec<i64> = center[..k - 1].iter().map(|&c| (c - radius).max(0)).collect();
        let hi: Vec<i64> = center[..k - 1].iter().map(|&c| (c + radius).min(lattice)).collect();
        let mut best = center.clone();
        let mut best_val = f64::INFINITY;
        let mut q = vec![0i64; k];
        enumerate_window(&lo, &hi, step, lattice, 0, &mut q, &mut |q| {
            let v = regularized_objective(q, costs, lambda, tau, lattice);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(q);
            }
        });
        center = best;
        if step == 1 {
            return exchange_descent(center, costs, lambda, tau, lattice);
        }
        radius = 3 * step;
        step = (step / 8).max(1);
    }
}

fn exchange_descent(mut q: Vec<i64>, costs: &[f64], lambda: f64, tau: f64, lattice: i64) -> Vec<i64> {
    let k = q.len();
    let mut val = regularized_objective(&q, costs, lambda, tau, lattice);
    loop {
        let mut improved = false;
        for a in 0..k {
            for b in 0..k {
                while a != b && q[a] > 0 {
                    q[a] -= 1;
                    q[b] += 1;
                    let v = regularized_objective(&q, costs, lambda, tau, lattice);
                    if v < val {
                        val = v;
                        improved = true;
                    } else {
                        q[a] += 1;
                        q[b] -= 1;
                        break;
                    }
                }
            }
        }
        if !improved {
            return q;
        }
    }
}

fn enumerate_window(
    lo: &[i64],
    hi: &[i64],
    step: i64,
    lattice: i64,
    axis: usize,
    q: &mut [i64],
    visit: &mut dyn FnMut(&[i64]),
) {
    let k = q.len();
    let used: i64 = q[..axis].iter().sum();
    if axis == k - 1 {
        q[axis] = lattice - used;
        if q[axis] >= 0 {
            visit(q);
        }
        return;
    }
    // Align to the step lattice anchored at `lo` but always include `hi`.
    let mut v = lo[axis];
    loop {
        if used + v > lattice {
            break;
        }
        q[axis] = v;
        enumerate_window(lo, hi, step, lattice, axis + 1, q, visit);
        if v >= hi[axis] {
            break;
        }
        v = (v + step).min(hi[axis]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lam(v: f64) -> Lambda {
        Lambda::new(v).unwrap()
    }

    #[test]
    fn lambda_zero_is_uniform_over_correct() {
        let t = soft_target(&[1, 1, 0], &[0.3, 0.01, 0.2], Lambda::ZERO).unwrap();
        assert_eq!(t.probs, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn lambda_infinite_picks_cheapest_correct() {
        let t = soft_target(&[1, 1, 0], &[0.2, 0.1, 0.05], Lambda::INFINITY).unwrap();
        assert_eq!(t.probs, vec![0.0, 1.0, 0.0]);
        let tie = soft_target(&[1, 1, 1], &[0.1, 0.1, 0.3], Lambda::INFINITY).unwrap();
        assert_eq!(tie.probs, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn finite_lambda_example() {
        let t = soft_target(&[1, 1, 0], &[0.1, 0.2, 0.0], lam(10.0)).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        assert!((t.probs[0] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((t.probs[0] - 0.7311).abs() < 1e-4);
        assert!((t.probs[1] - 0.2689).abs() < 1e-4);
        assert_eq!(t.probs[2], 0.0);
    }

    #[test]
    fn no_correct_model_is_an_error() {
        assert!(matches!(soft_target(&[0, 0], &[1.0, 2.0], Lambda::ZERO), Err(Error::NoCorrectModel)));
    }

    #[test]
    fn huge_lambda_does_not_underflow() {
        let t = soft_target(&[1, 1], &[5.0, 5.001], lam(1e6)).unwrap();
        assert!(t.probs.iter().all(|p| p.is_finite()));
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.probs[0] > 0.999);
    }

    #[test]
    fn expected_cost_examples() {
        let one_hot = SoftTarget { probs: vec![0.0, 1.0, 0.0], lambda: Lambda::INFINITY };
        assert_eq!(expected_cost(&one_hot, &[0.5, 0.25, 0.1]), 0.25);
        let t = soft_target(&[1, 1, 0], &[0.1, 0.3, 9.0], Lambda::ZERO).unwrap();
        assert!((expected_cost(&t, &[0.1, 0.3, 9.0]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn expected_cost_non_increasing_over_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = rng.random_range(2..8);
            let y: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
            if !y.contains(&1) {
                continue;
            }
            let c: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let costs: Vec<f64> = [0.0, 1.0, 10.0, 100.0]
                .iter()
                .map(|&l| expected_cost(&soft_target(&y, &c, lam(l)).unwrap(), &c))
                .collect();
            assert!(costs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{costs:?}");
        }
    }

    #[test]
    fn scale_and_shift_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = 5;
            let mut y: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
            y[0] = 1;
            let c: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.01)).collect();
            let l = rng.random_range(0.0..2000.0);
            let s = rng.random_range(0.01..100.0);
            let base = soft_target(&y, &c, lam(s * l)).unwrap();
            let scaled_c: Vec<f64> = c.iter().map(|v| v * s).collect();
            let scaled = soft_target(&y, &scaled_c, lam(l)).unwrap();
            let shifted_c: Vec<f64> = c.iter().map(|v| v + 0.37).collect();
            let shifted = soft_target(&y, &shifted_c, lam(s * l)).unwrap();
            for j in 0..m {
                assert!((base.probs[j] - scaled.probs[j]).abs() < 1e-9);
                assert!((base.probs[j] - shifted.probs[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn soft_loss_examples() {
        let one_hot = SoftTarget { probs: vec![0.0, 1.0, 0.0], lambda: Lambda::INFINITY };
        assert_eq!(soft_loss(&[0.0, 1.0, 0.0], &one_hot), 0.0);
        let half = SoftTarget { probs: vec![0.5, 0.5, 0.0], lambda: Lambda::ZERO };
        let eps = 1e-9;
        let p = [0.5 / (1.0 + eps), 0.5 / (1.0 + eps), eps / (1.0 + eps)];
        assert!((soft_loss(&p, &half) - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn gibbs_inequality_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let m = rng.random_range(2..7);
            let raw_t: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let raw_p: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let zt: f64 = raw_t.iter().sum();
            let zp: f64 = raw_p.iter().sum();
            let t = SoftTarget { probs: raw_t.iter().map(|v| v / zt).collect(), lambda: Lambda::ZERO };
            let p: Vec<f64> = raw_p.iter().map(|v| v / zp).collect();
            assert!(soft_loss(&p, &t) >= entropy(&t.probs) - 1e-12);
            assert!(kl_divergence(&t, &p) >= -1e-12);
        }
    }

    #[test]
    fn optimality_uniform_at_zero_lambda() {
        let dev = verify_optimality(&[1, 0, 1], &[0.2, 0.1, 0.9], 0.0, 1.0, 1e-2).unwrap();
        assert!(dev <= 1e-2, "{dev}");
    }

    #[test]
    fn optimality_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k = rng.random_range(2..=4);
            let y: Vec<u8> = (0..5).map(|j| u8::from(j < k)).collect();
            let c: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..0.3)).collect();
            let dev = verify_optimality(&y, &c, 10.0, 1.0, 1e-3).unwrap();
            assert!(dev <= 2e-3, "k={k} dev={dev}");
        }
    }

    #[test]
    fn temperature_rescales_lambda() {
        let y = [1, 1, 1, 0];
        let c = [0.05, 0.12, 0.2, 0.01];
        let dev = verify_optimality(&y, &c, 5.0, 0.5, 1e-3).unwrap();
        assert!(dev <= 2e-3);
        // λ/τ = 10: the oracle target is soft_target at λ = 10.
        let grid = grid_minimize(&[0.05, 0.12, 0.2], 5.0, 0.5, 1000);
        let t = soft_target(&y, &c, lam(10.0)).unwrap();
        for (g, p) in grid.iter().zip(&t.probs) {
            assert!((*g as f64 / 1000.0 - p).abs() <= 2e-3);
        }
    }

    #[test]
    fn optimality_arity_errors() {
        assert!(matches!(
            verify_optimality(&[1, 1, 1, 1, 1], &[0.1; 5], 1.0, 1.0, 1e-2),
            Err(Error::UnsupportedArity(5))
        ));
        assert!(matches!(verify_optimality(&[0, 0], &[0.1; 2], 1.0, 1.0, 1e-2), Err(Error::NoCorrectModel)));
    }

    #[test]
    fn lambda_parsing_and_serde() {
        assert_eq!("inf".parse::<Lambda>().unwrap(), Lambda::INFINITY);
        assert_eq!("100".parse::<Lambda>().unwrap(), lam(100.0));
        assert!("-1".parse::<Lambda>().is_err());
        let json = serde_json::to_string(&Lambda::INFINITY).unwrap();
        assert_eq!(json, "\"inf\"");
        assert_eq!(serde_json::from_str::<Lambda>(&json).unwrap(), Lambda::INFINITY);
        assert_eq!(Lambda::default_grid().len(), 6);
    }
}
