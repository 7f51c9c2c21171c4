//! Pareto set of (cost, accuracy) operating points and the exponential
//! saturation frontier `y = a(1 − e^{−bx}) + c`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An operating point: cost in display units and accuracy in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub cost: f64,
    pub accuracy: f64,
}

impl Point {
    pub fn new(cost: f64, accuracy: f64) -> Self {
        Self { cost, accuracy }
    }

    /// Whether `self` dominates `other`: no more expensive, no less
    /// accurate, and strictly better in one of the two.
    pub fn dominates(&self, other: &Point) -> bool {
        self.cost <= other.cost
            && self.accuracy >= other.accuracy
            && (self.cost < other.cost || self.accuracy > other.accuracy)
    }
}

/// Non-dominated points sorted by cost; exact duplicates are kept once.
pub fn pareto_set(points: &[Point]) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if points.iter().any(|p| !(p.cost > 0.0) || !p.accuracy.is_finite() || !p.cost.is_finite()) {
        return Err(Error::InvalidArgument("costs must be positive and values finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(b.accuracy.total_cmp(&a.accuracy)));
    let mut out: Vec<Point> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|best| p.accuracy > best.accuracy) {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFlag {
    /// All accuracies equal; R² is undefined.
    ConstantData,
    /// Iteration budget exhausted; the best iterate is returned.
    NonConvergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitScope {
    Pareto,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `None` when the data has no variance.
    pub r_squared: Option<f64>,
    pub initial: [f64; 3],
    pub iterations: usize,
    pub scope: FitScope,
    pub flags: Vec<FitFlag>,
    pub pareto_points: Vec<Point>,
}

pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-10;

pub fn eval_frontier(fit: &FrontierFit, cost: f64) -> f64 {
    curve([fit.a, fit.b, fit.c], cost)
}

fn curve(p: [f64; 3], x: f64) -> f64 {
    p[0] * (1.0 - (-p[1] * x).exp()) + p[2]
}

fn sum_sq(p: [f64; 3], pts: &[Point]) -> f64 {
    pts.iter().map(|q| (curve(p, q.cost) - q.accuracy).powi(2)).sum()
}

fn project(p: [f64; 3]) -> [f64; 3] {
    [p[0].max(0.0), p[1].max(0.0), p[2]]
}

/// Solves a 3×3 system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    Some(x)
}

/// Normal-equation pieces `JᵀJ` and `Jᵀr` at `p`.
fn normal_equations(p: [f64; 3], pts: &[Point]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for q in pts {
        let e = (-p[1] * q.cost).exp();
        let j = [1.0 - e, p[0] * q.cost * e, 1.0];
        let r = curve(p, q.cost) - q.accuracy;
        for u in 0..3 {
            jtr[u] += j[u] * r;
            for v in 0..3 {
                jtj[u][v] += j[u] * j[v];
            }
        }
    }
    (jtj, jtr)
}

/// Gradient with components that push into an active bound removed.
fn projected_gradient_norm(p: [f64; 3], g: [f64; 3]) -> f64 {
    (0..3)
        .map(|k| if k < 2 && p[k] <= 0.0 && g[k] > 0.0 { 0.0 } else { g[k] * g[k] })
        .sum::<f64>()
        .sqrt()
}

/// Bounded least-squares fit of `points` by damped Gauss–Newton
/// (Levenberg–Marquardt with projection onto `a, b ≥ 0`).
pub fn fit_frontier(points: &[Point]) -> Result<FrontierFit> {
    fit_frontier_scoped(points, FitScope::Pareto)
}

pub fn fit_frontier_scoped(points: &[Point], scope: FitScope) -> Result<FrontierFit> {
    let pareto = pareto_set(points)?;
    let data = match scope {
        FitScope::Pareto => pareto.clone(),
        FitScope::All => points.to_vec(),
    };
    let mut costs: Vec<f64> = data.iter().map(|p| p.cost).collect();
    costs.sort_by(f64::total_cmp);
    costs.dedup();
    if costs.len() < 3 {
        return Err(Error::InsufficientPoints { found: costs.len() });
    }
    let lo = data.iter().map(|p| p.accuracy).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|p| p.accuracy).fold(f64::NEG_INFINITY, f64::max);
    let mean_cost = data.iter().map(|p| p.cost).sum::<f64>() / data.len() as f64;
    let initial = [hi - lo, 1.0 / mean_cost, lo];

    let mut p = initial;
    let mut ssr = sum_sq(p, &data);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(p, &data);
        if projected_gradient_norm(p, jtr) < TOLERANCE {
            converged = true;
            break;
        }
        let mut damped = jtj;
        for k in 0..3 {
            damped[k][k] += mu * jtj[k][k].max(1e-12);
        }
        let Some(step) = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]) else {
            mu *= 10.0;
            continue;
        };
        let cand = project([p[0] + step[0], p[1] + step[1], p[2] + step[2]]);
        let moved = ((cand[0] - p[0]).powi(2) + (cand[1] - p[1]).powi(2) + (cand[2] - p[2]).powi(2)).sqrt();
        let cand_ssr = sum_sq(cand, &data);
        if cand_ssr < ssr {
            p = cand;
            ssr = cand_ssr;
            mu = (mu / 3.0).max(1e-15);
        } else {
            mu *= 2.0;
        }
        if moved < TOLERANCE * (1.0 + p.iter().map(|v| v * v).sum::<f64>().sqrt()) {
            converged = true;
            break;
        }
    }
    let mut flags = Vec::new();
    if !converged {
        flags.push(FitFlag::NonConvergence);
    }
    let mean_acc = data.iter().map(|q| q.accuracy).sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|q| (q.accuracy - mean_acc).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        flags.push(FitFlag::ConstantData);
        None
    } else {
        Some(1.0 - ssr / ss_tot)
    };
    Ok(FrontierFit {
        a: p[0],
        b: p[1],
        c: p[2],
        r_squared,
        initial,
        iterations,
        scope,
        flags,
        pareto_points: pareto,
    })
}

/// `n` points of the fitted curve at log-spaced costs in `[lo, hi]`.
pub fn sample_curve(fit: &FrontierFit, lo: f64, hi: f64, n: usize) -> Vec<Point> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let x = (l + t * (h - l)).exp();
            Point::new(x, eval_frontier(fit, x))
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[Point]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cost", "accuracy"])?;
    for p in curve {
        out.write_record([format!("{}", p.cost), format!("{}", p.accuracy)])?;
    }
    out.flush()?;
    Ok(())
}
