//! Equilibrium bidding under the failure-cost rule.
//!
//! Two games are modelled:
//!
//! * [`BaselineGame`]: `n` bidders with a common value `v`, each failing
//!   independently with probability `q`. The symmetric equilibrium bid has a
//!   closed form, found from the indifference between bidding the common `b`
//!   and going first with `b + ε`.
//! * [`DiscreteTimeGame`]: the value drifts to `X ~ N(v, σ²)` between bidding
//!   and execution and each solver cancels when its private draw falls below
//!   its bid. The utility has no closed-form optimum and is solved
//!   numerically.
//!
//! Throughout, `F = F_X(b)` and `z = (b − v)/σ`.

pub mod normal;
pub mod solve;

use std::io;

use serde::Serialize;
use thiserror::Error;

use self::solve::{brent_root, golden_section_max, Tolerance};

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("invalid game: {0}")]
    InvalidGame(&'static str),
    #[error("bid {bid} is outside the support: F_X(b) = {cdf}")]
    OutOfSupport { bid: f64, cdf: f64 },
    #[error("conditional expectation is degenerate at bid {bid} (no mass above it)")]
    Degenerate { bid: f64 },
    #[error(
        "no interior optimum in [{lower}, {upper}]: dU/db = {gradient_lower} at the lower end, \
         {gradient_upper} at the upper end; utility is maximal at {boundary}"
    )]
    NoInteriorOptimum {
        lower: f64,
        upper: f64,
        gradient_lower: f64,
        gradient_upper: f64,
        boundary: f64,
    },
    #[error(transparent)]
    Solve(#[from] solve::SolveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Baseline game with iid failure probability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineGame {
    pub n: u32,
    pub q: f64,
    pub v: f64,
}

impl BaselineGame {
    pub fn new(n: u32, q: f64, v: f64) -> Result<Self, EquilibriumError> {
        if n < 2 {
            return Err(EquilibriumError::InvalidGame("need at least two bidders"));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(EquilibriumError::InvalidGame("failure probability must lie in (0, 1)"));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(EquilibriumError::InvalidGame("value must be positive"));
        }
        Ok(BaselineGame { n, q, v })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }
}

/// Utility when everyone, the focal bidder included, bids `b`:
/// `v(1 − qⁿ) − b`, summed over the `n` queue positions.
pub fn baseline_utility(game: &BaselineGame, b: f64) -> f64 {
    game.v * (1.0 - game.q.powi(game.n as i32)) - b
}

/// Utility of bidding `b + ε` (and so running first) against `n − 1` others
/// at `b`: `(1−q)[v − (b+ε)] − qε/n − qⁿ b/n`.
pub fn deviation_utility(game: &BaselineGame, b: f64, epsilon: f64) -> f64 {
    let BaselineGame { q, v, .. } = *game;
    let n = game.nf();
    (1.0 - q) * (v - (b + epsilon)) + q * (-epsilon / n) + q.powi(game.n as i32) * (-b / n)
}

/// Δ(ε): gain from deviating to `b + ε`.
pub fn indifference_gap(game: &BaselineGame, b: f64, epsilon: f64) -> f64 {
    deviation_utility(game, b, epsilon) - baseline_utility(game, b)
}

/// Symmetric equilibrium bid `v·n(1 − q^{n−1}) / (n − q^{n−1})`.
pub fn closed_form_bid(game: &BaselineGame) -> f64 {
    let n = game.nf();
    let qn1 = game.q.powi(game.n as i32 - 1);
    game.v * n * (1.0 - qn1) / (n - qn1)
}

// ---------------------------------------------------------------------------
// Discrete-time game with normal valuation drift
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteTimeGame {
    pub n: u32,
    pub v: f64,
    pub sigma: f64,
}

impl DiscreteTimeGame {
    pub fn new(n: u32, v: f64, sigma: f64) -> Result<Self, EquilibriumError> {
        if n < 2 {
            return Err(EquilibriumError::InvalidGame("need at least two bidders"));
        }
        if !v.is_finite() {
            return Err(EquilibriumError::InvalidGame("value must be finite"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(EquilibriumError::InvalidGame("sigma must be non-negative"));
        }
        Ok(DiscreteTimeGame { n, v, sigma })
    }

    /// The standardized bid and the normal quantities at it.
    fn at(&self, b: f64) -> Result<Point, EquilibriumError> {
        if self.sigma <= 0.0 {
            return Err(EquilibriumError::InvalidGame("sigma must be positive"));
        }
        let z = (b - self.v) / self.sigma;
        let cdf = normal::cdf(z);
        let survival = normal::survival(z);
        if !(cdf > 0.0 && survival > 0.0) {
            return Err(EquilibriumError::OutOfSupport { bid: b, cdf });
        }
        // 1 − Fⁿ, accurate when F is close to one.
        let none_execute = -(self.n as f64 * (-survival).ln_1p()).exp_m1();
        Ok(Point {
            z,
            cdf,
            survival,
            pdf: normal::pdf(z),
            none_execute,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    z: f64,
    cdf: f64,
    survival: f64,
    pdf: f64,
    /// 1 − Fⁿ
    none_execute: f64,
}

/// `E[X | X > b]` for `X ~ N(v, σ²)`: `v + σ φ(z)/(1 − Φ(z))`.
///
/// With `σ = 0` the value is `v` for `b < v` and undefined otherwise.
pub fn conditional_success_value(v: f64, sigma: f64, b: f64) -> Result<f64, EquilibriumError> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(EquilibriumError::InvalidGame("sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return if b < v {
            Ok(v)
        } else {
            Err(EquilibriumError::Degenerate { bid: b })
        };
    }
    let z = (b - v) / sigma;
    let survival = normal::survival(z);
    if survival < f64::MIN_POSITIVE {
        return Err(EquilibriumError::Degenerate { bid: b });
    }
    Ok(v + sigma * normal::pdf(z) / survival)
}

/// Main-text utility with the slippage term:
/// `n[v(1 − F) + σ f_X(b) − b(1 − F)/(1 − Fⁿ)]`.
pub fn discrete_time_utility(game: &DiscreteTimeGame, b: f64) -> Result<f64, EquilibriumError> {
    let p = game.at(b)?;
    let n = game.n as f64;
    // σ f_X(b) = φ(z)
    Ok(n * (game.v * p.survival + p.pdf - b * p.survival / p.none_execute))
}

/// Closed form of the rank-weighted sum: `n(1 − F)[v − b/(1 − Fⁿ)]`.
pub fn simplified_utility(game: &DiscreteTimeGame, b: f64) -> Result<f64, EquilibriumError> {
    let p = game.at(b)?;
    Ok(game.n as f64 * p.survival * (game.v - b / p.none_execute))
}

/// [`simplified_utility`] for a given `F`.
pub fn simplified_utility_at_cdf(n: u32, v: f64, b: f64, cdf: f64) -> f64 {
    let nf = n as f64;
    nf * (1.0 - cdf) * (v - b / (1.0 - cdf.powi(n as i32)))
}

/// Rank-weighted utility evaluated term by term.
pub fn rank_sum_utility(game: &DiscreteTimeGame, b: f64) -> Result<f64, EquilibriumError> {
    let p = game.at(b)?;
    Ok(rank_sum_terms(game.n, game.v, b, p.cdf, p.survival))
}

/// [`rank_sum_utility`] for a given `F`.
pub fn rank_sum_utility_at_cdf(n: u32, v: f64, b: f64, cdf: f64) -> f64 {
    rank_sum_terms(n, v, b, cdf, 1.0 - cdf)
}

/// `n / Σ_j F^{n−j} · Σ_r F^{n−r} [ (1−F)(v−b) − F (b/n − (b/n)(1 − F^{r−1})) ]`
///
/// Rank `r` executes with weight `F^{n−r}`; when it fails the penalty is the
/// full `b/n` less what a lower-ranked success would refund.
fn rank_sum_terms(n: u32, v: f64, b: f64, cdf: f64, survival: f64) -> f64 {
    let nf = n as f64;
    let share = b / nf;
    let normalizer: f64 = (1..=n).map(|j| cdf.powi((n - j) as i32)).sum();
    let total: f64 = (1..=n)
        .map(|r| {
            let execute = cdf.powi((n - r) as i32);
            let success = survival * (v - b);
            let refund = share * (1.0 - cdf.powi(r as i32 - 1));
            let fail = cdf * -(share - refund);
            execute * (success + fail)
        })
        .sum();
    nf / normalizer * total
}

/// dU/db of [`discrete_time_utility`], differentiated term by term:
/// `n[−vφ/σ − zφ/σ − dQ/db]` with `Q = b(1 − Φ)/(1 − Φⁿ)`.
pub fn utility_gradient(game: &DiscreteTimeGame, b: f64) -> Result<f64, EquilibriumError> {
    let p = game.at(b)?;
    let n = game.n as f64;
    let sigma = game.sigma;
    let d_value = -game.v * p.pdf / sigma;
    let d_slippage = -p.z * p.pdf / sigma;

    let numerator = b * p.survival;
    let d_numerator = p.survival - b * p.pdf / sigma;
    let denominator = p.none_execute;
    let d_denominator = -n * p.cdf.powi(game.n as i32 - 1) * p.pdf / sigma;
    let d_q = (denominator * d_numerator - numerator * d_denominator) / (denominator * denominator);

    Ok(n * (d_value + d_slippage - d_q))
}

/// Bid maximizing [`discrete_time_utility`] on `[v − 6σ, v + 6σ]`.
///
/// Looks for a `+ → −` sign change of the gradient and polishes it with
/// Brent; without one, falls back to golden section on the utility. A
/// maximizer on the bracket boundary, including one that beats every
/// interior stationary point, is reported as
/// [`EquilibriumError::NoInteriorOptimum`].
pub fn optimal_bid_numeric(game: &DiscreteTimeGame) -> Result<f64, EquilibriumError> {
    const SCAN: usize = 240;
    if game.sigma <= 0.0 {
        return Err(EquilibriumError::InvalidGame("sigma must be positive"));
    }
    let lower = game.v - 6.0 * game.sigma;
    let upper = game.v + 6.0 * game.sigma;
    let tol = Tolerance::default();
    let gradient = |b: f64| utility_gradient(game, b).unwrap_or(f64::NAN);
    let utility = |b: f64| discrete_time_utility(game, b).unwrap_or(f64::NEG_INFINITY);

    let step = (upper - lower) / SCAN as f64;
    let mut best: Option<(f64, f64)> = None;
    let mut prev = (lower, gradient(lower));
    for i in 1..=SCAN {
        let x = if i == SCAN { upper } else { lower + step * i as f64 };
        let cur = (x, gradient(x));
        if prev.1 > 0.0 && cur.1 <= 0.0 {
            let root = brent_root(gradient, prev.0, cur.0, tol)?;
            let u = utility(root);
            if best.is_none_or(|(_, bu)| u > bu) {
                best = Some((root, u));
            }
        }
        prev = cur;
    }
    let boundary_error = |boundary: f64| EquilibriumError::NoInteriorOptimum {
        lower,
        upper,
        gradient_lower: gradient(lower),
        gradient_upper: gradient(upper),
        boundary,
    };
    if let Some((root, u)) = best {
        // A local maximum that an endpoint beats is not the optimum.
        let edge = if utility(lower) >= utility(upper) { lower } else { upper };
        if utility(edge) > u {
            return Err(boundary_error(edge));
        }
        return Ok(root);
    }

    let candidate = golden_section_max(utility, lower, upper, tol);
    let edge = tol.rel * game.v.abs() + tol.abs + 1e-9 * game.sigma;
    if (candidate - lower).abs() <= edge || (upper - candidate).abs() <= edge {
        return Err(boundary_error(candidate));
    }
    Ok(candidate)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumPoint {
    pub n: u32,
    pub sigma: f64,
    pub v: f64,
    /// `None` when the optimizer found no interior optimum.
    pub b_star: Option<f64>,
    pub diagnostic: Option<String>,
}

impl EquilibriumPoint {
    pub fn ratio(&self) -> Option<f64> {
        self.b_star.map(|b| b / self.v)
    }
}

/// Optimal bids over the grid `ns × sigmas`, n-major.
pub fn equilibrium_sweep(v: f64, ns: &[u32], sigmas: &[f64]) -> Result<Vec<EquilibriumPoint>, EquilibriumError> {
    let mut points = Vec::with_capacity(ns.len() * sigmas.len());
    for &n in ns {
        for &sigma in sigmas {
            let game = DiscreteTimeGame::new(n, v, sigma)?;
            let (b_star, diagnostic) = match optimal_bid_numeric(&game) {
                Ok(b) => (Some(b), None),
                Err(e @ EquilibriumError::NoInteriorOptimum { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            points.push(EquilibriumPoint {
                n,
                sigma,
                v,
                b_star,
                diagnostic,
            });
        }
    }
    Ok(points)
}

/// Writes `n,sigma,v,b_star,b_star_over_v`; the last two are empty when no
/// optimum was found.
pub fn write_sweep_csv<W: io::Write>(points: &[EquilibriumPoint], out: W) -> Result<(), EquilibriumError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["n", "sigma", "v", "b_star", "b_star_over_v"])?;
    for p in points {
        writer.write_record([
            p.n.to_string(),
            p.sigma.to_string(),
            p.v.to_string(),
            p.b_star.map(|b| b.to_string()).unwrap_or_default(),
            p.ratio().map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
