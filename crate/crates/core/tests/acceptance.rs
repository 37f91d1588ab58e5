//! Exit criteria. Runs every check, prints one line each and exits nonzero
//! if any fails or overruns its time budget.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use failcost::censorship::{censorship_resistance, resistance_sweep, CensorshipScenario, RivalOp};
use failcost::equilibrium::{
    closed_form_bid, discrete_time_utility, equilibrium_sweep, indifference_gap, normal, rank_sum_utility,
    utility_gradient, BaselineGame, DiscreteTimeGame,
};
use failcost::settlement::Outcome;
use failcost::simulation::{
    run_iid_failure, run_throughput_sweep, run_timeline, IidFailure, ThroughputSweep, Timeline, TimelineAuction,
    TimelineConfig,
};
use failcost::{
    failure_cost, guaranteed_minimum, settle, Amount, AuctionTransaction, Behavior, Gas, GasSchedule, SolverOperation,
};

type Check = Result<String, String>;

/// Name, time budget in milliseconds and the check itself.
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn amt(s: &str) -> Amount {
    s.parse().unwrap()
}

fn failure_cost_worked_example() -> Check {
    let bid = amt("100");
    let small = failure_cost(bid, None, 100_000, 1_000_000).map_err(|e| e.to_string())?;
    let large = failure_cost(bid, None, 100_000, 10_000_000).map_err(|e| e.to_string())?;
    ensure(small == Amount::from_int(10), || format!("Γ=1e6 gave {small}"))?;
    ensure(large == Amount::from_int(1), || format!("Γ=1e7 gave {large}"))?;
    Ok(format!("{small} and {large}"))
}

fn closed_form_indifference() -> Check {
    let v = 100.0;
    let (e1, e2) = (1e-3, 1e-6);
    let mut worst: f64 = 0.0;
    for n in 2..=20u32 {
        for k in 1..=19 {
            let q = k as f64 * 0.05;
            let game = BaselineGame::new(n, q, v).map_err(|e| e.to_string())?;
            let b = closed_form_bid(&game);
            let (d1, d2) = (indifference_gap(&game, b, e1), indifference_gap(&game, b, e2));
            let slope = (d1 - d2) / (e1 - e2);
            let intercept = d2 - slope * e2;
            worst = worst.max(intercept.abs());
            ensure(intercept.abs() < 1e-9 * v, || {
                format!("n={n} q={q:.2}: intercept {intercept:e}")
            })?;
        }
    }
    Ok(format!("max |intercept| {worst:.3e} over 361 games"))
}

fn monte_carlo_baseline() -> Check {
    let game = BaselineGame::new(2, 0.5, 100.0).map_err(|e| e.to_string())?;
    let b = closed_form_bid(&game);
    let bid = Amount::from_f64(b).ok_or("bid not representable")?;
    let model = IidFailure {
        n: 2,
        q: 0.5,
        value: Amount::from_int(100),
        bids: vec![bid],
    };
    let report = run_iid_failure(&model, 100_000, 20_240_601, None).map_err(|e| e.to_string())?;
    let expected = 100.0 * (1.0 - 0.25) - bid.to_f64();
    let s = report.aggregate_payoff;
    ensure(s.within(expected, 3.0), || {
        format!("mean {} vs {expected} (SE {})", s.mean, s.std_error)
    })?;
    Ok(format!("mean {:.4} ± {:.4} vs {expected:.4}", s.mean, s.std_error))
}

fn rank_sum_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=20u32);
        let v = rng.random_range(1.0..5_000.0);
        let sigma = rng.random_range(0.1..50.0);
        let b = v + sigma * rng.random_range(-5.0..5.0);
        let game = DiscreteTimeGame::new(n, v, sigma).map_err(|e| e.to_string())?;
        let u = rank_sum_utility(&game, b).map_err(|e| e.to_string())?;
        let f = normal::cdf((b - v) / sigma);
        let closed = n as f64 * (1.0 - f) * (v - b / (1.0 - f.powi(n as i32)));
        let diff = (u - closed).abs();
        worst = worst.max(diff / (1.0 + u.abs()));
        ensure(diff < 1e-9 * (1.0 + u.abs()), || {
            format!("n={n} v={v} σ={sigma} b={b}: {u} vs {closed}")
        })?;
    }
    Ok(format!("max scaled diff {worst:.3e} over 10^4 samples"))
}

fn gradient_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let n = rng.random_range(2..=50u32);
        let v = rng.random_range(100.0..5_000.0);
        let sigma = rng.random_range(0.5..12.0);
        let b = v + sigma * rng.random_range(-6.0..6.0);
        let game = DiscreteTimeGame::new(n, v, sigma).map_err(|e| e.to_string())?;
        let h = 1e-5 * sigma;
        let u = |x: f64| discrete_time_utility(&game, x).map_err(|e| e.to_string());
        let numeric = (u(b + h)? - u(b - h)?) / (2.0 * h);
        let analytic = utility_gradient(&game, b).map_err(|e| e.to_string())?;
        let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
        worst = worst.max(rel);
        ensure(rel < 1e-6, || {
            format!("n={n} v={v} σ={sigma} b={b}: {analytic} vs {numeric}")
        })?;
    }
    Ok(format!("max relative error {worst:.3e} over 10^3 points"))
}

fn optimal_bid_surface() -> Check {
    let ns = [2, 5, 10, 25, 50];
    let sigmas: Vec<f64> = (1..=24).map(|k| k as f64 * 0.5).collect();
    let points = equilibrium_sweep(3_500.0, &ns, &sigmas).map_err(|e| e.to_string())?;
    let missing: Vec<_> = points.iter().filter(|p| p.b_star.is_none()).collect();
    if let Some(p) = missing.first() {
        return Err(format!(
            "{} of {} grid points have no interior optimum; first n={} σ={}: {}",
            missing.len(),
            points.len(),
            p.n,
            p.sigma,
            p.diagnostic.as_deref().unwrap_or("")
        ));
    }
    let ratio = |i: usize, j: usize| points[i * sigmas.len() + j].ratio().expect("checked above");
    let slack = 1e-9;
    for (i, n) in ns.iter().enumerate() {
        for (j, sigma) in sigmas.iter().enumerate() {
            let r = ratio(i, j);
            ensure(r > 1.0, || format!("b*/v = {r} at n={n} σ={sigma}"))?;
            if j > 0 {
                ensure(r >= ratio(i, j - 1) - slack, || {
                    format!("decreases in σ at n={n} σ={sigma}")
                })?;
            }
            if i > 0 {
                ensure(r >= ratio(i - 1, j) - slack, || {
                    format!("decreases in n at n={n} σ={sigma}")
                })?;
            }
        }
    }
    Ok(format!("{} points, all b*/v > 1 and monotone", points.len()))
}

/// Γ values and 1e-6 bids keep every b·g/Γ exact in 18-digit fixed point.
fn guaranteed_minimum_floor() -> Check {
    const GAMMAS: [Gas; 7] = [100_000, 200_000, 250_000, 500_000, 1_000_000, 1_250_000, 2_000_000];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut patterns = 0u64;
    for _ in 0..100 {
        let gamma = GAMMAS[rng.random_range(0..GAMMAS.len())];
        let n = rng.random_range(1..=12usize);
        let ops: Vec<SolverOperation> = (0..n)
            .map(|i| {
                let bid = Amount::from_atto(rng.random_range(0..=1_000_000_000i128) * 1_000_000_000_000);
                SolverOperation::new(format!("s{i}"), bid, rng.random_range(1..=gamma / 12), Behavior::Revert)
            })
            .collect();
        let schedule = GasSchedule::with_budget(gamma, amt("7.5e-7")).map_err(|e| e.to_string())?;
        let tx = AuctionTransaction::new(schedule, ops).map_err(|e| e.to_string())?;

        let mut floor = 0i128;
        for op in tx.solver_ops() {
            let scaled = op.bid.atto() * op.gas_reserved as i128;
            ensure(scaled % gamma as i128 == 0, || "floor term is not exact".into())?;
            floor += scaled / gamma as i128;
        }
        let floor = Amount::from_atto(floor);
        ensure(guaranteed_minimum(&tx) == floor, || {
            format!("guaranteed_minimum {} vs {floor}", guaranteed_minimum(&tx))
        })?;

        let mut lowest: Option<Amount> = None;
        for mask in 0u32..(1 << n) {
            let behaviors = (0..n).map(|k| {
                if mask >> k & 1 == 1 {
                    Behavior::Succeed
                } else {
                    Behavior::Revert
                }
            });
            let payout = settle(&tx.with_behaviors(behaviors)).beneficiary_payout;
            ensure(payout >= floor, || {
                format!("mask {mask:b}: payout {payout} below floor {floor}")
            })?;
            lowest = Some(lowest.map_or(payout, |m| m.min(payout)));
            patterns += 1;
        }
        ensure(lowest == Some(floor), || {
            format!("min payout {lowest:?} vs floor {floor}")
        })?;
    }
    Ok(format!("{patterns} outcome patterns over 100 transactions"))
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..10_000 {
        let gamma: Gas = rng.random_range(1_000..=30_000_000);
        let n = rng.random_range(0..=16usize);
        let ops: Vec<SolverOperation> = (0..n)
            .map(|i| {
                let bid = Amount::from_atto(rng.random_range(0..=1_000_000_000_000_000_000_000i128));
                let gas = rng.random_range(1..=(gamma / 16).max(1));
                let behavior = if rng.random_bool(0.3) {
                    Behavior::Succeed
                } else {
                    Behavior::Revert
                };
                SolverOperation::new(format!("s{i}"), bid, gas, behavior).with_gas_used(rng.random_range(0..=gas))
            })
            .collect();
        let price = Amount::from_atto(rng.random_range(0..=1_000_000_000_000i128));
        let schedule = GasSchedule::with_budget(gamma, price).map_err(|e| e.to_string())?;
        let tx = AuctionTransaction::new(schedule, ops).map_err(|e| e.to_string())?;
        let result = settle(&tx);

        let winning = result
            .executed
            .iter()
            .find(|e| e.outcome == Outcome::Succeeded)
            .map_or(0, |e| e.bid.atto());
        let collected: i128 = result
            .executed
            .iter()
            .filter(|e| e.outcome == Outcome::Reverted)
            .map(|e| (e.bid.atto() - winning) * e.gas_reserved as i128 / gamma as i128)
            .sum();
        ensure(result.beneficiary_payout.atto() == winning + collected, || {
            format!(
                "trial {trial}: payout {} vs {}",
                result.beneficiary_payout.atto(),
                winning + collected
            )
        })?;
    }
    Ok("10^4 settlements balance to the atto".into())
}

fn throughput_limit() -> Check {
    let model = ThroughputSweep {
        gammas: vec![1_000_000, 2_000_000, 5_000_000, 10_000_000],
        gas_per_op: 100_000,
        bid_low: Amount::ZERO,
        bid_high: Amount::from_int(100),
        failure_prob: 0.5,
    };
    let rows = run_throughput_sweep(&model, 4_000, 31, None).map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        let (a, b) = (w[0].mean_failure_cost.mean, w[1].mean_failure_cost.mean);
        ensure(b < a, || {
            format!("E[c_fail] {b} at Γ={} not below {a} at Γ={}", w[1].gamma, w[0].gamma)
        })?;
    }
    let (first, last) = (rows[0].mean_failure_cost, rows[3].mean_failure_cost);
    let gap = first.mean - last.mean;
    let band = 3.0 * (first.std_error.powi(2) + last.std_error.powi(2)).sqrt();
    ensure(gap > band, || format!("gap {gap} within 3 SE ({band})"))?;
    let means: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.4}", r.mean_failure_cost.mean))
        .collect();
    Ok(format!("E[c_fail] = [{}], gap {gap:.4} > {band:.4}", means.join(", ")))
}

fn censorship_grid() -> Check {
    let scenario = CensorshipScenario {
        gamma: 1_000_000,
        gas_price: amt("7.5e-7"),
        rival_ops: vec![RivalOp {
            bid: Amount::from_int(100),
            gas_reserved: 100_000,
        }],
        attacker_value: Amount::ZERO,
    };
    let value = censorship_resistance(&scenario).map_err(|e| e.to_string())?;
    ensure(value == amt("90.675"), || format!("example gave {value}"))?;

    let gammas: Vec<Gas> = (1..=30).map(|k| k * 1_000_000).collect();
    let prices: Vec<Amount> = ["0", "2.5e-7", "5e-7", "7.5e-7", "1e-6"]
        .iter()
        .map(|p| amt(p))
        .collect();
    let grid = resistance_sweep(&gammas, &prices, &scenario).map_err(|e| e.to_string())?;
    for (col, price) in prices.iter().enumerate() {
        for row in 1..gammas.len() {
            let (lo, hi) = (&grid[(row - 1) * prices.len() + col], &grid[row * prices.len() + col]);
            ensure(hi.resistance > lo.resistance, || {
                format!(
                    "not increasing at φ={price} Γ={}: {} vs {}",
                    hi.gamma, hi.resistance, lo.resistance
                )
            })?;
        }
    }
    Ok(format!("{value}; {} grid points strictly increasing in Γ", grid.len()))
}

fn timeline() -> Check {
    let model = Timeline {
        config: TimelineConfig::new(50, 300, 12_000),
        auction: Some(TimelineAuction {
            schedule: GasSchedule::with_budget(1_000_000, amt("7.5e-7")).map_err(|e| e.to_string())?,
            solver_ops: vec![
                SolverOperation::new("a", amt("100"), 100_000, Behavior::Revert),
                SolverOperation::new("b", amt("80"), 100_000, Behavior::Succeed),
            ],
            escrow: [("a", "50"), ("b", "50")]
                .iter()
                .map(|(s, v)| ((*s).into(), amt(v)))
                .collect(),
        }),
    };
    let report = run_timeline(&model).map_err(|e| e.to_string())?;
    ensure(report.guarantee_at_ms == 400, || {
        format!("guarantee at {} ms", report.guarantee_at_ms)
    })?;
    let received = report.order_received_at_ms;
    let issued = report.guarantee_issued_at_ms;
    let start = report
        .events
        .iter()
        .position(|e| e.at_ms == received)
        .ok_or("no receipt event")?;
    let end = report
        .events
        .iter()
        .rposition(|e| e.at_ms == issued)
        .ok_or("no issuance event")?;
    let reads = report.events[start + 1..end]
        .iter()
        .filter(|e| e.chain_access.is_some())
        .count();
    ensure(reads == 0 && report.chain_events_during_auction == 0, || {
        format!("{reads} chain events during auction")
    })?;
    ensure(report.guarantee_value == Some(Amount::from_int(18)), || {
        format!("guarantee {:?}", report.guarantee_value)
    })?;
    Ok(format!(
        "guarantee {} delivered at {} ms",
        Amount::from_int(18),
        report.guarantee_at_ms
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("failure cost worked example", 1, failure_cost_worked_example),
        ("closed-form indifference", 1_000, closed_form_indifference),
        ("iid Monte-Carlo vs closed form", 10_000, monte_carlo_baseline),
        ("rank-sum identity", 5_000, rank_sum_identity),
        ("utility gradient vs finite differences", 5_000, gradient_oracle),
        ("optimal bid ratio surface", 30_000, optimal_bid_surface),
        ("guaranteed-minimum floor", 60_000, guaranteed_minimum_floor),
        ("payout conservation", 10_000, conservation),
        ("failure cost falls with throughput", 60_000, throughput_limit),
        ("censorship resistance", 1_000, censorship_grid),
        ("guarantee timeline", 1_000, timeline),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, budget_ms, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let budget = Duration::from_millis(*budget_ms);
        let (ok, detail) = match outcome {
            Ok(_) if elapsed > budget => (false, format!("over time budget of {budget_ms} ms")),
            Ok(d) => (true, d),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name} ({:.3} ms): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64() * 1e3
        );
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
