//! Acceptance gate: one test per criterion, each printing a single
//! `ACCEPTANCE n (<name>): PASS` line with the measured numbers
//! (run with `-- --nocapture` to see the lines for passing tests).

use ehrelay::feasibility;
use ehrelay::lp::{LpProblem, Sense};
use ehrelay::model::{compute_gains, gen_eh_trace, EhTrace, Gains, Scenario};
use ehrelay::optimizer;
use ehrelay::simulator;
use ehrelay::utility;
use ehrelay::experiment::{run_experiment, Experiment, ExperimentSpec, RunOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const EPS: f64 = 1e-4;

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn instance(scn: &Scenario) -> (EhTrace, Gains) {
    let gains = compute_gains(scn, &scn.resolve_relay_positions()).unwrap();
    let trace = gen_eh_trace(scn, &mut scn.trace_rng());
    (trace, gains)
}

#[test]
fn acceptance_1_direct_link_anchor() {
    let scn = Scenario::default();
    let (_, gains) = instance(&scn);
    let p = utility::direct_power_required(scn.u_th, gains.sd[0], &scn);
    let rel = (p - 0.995).abs() / 0.995;
    assert!(
        rel <= 0.005,
        "direct-link power {p} W deviates {rel:.4} from 0.995 W"
    );
    println!("ACCEPTANCE 1 (direct-link anchor): PASS - {p:.6} W vs 0.995 W (rel err {rel:.2e})");
}

#[test]
fn acceptance_2_sufficiency_scheduler_never_fails() {
    let mut feasible = 0usize;
    let mut attempts = 0usize;
    let mut pick = ChaCha12Rng::seed_from_u64(2024);
    while feasible < 1000 && attempts < 6000 {
        attempts += 1;
        let mut scn = Scenario::default();
        scn.relays = pick.gen_range(1..=10);
        scn.blocks_per_interval = pick.gen_range(1..=10);
        scn.intervals = pick.gen_range(1..=10);
        if pick.gen_bool(0.1) {
            scn.intervals = 25; // push N toward the 250-block cap
        }
        scn.seed = 50_000 + attempts as u64;
        let (trace, gains) = instance(&scn);
        let policy = match optimizer::bisect_eta(&scn, &trace, &gains, EPS) {
            Ok(p) => p,
            Err(ehrelay::Error::InfeasibleScenario { .. }) => continue,
            Err(e) => panic!("unexpected solver error: {e}"),
        };
        let (outcome, schedule) =
            simulator::run_constructive_scheduler(&scn, &trace, &policy, &gains)
                .expect("scheduler must complete on instances the condition accepted");
        assert_eq!(outcome.energy_outage_blocks, 0, "seed {}", scn.seed);
        assert_eq!(outcome.qos_violations, 0, "seed {}", scn.seed);
        for n in 1..=scn.total_blocks() {
            assert!(schedule.selected(0, n).is_some(), "seed {}", scn.seed);
        }
        feasible += 1;
    }
    assert!(feasible >= 1000, "only {feasible} feasible instances found");
    println!(
        "ACCEPTANCE 2 (sufficiency scheduler): PASS - {feasible} feasible instances, \
         zero causality/QoS violations ({attempts} sampled)"
    );
}

#[test]
fn acceptance_3_bound_gap_shrinks_with_blocks() {
    let mut gaps = Vec::new();
    for &nc in &[1usize, 10, 100] {
        let mut scn = Scenario::default();
        scn.blocks_per_interval = nc;
        scn.intervals = 3;
        scn.seed = 7;
        scn.relay_positions = Some(vec![
            [85.0, 50.0],
            [80.0, 42.0],
            [80.0, 58.0],
            [70.0, 50.0],
            [60.0, 50.0],
        ]);
        let (trace, gains) = instance(&scn);
        let prop = optimizer::bisect_eta(&scn, &trace, &gains, 1e-3).unwrap();
        let bound = optimizer::lp_bound(&scn, &trace, &gains, 1e-3).unwrap();
        assert!(bound.eta_star <= prop.eta_star + 1e-9);
        let gap = (prop.eta_star - bound.eta_star) / prop.eta_star;
        gaps.push((nc, gap));
    }
    for w in gaps.windows(2) {
        assert!(
            w[1].1 <= w[0].1 + 1e-6,
            "gap grew from N_c={} ({:.4}) to N_c={} ({:.4})",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let last = gaps.last().unwrap();
    assert!(last.1 < 0.02, "gap {:.4} at N_c={} not below 2%", last.1, last.0);
    println!(
        "ACCEPTANCE 3 (bound gap vs blocks): PASS - gaps {:?}",
        gaps.iter()
            .map(|(nc, g)| format!("N_c={nc}:{:.3}%", g * 100.0))
            .collect::<Vec<_>>()
    );
}

#[test]
fn acceptance_4_policy_ordering() {
    let configs = [(1usize, vec![2usize, 5, 10]), (3, vec![5, 10])];
    let mut summary = Vec::new();
    for (pairs, relay_counts) in &configs {
        let mut medians = Vec::new();
        for &relays in relay_counts {
            let mut prop = Vec::new();
            let mut greedy = Vec::new();
            let mut bound = Vec::new();
            let mut seed = 0u64;
            while prop.len() < 100 && seed < 3000 {
                seed += 1;
                let mut scn = Scenario::default();
                scn.pairs = *pairs;
                scn.relays = relays;
                scn.seed = 10_000 + seed;
                let (trace, gains) = instance(&scn);
                let p = match optimizer::bisect_eta(&scn, &trace, &gains, EPS) {
                    Ok(p) => p,
                    Err(ehrelay::Error::InfeasibleScenario { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let b = optimizer::lp_bound(&scn, &trace, &gains, 2e-3).unwrap();
                let g = optimizer::greedy_policy(&scn, &trace, &gains).unwrap();
                prop.push(p.eta_star);
                bound.push(b.eta_star);
                greedy.push(g.policy.eta_star);
            }
            assert!(prop.len() >= 100, "M={pairs} K={relays}: {} traces", prop.len());
            let (mp, mg, mb) = (median(&mut prop), median(&mut greedy), median(&mut bound));
            assert!(mb <= mp + 1e-9, "M={pairs} K={relays}: bound {mb} > proposed {mp}");
            assert!(mp <= mg + 1e-9, "M={pairs} K={relays}: proposed {mp} > greedy {mg}");
            medians.push((relays, mp));
            summary.push(format!(
                "M={pairs},K={relays}: lp {mb:.3} <= prop {mp:.3} <= greedy {mg:.3}"
            ));
        }
        for w in medians.windows(2) {
            assert!(
                w[1].1 < w[0].1,
                "M={pairs}: median proposed power not decreasing: K={} {:.4} -> K={} {:.4}",
                w[0].0,
                w[0].1,
                w[1].0,
                w[1].1
            );
        }
    }
    println!("ACCEPTANCE 4 (policy ordering): PASS - {}", summary.join("; "));
}

#[test]
fn acceptance_5_energy_hardening_online() {
    // Outage bar at K = 20.
    let mut ratios = Vec::new();
    let mut seed = 0u64;
    while ratios.len() < 200 && seed < 1500 {
        seed += 1;
        let mut scn = Scenario::default();
        scn.relays = 20;
        scn.eh_alpha = 0.5;
        scn.seed = 70_000 + seed;
        let (trace, gains) = instance(&scn);
        if optimizer::bisect_eta(&scn, &trace, &gains, EPS).is_err() {
            continue;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(scn.seed ^ 0xf4);
        match simulator::run_online_mode(&scn, &trace, &gains, EPS, &mut rng) {
            Ok(run) => ratios.push(run.outcome.no_outage_ratio),
            Err(_) => continue,
        }
    }
    assert!(ratios.len() >= 200, "only {} usable traces at K=20", ratios.len());
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean_ratio >= 0.98, "mean no-outage ratio {mean_ratio:.4} < 0.98");

    // Power over-provisioning from harvest under-estimation shrinks with K.
    let mut gap_at = |relays: usize| -> f64 {
        let mut gaps = Vec::new();
        let mut seed = 0u64;
        while gaps.len() < 200 && seed < 3000 {
            seed += 1;
            let mut scn = Scenario::default();
            scn.relays = relays;
            scn.eh_alpha = 0.5;
            scn.seed = 80_000 + seed;
            let (trace, gains) = instance(&scn);
            let offline = match optimizer::bisect_eta(&scn, &trace, &gains, EPS) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let mut rng = ChaCha12Rng::seed_from_u64(scn.seed ^ 0xf4);
            let run = match simulator::run_online_mode(&scn, &trace, &gains, EPS, &mut rng) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let mean_online =
                run.eta_per_interval.iter().sum::<f64>() / run.eta_per_interval.len() as f64;
            gaps.push((mean_online - offline.eta_star).max(0.0));
        }
        assert!(gaps.len() >= 200, "only {} usable traces at K={relays}", gaps.len());
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let gap2 = gap_at(2);
    let gap16 = gap_at(16);
    assert!(gap2 > 0.0, "no under-estimation gap at K=2 to compare against");
    assert!(
        gap16 < 0.25 * gap2,
        "gap at K=16 ({gap16:.4} W) not below 25% of K=2 ({gap2:.4} W)"
    );
    println!(
        "ACCEPTANCE 5 (energy hardening): PASS - mean no-outage {mean_ratio:.4} at K=20, \
         power gap {gap2:.4} W (K=2) -> {gap16:.4} W (K=16)"
    );
}

#[test]
fn acceptance_6a_closed_form_matches_monte_carlo() {
    let scn = Scenario::default();
    let noise = scn.noise_power();
    let grid = [400.0, 700.0, 1200.0, 2000.0, 3400.0];
    let mut worst: f64 = 0.0;
    for (i, &g1) in grid.iter().enumerate() {
        for (j, &g2) in grid.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(2000 + (i * grid.len() + j) as u64);
            let closed = utility::af_success(1.0, 1.0, g1 * noise, g2 * noise, &scn);
            let mc =
                utility::af_success_mc(1.0, 1.0, g1 * noise, g2 * noise, &scn, 1_000_000, &mut rng);
            let sigma = (mc * (1.0 - mc) / 1e6_f64).sqrt();
            let dev = ((closed - mc) / sigma).abs();
            worst = worst.max(dev);
            assert!(
                dev <= 3.0,
                "SNR ({g1},{g2}): closed {closed:.6} vs MC {mc:.6} is {dev:.2} sigma off"
            );
            assert!(closed >= mc - 3.0 * sigma, "closed form lost its upper-bound property");
        }
    }
    println!(
        "ACCEPTANCE 6a (closed form vs Monte Carlo): PASS - worst deviation {worst:.2} sigma \
         on 5x5 grid, 1e6 draws"
    );
}

#[test]
fn acceptance_6b_lp_matches_brute_force() {
    let mut rng = ChaCha12Rng::seed_from_u64(61);
    let mut checked = 0usize;
    while checked < 200 {
        let n = rng.gen_range(1..=10usize);
        let n_rows = rng.gen_range(1..=6usize);
        let make_infeasible = checked % 2 == 1;
        let mut lp = LpProblem::new(n);
        for v in 0..n {
            lp.set_bounds(v, 0.0, 1.0);
        }
        // Planted interior point on the 0.05 grid.
        let x0: Vec<f64> = (0..n).map(|_| 0.05 * rng.gen_range(0..=20) as f64).collect();
        let mut rows = Vec::new();
        for _ in 0..n_rows {
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: f64 = coeffs.iter().zip(&x0).map(|(c, x)| c * x).sum();
            let margin = rng.gen_range(0.05..0.5);
            if rng.gen_bool(0.5) {
                rows.push((coeffs, Sense::Le, v + margin));
            } else {
                rows.push((coeffs, Sense::Ge, v - margin));
            }
        }
        if make_infeasible {
            // One row demanding more than the box maximum can deliver.
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let box_max: f64 = coeffs.iter().map(|c| c.max(0.0)).sum();
            rows.push((coeffs, Sense::Ge, box_max + 0.3));
        }
        for (c, s, b) in &rows {
            lp.add_row(c.clone(), *s, *b);
        }
        let verdict = lp.feasible().unwrap();
        assert_eq!(
            verdict.is_some(),
            !make_infeasible,
            "instance {checked}: LP verdict disagrees with the construction oracle"
        );
        if let Some(w) = &verdict {
            assert!(lp.satisfied_by(w), "instance {checked}: witness violates rows");
        }
        // Independent brute force over the 0.05 grid for small instances.
        if n <= 3 {
            let steps = 21usize;
            let mut grid_feasible = false;
            let total = steps.pow(n as u32);
            for idx in 0..total {
                let mut rem = idx;
                let x: Vec<f64> = (0..n)
                    .map(|_| {
                        let v = 0.05 * (rem % steps) as f64;
                        rem /= steps;
                        v
                    })
                    .collect();
                if rows.iter().all(|(c, s, b)| {
                    let lhs: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
                    match s {
                        Sense::Le => lhs <= *b + 1e-12,
                        Sense::Ge => lhs >= *b - 1e-12,
                        Sense::Eq => (lhs - b).abs() <= 1e-12,
                    }
                }) {
                    grid_feasible = true;
                    break;
                }
            }
            assert_eq!(grid_feasible, !make_infeasible, "grid oracle disagrees");
        }
        checked += 1;
    }
    println!("ACCEPTANCE 6b (LP vs brute force): PASS - {checked} instances, zero mismatches");
}

#[test]
fn acceptance_6c_share_lp_collapses_to_scalar_condition() {
    let mut rng = ChaCha12Rng::seed_from_u64(63);
    for i in 0..500u64 {
        let mut scn = Scenario::default();
        scn.relays = rng.gen_range(1..=8);
        scn.blocks_per_interval = rng.gen_range(1..=6);
        scn.intervals = rng.gen_range(1..=6);
        scn.seed = 90_000 + i;
        let (trace, gains) = instance(&scn);
        let eta = 0.05 * 400.0f64.powf(rng.gen::<f64>());
        let cand = feasibility::preselect(eta, &scn, &gains).unwrap();
        let by_lp = feasibility::check_all_intervals(&cand, &trace, &scn).unwrap();
        let by_scalar = feasibility::sufficiency_check(&cand, &trace, &scn).unwrap();
        assert_eq!(by_lp, by_scalar, "instance {i} (eta {eta:.3}): verdicts differ");
    }
    println!("ACCEPTANCE 6c (share LP collapse, M=1): PASS - 500 instances, zero mismatches");
}

#[test]
fn acceptance_7_byte_identical_reruns() {
    let dir = std::env::temp_dir().join("ehrelay-acceptance-determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let spec = ExperimentSpec {
        experiment: Experiment::PowerVsRelays,
        sweep: vec![2, 4],
        trials: 3,
        scenario: Scenario::default(),
        seed: 11,
    };
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("run{run}.csv"));
        run_experiment(
            &spec,
            &RunOptions {
                out: out.clone(),
                seed: None,
                trials: None,
                jobs: Some(1),
                timing: false,
            },
        )
        .unwrap();
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "consecutive runs differ byte-wise");
    assert!(!outputs[0].is_empty());
    println!(
        "ACCEPTANCE 7 (determinism): PASS - two runs, {} identical bytes",
        outputs[0].len()
    );
}
