//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stderr so the verdicts survive output capture.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bestarm::baseline::uniform_best;
use bestarm::env::{Bandit, BanditInstance, EnvironmentHandle, Family};
use bestarm::harness::{
    collect_trials, csv_string, run_experiment, run_trials, scaling_sweep, Algorithm, AlgorithmConfig,
    BudgetRule, ExperimentSpec, InstanceRecipe,
};
use bestarm::melim::{median_eliminate, MeConfig};
use bestarm::metrics::{error_lb_exact, gaps, hardness_g, hardness_h, slice_arms};
use bestarm::prism::{prism, theorem1_failure_budget, PrismConfig, Variant};

fn verdict(criterion: u32, pass: bool, detail: String) {
    let line = format!(
        "{} criterion {criterion}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion}: {detail}");
}

fn stderr_binomial(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn gaussian_recipe(alpha: f64) -> InstanceRecipe {
    InstanceRecipe {
        alpha,
        mu0: 0.9,
        gap_scale: 0.5,
        family: Family::gaussian(0.25).unwrap(),
    }
}

fn sweep_grid() -> Vec<usize> {
    (6..=12).map(|k| 1usize << k).collect()
}

fn sweep_slope(alpha: f64, algorithm: Algorithm, pull_cap: u64, seed: u64) -> (f64, u64) {
    let mut config = AlgorithmConfig::new(algorithm, 0.1);
    config.pull_cap = pull_cap;
    config.budget = BudgetRule::Sufficient;
    let spec = ExperimentSpec::new(gaussian_recipe(alpha), sweep_grid(), config)
        .trials(40)
        .seed(seed)
        .jobs(0);
    let result = scaling_sweep(&spec).unwrap();
    let overflows = result.rows.iter().map(|r| r.overflows).sum();
    (result.fit.unwrap().slope, overflows)
}

#[test]
fn criterion_1_prism_pac_correctness() {
    let trials = 500;
    let floor = 0.9 - 2.0 * stderr_binomial(0.9, trials);
    let mut parts = Vec::new();
    let mut pass = true;
    for algorithm in [Algorithm::PrismStandard, Algorithm::PrismConservative] {
        let spec = ExperimentSpec::new(gaussian_recipe(0.3), vec![256], AlgorithmConfig::new(algorithm, 0.1))
            .trials(trials)
            .seed(1)
            .jobs(0);
        let row = run_trials(&spec, 256).unwrap();
        pass &= row.success_rate >= floor && row.overflows == 0;
        parts.push(format!("{} success {:.4}", algorithm.name(), row.success_rate));
    }
    verdict(1, pass, format!("{} (floor {floor:.4})", parts.join(", ")));
}

#[test]
fn criterion_2_linear_regime_scaling() {
    let (low, o1) = sweep_slope(0.3, Algorithm::PrismStandard, 1 << 31, 2);
    let (high, o2) = sweep_slope(0.7, Algorithm::PrismStandard, 1 << 50, 3);
    let pass = (0.85..=1.25).contains(&low) && (1.25..=1.75).contains(&high) && o1 + o2 == 0;
    verdict(
        2,
        pass,
        format!("slope {low:.4} at alpha 0.3 (want [0.85, 1.25]), {high:.4} at alpha 0.7 (want [1.25, 1.75])"),
    );
}

#[test]
fn criterion_3_adaptivity_gap() {
    let (adaptive, o1) = sweep_slope(0.3, Algorithm::PrismStandard, 1 << 31, 4);
    let (uniform, o2) = sweep_slope(0.3, Algorithm::Uniform, 1 << 31, 4);
    let gap = uniform - adaptive;
    verdict(
        3,
        gap >= 0.35 && o1 + o2 == 0,
        format!("uniform slope {uniform:.4} - prism slope {adaptive:.4} = {gap:.4} (want >= 0.35)"),
    );
}

#[test]
fn criterion_4_nonadaptive_error_floor() {
    let inst = BanditInstance::new(vec![0.5, 0.0], Family::gaussian(1.0).unwrap()).unwrap();
    let gap = gaps(&inst).unwrap();
    let trials = 100_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [1u64, 4, 16] {
        let mut errors = 0u64;
        for t in 0..trials {
            let shuffled = inst.shuffled(t);
            let best = shuffled.best_arm();
            let mut env = EnvironmentHandle::new(shuffled, 40 + m, t);
            if uniform_best(&mut env, m).unwrap().chosen != best {
                errors += 1;
            }
        }
        let rate = errors as f64 / trials as f64;
        let lb = error_lb_exact(&gap, m);
        pass &= rate >= lb - 3.0 * stderr_binomial(lb, trials);
        parts.push(format!("m={m} error {rate:.4} vs floor {lb:.4}"));
    }
    verdict(4, pass, parts.join(", "));
}

#[test]
fn criterion_5_median_elimination() {
    let inst = BanditInstance::alpha(7, 0.5, 0.9, 0.5, Family::Bernoulli).unwrap();
    let trials = 10_000u64;
    let mut freq_ok = true;
    let mut parts = Vec::new();
    for (eps, delta) in [(0.2, 0.1), (0.1, 0.05)] {
        let cfg = MeConfig::new(eps, delta).unwrap();
        let arms: Vec<usize> = (0..8).collect();
        let mut good = 0u64;
        for t in 0..trials {
            let shuffled = inst.shuffled(t);
            let best_mean = shuffled.ranked_means()[0];
            let mut env = EnvironmentHandle::new(shuffled, 50, t);
            let chosen = median_eliminate(&mut env, &arms, &cfg).unwrap().chosen;
            if env.instance().arm_mean(chosen).unwrap() >= best_mean - eps {
                good += 1;
            }
        }
        let rate = good as f64 / trials as f64;
        freq_ok &= rate >= 1.0 - delta - 2.0 * stderr_binomial(1.0 - delta, trials);
        parts.push(format!("({eps}, {delta}) eps-optimal {rate:.4}"));
    }

    let mut ratios = Vec::new();
    for (eps, delta) in [(0.2, 0.1), (0.1, 0.05)] {
        let cfg = MeConfig::new(eps, delta).unwrap();
        for k in (1..=10).map(|j| 1usize << j) {
            let means: Vec<f64> = (0..k).map(|i| 0.9 - 0.8 * i as f64 / k as f64).collect();
            let mut env = EnvironmentHandle::new(BanditInstance::new(means, Family::Deterministic).unwrap(), 0, 0);
            let arms: Vec<usize> = (0..k).collect();
            let pulls = median_eliminate(&mut env, &arms, &cfg).unwrap().pulls_used;
            assert_eq!(pulls, env.total_pulls());
            ratios.push(pulls as f64 / (k as f64 / (eps * eps) * (3.0 / delta).ln()));
        }
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let bounded = max <= 64.0;
    verdict(
        5,
        freq_ok && bounded,
        format!(
            "{}; pulls / (|arms| eps^-2 ln(3/delta)) in [{min:.1}, {max:.1}] (want <= 64)",
            parts.join(", ")
        ),
    );
}

#[test]
fn criterion_6_hardness_closed_forms() {
    let n = 100_000usize;
    let ln_n = (n as f64).ln();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.25, 0.5, 0.75] {
        let inst = BanditInstance::alpha(n, alpha, 1.0, 1.0, Family::Bernoulli).unwrap();
        let g = gaps(&inst).unwrap();
        let (h, gg) = (hardness_h(&g).unwrap(), hardness_g(&g).unwrap());
        let nf = n as f64;
        let two_a = 2.0 * alpha;
        let (h_lead, g_lead) = if alpha > 0.5 {
            (
                two_a / (two_a - 1.0) * nf.powf(two_a),
                two_a * two_a / (two_a - 1.0) * nf.powf(two_a) * ln_n,
            )
        } else if alpha == 0.5 {
            (nf * ln_n, two_a * nf * ln_n * ln_n)
        } else {
            (two_a / (1.0 - two_a) * nf, two_a / (1.0 - two_a).powi(2) * nf)
        };
        let (rh, rg) = (h / h_lead, gg / g_lead);
        pass &= (0.8..=1.2).contains(&rh) && (0.8..=1.2).contains(&rg);
        parts.push(format!("alpha {alpha}: H ratio {rh:.3}, G ratio {rg:.3}"));
    }
    verdict(6, pass, format!("{} (want each in [0.8, 1.2])", parts.join("; ")));
}

#[test]
fn criterion_7_invariant_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    for case in 0..60u64 {
        let n = rng.random_range(1..40usize);
        let alpha = rng.random_range(0.0..1.0);
        let family = match case % 3 {
            0 => Family::Bernoulli,
            1 => Family::gaussian(0.25).unwrap(),
            _ => Family::Deterministic,
        };
        let inst = BanditInstance::alpha(n, alpha, 0.9, 0.6, family).unwrap().shuffled(case);
        let variant = if case % 2 == 0 { Variant::Standard } else { Variant::Conservative };
        let mut env = EnvironmentHandle::new(inst.clone(), case, 0);
        let run = prism(&mut env, &PrismConfig::new(0.1, variant).unwrap()).unwrap();
        let mut previous: Option<&Vec<usize>> = None;
        let mut phase_sum = 0u64;
        for p in &run.phases {
            if let Some(prev) = previous {
                if &p.active_before != prev {
                    failures.push(format!("case {case}: phase {} input differs", p.phase));
                }
            }
            if !p.active_after.iter().all(|a| p.active_before.contains(a)) {
                failures.push(format!("case {case}: phase {} grew the active set", p.phase));
            }
            if !p.active_after.contains(&p.me_output) {
                failures.push(format!("case {case}: phase {} dropped its own reference arm", p.phase));
            }
            phase_sum += p.pulls_phase;
            previous = Some(&p.active_after);
        }
        if phase_sum != run.total_pulls || run.total_pulls != env.total_pulls() {
            failures.push(format!("case {case}: ledger mismatch"));
        }

        let m = rng.random_range(1..50u64);
        let mut env = EnvironmentHandle::new(inst.clone(), case, 1);
        let out = uniform_best(&mut env, m).unwrap();
        if out.total_pulls != m * (n as u64 + 1) || env.total_pulls() != out.total_pulls {
            failures.push(format!("case {case}: uniform ledger"));
        }
    }

    for case in 0..200 {
        let k = rng.random_range(1..60usize);
        let gap: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..=std::f64::consts::FRAC_1_SQRT_2)).collect();
        let delta = rng.random_range(1e-4..0.5);
        let slices = slice_arms(&gap, delta).unwrap();
        let mut seen: Vec<usize> = slices.slices.values().flatten().copied().collect();
        seen.sort_unstable();
        if seen != (1..=k).collect::<Vec<_>>() {
            failures.push(format!("slice case {case}: not a partition"));
        }
        let (h, g) = (hardness_h(&gap).unwrap(), hardness_g(&gap).unwrap());
        if !(h <= g * (1.0 + 1e-12) && g <= h * h.log2() * (1.0 + 1e-12)) {
            failures.push(format!("hardness case {case}: H {h} G {g}"));
        }
    }

    let spec = ExperimentSpec::new(
        gaussian_recipe(0.4),
        vec![16, 64],
        AlgorithmConfig::new(Algorithm::PrismStandard, 0.1),
    )
    .trials(64)
    .seed(99);
    let first = csv_string(&run_experiment(&spec).unwrap().rows);
    let again = csv_string(&run_experiment(&spec).unwrap().rows);
    let pooled = csv_string(&run_experiment(&spec.clone().jobs(4)).unwrap().rows);
    if first != again || first != pooled {
        failures.push("mc output not bit-reproducible".into());
    }

    verdict(
        7,
        failures.is_empty(),
        if failures.is_empty() {
            "60 prism/uniform runs, 200 slicing and hardness cases, reproducible mc".into()
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_8_good_event_budget() {
    let trials = 2000u64;
    let budget = theorem1_failure_budget(0.1);
    let spec = ExperimentSpec::new(
        gaussian_recipe(0.3),
        vec![256],
        AlgorithmConfig::new(Algorithm::PrismStandard, 0.1),
    )
    .trials(trials)
    .seed(8)
    .jobs(0);
    let results = collect_trials(&spec, 256).unwrap();
    let eliminated = results.iter().filter(|t| t.best_eliminated).count() as f64 / trials as f64;
    let ceiling = budget + 2.0 * stderr_binomial(budget, trials);
    verdict(
        8,
        eliminated <= ceiling,
        format!("best arm eliminated in {eliminated:.4} of trials (ceiling {ceiling:.4}, budget {budget:.4})"),
    );
}
