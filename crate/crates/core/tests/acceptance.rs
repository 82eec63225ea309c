//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its PASS/FAIL line; exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use decoy_core::{
    acquisition_time, derive_seed, expected_rates, finite_bound, hwang_bound, hwang_optimized,
    iterate_sc_s1, required_pulses, sample_observation, true_delta, wang_asymptotic_bound,
    ChannelScenario, DarkCountModel, FluctuationSettings, ObservedRates, ProtocolParams,
    PulseBudget, SolverOptions, WeakDecoySetup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S0: f64 = 1e-6;
const N_W1: u128 = 10_000_000_000;
const N_W2: u128 = 80_000_000_000;
const N_VACUUM: u128 = 4_000_000_000;

/// (μ, μ′, ref Δ) for the η = 1e−3, N = 1e10 row.
const W1: [(f64, f64, f64); 4] = [
    (0.20, 0.34, 0.234),
    (0.25, 0.38, 0.289),
    (0.30, 0.43, 0.344),
    (0.35, 0.45, 0.399),
];
/// (μ, μ′, ref Δ, ref Δ′) for the η = 1e−4, N = 8e10 rows.
const W2: [(f64, f64, f64, f64); 4] = [
    (0.20, 0.39, 0.256, 0.401),
    (0.25, 0.41, 0.309, 0.422),
    (0.30, 0.45, 0.362, 0.458),
    (0.35, 0.47, 0.415, 0.486),
];

fn report(id: &str, pass: bool, detail: String) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn params(mu: f64, mp: f64) -> ProtocolParams {
    ProtocolParams::new(mu, mp).unwrap()
}

fn table_scenario(eta: f64, s0: f64) -> ChannelScenario {
    ChannelScenario::no_eve_with(eta, s0, DarkCountModel::VacuumClassOnly).unwrap()
}

fn finite_delta(scenario: &ChannelScenario, p: &ProtocolParams, n: u128) -> (f64, f64) {
    let rates = expected_rates(scenario, p).unwrap();
    let budget = PulseBudget::symmetric(n, N_VACUUM).unwrap();
    let r = finite_bound(
        &rates,
        p,
        &budget,
        &FluctuationSettings::default(),
        SolverOptions::default(),
    )
    .unwrap();
    (r.delta_upper, r.delta_prime_upper)
}

fn c01_hwang_optimized_row() -> bool {
    let cases = [
        (0.20, 0.445),
        (0.25, 0.529),
        (0.30, 0.604),
        (0.35, 0.670),
        (0.39, 0.718),
        (0.41, 0.740),
        (0.45, 0.780),
        (0.47, 0.798),
    ];
    let worst = cases
        .iter()
        .map(|&(mu, r)| (hwang_optimized(mu).unwrap() - r).abs())
        .fold(0.0, f64::max);
    let pass = worst <= 0.001;
    report(
        "C1 Δ_H row",
        pass,
        format!("max |dev| = {:.4}pp (tol 0.1pp)", worst * 100.0),
    );
    pass
}

fn c02_finite_row_w1() -> bool {
    let start = Instant::now();
    let scenario = table_scenario(1e-3, S0);
    let mut worst: f64 = 0.0;
    for &(mu, mp, r) in &W1 {
        let (d, _) = finite_delta(&scenario, &params(mu, mp), N_W1);
        println!(
            "    μ={mu} μ′={mp}: Δ = {:.2}% (ref {:.1}%)",
            d * 100.0,
            r * 100.0
        );
        worst = worst.max((d - r).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 0.01 && elapsed < Duration::from_secs(1);
    report(
        "C2 Δ_W1 row",
        pass,
        format!("max |dev| = {:.3}pp (tol 1pp), {elapsed:?}", worst * 100.0),
    );
    pass
}

fn c03_finite_rows_w2() -> bool {
    let start = Instant::now();
    let scenario = table_scenario(1e-4, S0);
    let (mut worst_d, mut worst_dp): (f64, f64) = (0.0, 0.0);
    for &(mu, mp, r, ref_prime) in &W2 {
        let (d, dp) = finite_delta(&scenario, &params(mu, mp), N_W2);
        println!(
            "    μ={mu} μ′={mp}: Δ = {:.2}% (ref {:.1}%), Δ′ = {:.2}% (ref {:.1}%)",
            d * 100.0,
            r * 100.0,
            dp * 100.0,
            ref_prime * 100.0
        );
        worst_d = worst_d.max((d - r).abs());
        worst_dp = worst_dp.max((dp - ref_prime).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst_d <= 0.01 && worst_dp <= 0.01 && elapsed < Duration::from_secs(1);
    report(
        "C3 Δ_W2/Δ′_W2 rows",
        pass,
        format!(
            "max |dev| Δ = {:.3}pp, Δ′ = {:.3}pp (tol 1pp), {elapsed:?}",
            worst_d * 100.0,
            worst_dp * 100.0
        ),
    );
    pass
}

fn c04_true_fraction_row() -> bool {
    let reference = [
        (0.20, 0.183),
        (0.25, 0.222),
        (0.30, 0.259),
        (0.35, 0.295),
        (0.39, 0.323),
        (0.41, 0.337),
        (0.45, 0.362),
        (0.47, 0.375),
    ];
    let scenario = table_scenario(1e-4, S0);
    let mut worst: f64 = 0.0;
    for &(mu, value) in &reference {
        // the second intensity only has to be admissible
        let (d, _) = true_delta(&scenario, &params(mu, mu + 0.1)).unwrap();
        worst = worst.max((d - value).abs());
    }
    let pass = worst <= 0.005;
    report(
        "C4 Δ_R row",
        pass,
        format!("max |dev| = {:.3}pp (tol 0.5pp)", worst * 100.0),
    );
    pass
}

fn c05_dark_count_sensitivity() -> bool {
    let mut worst: f64 = 0.0;
    let mut worst_vacuum_only: f64 = 0.0;
    let configs = W1
        .iter()
        .map(|&(mu, mp, _)| (mu, mp, 1e-3, N_W1))
        .chain(W2.iter().map(|&(mu, mp, _, _)| (mu, mp, 1e-4, N_W2)));
    for (mu, mp, eta, n) in configs {
        let p = params(mu, mp);
        let shift = |model| {
            let base = ChannelScenario::no_eve_with(eta, S0, model).unwrap();
            let raised = ChannelScenario::no_eve_with(eta, 1.5 * S0, model).unwrap();
            (finite_delta(&raised, &p, n).0 - finite_delta(&base, &p, n).0).abs()
        };
        worst = worst.max(shift(DarkCountModel::Independent));
        worst_vacuum_only = worst_vacuum_only.max(shift(DarkCountModel::VacuumClassOnly));
    }
    let pass = worst < 0.01;
    report(
        "C5 s0 x1.5 sensitivity",
        pass,
        format!("max |ΔΔ| = {worst:.4} (tol 0.01, dark counts in every class)"),
    );
    println!(
        "[INFO] C5 with dark counts in the vacuum class only: max |ΔΔ| = {worst_vacuum_only:.4}"
    );
    pass
}

fn c06_close_intensity_limit() -> bool {
    let mut worst: f64 = 0.0;
    for &mu in &[0.2, 0.25, 0.3, 0.35] {
        let mp = mu + 1e-4;
        let eta = 1e-3;
        let rates = ObservedRates::new(0.0, eta * mu, eta * mp).unwrap();
        let r = wang_asymptotic_bound(&rates, &params(mu, mp)).unwrap();
        worst = worst.max((r.delta_upper - mu).abs());
    }
    let pass = worst < 1e-4;
    report(
        "C6 μ′→μ limit",
        pass,
        format!("max |Δ − μ| = {worst:.2e} (tol 1e-4)"),
    );
    pass
}

fn c07_weak_decoy_infeasibility() -> bool {
    let setup = WeakDecoySetup::new(1e-4, 1e-6, 1e-4, 8e7, 25.0).unwrap();
    let n = required_pulses(&setup, 1e-3).unwrap();
    let t = acquisition_time(n, 8e7).unwrap();
    let pass = n == 1e14 && t.days > 14.0 && t.days < 15.0;
    report(
        "C7 weak-decoy pulse count",
        pass,
        format!("N = {n:e}, {:.2} days", t.days),
    );
    pass
}

/// One random yields strategy; families cover generic, attack-like and
/// sparse shapes.
fn random_strategy(rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let s0 = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..1e-3)
    };
    let table: Vec<f64> = match rng.random_range(0..4) {
        0 => (0..20).map(|_| rng.random::<f64>()).collect(),
        1 => {
            // singles suppressed, multi-photon pulses favoured
            let single = rng.random_range(0.0..0.05);
            let multi = rng.random_range(0.0..1.0);
            (0..20)
                .map(|n| if n == 0 { single } else { multi })
                .collect()
        }
        2 => {
            let eta = 10f64.powf(rng.random_range(-5.0..0.0));
            (1..=20).map(|n| 1.0 - (1.0 - eta).powi(n)).collect()
        }
        _ => (0..20)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random::<f64>()
                } else {
                    0.0
                }
            })
            .collect(),
    };
    (s0, table)
}

fn c08_soundness_over_random_strategies() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut checked, mut violations) = (0usize, 0usize);
    while checked < 10_000 {
        let mu = rng.random_range(0.1..0.5);
        let mp = rng.random_range(mu + 0.005..=1.0);
        let p = params(mu, mp);
        let (s0, table) = random_strategy(&mut rng);
        let scenario = ChannelScenario::yields(s0, table).unwrap();
        let rates = expected_rates(&scenario, &p).unwrap();
        if rates.s_mu <= 0.0 {
            continue;
        }
        let (truth, truth_prime) = true_delta(&scenario, &p).unwrap();
        let wang = wang_asymptotic_bound(&rates, &p).unwrap();
        let hwang = hwang_bound(&rates, &p).unwrap();
        let ok = wang.delta_upper >= truth - 1e-12
            && hwang.delta_upper >= truth - 1e-12
            && wang.delta_prime_upper >= truth_prime - 1e-12
            && wang.delta_upper <= hwang.delta_upper + 1e-12;
        if !ok {
            violations += 1;
            println!("    violation: μ={mu} μ′={mp} rates={rates:?} truth={truth} wang={wang:?}");
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(30);
    report(
        "C8 soundness",
        pass,
        format!("{checked} strategies, {violations} violations, {elapsed:?}"),
    );
    pass
}

fn c09_cross_validation() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let opts = SolverOptions::default();
    let (mut checked, mut worst) = (0usize, 0.0f64);
    while checked < 1_000 {
        let mu = rng.random_range(0.1..0.5);
        let mp = rng.random_range(mu + 0.02..=1.0);
        let p = params(mu, mp);
        let eta = 10f64.powf(rng.random_range(-4.0..-1.0));
        let s0 = rng.random_range(0.0..1e-5);
        // honest rates perturbed by up to ±5% on the second class
        let base = expected_rates(&ChannelScenario::no_eve(eta, s0).unwrap(), &p).unwrap();
        let s_mp = (base.s_mu_prime * rng.random_range(0.95..1.05)).min(1.0);
        let rates = ObservedRates::new(s0, base.s_mu, s_mp).unwrap();
        let closed = wang_asymptotic_bound(&rates, &p).unwrap();
        if closed.vacuous || closed.delta_upper <= 0.0 {
            continue;
        }
        let sol = iterate_sc_s1(&rates, &p, opts).unwrap();
        let iterated = decoy_core::decompose(&p).unwrap().c * sol.sc_upper / rates.s_mu;
        worst = worst.max((iterated - closed.delta_upper).abs() / closed.delta_upper);
        checked += 1;
    }

    let p = params(0.3, 0.45);
    let rates = expected_rates(&table_scenario(1e-4, S0), &p).unwrap();
    let huge = PulseBudget::symmetric(10u128.pow(30), 10u128.pow(30)).unwrap();
    let fin = finite_bound(&rates, &p, &huge, &FluctuationSettings::default(), opts).unwrap();
    let asym = wang_asymptotic_bound(&rates, &p).unwrap();
    let gap = fin.delta_upper - asym.delta_upper;

    let pass = worst <= 1e-6 && (0.0..1e-3).contains(&gap);
    report(
        "C9 cross-validation",
        pass,
        format!(
            "{checked} inputs, max rel dev {worst:.2e} (tol 1e-6); N=1e30 gap {gap:.2e} (tol 1e-3)"
        ),
    );
    pass
}

fn c10_monte_carlo_consistency() -> bool {
    let p = params(0.3, 0.45);
    let scenario = ChannelScenario::no_eve(1e-3, S0).unwrap();
    let n = 1_000_000_000u128;
    let budget = PulseBudget::symmetric(n, n).unwrap();
    let settings = FluctuationSettings::default();
    let opts = SolverOptions::default();
    let expected = expected_rates(&scenario, &p).unwrap();
    let reference = finite_bound(&expected, &p, &budget, &settings, opts)
        .unwrap()
        .delta_upper;
    let mut within = 0;
    for i in 0..100 {
        let obs = sample_observation(&scenario, &p, &budget, derive_seed(10, i)).unwrap();
        let d = finite_bound(&obs.rates, &p, &budget, &settings, opts)
            .unwrap()
            .delta_upper;
        if (d - reference).abs() <= 0.03 {
            within += 1;
        }
    }
    let pass = within >= 95;
    report(
        "C10 Monte Carlo consistency",
        pass,
        format!("{within}/100 sampled bounds within 3pp of {reference:.4}"),
    );
    pass
}

fn main() {
    let criteria: [fn() -> bool; 10] = [
        c01_hwang_optimized_row,
        c02_finite_row_w1,
        c03_finite_rows_w2,
        c04_true_fraction_row,
        c05_dark_count_sensitivity,
        c06_close_intensity_limit,
        c07_weak_decoy_infeasibility,
        c08_soundness_over_random_strategies,
        c09_cross_validation,
        c10_monte_carlo_consistency,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
