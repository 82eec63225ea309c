use std::fmt::Write as _;

use decoy_core::{
    expected_rates, feasibility_report, finite_bound, gllp_rate, hwang_bound, sample_observation,
    validate_pair, wang_asymptotic_bound, BoundReport, ChannelScenario, ClassCounts,
    FeasibilityReport, FluctuationSettings, KeyRate, KeyRateInput, Method, ObservedRates,
    ProtocolParams, PulseBudget, SolverOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RateSource, RunConfig};
use crate::render::{csv_string, full, grid, opt_full, pct, sig4, Report};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<decoy_core::Error> for CliError {
    fn from(e: decoy_core::Error) -> Self {
        match e {
            decoy_core::Error::Convergence { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// How a successful command ended, beyond its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Vacuous,
    Impractical,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Vacuous => 3,
            Outcome::Impractical => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KeyRates {
    pub qber: f64,
    pub class_mu: KeyRate,
    pub class_mu_prime: KeyRate,
}

/// All bounds for one set of rates. `headline` is the finite bound when a
/// budget is given and the asymptotic one otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct BoundSet {
    pub rates: ObservedRates,
    /// `S_μ′ = 0`: nothing was observed in the second class.
    pub degenerate: bool,
    pub hwang: BoundReport,
    pub asymptotic: BoundReport,
    pub finite: Option<BoundReport>,
    pub headline: BoundReport,
    pub key_rate: Option<KeyRates>,
}

pub fn evaluate(
    rates: ObservedRates,
    params: &ProtocolParams,
    budget: Option<&PulseBudget>,
    settings: &FluctuationSettings,
    qber: Option<f64>,
    solver: SolverOptions,
) -> Result<BoundSet, CliError> {
    let hwang = hwang_bound(&rates, params)?;
    let asymptotic = wang_asymptotic_bound(&rates, params)?;
    let finite = budget
        .map(|b| finite_bound(&rates, params, b, settings, solver))
        .transpose()?;
    let headline = finite.unwrap_or(asymptotic);
    let key_rate = qber
        .map(|t| -> Result<KeyRates, CliError> {
            Ok(KeyRates {
                qber: t,
                class_mu: gllp_rate(&KeyRateInput::new(headline.delta_upper, t)?),
                class_mu_prime: gllp_rate(&KeyRateInput::new(headline.delta_prime_upper, t)?),
            })
        })
        .transpose()?;
    Ok(BoundSet {
        rates,
        degenerate: rates.is_degenerate(),
        hwang,
        asymptotic,
        finite,
        headline,
        key_rate,
    })
}

impl BoundSet {
    /// No clicks in class Y_μ: every bound is vacuous.
    fn nothing_observed(rates: ObservedRates) -> Self {
        let vacuous = |method| BoundReport {
            delta_upper: 1.0,
            delta_prime_upper: 1.0,
            s1_lower: 0.0,
            sc_upper: 0.0,
            method,
            clamped: true,
            vacuous: true,
        };
        let finite = vacuous(Method::WangFinite);
        Self {
            rates,
            degenerate: rates.is_degenerate(),
            hwang: vacuous(Method::HwangCrude),
            asymptotic: vacuous(Method::WangAsymptotic),
            finite: Some(finite),
            headline: finite,
            key_rate: None,
        }
    }

    fn reports(&self) -> Vec<&BoundReport> {
        let mut v = vec![&self.hwang, &self.asymptotic];
        v.extend(self.finite.as_ref());
        v
    }

    fn method_rows(&self) -> Vec<Vec<String>> {
        self.reports()
            .into_iter()
            .map(|r| {
                let mut flags = Vec::new();
                if r.vacuous {
                    flags.push("vacuous");
                } else if r.clamped {
                    flags.push("clamped");
                }
                vec![
                    method_name(r),
                    pct(r.delta_upper),
                    pct(r.delta_prime_upper),
                    sig4(r.s1_lower),
                    flags.join(","),
                ]
            })
            .collect()
    }

    fn write_table(&self, out: &mut String) {
        let r = &self.rates;
        let _ = writeln!(
            out,
            "rates: s0 = {}, S_mu = {}, S_mu' = {}{}",
            sig4(r.s0),
            sig4(r.s_mu),
            sig4(r.s_mu_prime),
            if self.degenerate {
                "  (degenerate: S_mu' = 0)"
            } else {
                ""
            }
        );
        out.push_str(&grid(
            &["method", "delta", "delta'", "s1_lower", "flags"],
            &self.method_rows(),
        ));
        if let Some(k) = &self.key_rate {
            let _ = writeln!(
                out,
                "key rate at qber {}: class mu {}, class mu' {}",
                pct(k.qber),
                sig4(k.class_mu.rate),
                sig4(k.class_mu_prime.rate)
            );
        }
    }

    fn csv_rows(&self, prefix: &[String]) -> Vec<Vec<String>> {
        let (k_mu, k_mp) = match &self.key_rate {
            Some(k) => (full(k.class_mu.rate), full(k.class_mu_prime.rate)),
            None => (String::new(), String::new()),
        };
        self.reports()
            .into_iter()
            .map(|r| {
                let mut row = prefix.to_vec();
                row.extend([
                    method_name(r),
                    full(self.rates.s0),
                    full(self.rates.s_mu),
                    full(self.rates.s_mu_prime),
                    full(r.delta_upper),
                    full(r.delta_prime_upper),
                    full(r.s1_lower),
                    full(r.sc_upper),
                    r.clamped.to_string(),
                    r.vacuous.to_string(),
                ]);
                let headline = std::ptr::eq(r, self.finite.as_ref().unwrap_or(&self.asymptotic));
                row.push(if headline {
                    k_mu.clone()
                } else {
                    String::new()
                });
                row.push(if headline {
                    k_mp.clone()
                } else {
                    String::new()
                });
                row
            })
            .collect()
    }
}

const BOUND_CSV_HEADER: [&str; 12] = [
    "method",
    "s0",
    "s_mu",
    "s_mu_prime",
    "delta_upper",
    "delta_prime_upper",
    "s1_lower",
    "sc_upper",
    "clamped",
    "vacuous",
    "key_rate_mu",
    "key_rate_mu_prime",
];

fn method_name(r: &BoundReport) -> String {
    serde_json::to_value(r.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub mu: f64,
    pub mu_prime: f64,
    pub source: RateSource,
    pub budget: Option<PulseBudget>,
    pub fluctuation: FluctuationSettings,
    pub qber: Option<f64>,
    pub solver: SolverOptions,
}

impl Inputs {
    fn from(run: &RunConfig) -> Self {
        Self {
            mu: run.params.mu(),
            mu_prime: run.params.mu_prime(),
            source: run.source.clone(),
            budget: run.budget,
            fluctuation: run.settings,
            qber: run.qber,
            solver: run.solver,
        }
    }

    fn header_line(&self) -> String {
        let budget = match &self.budget {
            Some(b) if b.n_mu == b.n_mu_prime => format!("N = {:.3e} per class", b.n_mu as f64),
            Some(b) => format!(
                "N_mu = {:.3e}, N_mu' = {:.3e}",
                b.n_mu as f64, b.n_mu_prime as f64
            ),
            None => "asymptotic".into(),
        };
        let source = match &self.source {
            RateSource::Rates(_) => "measured rates".to_string(),
            RateSource::Scenario(ChannelScenario::NoEve { eta, .. }) => {
                format!("no eavesdropper, eta = {}", sig4(*eta))
            }
            RateSource::Scenario(ChannelScenario::Pns { q, .. }) => {
                format!("PNS attack, q = {}", sig4(*q))
            }
            RateSource::Scenario(ChannelScenario::Yields { .. }) => "yields table".to_string(),
        };
        format!(
            "mu = {}, mu' = {}, {source}, {budget}",
            self.mu, self.mu_prime
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundOutput {
    pub inputs: Inputs,
    #[serde(flatten)]
    pub bounds: BoundSet,
    pub vacuous: bool,
}

pub fn bound(run: &RunConfig) -> Result<(BoundOutput, Outcome), CliError> {
    let rates = match &run.source {
        RateSource::Rates(r) => *r,
        RateSource::Scenario(s) => expected_rates(s, &run.params)?,
    };
    let bounds = evaluate(
        rates,
        &run.params,
        run.budget.as_ref(),
        &run.settings,
        run.qber,
        run.solver,
    )?;
    let vacuous = bounds.headline.vacuous;
    let outcome = if vacuous {
        Outcome::Vacuous
    } else {
        Outcome::Ok
    };
    Ok((
        BoundOutput {
            inputs: Inputs::from(run),
            bounds,
            vacuous,
        },
        outcome,
    ))
}

impl Report for BoundOutput {
    fn table(&self) -> String {
        let mut out = format!("{}\n", self.inputs.header_line());
        self.bounds.write_table(&mut out);
        if self.vacuous {
            out.push_str("VACUOUS: no positive single-photon rate can be certified\n");
        }
        out
    }

    fn csv(&self) -> csv::Result<String> {
        csv_string(&BOUND_CSV_HEADER, self.bounds.csv_rows(&[]))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub inputs: Inputs,
    pub seed: u64,
    pub counts: ClassCounts,
    pub expected: BoundSet,
    pub sampled: BoundSet,
    pub vacuous: bool,
}

pub fn simulate(run: &RunConfig, seed: u64) -> Result<(SimulateOutput, Outcome), CliError> {
    let RateSource::Scenario(scenario) = &run.source else {
        return Err(CliError::Config(
            "simulate needs a [channel] model, not measured rates".into(),
        ));
    };
    let Some(budget) = run.budget.as_ref() else {
        return Err(CliError::Config(
            "simulate needs a [budget] (or --n-pulses)".into(),
        ));
    };
    let eval = |rates| {
        evaluate(
            rates,
            &run.params,
            Some(budget),
            &run.settings,
            run.qber,
            run.solver,
        )
    };
    let expected = eval(expected_rates(scenario, &run.params)?)?;
    let obs = sample_observation(scenario, &run.params, budget, seed)?;
    let counts = obs.counts.expect("sampled observations carry counts");
    let sampled = if obs.rates.s_mu > 0.0 {
        eval(obs.rates)?
    } else {
        BoundSet::nothing_observed(obs.rates)
    };
    let vacuous = sampled.headline.vacuous;
    let outcome = if vacuous {
        Outcome::Vacuous
    } else {
        Outcome::Ok
    };
    Ok((
        SimulateOutput {
            inputs: Inputs::from(run),
            seed,
            counts,
            expected,
            sampled,
            vacuous,
        },
        outcome,
    ))
}

impl Report for SimulateOutput {
    fn table(&self) -> String {
        let c = &self.counts;
        let mut out = format!(
            "{}\nseed {}: clicks vacuum = {}, mu = {}, mu' = {}\n\nexpected rates\n",
            self.inputs.header_line(),
            self.seed,
            c.vacuum,
            c.mu,
            c.mu_prime
        );
        self.expected.write_table(&mut out);
        out.push_str("\nsampled rates\n");
        self.sampled.write_table(&mut out);
        if self.vacuous {
            out.push_str("VACUOUS: no positive single-photon rate can be certified\n");
        }
        out
    }

    fn csv(&self) -> csv::Result<String> {
        let mut header = vec!["source"];
        header.extend(BOUND_CSV_HEADER);
        let rows = self
            .expected
            .csv_rows(&["expected".into()])
            .into_iter()
            .chain(self.sampled.csv_rows(&["sampled".into()]));
        csv_string(&header, rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub mu_prime: f64,
    pub eta: Option<f64>,
    pub n_pulses: Option<u128>,
    pub s0: f64,
    pub delta_upper: f64,
    pub delta_prime_upper: f64,
    pub s1_lower: f64,
    pub key_rate: Option<f64>,
    pub clamped: bool,
    pub vacuous: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Grid cells dropped because the intensity pair is inadmissible.
    pub skipped: Vec<String>,
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "mu",
    "mu_prime",
    "eta",
    "n_pulses",
    "s0",
    "delta_upper",
    "delta_prime_upper",
    "s1_lower",
    "key_rate",
    "clamped",
    "vacuous",
];

pub struct SweepGrid {
    pub mu: Vec<f64>,
    pub mu_prime: Vec<f64>,
    /// Replaces the channel transmittance per cell; needs a no-Eve channel.
    pub eta: Option<Vec<f64>>,
}

/// Cells run in parallel; rows come back in grid order (μ, then μ′, then η).
pub fn sweep(
    scenario: &ChannelScenario,
    grid_spec: &SweepGrid,
    budget: Option<&PulseBudget>,
    settings: &FluctuationSettings,
    qber: Option<f64>,
    solver: SolverOptions,
) -> Result<SweepOutput, CliError> {
    let etas: Vec<Option<f64>> = match &grid_spec.eta {
        Some(v) => {
            if !matches!(scenario, ChannelScenario::NoEve { .. }) {
                return Err(CliError::Config(
                    "an eta grid needs kind = \"no_eve\"".into(),
                ));
            }
            v.iter().copied().map(Some).collect()
        }
        None => vec![None],
    };
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for &mu in &grid_spec.mu {
        for &mp in &grid_spec.mu_prime {
            let verdict = validate_pair(mu, mp);
            if !verdict.is_valid() {
                skipped.push(verdict.to_string());
                continue;
            }
            for &eta in &etas {
                cells.push((mu, mp, eta));
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Config(
            "the sweep grid has no admissible (mu, mu') cell".into(),
        ));
    }
    let rows = cells
        .par_iter()
        .map(|&(mu, mp, eta)| -> Result<SweepRow, CliError> {
            let params = ProtocolParams::new(mu, mp)?;
            let scenario = match (eta, scenario) {
                (
                    Some(eta),
                    ChannelScenario::NoEve {
                        s0, dark_counts, ..
                    },
                ) => ChannelScenario::no_eve_with(eta, *s0, *dark_counts)?,
                _ => scenario.clone(),
            };
            let rates = expected_rates(&scenario, &params)?;
            let set = evaluate(rates, &params, budget, settings, qber, solver)?;
            let h = set.headline;
            Ok(SweepRow {
                mu,
                mu_prime: mp,
                eta: match scenario {
                    ChannelScenario::NoEve { eta, .. } => Some(eta),
                    _ => None,
                },
                n_pulses: budget.map(|b| b.n_mu),
                s0: rates.s0,
                delta_upper: h.delta_upper,
                delta_prime_upper: h.delta_prime_upper,
                s1_lower: h.s1_lower,
                key_rate: set.key_rate.map(|k| k.class_mu.rate),
                clamped: h.clamped,
                vacuous: h.vacuous,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepOutput { rows, skipped })
}

impl Report for SweepOutput {
    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.mu.to_string(),
                    r.mu_prime.to_string(),
                    r.eta.map(sig4).unwrap_or_default(),
                    r.n_pulses
                        .map(|n| format!("{:.3e}", n as f64))
                        .unwrap_or_else(|| "inf".into()),
                    pct(r.delta_upper),
                    pct(r.delta_prime_upper),
                    sig4(r.s1_lower),
                    r.key_rate.map(sig4).unwrap_or_default(),
                    if r.vacuous {
                        "vacuous".into()
                    } else {
                        String::new()
                    },
                ]
            })
            .collect();
        let mut out = grid(
            &[
                "mu", "mu'", "eta", "N", "delta", "delta'", "s1_lower", "key_rate", "flags",
            ],
            &rows,
        );
        for s in &self.skipped {
            let _ = writeln!(out, "skipped {s}");
        }
        out
    }

    fn csv(&self) -> csv::Result<String> {
        csv_string(
            &SWEEP_CSV_HEADER,
            self.rows.iter().map(|r| {
                vec![
                    full(r.mu),
                    full(r.mu_prime),
                    opt_full(r.eta),
                    r.n_pulses.map(|n| n.to_string()).unwrap_or_default(),
                    full(r.s0),
                    full(r.delta_upper),
                    full(r.delta_prime_upper),
                    full(r.s1_lower),
                    opt_full(r.key_rate),
                    r.clamped.to_string(),
                    r.vacuous.to_string(),
                ]
            }),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityOutput {
    #[serde(flatten)]
    pub report: FeasibilityReport,
}

pub fn feasibility(
    setup: &decoy_core::WeakDecoySetup,
    target: f64,
) -> Result<(FeasibilityOutput, Outcome), CliError> {
    let report = feasibility_report(setup, target)?;
    let outcome = if report.practical {
        Outcome::Ok
    } else {
        Outcome::Impractical
    };
    Ok((FeasibilityOutput { report }, outcome))
}

impl Report for FeasibilityOutput {
    fn table(&self) -> String {
        let r = &self.report;
        let s = &r.setup;
        let rows = vec![
            vec!["eta".into(), sig4(s.eta)],
            vec!["s0".into(), sig4(s.s0)],
            vec!["weak decoy mu_v".into(), sig4(s.mu_v)],
            vec!["repetition rate (1/s)".into(), sig4(s.rep_rate)],
            vec!["target relative fluctuation of s0".into(), sig4(r.target)],
            vec![
                "signal clicks per decoy pulse".into(),
                sig4(r.signal_per_pulse),
            ],
            vec!["dark clicks per decoy pulse".into(), sig4(r.dark_per_pulse)],
            vec!["s1 lower bound (s0 exact)".into(), sig4(r.s1_lower)],
            vec!["required pulses".into(), sig4(r.required_pulses)],
            vec!["acquisition time (days)".into(), sig4(r.acquisition.days)],
            vec![
                "verdict".into(),
                if r.practical {
                    "practical"
                } else {
                    "impractical"
                }
                .into(),
            ],
        ];
        grid(&["quantity", "value"], &rows)
    }

    fn csv(&self) -> csv::Result<String> {
        let r = &self.report;
        let s = &r.setup;
        csv_string(
            &[
                "eta",
                "s0",
                "mu_v",
                "rep_rate",
                "confidence_exponent",
                "target",
                "s1_lower",
                "signal_per_pulse",
                "dark_per_pulse",
                "required_pulses",
                "achieved_fluctuation",
                "seconds",
                "days",
                "practical",
            ],
            [vec![
                full(s.eta),
                full(s.s0),
                full(s.mu_v),
                full(s.rep_rate),
                full(s.confidence_exponent),
                full(r.target),
                full(r.s1_lower),
                full(r.signal_per_pulse),
                full(r.dark_per_pulse),
                full(r.required_pulses),
                full(r.achieved_fluctuation),
                full(r.acquisition.seconds),
                full(r.acquisition.days),
                r.practical.to_string(),
            ]],
        )
    }
}
