//! Reference table of verified tagged fractions: crude bound with the
//! optimal second intensity (Δ_H), true honest-channel fraction (Δ_R), and
//! finite-size bounds at two channel settings (Δ_W1, Δ_W2, Δ′_W2).
//!
//! Parameters are fixed: s₀ = 1e−6, η = 1e−3 with N = 1e10 pulses per class
//! for W1, η = 1e−4 with N = 8e10 for W2, 4e9 vacuum pulses, E = 25.
//! Dark counts enter the vacuum class only.

use decoy_core::{
    expected_rates, finite_bound, hwang_optimized, true_delta, ChannelScenario, DarkCountModel,
    FluctuationSettings, ProtocolParams, PulseBudget, SolverOptions,
};
use serde::Serialize;

use crate::commands::CliError;
use crate::render::{csv_string, full, grid, pct, Report};

const S0: f64 = 1e-6;
const N_VACUUM: u128 = 4_000_000_000;
const W1: (f64, u128) = (1e-3, 10_000_000_000);
const W2: (f64, u128) = (1e-4, 80_000_000_000);

/// `(μ′, reference Δ)` of a finite-size cell.
type Paired = (f64, f64);

/// `(μ, reference Δ_H, reference Δ_R, W1 cell, W2 cell)`.
const MU_COLUMNS: [(f64, f64, f64, Paired, Paired); 4] = [
    (0.20, 0.445, 0.183, (0.34, 0.234), (0.39, 0.256)),
    (0.25, 0.529, 0.222, (0.38, 0.289), (0.41, 0.309)),
    (0.30, 0.604, 0.259, (0.43, 0.344), (0.45, 0.362)),
    (0.35, 0.670, 0.295, (0.45, 0.399), (0.47, 0.415)),
];

/// `(μ′, reference Δ_H, reference Δ_R, reference Δ′_W2)`; μ′ is paired with the
/// μ of the matching W2 column.
const MU_PRIME_COLUMNS: [(f64, f64, f64, f64); 4] = [
    (0.39, 0.718, 0.323, 0.401),
    (0.41, 0.740, 0.337, 0.422),
    (0.45, 0.780, 0.362, 0.458),
    (0.47, 0.798, 0.375, 0.486),
];

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub quantity: &'static str,
    /// `mu` or `mu_prime`: which intensity labels the column.
    pub axis: &'static str,
    pub intensity: f64,
    /// Second intensity of the pair behind a finite-size cell.
    pub partner: Option<f64>,
    pub computed: f64,
    pub reference: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1 {
    pub cells: Vec<Cell>,
    pub max_abs_deviation: f64,
}

fn cell(
    quantity: &'static str,
    axis: &'static str,
    intensity: f64,
    partner: Option<f64>,
    computed: f64,
    reference: f64,
) -> Cell {
    Cell {
        quantity,
        axis,
        intensity,
        partner,
        computed,
        reference,
        deviation: computed - reference,
    }
}

fn finite(mu: f64, mp: f64, (eta, n): (f64, u128)) -> Result<(f64, f64), CliError> {
    let params = ProtocolParams::new(mu, mp)?;
    let scenario = ChannelScenario::no_eve_with(eta, S0, DarkCountModel::VacuumClassOnly)?;
    let rates = expected_rates(&scenario, &params)?;
    let budget = PulseBudget::symmetric(n, N_VACUUM)?;
    let r = finite_bound(
        &rates,
        &params,
        &budget,
        &FluctuationSettings::default(),
        SolverOptions::default(),
    )?;
    Ok((r.delta_upper, r.delta_prime_upper))
}

/// Fraction of class-Y_x counts from multi-photon pulses on the W2 channel.
fn honest_fraction(x: f64) -> Result<f64, CliError> {
    let scenario = ChannelScenario::no_eve_with(W2.0, S0, DarkCountModel::VacuumClassOnly)?;
    // the partner intensity only has to be admissible
    Ok(true_delta(&scenario, &ProtocolParams::new(x, x + 0.1)?)?.0)
}

pub fn compute() -> Result<Table1, CliError> {
    let mut cells = Vec::new();
    for &(mu, h, r, (mp1, w1), (mp2, w2)) in &MU_COLUMNS {
        cells.push(cell("delta_h", "mu", mu, None, hwang_optimized(mu)?, h));
        cells.push(cell("delta_r", "mu", mu, None, honest_fraction(mu)?, r));
        cells.push(cell(
            "delta_w1",
            "mu",
            mu,
            Some(mp1),
            finite(mu, mp1, W1)?.0,
            w1,
        ));
        cells.push(cell(
            "delta_w2",
            "mu",
            mu,
            Some(mp2),
            finite(mu, mp2, W2)?.0,
            w2,
        ));
    }
    for (&(mp, h, r, w2p), &(mu, ..)) in MU_PRIME_COLUMNS.iter().zip(&MU_COLUMNS) {
        cells.push(cell(
            "delta_h",
            "mu_prime",
            mp,
            None,
            hwang_optimized(mp)?,
            h,
        ));
        cells.push(cell(
            "delta_r",
            "mu_prime",
            mp,
            None,
            honest_fraction(mp)?,
            r,
        ));
        cells.push(cell(
            "delta_prime_w2",
            "mu_prime",
            mp,
            Some(mu),
            finite(mu, mp, W2)?.1,
            w2p,
        ));
    }
    let max_abs_deviation = cells.iter().map(|c| c.deviation.abs()).fold(0.0, f64::max);
    Ok(Table1 {
        cells,
        max_abs_deviation,
    })
}

impl Table1 {
    fn block(&self, axis: &str, label: &str) -> String {
        let columns: Vec<f64> = {
            let mut v: Vec<f64> = self
                .cells
                .iter()
                .filter(|c| c.axis == axis)
                .map(|c| c.intensity)
                .collect();
            v.dedup();
            v
        };
        let mut quantities: Vec<&str> = Vec::new();
        for c in self.cells.iter().filter(|c| c.axis == axis) {
            if !quantities.contains(&c.quantity) {
                quantities.push(c.quantity);
            }
        }
        let headers: Vec<String> = std::iter::once(label.to_string())
            .chain(columns.iter().map(|x| x.to_string()))
            .collect();
        let rows: Vec<Vec<String>> = quantities
            .iter()
            .map(|&q| {
                let mut row = vec![q.to_string()];
                for &x in &columns {
                    let c = self
                        .cells
                        .iter()
                        .find(|c| c.axis == axis && c.quantity == q && c.intensity == x)
                        .expect("every quantity fills every column");
                    let partner = c.partner.map(|p| format!("({p})")).unwrap_or_default();
                    row.push(format!(
                        "{}{partner} [ref {}]",
                        pct(c.computed),
                        pct(c.reference)
                    ));
                }
                row
            })
            .collect();
        let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
        grid(&headers, &rows)
    }
}

impl Report for Table1 {
    fn table(&self) -> String {
        format!(
            "{}\n{}\nmax |computed - ref| = {} points\n",
            self.block("mu", "mu"),
            self.block("mu_prime", "mu'"),
            crate::render::sig4(100.0 * self.max_abs_deviation)
        )
    }

    fn csv(&self) -> csv::Result<String> {
        csv_string(
            &[
                "quantity",
                "axis",
                "intensity",
                "partner",
                "computed",
                "reference",
                "deviation",
            ],
            self.cells.iter().map(|c| {
                vec![
                    c.quantity.to_string(),
                    c.axis.to_string(),
                    full(c.intensity),
                    c.partner.map(full).unwrap_or_default(),
                    full(c.computed),
                    full(c.reference),
                    full(c.deviation),
                ]
            }),
        )
    }
}
