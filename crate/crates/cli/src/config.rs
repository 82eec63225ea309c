//! Run configuration: a TOML file with one table per concern, overridden
//! field by field from command-line flags.
//!
//! ```toml
//! [protocol]
//! mu = 0.3
//! mu_prime = 0.45
//!
//! [channel]            # or [rates] with s0, s_mu, s_mu_prime
//! kind = "no_eve"      # no_eve | pns | yields
//! eta = 1e-4
//! s0 = 1e-6
//! dark_counts = "vacuum_class_only"
//!
//! [budget]             # omit for the asymptotic bound only
//! n_pulses = 8e10
//! n_vacuum = 4e9
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use decoy_core::{
    ChannelScenario, DarkCountModel, FluctuationSettings, ObservedRates, ProtocolParams,
    PulseBudget, R0Mode, SolverOptions, SubPopulation, WeakDecoySetup,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ChannelKind {
    NoEve,
    Pns,
    Yields,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum DarkCountsArg {
    Independent,
    VacuumClassOnly,
}

impl From<DarkCountsArg> for DarkCountModel {
    fn from(d: DarkCountsArg) -> Self {
        match d {
            DarkCountsArg::Independent => DarkCountModel::Independent,
            DarkCountsArg::VacuumClassOnly => DarkCountModel::VacuumClassOnly,
        }
    }
}

/// A pulse count written either as an integer or in float notation (`8e10`).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Int(i64),
    Float(f64),
}

impl Count {
    fn to_u128(self) -> std::result::Result<u128, String> {
        match self {
            Count::Int(n) if n >= 0 => Ok(n as u128),
            Count::Int(n) => Err(format!("pulse count must be non-negative, got {n}")),
            Count::Float(x) => {
                if !(x >= 0.0 && x.is_finite() && x.fract() == 0.0 && x < 2f64.powi(127)) {
                    return Err(format!(
                        "pulse count must be a non-negative integer, got {x}"
                    ));
                }
                Ok(x as u128)
            }
        }
    }
}

impl std::str::FromStr for Count {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Count::Int(n));
        }
        s.parse::<f64>()
            .map(Count::Float)
            .map_err(|_| format!("not a pulse count: {s}"))
    }
}

/// `r0 = "zero"` or a number in [0, 1).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum R0Value {
    Value(f64),
    Name(String),
}

/// A grid axis: `"start:stop:step"` (stop included), a list, or one value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Single(f64),
    List(Vec<f64>),
    Range(String),
}

impl Grid {
    pub fn values(&self) -> std::result::Result<Vec<f64>, String> {
        match self {
            Grid::Single(x) => Ok(vec![*x]),
            Grid::List(v) if v.is_empty() => Err("empty list".into()),
            Grid::List(v) => Ok(v.clone()),
            Grid::Range(s) => parse_range(s),
        }
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.contains(':') {
            parse_range(s)?;
            return Ok(Grid::Range(s.into()));
        }
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("not a number: {t}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Grid::List(values))
    }
}

fn parse_range(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let [start, stop, step] = parts[..] else {
        return Err(format!("range must be start:stop:step, got {s:?}"));
    };
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| format!("not a number in range {s:?}: {t}"))
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(format!("range {s:?} needs step > 0 and stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(format!("range {s:?} has too many points"));
    }
    // round away accumulated binary noise so 0.43 prints as 0.43
    Ok((0..n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub mu: Option<f64>,
    pub mu_prime: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub kind: Option<ChannelKind>,
    pub eta: Option<f64>,
    pub s0: Option<f64>,
    pub q: Option<f64>,
    pub dark_counts: Option<DarkCountModel>,
    /// `s₁, s₂, …` for `kind = "yields"`.
    pub yields: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub s0: Option<f64>,
    pub s_mu: Option<f64>,
    pub s_mu_prime: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Pulses in each signal class; `n_mu` / `n_mu_prime` override it.
    pub n_pulses: Option<Count>,
    pub n_mu: Option<Count>,
    pub n_mu_prime: Option<Count>,
    pub n_vacuum: Option<Count>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationSection {
    pub confidence_exponent: Option<f64>,
    pub r0: Option<R0Value>,
    pub sub_population: Option<SubPopulation>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRateSection {
    pub qber: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub mu: Option<Grid>,
    pub mu_prime: Option<Grid>,
    pub eta: Option<Grid>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilitySection {
    pub eta: Option<f64>,
    pub s0: Option<f64>,
    pub mu_v: Option<f64>,
    pub rep_rate: Option<f64>,
    pub target: Option<f64>,
    pub confidence_exponent: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub protocol: Option<ProtocolSection>,
    pub channel: Option<ChannelSection>,
    pub rates: Option<RatesSection>,
    pub budget: Option<BudgetSection>,
    pub fluctuation: Option<FluctuationSection>,
    pub key_rate: Option<KeyRateSection>,
    pub simulation: Option<SimulationSection>,
    pub sweep: Option<SweepSection>,
    pub feasibility: Option<FeasibilitySection>,
    pub solver: Option<SolverSection>,
}

/// Flags shared by `bound`, `simulate` and `sweep`. Each one wins over the
/// matching config entry.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu_prime: Option<f64>,
    #[arg(long, value_enum)]
    pub channel: Option<ChannelKind>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    /// Fraction of multi-photon pulses forwarded by a PNS attacker.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum)]
    pub dark_counts: Option<DarkCountsArg>,
    /// Pulses per signal class, e.g. 8e10.
    #[arg(long)]
    pub n_pulses: Option<Count>,
    #[arg(long)]
    pub n_vacuum: Option<Count>,
    #[arg(long)]
    pub qber: Option<f64>,
    #[arg(long)]
    pub confidence_exponent: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FeasibilityOverrides {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    /// Weak decoy intensity; defaults to eta.
    #[arg(long)]
    pub mu_v: Option<f64>,
    /// Pulses per second.
    #[arg(long)]
    pub rep_rate: Option<f64>,
    /// Relative dark-count fluctuation to reach.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub confidence_exponent: Option<f64>,
}

/// Where rates come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Scenario(ChannelScenario),
    Rates(ObservedRates),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ProtocolParams,
    pub source: RateSource,
    /// `None` runs the asymptotic bounds only.
    pub budget: Option<PulseBudget>,
    pub settings: FluctuationSettings,
    pub qber: Option<f64>,
    pub solver: SolverOptions,
}

fn flag_name(key: &str) -> String {
    match key {
        "kind" => "channel".into(),
        "yields" => "config".into(),
        k => k.replace('_', "-"),
    }
}

/// Loaded config plus the text it came from, for line numbers in messages.
#[derive(Debug, Default)]
pub struct Loaded {
    pub file: ConfigFile,
    path: Option<PathBuf>,
    text: String,
    /// `section.key` entries replaced by a flag.
    overridden: BTreeSet<String>,
}

impl Loaded {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let name = path
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "config".into());
            ConfigError(format!("{name}: {}", e.to_string().trim_end()))
        })?;
        Ok(Self {
            file,
            path: path.map(Path::to_path_buf),
            text: text.to_owned(),
            overridden: BTreeSet::new(),
        })
    }

    /// Line (1-based) of `key` inside `[section]`, or of the header when
    /// `key` is empty.
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_owned();
                if current == section {
                    header = Some(i + 1);
                }
                continue;
            }
            if current == section && !key.is_empty() {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        header
    }

    /// Error tagged with the origin of `section.key`.
    fn err(&self, section: &str, key: &str, msg: impl fmt::Display) -> ConfigError {
        let dotted = if key.is_empty() {
            format!("[{section}]")
        } else {
            format!("{section}.{key}")
        };
        if self.overridden.contains(&format!("{section}.{key}")) {
            return ConfigError(format!("--{}: {msg}", flag_name(key)));
        }
        match (&self.path, self.line_of(section, key)) {
            (Some(p), Some(line)) => {
                ConfigError(format!("{}:{line}: {dotted}: {msg}", p.display()))
            }
            (Some(p), None) => ConfigError(format!("{}: {dotted}: {msg}", p.display())),
            (None, _) => ConfigError(format!("{dotted}: {msg}")),
        }
    }

    fn missing(&self, section: &str, key: &str) -> ConfigError {
        let flag = flag_name(key);
        match &self.path {
            Some(p) => ConfigError(format!(
                "{}: missing {section}.{key} (set it in [{section}] or pass --{flag})",
                p.display()
            )),
            None => ConfigError(format!(
                "missing {section}.{key}: pass --{flag} or --config"
            )),
        }
    }

    fn mark(&mut self, section: &str, key: &str) {
        self.overridden.insert(format!("{section}.{key}"));
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($flag:expr, $section:ident, $field:ident) => {
                if let Some(v) = $flag.clone() {
                    self.file
                        .$section
                        .get_or_insert_with(Default::default)
                        .$field = Some(v.into());
                    self.mark(stringify!($section), stringify!($field));
                }
            };
        }
        set!(o.mu, protocol, mu);
        set!(o.mu_prime, protocol, mu_prime);
        let channel_flag = o.channel.is_some()
            || o.eta.is_some()
            || o.q.is_some()
            || o.dark_counts.is_some()
            || (o.s0.is_some() && self.file.rates.is_none());
        if channel_flag {
            set!(o.channel, channel, kind);
            set!(o.eta, channel, eta);
            set!(o.s0, channel, s0);
            set!(o.q, channel, q);
            set!(o.dark_counts, channel, dark_counts);
        } else {
            set!(o.s0, rates, s0);
        }
        set!(o.n_pulses, budget, n_pulses);
        set!(o.n_vacuum, budget, n_vacuum);
        set!(o.qber, key_rate, qber);
        set!(o.confidence_exponent, fluctuation, confidence_exponent);
    }

    pub fn apply_feasibility(&mut self, o: &FeasibilityOverrides) {
        let sec = self.file.feasibility.get_or_insert_with(Default::default);
        let mut marks = Vec::new();
        for (flag, field, key) in [
            (o.eta, &mut sec.eta, "eta"),
            (o.s0, &mut sec.s0, "s0"),
            (o.mu_v, &mut sec.mu_v, "mu_v"),
            (o.rep_rate, &mut sec.rep_rate, "rep_rate"),
            (o.target, &mut sec.target, "target"),
            (
                o.confidence_exponent,
                &mut sec.confidence_exponent,
                "confidence_exponent",
            ),
        ] {
            if flag.is_some() {
                *field = flag;
                marks.push(key);
            }
        }
        for key in marks {
            self.mark("feasibility", key);
        }
    }

    pub fn params(&self) -> Result<ProtocolParams> {
        let p = self.file.protocol.clone().unwrap_or_default();
        let mu = p.mu.ok_or_else(|| self.missing("protocol", "mu"))?;
        let mp = p
            .mu_prime
            .ok_or_else(|| self.missing("protocol", "mu_prime"))?;
        ProtocolParams::new(mu, mp).map_err(|e| self.err("protocol", "mu_prime", e))
    }

    pub fn scenario(&self) -> Result<ChannelScenario> {
        let Some(c) = &self.file.channel else {
            return Err(match &self.file.rates {
                Some(_) => self.err(
                    "rates",
                    "",
                    "this command needs a [channel] model, not measured rates",
                ),
                None => self.missing("channel", "kind"),
            });
        };
        let s0 = c.s0.unwrap_or(0.0);
        let kind = match (c.kind, c.eta, c.q, &c.yields) {
            (Some(k), ..) => k,
            (None, Some(_), None, None) => ChannelKind::NoEve,
            (None, None, Some(_), None) => ChannelKind::Pns,
            (None, None, None, Some(_)) => ChannelKind::Yields,
            _ => return Err(self.missing("channel", "kind")),
        };
        let built = match kind {
            ChannelKind::NoEve => {
                let eta = c.eta.ok_or_else(|| self.missing("channel", "eta"))?;
                ChannelScenario::no_eve_with(eta, s0, c.dark_counts.unwrap_or_default())
                    .map_err(|e| self.err("channel", "eta", e))
            }
            ChannelKind::Pns => {
                let q = c.q.ok_or_else(|| self.missing("channel", "q"))?;
                ChannelScenario::pns(q, s0).map_err(|e| self.err("channel", "q", e))
            }
            ChannelKind::Yields => {
                let table = c
                    .yields
                    .clone()
                    .ok_or_else(|| self.missing("channel", "yields"))?;
                ChannelScenario::yields(s0, table).map_err(|e| self.err("channel", "yields", e))
            }
        }?;
        Ok(built)
    }

    fn source(&self) -> Result<RateSource> {
        match (&self.file.channel, &self.file.rates) {
            (Some(_), Some(_)) => {
                Err(self.err("rates", "", "give either [channel] or [rates], not both"))
            }
            (None, Some(r)) => {
                let s_mu = r.s_mu.ok_or_else(|| self.missing("rates", "s_mu"))?;
                let s_mp = r
                    .s_mu_prime
                    .ok_or_else(|| self.missing("rates", "s_mu_prime"))?;
                ObservedRates::new(r.s0.unwrap_or(0.0), s_mu, s_mp)
                    .map(RateSource::Rates)
                    .map_err(|e| self.err("rates", "", e))
            }
            _ => self.scenario().map(RateSource::Scenario),
        }
    }

    fn count(&self, key: &str, value: Option<Count>) -> Result<Option<u128>> {
        value
            .map(|c| c.to_u128().map_err(|e| self.err("budget", key, e)))
            .transpose()
    }

    pub fn budget(&self) -> Result<Option<PulseBudget>> {
        let Some(b) = &self.file.budget else {
            return Ok(None);
        };
        let n = self.count("n_pulses", b.n_pulses)?;
        let n_mu = self.count("n_mu", b.n_mu)?.or(n);
        let n_mp = self.count("n_mu_prime", b.n_mu_prime)?.or(n);
        let (Some(n_mu), Some(n_mp)) = (n_mu, n_mp) else {
            return Err(self.missing("budget", "n_pulses"));
        };
        let n_vacuum = self.count("n_vacuum", b.n_vacuum)?.unwrap_or(n_mu);
        PulseBudget::new(n_mu, n_mp, n_vacuum)
            .map(Some)
            .map_err(|e| self.err("budget", "n_pulses", e))
    }

    pub fn settings(&self) -> Result<FluctuationSettings> {
        let f = self.file.fluctuation.clone().unwrap_or_default();
        let base = FluctuationSettings::default();
        let r0_mode = match &f.r0 {
            None => base.r0_mode,
            Some(R0Value::Name(n)) if n == "zero" => R0Mode::Zero,
            Some(R0Value::Name(n)) => {
                return Err(self.err(
                    "fluctuation",
                    "r0",
                    format!("expected \"zero\" or a number, got {n:?}"),
                ))
            }
            Some(R0Value::Value(v)) => R0Mode::Explicit(*v),
        };
        FluctuationSettings::new(
            f.confidence_exponent.unwrap_or(base.confidence_exponent),
            r0_mode,
            f.sub_population.unwrap_or(base.sub_population),
        )
        .map_err(|e| self.err("fluctuation", "", e))
    }

    pub fn qber(&self) -> Result<Option<f64>> {
        let q = self.file.key_rate.as_ref().and_then(|k| k.qber);
        match q {
            Some(t) if !(0.0..=0.5).contains(&t) => {
                Err(self.err("key_rate", "qber", format!("must lie in [0, 0.5], got {t}")))
            }
            _ => Ok(q),
        }
    }

    pub fn solver(&self) -> Result<SolverOptions> {
        let s = self.file.solver.clone().unwrap_or_default();
        let base = SolverOptions::default();
        SolverOptions::new(
            s.tol.unwrap_or(base.tol),
            s.max_iter.unwrap_or(base.max_iter),
        )
        .map_err(|e| self.err("solver", "", e))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or_else(|| self.file.simulation.as_ref().and_then(|s| s.seed))
            .ok_or_else(|| {
                ConfigError("simulate needs a seed: pass --seed or set [simulation] seed".into())
            })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            params: self.params()?,
            source: self.source()?,
            budget: self.budget()?,
            settings: self.settings()?,
            qber: self.qber()?,
            solver: self.solver()?,
        })
    }

    pub fn grid(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let s = self.file.sweep.clone().unwrap_or_default();
        let g = match key {
            "mu" => s.mu,
            "mu_prime" => s.mu_prime,
            _ => s.eta,
        };
        g.map(|g| g.values().map_err(|e| self.err("sweep", key, e)))
            .transpose()
    }

    pub fn set_grid(&mut self, key: &str, grid: Option<Grid>) {
        let Some(grid) = grid else { return };
        let s = self.file.sweep.get_or_insert_with(Default::default);
        match key {
            "mu" => s.mu = Some(grid),
            "mu_prime" => s.mu_prime = Some(grid),
            _ => s.eta = Some(grid),
        }
        self.mark("sweep", key);
    }

    /// Weak-decoy setup and fluctuation target. Defaults: `μ_v = η`,
    /// target 1e−3, `E = 25`.
    pub fn feasibility(&self) -> Result<(WeakDecoySetup, f64)> {
        let f = self.file.feasibility.clone().unwrap_or_default();
        let eta = f.eta.ok_or_else(|| self.missing("feasibility", "eta"))?;
        let s0 = f.s0.ok_or_else(|| self.missing("feasibility", "s0"))?;
        let rep = f
            .rep_rate
            .ok_or_else(|| self.missing("feasibility", "rep_rate"))?;
        let setup = WeakDecoySetup::new(
            eta,
            s0,
            f.mu_v.unwrap_or(eta),
            rep,
            f.confidence_exponent.unwrap_or(25.0),
        )
        .map_err(|e| self.err("feasibility", "", e))?;
        let target = f.target.unwrap_or(1e-3);
        if !(target > 0.0 && target <= 1.0) {
            return Err(self.err(
                "feasibility",
                "target",
                format!("must lie in (0, 1], got {target}"),
            ));
        }
        Ok((setup, target))
    }
}
