//! Scenario configuration: sectioned `key = value` text.
//!
//! ```text
//! [run]
//! game = cara_n          # cara_n | crra_n | cara_mf | crra_mf
//! agents = 8             # particles for mean-field games
//! replications = 256
//! steps = 64
//! horizon = 1.0          # or dt
//! seed = 1
//!
//! [theta]
//! value = 0.5
//! ```
//!
//! Lines starting with `#` or `;` are comments, as is anything after ` #`.

use std::collections::BTreeSet;

use fnl_core::coeffs::{CoefficientModel, FactorParams, Link, ParamSpec, Population};
use fnl_core::equilibrium::{Deviators, KVariant, Preference, StrategyClosure};
use fnl_core::game::Quadrature;
use fnl_core::verify::BenchmarkMode;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
}

fn parse_err<T>(line: usize, col: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Parse { line, col, message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GameKind {
    CaraN,
    CrraN,
    CaraMf,
    CrraMf,
}

impl GameKind {
    pub fn preference(self) -> Preference {
        match self {
            GameKind::CaraN | GameKind::CaraMf => Preference::Cara,
            GameKind::CrraN | GameKind::CrraMf => Preference::Crra,
        }
    }

    pub fn is_mean_field(self) -> bool {
        matches!(self, GameKind::CaraMf | GameKind::CrraMf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrategySpec {
    Equilibrium,
    Constant(f64),
    Perturbed { offset: f64, deviators: Deviators },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeConfig {
    pub n_list: Vec<usize>,
    pub repetitions: usize,
    pub theta: (f64, f64),
    pub delta: (f64, f64),
    pub reference_factor: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivConfig {
    pub points: usize,
    pub bump: f64,
    pub atoms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub game: GameKind,
    pub n_agents: usize,
    pub n_replications: usize,
    pub n_scenarios: usize,
    pub steps: usize,
    pub dt: f64,
    pub horizon: f64,
    pub master_seed: u64,
    pub initial_wealth: f64,
    pub strategy: StrategySpec,
    pub variant: KVariant,
    pub benchmark: BenchmarkMode,
    pub quadrature: Quadrature,
    pub model: CoefficientModel,
    pub population: Population,
    pub converge: ConvergeConfig,
    pub deriv: DerivConfig,
}

impl ScenarioConfig {
    pub fn closure(&self) -> StrategyClosure {
        let pref = self.game.preference();
        match self.strategy {
            StrategySpec::Equilibrium => StrategyClosure::equilibrium(pref),
            StrategySpec::Constant(v) => StrategyClosure::ConstantOverride(v),
            StrategySpec::Perturbed { offset, deviators } => StrategyClosure::PerturbedEquilibrium { base: pref, offset, deviators },
        }
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    key_col: usize,
    col: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn tokenize(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    let mut names = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = match raw.find(" #") {
            Some(p) => &raw[..p],
            None => raw,
        };
        let indent = body.len() - body.trim_start().len();
        let t = body.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return parse_err(line, indent + 1, "section header must end with `]`");
            };
            let name = name.trim();
            if name.is_empty() {
                return parse_err(line, indent + 2, "empty section name");
            }
            if !names.insert(name.to_string()) {
                return parse_err(line, indent + 1, format!("duplicate section [{name}]"));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let Some(eq) = t.find('=') else {
            return parse_err(line, indent + 1, "expected `key = value`");
        };
        let key = t[..eq].trim();
        let value = t[eq + 1..].trim();
        if key.is_empty() {
            return parse_err(line, indent + 1, "missing key");
        }
        let Some(section) = sections.last_mut() else {
            return parse_err(line, indent + 1, "key outside of any section");
        };
        if section.entries.iter().any(|e| e.key == key) {
            return parse_err(line, indent + 1, format!("duplicate key `{key}` in [{}]", section.name));
        }
        let vcol = indent + eq + 2 + (t[eq + 1..].len() - t[eq + 1..].trim_start().len());
        section.entries.push(Entry { key: key.to_string(), value: value.to_string(), line, key_col: indent + 1, col: vcol });
    }
    Ok(sections)
}

/// Typed access to one section; every key read is marked as known.
struct Reader<'a> {
    section: &'a Section,
    known: BTreeSet<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section) -> Self {
        Reader { section, known: BTreeSet::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Entry> {
        self.known.insert(key);
        self.section.entries.iter().find(|e| e.key == key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &'static str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => match e.value.parse() {
                Ok(v) => Ok(Some(v)),
                Err(_) => parse_err(e.line, e.col, format!("`{key}` must be {what}, got `{}`", e.value)),
            },
        }
    }

    fn f64(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        self.parse(key, "a number")
    }

    fn usize(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, "a nonnegative integer")
    }

    fn choice(&mut self, key: &'static str, options: &[&'static str]) -> Result<Option<(&'static str, &'a Entry)>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => match options.iter().find(|o| **o == e.value) {
                Some(o) => Ok(Some((o, e))),
                None => parse_err(e.line, e.col, format!("`{key}` must be one of {}, got `{}`", options.join("|"), e.value)),
            },
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for e in &self.section.entries {
            if !self.known.contains(e.key.as_str()) {
                return parse_err(e.line, e.key_col, format!("unknown key `{}` in [{}]", e.key, self.section.name));
            }
        }
        Ok(())
    }
}

fn param_spec(section: &Section, default: f64) -> Result<ParamSpec, ConfigError> {
    let mut r = Reader::new(section);
    let kind = r.choice("kind", &["constant", "time", "factor", "state"])?.map(|k| k.0).unwrap_or("constant");
    let spec = match kind {
        "constant" => ParamSpec::Constant(r.f64("value")?.unwrap_or(default)),
        "time" => ParamSpec::DeterministicTime {
            intercept: r.f64("intercept")?.unwrap_or(default),
            slope: r.f64("slope")?.unwrap_or(0.0),
        },
        _ => {
            let link = match r.choice("link", &["exp", "affine"])?.map(|k| k.0).unwrap_or("affine") {
                "exp" => Link::Exp { scale: r.f64("scale")?.unwrap_or(default), rate: r.f64("rate")?.unwrap_or(0.0) },
                _ => Link::Affine { intercept: r.f64("intercept")?.unwrap_or(default), slope: r.f64("slope")?.unwrap_or(0.0) },
            };
            let lo = r.f64("lo")?.unwrap_or(f64::NEG_INFINITY);
            let hi = r.f64("hi")?.unwrap_or(f64::INFINITY);
            if kind == "factor" {
                ParamSpec::CommonFactor { link, clamp_lo: lo, clamp_hi: hi }
            } else {
                ParamSpec::StateDependent { link, clamp_lo: lo, clamp_hi: hi }
            }
        }
    };
    r.finish()?;
    Ok(spec)
}

const PARAMS: [(&str, f64); 5] = [("mu", 0.1), ("nu", 0.2), ("sigma", 0.3), ("delta", 1.0), ("theta", 0.5)];

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let sections = tokenize(text)?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    for s in &sections {
        let ok = matches!(s.name.as_str(), "run" | "factor" | "converge" | "deriv")
            || PARAMS.iter().any(|p| p.0 == s.name)
            || s.name.strip_prefix("class.").is_some_and(|c| !c.is_empty() && !c.contains('.'));
        if !ok {
            return parse_err(s.line, 1, format!("unknown section [{}]", s.name));
        }
    }
    let empty = Section { name: String::new(), line: 0, entries: Vec::new() };

    let mut r = Reader::new(find("run").unwrap_or(&empty));
    let game = match r.choice("game", &["cara_n", "crra_n", "cara_mf", "crra_mf"])?.map(|k| k.0).unwrap_or("cara_n") {
        "crra_n" => GameKind::CrraN,
        "cara_mf" => GameKind::CaraMf,
        "crra_mf" => GameKind::CrraMf,
        _ => GameKind::CaraN,
    };
    let agents = r.usize("agents")?;
    let replications = r.usize("replications")?.unwrap_or(256);
    let n_scenarios = r.usize("scenarios")?.unwrap_or(1);
    let steps = r.usize("steps")?.unwrap_or(64);
    let horizon_in = r.f64("horizon")?;
    let dt_in = r.f64("dt")?;
    let master_seed = r.parse::<u64>("seed", "an unsigned integer")?.unwrap_or(0);
    let initial_wealth = r.f64("initial_wealth")?.unwrap_or(1.0);
    let strategy = match r.choice("strategy", &["equilibrium", "constant", "perturbed"])?.map(|k| k.0).unwrap_or("equilibrium") {
        "constant" => StrategySpec::Constant(r.f64("value")?.unwrap_or(0.0)),
        "perturbed" => {
            let offset = r.f64("offset")?.unwrap_or(0.0);
            let deviators = match r.raw("deviators") {
                None => Deviators::All,
                Some(e) if e.value == "all" => Deviators::All,
                Some(e) => match e.value.parse() {
                    Ok(a) => Deviators::Agent(a),
                    Err(_) => return parse_err(e.line, e.col, "`deviators` must be `all` or an agent index"),
                },
            };
            StrategySpec::Perturbed { offset, deviators }
        }
        _ => StrategySpec::Equilibrium,
    };
    let variant = match r.choice("variant", &["half", "full"])?.map(|k| k.0) {
        Some("full") => KVariant::Full,
        _ => KVariant::Half,
    };
    let benchmark = match r.choice("benchmark", &["conditional", "pathwise"])?.map(|k| k.0) {
        Some("pathwise") => BenchmarkMode::Pathwise,
        _ => BenchmarkMode::Conditional,
    };
    let quadrature = match r.choice("quadrature", &["left", "trapezoid"])?.map(|k| k.0) {
        Some("trapezoid") => Quadrature::Trapezoid,
        _ => Quadrature::Left,
    };
    r.finish()?;

    let mut problems = Vec::new();
    let (dt, horizon) = match (dt_in, horizon_in) {
        (Some(d), Some(h)) => {
            if (d * steps as f64 - h).abs() > 1e-12 * h.abs().max(1.0) {
                problems.push(format!("horizon {h} differs from steps x dt = {}", d * steps as f64));
            }
            (d, h)
        }
        (Some(d), None) => (d, d * steps as f64),
        (None, h) => {
            let h = h.unwrap_or(1.0);
            (h / steps.max(1) as f64, h)
        }
    };

    let mut factor = FactorParams::default();
    if let Some(s) = find("factor") {
        let mut r = Reader::new(s);
        factor.kappa = r.f64("kappa")?.unwrap_or(factor.kappa);
        factor.level = r.f64("level")?.unwrap_or(factor.level);
        factor.vol = r.f64("vol")?.unwrap_or(factor.vol);
        factor.z0 = r.f64("z0")?.unwrap_or(factor.z0);
        r.finish()?;
    }
    let mut specs = [ParamSpec::Constant(0.0); 5];
    for (i, (name, default)) in PARAMS.iter().enumerate() {
        specs[i] = match find(name) {
            Some(s) => param_spec(s, *default)?,
            None => ParamSpec::Constant(*default),
        };
    }
    let model = CoefficientModel {
        mu: specs[0],
        nu: specs[1],
        sigma: specs[2],
        delta: specs[3],
        theta: specs[4],
        factor,
        horizon,
    };

    let mut models = Vec::new();
    let mut assignment = Vec::new();
    for s in sections.iter().filter(|s| s.name.starts_with("class.")) {
        let mut r = Reader::new(s);
        let count = match r.usize("count")? {
            Some(c) => c,
            None => return parse_err(s.line, 1, format!("[{}] needs `count`", s.name)),
        };
        let mut m = model.clone();
        for (name, slot) in [("mu", &mut m.mu), ("nu", &mut m.nu), ("sigma", &mut m.sigma), ("delta", &mut m.delta), ("theta", &mut m.theta)] {
            if let Some(v) = r.f64(name)? {
                *slot = ParamSpec::Constant(v);
            }
        }
        r.finish()?;
        assignment.extend(std::iter::repeat_n(models.len(), count));
        models.push(m);
    }
    let n_agents = if models.is_empty() {
        let n = agents.unwrap_or(8);
        models.push(model.clone());
        assignment = vec![0; n];
        n
    } else {
        if let Some(a) = agents {
            if a != assignment.len() {
                problems.push(format!("agents = {a} but classes hold {} agents", assignment.len()));
            }
        }
        assignment.len()
    };
    let population = Population::Classes { models, assignment };

    let mut converge = ConvergeConfig { n_list: vec![10, 100, 1000, 10000], repetitions: 8, theta: (0.0, 1.0), delta: (0.5, 2.0), reference_factor: 10 };
    if let Some(s) = find("converge") {
        let mut r = Reader::new(s);
        if let Some(e) = r.raw("n_list") {
            let parsed: Result<Vec<usize>, _> = e.value.split(',').map(|v| v.trim().parse()).collect();
            match parsed {
                Ok(v) => converge.n_list = v,
                Err(_) => return parse_err(e.line, e.col, "`n_list` must be a comma-separated list of integers"),
            }
        }
        converge.repetitions = r.usize("repetitions")?.unwrap_or(converge.repetitions);
        converge.theta.0 = r.f64("theta_lo")?.unwrap_or(converge.theta.0);
        converge.theta.1 = r.f64("theta_hi")?.unwrap_or(converge.theta.1);
        converge.delta.0 = r.f64("delta_lo")?.unwrap_or(converge.delta.0);
        converge.delta.1 = r.f64("delta_hi")?.unwrap_or(converge.delta.1);
        converge.reference_factor = r.usize("reference_factor")?.unwrap_or(converge.reference_factor);
        r.finish()?;
    }
    let mut deriv = DerivConfig { points: 100, bump: 1e-5, atoms: 4 };
    if let Some(s) = find("deriv") {
        let mut r = Reader::new(s);
        deriv.points = r.usize("points")?.unwrap_or(deriv.points);
        deriv.bump = r.f64("bump")?.unwrap_or(deriv.bump);
        deriv.atoms = r.usize("atoms")?.unwrap_or(deriv.atoms);
        r.finish()?;
    }

    for (name, v) in [("agents", n_agents), ("replications", replications), ("scenarios", n_scenarios), ("steps", steps)] {
        if v == 0 {
            problems.push(format!("{name} must be at least 1"));
        }
    }
    if !(dt > 0.0 && dt.is_finite()) {
        problems.push(String::from("dt must be positive"));
    }
    if !initial_wealth.is_finite() {
        problems.push(String::from("initial_wealth must be finite"));
    }
    if game.preference() == Preference::Crra && !(initial_wealth > 0.0) {
        problems.push(String::from("CRRA games need strictly positive initial wealth"));
    }
    if let StrategySpec::Perturbed { deviators: Deviators::Agent(a), .. } = strategy {
        if a >= n_agents {
            problems.push(format!("deviating agent {a} out of range"));
        }
    }
    if !game.is_mean_field() && replications < 2 && !population.is_f0_measurable() {
        problems.push(String::from("state-dependent coefficients need at least 2 replications"));
    }
    problems.extend(population.validate());
    if converge.n_list.is_empty() || converge.n_list.windows(2).any(|w| w[0] >= w[1]) || converge.n_list[0] == 0 {
        problems.push(String::from("n_list must be strictly increasing positive integers"));
    }
    if converge.repetitions < 2 {
        problems.push(String::from("converge repetitions must be at least 2"));
    }
    if converge.reference_factor == 0 {
        problems.push(String::from("reference_factor must be at least 1"));
    }
    if deriv.atoms < 2 || deriv.points == 0 || !(deriv.bump > 0.0) {
        problems.push(String::from("deriv needs points >= 1, atoms >= 2 and bump > 0"));
    }
    if !problems.is_empty() {
        return Err(ConfigError::Validation(problems));
    }
    Ok(ScenarioConfig {
        game,
        n_agents,
        n_replications: if game.is_mean_field() { 1 } else { replications },
        n_scenarios,
        steps,
        dt,
        horizon,
        master_seed,
        initial_wealth,
        strategy,
        variant,
        benchmark,
        quadrature,
        model,
        population,
        converge,
        deriv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("[run]\ngame = cara_n\n").unwrap();
        assert_eq!((c.n_replications, c.steps, c.n_agents, c.n_scenarios), (256, 64, 8, 1));
        assert_eq!(c.dt, 1.0 / 64.0);
        assert_eq!(c.model.theta, ParamSpec::Constant(0.5));
        assert_eq!(c.strategy, StrategySpec::Equilibrium);
        assert_eq!(parse_config("").unwrap(), c);
    }

    #[test]
    fn full_config() {
        let text = "\
# comment
[run]
game = crra_n
replications = 100
steps = 32
dt = 0.03125   # inline comment
seed = 9
strategy = perturbed
offset = 0.5
deviators = 2
variant = full
benchmark = pathwise

[factor]
kappa = 2.0
vol = 0.1

[mu]
kind = factor
link = exp
scale = 0.1
rate = 0.5
lo = 0.0
hi = 1.0

[class.a]
count = 3
delta = 2.0

[class.b]
count = 2
theta = 0.0

[converge]
n_list = 10, 100
repetitions = 4
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.game, GameKind::CrraN);
        assert_eq!(c.n_agents, 5);
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.variant, KVariant::Full);
        assert_eq!(c.benchmark, BenchmarkMode::Pathwise);
        assert_eq!(c.strategy, StrategySpec::Perturbed { offset: 0.5, deviators: Deviators::Agent(2) });
        assert_eq!(c.model.factor.kappa, 2.0);
        assert!(matches!(c.model.mu, ParamSpec::CommonFactor { link: Link::Exp { .. }, .. }));
        assert_eq!(c.converge.n_list, vec![10, 100]);
        match &c.population {
            Population::Classes { models, assignment } => {
                assert_eq!(assignment, &vec![0, 0, 0, 1, 1]);
                assert_eq!(models[0].delta, ParamSpec::Constant(2.0));
                assert_eq!(models[1].theta, ParamSpec::Constant(0.0));
                assert!(matches!(models[1].mu, ParamSpec::CommonFactor { .. }));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        assert_eq!(
            parse_config("[run]\nsteps = 4\nsteps = 5\n"),
            Err(ConfigError::Parse { line: 3, col: 1, message: "duplicate key `steps` in [run]".into() })
        );
        assert!(matches!(parse_config("[run]\nbogus = 1\n"), Err(ConfigError::Parse { line: 2, col: 1, .. })));
        assert!(matches!(parse_config("[run]\nsteps = x\n"), Err(ConfigError::Parse { line: 2, col: 9, .. })));
        assert!(matches!(parse_config("[nope]\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("steps = 1\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[run]\n[run]\n"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("[run\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[run]\ngame = ppp\n"), Err(ConfigError::Parse { line: 2, col: 8, .. })));
    }

    #[test]
    fn validation_errors_list_violations() {
        let Err(ConfigError::Validation(v)) = parse_config("[theta]\nvalue = 1.5\n[run]\nsteps = 0\n") else { panic!() };
        assert!(v.iter().any(|m| m.contains("theta out of [0,1]")));
        assert!(v.iter().any(|m| m.contains("steps")));
        assert!(matches!(parse_config("[run]\ngame = crra_n\ninitial_wealth = 0\n"), Err(ConfigError::Validation(_))));
        assert!(matches!(parse_config("[run]\nsteps = 4\ndt = 0.5\nhorizon = 1\n"), Err(ConfigError::Validation(_))));
        assert!(matches!(parse_config("[class.a]\ncount = 2\n[run]\nagents = 3\n"), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn mean_field_forces_one_replication() {
        let c = parse_config("[run]\ngame = cara_mf\nagents = 1000\n").unwrap();
        assert_eq!((c.n_agents, c.n_replications), (1000, 1));
    }
}
