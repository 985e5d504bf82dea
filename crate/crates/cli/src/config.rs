//! Experiment configuration: typed settings, the line-oriented config-file
//! format, and the override mechanism shared by files and command-line flags.
//!
//! Files are `key = value` lines; `#` starts a comment. Flag names mirror the
//! config keys, and flags win over file values, which win over the preset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use expparadiag::Complex64;

/// Errors that should terminate with the configuration exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Which PDE family a preset runs; fixes the domain and boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    Heat1d,
    Heat2d,
    Ade1d,
    Schrodinger1d,
    Schrodinger2d,
    Biharmonic1d,
    AllenCahn,
    PowerReaction,
    ExpReaction,
    Fisher,
    AllenCahn2d,
}

impl ProblemId {
    pub const ALL: [ProblemId; 11] = [
        ProblemId::Heat1d,
        ProblemId::Heat2d,
        ProblemId::Ade1d,
        ProblemId::Schrodinger1d,
        ProblemId::Schrodinger2d,
        ProblemId::Biharmonic1d,
        ProblemId::AllenCahn,
        ProblemId::PowerReaction,
        ProblemId::ExpReaction,
        ProblemId::Fisher,
        ProblemId::AllenCahn2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Heat1d => "heat1d",
            ProblemId::Heat2d => "heat2d",
            ProblemId::Ade1d => "ade1d",
            ProblemId::Schrodinger1d => "schrodinger1d",
            ProblemId::Schrodinger2d => "schrodinger2d",
            ProblemId::Biharmonic1d => "biharmonic1d",
            ProblemId::AllenCahn => "allen_cahn",
            ProblemId::PowerReaction => "power_reaction",
            ProblemId::ExpReaction => "exp_reaction",
            ProblemId::Fisher => "fisher",
            ProblemId::AllenCahn2d => "allen_cahn_2d",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(
            self,
            ProblemId::Heat2d | ProblemId::Schrodinger2d | ProblemId::AllenCahn2d
        )
    }
}

impl FromStr for ProblemId {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown problem id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Richardson,
    Gmres,
    Bicgstab,
    Imex,
    Newton,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Richardson => "richardson",
            Solver::Gmres => "gmres",
            Solver::Bicgstab => "bicgstab",
            Solver::Imex => "imex",
            Solver::Newton => "newton",
        }
    }
}

impl FromStr for Solver {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "richardson" => Ok(Solver::Richardson),
            "gmres" => Ok(Solver::Gmres),
            "bicgstab" => Ok(Solver::Bicgstab),
            "imex" => Ok(Solver::Imex),
            "newton" => Ok(Solver::Newton),
            _ => err(format!("unknown solver '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jacobian {
    TimeAveraged,
    InitialState,
}

impl Jacobian {
    pub fn name(self) -> &'static str {
        match self {
            Jacobian::TimeAveraged => "time-averaged",
            Jacobian::InitialState => "initial-state",
        }
    }
}

impl FromStr for Jacobian {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "time-averaged" => Ok(Jacobian::TimeAveraged),
            "initial-state" => Ok(Jacobian::InitialState),
            _ => err(format!("unknown jacobian mode '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorChoice {
    Exact,
    Pade2,
    Pade3,
}

impl PropagatorChoice {
    pub fn name(self) -> &'static str {
        match self {
            PropagatorChoice::Exact => "exact",
            PropagatorChoice::Pade2 => "pade2",
            PropagatorChoice::Pade3 => "pade3",
        }
    }
}

impl FromStr for PropagatorChoice {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "exact" => Ok(PropagatorChoice::Exact),
            "pade2" => Ok(PropagatorChoice::Pade2),
            "pade3" => Ok(PropagatorChoice::Pade3),
            _ => err(format!("unknown propagator '{s}'")),
        }
    }
}

/// The circulant damping factor: a literal value, or `opt` to run the
/// halving search on the configured coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Opt,
    Value(f64),
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Opt => write!(f, "opt"),
            Alpha::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Alpha {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        if s == "opt" {
            return Ok(Alpha::Opt);
        }
        match s.parse::<f64>() {
            Ok(v) if (0.0..1.0).contains(&v) => Ok(Alpha::Value(v)),
            Ok(v) => err(format!("alpha must lie in [0, 1), got {v}")),
            Err(_) => err(format!("alpha must be a number or 'opt', got '{s}'")),
        }
    }
}

/// Parse `0.1`, `-2e-3`, `i`, `-i`, `2i`, `0.1+2i`, `1e-5-0.5i`.
pub fn parse_complex(s: &str) -> Result<Complex64, ConfigError> {
    let t = s.trim().replace(' ', "");
    if t.is_empty() {
        return err("empty complex literal");
    }
    if let Ok(re) = t.parse::<f64>() {
        return Ok(Complex64::new(re, 0.0));
    }
    if let Some(im_part) = t.strip_suffix(['i', 'I']) {
        // Split an optional real part from the imaginary coefficient at the
        // last +/- that is not part of an exponent.
        let bytes = im_part.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            let c = bytes[k];
            if (c == b'+' || c == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
                split = Some(k);
                break;
            }
        }
        let (re_str, im_str) = match split {
            Some(k) => (&im_part[..k], &im_part[k..]),
            None => ("0", im_part),
        };
        let im = match im_str {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => other
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("bad imaginary part in '{s}'")))?,
        };
        let re = if re_str.is_empty() {
            0.0
        } else {
            re_str
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("bad real part in '{s}'")))?
        };
        return Ok(Complex64::new(re, im));
    }
    err(format!("cannot parse complex number '{s}'"))
}

/// Render a complex value in the same syntax [`parse_complex`] accepts.
pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// Full settings for one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    pub a: Complex64,
    pub c: Complex64,
    /// Advection speed; nonzero only for periodic problems.
    pub b: f64,
    /// Fourth-order coefficient.
    pub beta: f64,
    /// Interface width of the bistable reaction.
    pub epsilon: f64,
    /// Exponent of the power reaction.
    pub power: u32,
    pub resolution: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Number of time levels; derived from `T/dt` unless set explicitly.
    pub n_time: Option<usize>,
    pub alpha: Alpha,
    pub order: usize,
    pub solver: Solver,
    pub jacobian: Jacobian,
    pub propagator: PropagatorChoice,
    pub initial: String,
    pub tol: f64,
    pub maxit: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn steps(&self) -> usize {
        self.n_time
            .unwrap_or_else(|| (self.t_final / self.dt).round().max(1.0) as usize)
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "problem" => self.problem = value.parse()?,
            "a" => self.a = parse_complex(value)?,
            "c" => self.c = parse_complex(value)?,
            "b" => self.b = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "power" => self.power = parse_num(key, value)?,
            "resolution" => self.resolution = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "T" => self.t_final = parse_num(key, value)?,
            "n_time" => self.n_time = Some(parse_num(key, value)?),
            "alpha" => self.alpha = value.parse()?,
            "order" => self.order = parse_num(key, value)?,
            "solver" => self.solver = value.parse()?,
            "jacobian" => self.jacobian = value.parse()?,
            "propagator" => self.propagator = value.parse()?,
            "initial" => self.initial = value.to_string(),
            "tol" => self.tol = parse_num(key, value)?,
            "maxit" => self.maxit = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return err(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    pub fn apply_overrides<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) {
            return err(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final > 0.0) {
            return err(format!("T must be positive, got {}", self.t_final));
        }
        if self.resolution < 2 {
            return err("resolution must be at least 2");
        }
        if !(1..=6).contains(&self.order) {
            return err(format!("order must lie in 1..=6, got {}", self.order));
        }
        if !(self.tol > 0.0) {
            return err("tol must be positive");
        }
        if self.maxit == 0 {
            return err("maxit must be at least 1");
        }
        if self.steps() < self.order {
            return err(format!(
                "the window has {} levels but the order-{} scheme needs at least {}",
                self.steps(),
                self.order,
                self.order
            ));
        }
        Ok(())
    }

    /// Config echo for the CSV header, one `# key = value` line per field.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("problem".into(), self.problem.name().into()),
            ("a".into(), format_complex(self.a)),
            ("c".into(), format_complex(self.c)),
            ("b".into(), self.b.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("epsilon".into(), self.epsilon.to_string()),
            ("power".into(), self.power.to_string()),
            ("resolution".into(), self.resolution.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("T".into(), self.t_final.to_string()),
            ("n_time".into(), self.steps().to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("order".into(), self.order.to_string()),
            ("solver".into(), self.solver.name().into()),
            ("jacobian".into(), self.jacobian.name().into()),
            ("propagator".into(), self.propagator.name().into()),
            ("initial".into(), self.initial.clone()),
            ("tol".into(), self.tol.to_string()),
            ("maxit".into(), self.maxit.to_string()),
        ];
        if self.seed != 0 {
            rows.push(("seed".into(), self.seed.to_string()));
        }
        rows
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| ConfigError(format!("cannot parse '{value}' for key '{key}'")))
}

/// Read a `key = value` file into ordered pairs, stripping comments.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {}: expected 'key = value'", lineno + 1));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a grid file for the timing table: the same syntax, but values may
/// be comma-separated lists.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    let items: Result<Vec<T>, _> = value.split(',').map(|v| v.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => err(format!("cannot parse list '{value}' for key '{key}'")),
    }
}

/// Ordered key-value view of a parsed config file.
pub fn as_map(pairs: &[(String, String)]) -> BTreeMap<&str, &str> {
    pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect()
}
