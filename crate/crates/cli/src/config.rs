//! Plain-text experiment configuration: `key = value` entries under
//! `[model]`, `[experiment]`, `[numerics]` and `[output]` sections, `#`
//! comments, UTF-8. Unknown keys are fatal (typo protection), duplicate
//! keys report both line numbers, and validation collects every error
//! rather than stopping at the first.

use std::collections::HashMap;
use std::fmt::Write as _;

use fluctuon_core::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    HydroCheck,
    CovCheck,
    QvCheck,
    SpectralReport,
    OperatorConvergence,
    BoundaryWindow,
}

impl ExperimentId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hydro-check" => Some(Self::HydroCheck),
            "cov-check" => Some(Self::CovCheck),
            "qv-check" => Some(Self::QvCheck),
            "spectral-report" => Some(Self::SpectralReport),
            "operator-convergence" => Some(Self::OperatorConvergence),
            "boundary-window" => Some(Self::BoundaryWindow),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::HydroCheck => "hydro-check",
            Self::CovCheck => "cov-check",
            Self::QvCheck => "qv-check",
            Self::SpectralReport => "spectral-report",
            Self::OperatorConvergence => "operator-convergence",
            Self::BoundaryWindow => "boundary-window",
        }
    }
}

/// Initial density profile for hydro runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// constant value
    Const(f64),
    /// a below 1/2, b above
    Step(f64, f64),
    /// g(u) = u
    Linear,
    /// Bernoulli(ρ) equilibrium
    Equilibrium,
}

impl Profile {
    fn parse(s: &str) -> Result<Self, String> {
        if s == "linear" {
            return Ok(Profile::Linear);
        }
        if s == "equilibrium" {
            return Ok(Profile::Equilibrium);
        }
        if let Some(v) = s.strip_prefix("const:") {
            return v
                .parse::<f64>()
                .map(Profile::Const)
                .map_err(|_| format!("bad const profile '{s}'"));
        }
        if let Some(v) = s.strip_prefix("step:") {
            let parts: Vec<&str> = v.split(',').collect();
            if parts.len() == 2 {
                if let (Ok(a), Ok(b)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
                    return Ok(Profile::Step(a, b));
                }
            }
            return Err(format!("bad step profile '{s}'"));
        }
        Err(format!(
            "unknown profile '{s}' (use const:<v>, step:<a>,<b>, linear, equilibrium)"
        ))
    }

    fn canonical(&self) -> String {
        match self {
            Profile::Const(v) => format!("const:{v}"),
            Profile::Step(a, b) => format!("step:{a},{b}"),
            Profile::Linear => "linear".into(),
            Profile::Equilibrium => "equilibrium".into(),
        }
    }

    pub fn eval(&self, rho: f64) -> impl Fn(f64) -> f64 {
        let me = self.clone();
        move |u: f64| match me {
            Profile::Const(v) => v,
            Profile::Step(a, b) => {
                if u > 0.5 {
                    b
                } else {
                    a
                }
            }
            Profile::Linear => u,
            Profile::Equilibrium => rho,
        }
    }
}

/// Test-function selector for the fluctuation experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum HFunc {
    /// regime-appropriate basis, mode 1
    Auto,
    /// S basis (windowed sine), mode n
    S(usize),
    Dir(usize),
    Neu(usize),
    Rob(usize),
    /// plateau cutoff Φ_ε
    Phi(f64),
}

impl HFunc {
    fn parse(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(HFunc::Auto);
        }
        let mode = |v: &str| -> Result<usize, String> {
            v.parse().map_err(|_| format!("bad mode index '{v}'"))
        };
        if let Some(v) = s.strip_prefix("s:") {
            return Ok(HFunc::S(mode(v)?));
        }
        if let Some(v) = s.strip_prefix("dir:") {
            return Ok(HFunc::Dir(mode(v)?));
        }
        if let Some(v) = s.strip_prefix("neu:") {
            return Ok(HFunc::Neu(mode(v)?));
        }
        if let Some(v) = s.strip_prefix("rob:") {
            return Ok(HFunc::Rob(mode(v)?));
        }
        if let Some(v) = s.strip_prefix("phi:") {
            return v
                .parse::<f64>()
                .map(HFunc::Phi)
                .map_err(|_| format!("bad cutoff width '{s}'"));
        }
        Err(format!(
            "unknown test function '{s}' (use auto, s:<n>, dir:<n>, neu:<n>, rob:<n>, phi:<ε>)"
        ))
    }

    fn canonical(&self) -> String {
        match self {
            HFunc::Auto => "auto".into(),
            HFunc::S(n) => format!("s:{n}"),
            HFunc::Dir(n) => format!("dir:{n}"),
            HFunc::Neu(n) => format!("neu:{n}"),
            HFunc::Rob(n) => format!("rob:{n}"),
            HFunc::Phi(e) => format!("phi:{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub model: ModelParams,
    pub replicas: usize,
    pub t_end: f64,
    pub lags: Vec<f64>,
    pub windows: Vec<f64>,
    pub profile: Profile,
    pub hfunc: HFunc,
    pub z_max: usize,
    pub grid_m: usize,
    /// 0 means "choose 1/(2M)"
    pub dt: f64,
    pub n_max: usize,
    pub bins: usize,
    pub out_dir: String,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Canonical serialization; `parse(canonical(c)) == c`.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "n = {}", self.model.n);
        let _ = writeln!(s, "gamma = {}", self.model.gamma);
        let _ = writeln!(s, "theta = {}", self.model.theta);
        let _ = writeln!(s, "kappa = {}", self.model.kappa);
        let _ = writeln!(s, "alpha = {}", self.model.alpha);
        let _ = writeln!(s, "beta = {}", self.model.beta);
        let _ = writeln!(s, "rho = {}", self.model.rho);
        let _ = writeln!(s, "\n[experiment]");
        let _ = writeln!(s, "id = {}", self.id.as_str());
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "lags = {}", join(&self.lags));
        let _ = writeln!(s, "windows = {}", join(&self.windows));
        let _ = writeln!(s, "profile = {}", self.profile.canonical());
        let _ = writeln!(s, "hfunc = {}", self.hfunc.canonical());
        let _ = writeln!(s, "\n[numerics]");
        let _ = writeln!(s, "z_max = {}", self.z_max);
        let _ = writeln!(s, "grid_m = {}", self.grid_m);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "bins = {}", self.bins);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// FNV-1a hash of the canonical form.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Parses and validates; returns either the config or the full list of
/// problems found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let mut errors = Vec::new();
    // (section.key) -> (value, line)
    let mut entries: HashMap<String, (String, usize)> = HashMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            if !matches!(section.as_str(), "model" | "experiment" | "numerics" | "output") {
                errors.push(format!("line {}: unknown section [{section}]", lineno + 1));
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected key = value, got '{line}'", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            errors.push(format!("line {}: entry before any [section]", lineno + 1));
            continue;
        }
        let full = format!("{section}.{key}");
        if let Some((_, prev_line)) = entries.get(&full) {
            errors.push(format!(
                "duplicate key '{full}' on lines {} and {}",
                prev_line + 1,
                lineno + 1
            ));
            continue;
        }
        entries.insert(full, (value.to_string(), lineno));
    }

    const KNOWN: &[&str] = &[
        "model.n",
        "model.gamma",
        "model.theta",
        "model.kappa",
        "model.alpha",
        "model.beta",
        "model.rho",
        "experiment.id",
        "experiment.replicas",
        "experiment.t_end",
        "experiment.lags",
        "experiment.windows",
        "experiment.profile",
        "experiment.hfunc",
        "numerics.z_max",
        "numerics.grid_m",
        "numerics.dt",
        "numerics.n_max",
        "numerics.bins",
        "output.dir",
        "output.seed",
    ];
    for key in entries.keys() {
        if !KNOWN.contains(&key.as_str()) {
            errors.push(format!("unknown key '{key}'"));
        }
    }

    let take = |key: &str| entries.get(key).map(|(v, _)| v.clone());
    macro_rules! num {
        ($key:expr, $default:expr, $ty:ty) => {
            match take($key) {
                None => $default,
                Some(v) => match v.parse::<$ty>() {
                    Ok(x) => x,
                    Err(_) => {
                        errors.push(format!("key '{}': cannot parse '{v}'", $key));
                        $default
                    }
                },
            }
        };
    }

    let rho = num!("model.rho", 0.5, f64);
    let model = ModelParams {
        n: num!("model.n", 64, usize),
        gamma: num!("model.gamma", 3.0, f64),
        theta: num!("model.theta", 0.0, f64),
        kappa: num!("model.kappa", 1.0, f64),
        alpha: num!("model.alpha", rho, f64),
        beta: num!("model.beta", rho, f64),
        rho,
    };

    let id = match take("experiment.id") {
        None => {
            errors.push("missing required key 'experiment.id'".into());
            ExperimentId::SpectralReport
        }
        Some(v) => match ExperimentId::parse(&v) {
            Some(id) => id,
            None => {
                errors.push(format!("unknown experiment id '{v}'"));
                ExperimentId::SpectralReport
            }
        },
    };

    let list = |key: &str, default: Vec<f64>, errors: &mut Vec<String>| -> Vec<f64> {
        match entries.get(key) {
            None => default,
            Some((v, _)) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    match piece.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(_) => errors.push(format!("key '{key}': bad number '{piece}'")),
                    }
                }
                out
            }
        }
    };
    let lags = list("experiment.lags", vec![0.0, 0.05, 0.1], &mut errors);
    let windows = list("experiment.windows", vec![0.2, 0.1, 0.05], &mut errors);

    let profile = match take("experiment.profile") {
        None => Profile::Equilibrium,
        Some(v) => Profile::parse(&v).unwrap_or_else(|e| {
            errors.push(e);
            Profile::Equilibrium
        }),
    };
    let hfunc = match take("experiment.hfunc") {
        None => HFunc::Auto,
        Some(v) => HFunc::parse(&v).unwrap_or_else(|e| {
            errors.push(e);
            HFunc::Auto
        }),
    };

    let default_bins = 32.min(model.n.saturating_sub(1)).max(1);
    let cfg = ExperimentConfig {
        id,
        model,
        replicas: num!("experiment.replicas", 100, usize),
        t_end: num!("experiment.t_end", 0.1, f64),
        lags,
        windows,
        profile,
        hfunc,
        z_max: num!("numerics.z_max", 2000, usize),
        grid_m: num!("numerics.grid_m", 256, usize),
        dt: num!("numerics.dt", 0.0, f64),
        n_max: num!("numerics.n_max", 32, usize),
        bins: num!("numerics.bins", default_bins, usize),
        out_dir: take("output.dir").unwrap_or_else(|| "runs".into()),
        seed: num!("output.seed", 42, u64),
    };

    validate(&cfg, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

fn validate(cfg: &ExperimentConfig, errors: &mut Vec<String>) {
    if !(cfg.model.gamma > 2.0) {
        errors.push(format!(
            "gamma must exceed 2 (finite-variance regime), got {}",
            cfg.model.gamma
        ));
    }
    if cfg.model.n < 2 {
        errors.push(format!("n must be at least 2, got {}", cfg.model.n));
    }
    for (name, v) in [
        ("alpha", cfg.model.alpha),
        ("beta", cfg.model.beta),
        ("rho", cfg.model.rho),
    ] {
        if !(0.0..=1.0).contains(&v) {
            errors.push(format!("{name} must lie in [0,1], got {v}"));
        }
    }
    if cfg.model.kappa < 0.0 {
        errors.push(format!("kappa must be nonnegative, got {}", cfg.model.kappa));
    }
    if cfg.z_max < 1000 {
        errors.push(format!("z_max must be at least 1000, got {}", cfg.z_max));
    }
    if cfg.grid_m < 16 {
        errors.push(format!("grid_m too small: {}", cfg.grid_m));
    }
    if cfg.dt < 0.0 {
        errors.push(format!("dt must be nonnegative, got {}", cfg.dt));
    }
    if cfg.bins == 0 || cfg.bins > cfg.model.n - 1 {
        errors.push(format!("bins must be in 1..N-1, got {}", cfg.bins));
    }
    let equilibrium_needed = matches!(
        cfg.id,
        ExperimentId::CovCheck | ExperimentId::QvCheck | ExperimentId::BoundaryWindow
    );
    if equilibrium_needed
        && (cfg.model.alpha != cfg.model.rho || cfg.model.beta != cfg.model.rho)
    {
        errors.push("covariance/qv/boundary-window experiments require alpha = beta = rho".into());
    }
    if equilibrium_needed && cfg.replicas < 2 {
        errors.push(format!("need at least 2 replicas, got {}", cfg.replicas));
    }
    if matches!(cfg.id, ExperimentId::CovCheck | ExperimentId::QvCheck) {
        if cfg.lags.is_empty() {
            errors.push("lag grid is empty".into());
        }
        if cfg.lags.first() != Some(&0.0) {
            errors.push("lag grid must start at 0".into());
        }
        let mut sorted = cfg.lags.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted != cfg.lags {
            errors.push("lag grid must be sorted increasing".into());
        }
    }
    if matches!(cfg.id, ExperimentId::BoundaryWindow) {
        for &eps in &cfg.windows {
            if eps * (cfg.model.n as f64) < 1.0 {
                errors.push(format!("window ε = {eps} is below one lattice site"));
            }
            if !(0.0 < eps && eps <= 1.0) {
                errors.push(format!("window ε = {eps} outside (0, 1]"));
            }
        }
    }
    if matches!(cfg.id, ExperimentId::HydroCheck) && cfg.t_end <= 0.0 {
        errors.push(format!("t_end must be positive, got {}", cfg.t_end));
    }
}
