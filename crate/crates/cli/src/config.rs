//! INI-style experiment configuration.
//!
//! The file format is `[section]` headers followed by `key = value` lines.
//! Comments start with `#` or `;`. Unknown sections or keys, duplicate keys
//! and malformed lines are rejected with the offending line number, so a
//! config that parses is a complete, unambiguous record of a run.

use std::fmt::Write as _;
use std::path::Path;

/// Fully resolved experiment parameters with documented defaults.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // [grid]
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    // [time]
    pub t_final: f64,
    pub nt: usize,
    // [carleman]
    pub x0: [f64; 2],
    pub lambda: f64,
    pub strict: bool,
    pub s_grid: Vec<f64>,
    pub samples: usize,
    // [sampling]
    pub seed: u64,
    pub amplitude: f64,
    pub flatness_order: usize,
    pub bound_m: f64,
    // [stability]
    pub pair_count: usize,
    // [noise]
    pub noise_level: f64,
    // [reconstruct]
    pub basis_size: usize,
    pub iterations: usize,
    pub reg: f64,
    pub channels: Vec<String>,
    pub fd_step: f64,
    pub truth_seed: u64,
    pub truth_amplitude: f64,
    // [output]
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nx: 33,
            ny: 33,
            lx: 1.0,
            ly: 1.0,
            t_final: 0.25,
            nt: 128,
            x0: [-1.0, 0.5],
            lambda: 1.0,
            strict: false,
            s_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            samples: 10,
            seed: 1,
            amplitude: 0.05,
            flatness_order: 2,
            bound_m: 10.0,
            pair_count: 1,
            noise_level: 0.0,
            basis_size: 1,
            iterations: 50,
            reg: 0.0,
            channels: vec!["q_plus".into()],
            fd_step: 1e-4,
            truth_seed: 2,
            truth_amplitude: 0.05,
            out_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    /// Canonical text form of the resolved configuration. Hashing this
    /// string ties every output file to the exact parameters of the run.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let join =
            |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "[grid]");
        let _ = writeln!(s, "nx = {}", self.nx);
        let _ = writeln!(s, "ny = {}", self.ny);
        let _ = writeln!(s, "lx = {}", self.lx);
        let _ = writeln!(s, "ly = {}", self.ly);
        let _ = writeln!(s, "[time]");
        let _ = writeln!(s, "t_final = {}", self.t_final);
        let _ = writeln!(s, "nt = {}", self.nt);
        let _ = writeln!(s, "[carleman]");
        let _ = writeln!(s, "x0_x = {}", self.x0[0]);
        let _ = writeln!(s, "x0_y = {}", self.x0[1]);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "strict = {}", self.strict);
        let _ = writeln!(s, "s_grid = {}", join(&self.s_grid));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "[sampling]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "amplitude = {}", self.amplitude);
        let _ = writeln!(s, "flatness_order = {}", self.flatness_order);
        let _ = writeln!(s, "bound_m = {}", self.bound_m);
        let _ = writeln!(s, "[stability]");
        let _ = writeln!(s, "pair_count = {}", self.pair_count);
        let _ = writeln!(s, "[noise]");
        let _ = writeln!(s, "level = {}", self.noise_level);
        let _ = writeln!(s, "[reconstruct]");
        let _ = writeln!(s, "basis_size = {}", self.basis_size);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "reg = {}", self.reg);
        let _ = writeln!(s, "channels = {}", self.channels.join(","));
        let _ = writeln!(s, "fd_step = {}", self.fd_step);
        let _ = writeln!(s, "truth_seed = {}", self.truth_seed);
        let _ = writeln!(s, "truth_amplitude = {}", self.truth_amplitude);
        // the output directory is deliberately excluded: where results land
        // must not change their contents or the provenance hash
        s
    }
}

/// A configuration problem: bad file contents or inconsistent values.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, msg: impl AsRef<str>) -> ConfigError {
    ConfigError(format!("line {line}: {}", msg.as_ref()))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| err(line, format!("value `{raw}` for key `{key}` has the wrong type")))
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("value `{raw}` for key `{key}` is not a boolean"))),
    }
}

fn parse_list(line: usize, key: &str, raw: &str) -> Result<Vec<f64>, ConfigError> {
    raw.split(',')
        .map(|p| parse_num::<f64>(line, key, p.trim()))
        .collect()
}

const SECTIONS: &[&str] = &[
    "grid",
    "time",
    "carleman",
    "sampling",
    "stability",
    "noise",
    "reconstruct",
    "output",
];

const KNOWN_CHANNELS: &[&str] = &["q_plus", "q_minus", "phi_scal", "a_plus", "a_minus", "phi_vec"];

/// Parse a configuration file, applying defaults for keys not present.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse configuration text; separated from file IO for testing.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    let mut seen: Vec<(String, String)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw_line.find(['#', ';']) {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(lineno, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(lineno, format!("unknown section `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(lineno, format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(err(lineno, "empty key"));
        }
        if section.is_empty() {
            return Err(err(lineno, format!("key `{key}` appears before any [section]")));
        }
        let full = (section.clone(), key.to_string());
        if seen.contains(&full) {
            return Err(err(lineno, format!("duplicate key `{key}` in section [{section}]")));
        }
        seen.push(full);

        match (section.as_str(), key) {
            ("grid", "nx") => cfg.nx = parse_num(lineno, key, value)?,
            ("grid", "ny") => cfg.ny = parse_num(lineno, key, value)?,
            ("grid", "lx") => cfg.lx = parse_num(lineno, key, value)?,
            ("grid", "ly") => cfg.ly = parse_num(lineno, key, value)?,
            ("time", "t_final") => cfg.t_final = parse_num(lineno, key, value)?,
            ("time", "nt") => cfg.nt = parse_num(lineno, key, value)?,
            ("carleman", "x0_x") => cfg.x0[0] = parse_num(lineno, key, value)?,
            ("carleman", "x0_y") => cfg.x0[1] = parse_num(lineno, key, value)?,
            ("carleman", "lambda") => cfg.lambda = parse_num(lineno, key, value)?,
            ("carleman", "strict") => cfg.strict = parse_bool(lineno, key, value)?,
            ("carleman", "s_grid") => cfg.s_grid = parse_list(lineno, key, value)?,
            ("carleman", "samples") => cfg.samples = parse_num(lineno, key, value)?,
            ("sampling", "seed") => cfg.seed = parse_num(lineno, key, value)?,
            ("sampling", "amplitude") => cfg.amplitude = parse_num(lineno, key, value)?,
            ("sampling", "flatness_order") => {
                cfg.flatness_order = parse_num(lineno, key, value)?
            }
            ("sampling", "bound_m") => cfg.bound_m = parse_num(lineno, key, value)?,
            ("stability", "pair_count") => cfg.pair_count = parse_num(lineno, key, value)?,
            ("noise", "level") => cfg.noise_level = parse_num(lineno, key, value)?,
            ("reconstruct", "basis_size") => cfg.basis_size = parse_num(lineno, key, value)?,
            ("reconstruct", "iterations") => cfg.iterations = parse_num(lineno, key, value)?,
            ("reconstruct", "reg") => cfg.reg = parse_num(lineno, key, value)?,
            ("reconstruct", "channels") => {
                let parts: Vec<String> =
                    value.split(',').map(|p| p.trim().to_string()).collect();
                for p in &parts {
                    if !KNOWN_CHANNELS.contains(&p.as_str()) {
                        return Err(err(lineno, format!("unknown channel `{p}`")));
                    }
                }
                cfg.channels = parts;
            }
            ("reconstruct", "fd_step") => cfg.fd_step = parse_num(lineno, key, value)?,
            ("reconstruct", "truth_seed") => cfg.truth_seed = parse_num(lineno, key, value)?,
            ("reconstruct", "truth_amplitude") => {
                cfg.truth_amplitude = parse_num(lineno, key, value)?
            }
            ("output", "dir") => cfg.out_dir = value.to_string(),
            _ => {
                return Err(err(
                    lineno,
                    format!("unknown key `{key}` in section [{section}]"),
                ))
            }
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let bad = |m: &str| Err(ConfigError(m.to_string()));
    if cfg.nx < 3 || cfg.ny < 3 {
        return bad("grid must have at least 3 nodes per axis");
    }
    if !(cfg.lx > 0.0 && cfg.ly > 0.0) {
        return bad("grid side lengths must be positive");
    }
    if !(cfg.t_final > 0.0) || cfg.nt < 2 {
        return bad("need a positive horizon and nt >= 2");
    }
    if !(cfg.lambda > 0.0) {
        return bad("lambda must be positive");
    }
    if cfg.s_grid.is_empty() || cfg.s_grid.iter().any(|&s| !(s > 0.0)) {
        return bad("s_grid must be a non-empty list of positive values");
    }
    if !(cfg.amplitude >= 0.0) || !(cfg.truth_amplitude >= 0.0) {
        return bad("amplitudes must be nonnegative");
    }
    if !(cfg.noise_level >= 0.0) {
        return bad("noise level must be nonnegative");
    }
    if cfg.samples == 0 || cfg.pair_count == 0 {
        return bad("samples and pair_count must be positive");
    }
    if cfg.basis_size == 0 || cfg.basis_size > 64 {
        return bad("basis_size must lie in 1..=64");
    }
    Ok(())
}
