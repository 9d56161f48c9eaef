//! Run configuration files: a flat key-value schema (TOML) with typed
//! sections, documented in `docs/config.md`.

use serde::Deserialize;

use aep_core::model::{Density, JumpLaw};
use aep_core::sim::{RingSize, SimConfig, WrapPolicy};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    /// "second_class" | "three_class" | "stationary"
    pub mode: String,
    pub seed: u64,
    pub replicas: usize,
    /// Decimal string or fraction, e.g. "0.5" or "1/3".
    pub rho: toml::Value,
    /// "auto" or an explicit even ring size.
    #[serde(default)]
    pub ring: Option<toml::Value>,
    /// List of `(z, p)` pairs; probabilities as numbers or exact strings.
    pub law: Vec<(i64, toml::Value)>,
    pub time_grid: TimeGrid,
    /// Optional `(site, occupancy)` constraints on the initial draw.
    #[serde(default)]
    pub conditioning: Vec<(i64, u8)>,
    /// "strict" (default) or "matched".
    #[serde(default)]
    pub wrap: Option<String>,
    /// Also stream raw per-replica samples as line-delimited records
    /// `replica,time,observable,value` into `raw.csv`.
    #[serde(default)]
    pub raw_output: Option<bool>,
    #[serde(default)]
    pub estimators: Estimators,
    #[serde(default)]
    pub observers: Observers,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    Explicit(Vec<f64>),
    Spec { start: f64, stop: f64, points: usize, spacing: String },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimators {
    /// Variance-route diffusivity at these times (default: whole grid).
    #[serde(default)]
    pub diffusivity: Option<bool>,
    #[serde(default)]
    pub two_point_at: Vec<f64>,
    #[serde(default)]
    pub green_kubo_at: Vec<f64>,
    #[serde(default)]
    pub height_diffusivity_at: Vec<f64>,
    /// Emit the paired finite-difference / conditioned-mean growth table at
    /// these times (spawns the conditioned companion ensembles).
    #[serde(default)]
    pub growth_identity_at: Vec<f64>,
    #[serde(default)]
    pub monotonicity: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observers {
    /// Height/current window half-width (stationary mode).
    #[serde(default)]
    pub height_window: Option<usize>,
}

/// Parses "0.5", "1/3" or a plain TOML number into f64 (nearest 64-bit).
pub fn parse_real(v: &toml::Value, what: &str) -> Result<f64, CliError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::String(s) => {
            if let Some((num, den)) = s.split_once('/') {
                let n: f64 = num
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("bad {what}: {s}")))?;
                let d: f64 = den
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("bad {what}: {s}")))?;
                if d == 0.0 {
                    return Err(CliError::config(format!("bad {what}: {s}")));
                }
                Ok(n / d)
            } else {
                s.trim().parse().map_err(|_| CliError::config(format!("bad {what}: {s}")))
            }
        }
        _ => Err(CliError::config(format!("bad {what}: {v}"))),
    }
}

/// Parses a command-line law like "1:1" or "1:2/3,-1:1/3".
pub fn parse_law_arg(text: &str) -> Result<JumpLaw, CliError> {
    let mut entries = Vec::new();
    for part in text.split(',') {
        let (z, p) = part
            .split_once(':')
            .ok_or_else(|| CliError::config(format!("law entry '{part}' is not z:p")))?;
        let z: i64 =
            z.trim().parse().map_err(|_| CliError::config(format!("bad displacement '{z}'")))?;
        let p = parse_real(&toml::Value::String(p.trim().to_string()), "probability")?;
        entries.push((z, p));
    }
    JumpLaw::new(entries).map_err(|e| CliError::config(format!("invalid law: {e}")))
}

impl RunFile {
    pub fn parse(text: &str) -> Result<RunFile, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config parse error: {e}")))
    }

    pub fn law(&self) -> Result<JumpLaw, CliError> {
        let mut entries = Vec::new();
        for (z, p) in &self.law {
            entries.push((*z, parse_real(p, &format!("law entry p({z})"))?));
        }
        JumpLaw::new(entries).map_err(|e| CliError::config(format!("invalid law: {e}")))
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        match &self.time_grid {
            TimeGrid::Explicit(g) => Ok(g.clone()),
            TimeGrid::Spec { start, stop, points, spacing } => {
                if *points < 2 || *stop <= *start {
                    return Err(CliError::config("bad time_grid spec".into()));
                }
                let n = points - 1;
                let grid = match spacing.as_str() {
                    "linear" => (0..=n)
                        .map(|i| start + (stop - start) * i as f64 / n as f64)
                        .collect(),
                    "log" => {
                        if *start <= 0.0 {
                            return Err(CliError::config("log grid needs start > 0".into()));
                        }
                        (0..=n)
                            .map(|i| {
                                (start.ln() + (stop.ln() - start.ln()) * i as f64 / n as f64)
                                    .exp()
                            })
                            .collect()
                    }
                    other => {
                        return Err(CliError::config(format!("unknown spacing '{other}'")))
                    }
                };
                Ok(grid)
            }
        }
    }

    #[allow(clippy::wrong_self_convention)]
    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let law = self.law()?;
        let rho = parse_real(&self.rho, "rho")
            .and_then(|r| Density::new(r).map_err(|e| CliError::config(e.to_string())))?;
        let ring = match &self.ring {
            None => RingSize::Auto,
            Some(toml::Value::String(s)) if s == "auto" => RingSize::Auto,
            Some(toml::Value::Integer(l)) if *l > 0 => RingSize::Explicit(*l as usize),
            Some(v) => return Err(CliError::config(format!("bad ring: {v}"))),
        };
        let wrap = match self.wrap.as_deref() {
            None | Some("strict") => WrapPolicy::Strict,
            Some("matched") => WrapPolicy::Matched,
            Some(other) => return Err(CliError::config(format!("bad wrap policy '{other}'"))),
        };
        let mut cfg = SimConfig::new(law, rho, self.grid()?, self.replicas, self.seed);
        cfg.ring = ring;
        cfg.wrap_policy = wrap;
        cfg.conditioning = self.conditioning.iter().map(|&(s, o)| (s, o != 0)).collect();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_accept_fractions_and_decimal_strings() {
        let v = toml::Value::String("2/3".into());
        assert_eq!(parse_real(&v, "p").unwrap(), 2.0 / 3.0);
        let v = toml::Value::String("0.3".into());
        assert_eq!(parse_real(&v, "p").unwrap(), 0.3);
        let v = toml::Value::Float(0.25);
        assert_eq!(parse_real(&v, "p").unwrap(), 0.25);
        assert!(parse_real(&toml::Value::String("1/0".into()), "p").is_err());
    }

    #[test]
    fn law_argument_round_trips() {
        let law = parse_law_arg("1:2/3,-1:1/3").unwrap();
        assert_eq!(law.prob(1), 2.0 / 3.0);
        assert_eq!(law.prob(-1), 1.0 / 3.0);
        assert!(parse_law_arg("1;1").is_err());
        let err = parse_law_arg("1:1.25,-1:-0.25").unwrap_err();
        assert!(matches!(err, CliError::Config(m) if m.contains("-1")));
    }

    #[test]
    fn run_file_builds_sim_config() {
        let text = r#"
mode = "second_class"
seed = 9
replicas = 100
rho = "1/2"
law = [[1, "0.7"], [-1, 0.3]]
time_grid = { start = 1.0, stop = 8.0, points = 4, spacing = "log" }
conditioning = [[1, 1]]
"#;
        let file = RunFile::parse(text).unwrap();
        let cfg = file.sim_config().unwrap();
        assert_eq!(cfg.rho.rho(), 0.5);
        assert_eq!(cfg.time_grid.len(), 4);
        assert!((cfg.time_grid[0] - 1.0).abs() < 1e-12);
        assert!((cfg.time_grid[3] - 8.0).abs() < 1e-12);
        assert_eq!(cfg.conditioning, vec![(1, true)]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
mode = "second_class"
seed = 9
replicas = 100
rho = 0.5
law = [[1, 1.0]]
time_grid = [1.0]
bogus = true
"#;
        assert!(RunFile::parse(text).is_err());
    }
}
