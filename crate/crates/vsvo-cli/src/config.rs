//! Settings resolution: command-line flags over config-file entries over
//! per-mode defaults. The config file is flat `key = value` lines using the
//! same keys as the long flags; `#` starts a comment.

use std::path::PathBuf;

use crate::{CliError, ModeArgs};
use vsvo::stepper::OrderSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartupKind {
    Exact,
    Ramp,
}

/// Fully resolved experiment settings.
#[derive(Debug)]
pub struct Settings {
    pub problem: Option<String>,
    pub eps: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    pub orders: Option<Vec<OrderSet>>,
    pub k: Option<f64>,
    pub k_levels: Option<usize>,
    pub mu: Option<MuSpec>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub startup: Option<StartupKind>,
}

#[derive(Debug, Clone)]
pub enum MuSpec {
    Single(f64),
    Grid { lo: f64, hi: f64, step: f64 },
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>()
        .map_err(|_| bad(format!("{key}: `{s}` is not a number")))
}

/// `lo:hi:count` (count optionally suffixed `-log`), log-spaced inclusive.
fn parse_eps_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad(format!("eps-grid `{s}` must look like lo:hi:count")));
    }
    let lo = parse_f64("eps-grid lo", parts[0])?;
    let hi = parse_f64("eps-grid hi", parts[1])?;
    let count: usize = parts[2]
        .trim_end_matches("-log")
        .parse()
        .map_err(|_| bad(format!("eps-grid count `{}` is not an integer", parts[2])))?;
    if !(lo > 0.0 && hi > 0.0) || count < 1 {
        return Err(bad("eps-grid bounds must be positive with count >= 1"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (la, lb) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

fn parse_orders(s: &str) -> Result<Vec<OrderSet>, CliError> {
    s.split(',')
        .map(|part| OrderSet::parse(part.trim()).map_err(|e| bad(e.to_string())))
        .collect()
}

fn parse_mu(s: &str) -> Result<MuSpec, CliError> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("mu grid `{s}` must look like lo:hi:step")));
        }
        let lo = parse_f64("mu lo", parts[0])?;
        let hi = parse_f64("mu hi", parts[1])?;
        let step = parse_f64("mu step", parts[2])?;
        if !(step > 0.0 && hi >= lo) {
            return Err(bad("mu grid needs hi >= lo and step > 0"));
        }
        Ok(MuSpec::Grid { lo, hi, step })
    } else {
        Ok(MuSpec::Single(parse_f64("mu", s)?))
    }
}

impl Settings {
    pub fn load(args: ModeArgs) -> Result<Settings, CliError> {
        let mut merged = args.clone();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    bad(format!(
                        "{}:{}: expected key = value",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                let (key, value) = (key.trim(), value.trim().to_string());
                // Flags override the file: only fill unset fields.
                match key {
                    "problem" => {
                        merged.problem.get_or_insert(value);
                    }
                    "eps-grid" => {
                        merged.eps_grid.get_or_insert(value);
                    }
                    "orders" => {
                        merged.orders.get_or_insert(value);
                    }
                    "mu" => {
                        merged.mu.get_or_insert(value);
                    }
                    "format" => {
                        merged.format.get_or_insert(value);
                    }
                    "startup" => {
                        merged.startup.get_or_insert(value);
                    }
                    "eps" => {
                        if merged.eps.is_none() {
                            merged.eps = Some(parse_f64("eps", &value)?);
                        }
                    }
                    "k" => {
                        if merged.k.is_none() {
                            merged.k = Some(parse_f64("k", &value)?);
                        }
                    }
                    "k-levels" => {
                        if merged.k_levels.is_none() {
                            merged.k_levels = Some(
                                value
                                    .parse()
                                    .map_err(|_| bad("k-levels must be an integer"))?,
                            );
                        }
                    }
                    "out" => {
                        if merged.out.is_none() {
                            merged.out = Some(PathBuf::from(value));
                        }
                    }
                    other => {
                        return Err(bad(format!(
                            "{}:{}: unknown key `{other}`",
                            path.display(),
                            lineno + 1
                        )))
                    }
                }
            }
        }

        let format = match merged.format.as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => return Err(bad(format!("format must be csv or json, got `{other}`"))),
        };
        let startup = match merged.startup.as_deref() {
            None => None,
            Some("exact") => Some(StartupKind::Exact),
            Some("ramp") => Some(StartupKind::Ramp),
            Some(other) => {
                return Err(bad(format!("startup must be exact or ramp, got `{other}`")))
            }
        };
        if let Some(eps) = merged.eps {
            if !(eps > 0.0) {
                return Err(bad("eps must be positive"));
            }
        }
        let eps_grid = merged.eps_grid.as_deref().map(parse_eps_grid).transpose()?;
        if let Some(grid) = &eps_grid {
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if *grid != sorted {
                return Err(bad("eps-grid must be sorted from loose to tight"));
            }
        }
        Ok(Settings {
            problem: merged.problem,
            eps: merged.eps,
            eps_grid,
            orders: merged.orders.as_deref().map(parse_orders).transpose()?,
            k: merged.k,
            k_levels: merged.k_levels,
            mu: merged.mu.as_deref().map(parse_mu).transpose()?,
            out: merged.out,
            format,
            startup,
        })
    }

    pub fn require_problem(&self) -> Result<vsvo::problems::ProblemSpec, CliError> {
        let name = self
            .problem
            .as_deref()
            .ok_or_else(|| bad("missing --problem"))?;
        vsvo::problems::by_name(name).ok_or_else(|| {
            bad(format!(
                "unknown problem `{name}`; available: {}",
                vsvo::problems::REGISTRY.join(", ")
            ))
        })
    }
}
