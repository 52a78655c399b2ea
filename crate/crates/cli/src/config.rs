use std::fs;
use std::path::{Path, PathBuf};

use fedhet::algorithms::Algorithm;
use fedhet::data::DataSource;
use fedhet::orchestrator::{ExperimentConfig, Seeds, TransportKind};

use crate::error::{CliError, CliResult};

/// Settings given on the command line; these win over the file and the
/// environment.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub transport: Option<TransportKind>,
    pub broker: Option<(String, u16)>,
    pub algorithm: Option<Algorithm>,
}

pub fn parse_broker(s: &str) -> Result<(String, u16), String> {
    let (host, port) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("expected HOST:PORT, got {s:?}"))?;
    if host.is_empty() {
        return Err(format!("empty host in {s:?}"));
    }
    let port = port.parse().map_err(|_| format!("bad port in {s:?}"))?;
    Ok((host.to_string(), port))
}

/// Read a TOML experiment file. A top-level `seed = N` expands into all
/// stage seeds; relative paths resolve against the file's directory.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("{}: {e}", path.display()));
    let mut table: toml::Table = text.parse().map_err(|e| bad(&e))?;
    let base = table.remove("seed");
    let mut cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e| bad(&e))?;
    if let Some(base) = base {
        let base = base
            .as_integer()
            .filter(|b| *b >= 0)
            .ok_or_else(|| bad(&"`seed` must be a non-negative integer"))?;
        if cfg.seeds != Seeds::default() {
            return Err(bad(&"give either `seed` or a [seeds] table, not both"));
        }
        cfg.seeds = Seeds::from_base(base as u64);
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = root.join(&*p);
        }
    };
    if let DataSource::StrokeCsv { path } = &mut cfg.data {
        resolve(path);
    }
    if let Some(dir) = &mut cfg.prepared_dir {
        resolve(dir);
    }
    resolve(&mut cfg.output.dir);
    Ok(cfg)
}

/// BROKER_HOST, BROKER_PORT, BROKER_USER and BROKER_PASS.
pub fn apply_env(cfg: &mut ExperimentConfig, var: impl Fn(&str) -> Option<String>) -> CliResult<()> {
    if let Some(h) = var("BROKER_HOST") {
        cfg.transport.host = h;
    }
    if let Some(p) = var("BROKER_PORT") {
        cfg.transport.port = p
            .parse()
            .map_err(|_| CliError::Usage(format!("BROKER_PORT {p:?} is not a port number")))?;
    }
    if let Some(u) = var("BROKER_USER") {
        cfg.transport.username = Some(u);
    }
    if let Some(p) = var("BROKER_PASS") {
        cfg.transport.password = Some(p);
    }
    Ok(())
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(t) = o.transport {
        cfg.transport.kind = t;
    }
    if let Some((host, port)) = &o.broker {
        cfg.transport.host = host.clone();
        cfg.transport.port = *port;
    }
    if let Some(a) = o.algorithm {
        cfg.algorithm = a;
    }
}

/// File, then environment, then flags; validated.
pub fn resolve(path: &Path, o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    apply_env(&mut cfg, |k| std::env::var(k).ok())?;
    apply_overrides(&mut cfg, o);
    cfg.validate()?;
    if let DataSource::StrokeCsv { path } = &cfg.data {
        if cfg.prepared_dir.is_none() && !path.is_file() {
            return Err(CliError::Usage(format!("dataset {} does not exist", path.display())));
        }
    }
    Ok(cfg)
}
