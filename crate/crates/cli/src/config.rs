//! Solver configuration from flat `key=value` files plus command-line
//! overrides. Flags win over file entries; anything left unset falls back
//! to the built-in defaults for the measurement grid.

use std::collections::BTreeMap;
use std::path::Path;

use bcs_core::solver::{InitClustering, SolverConfig};

/// Recognized keys, in file order: `k`, `patch_side`, `stride`, `nu`,
/// `eta`, `eta_initial`, `eta_warmup_iters`, `c`, `iterations`,
/// `cluster_every_m`, `init_clustering` (`random` | `kmeans`), `seed`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, Vec<String>> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
            None => problems.push(format!("line {}: expected key=value", lineno + 1)),
        }
    }
    if problems.is_empty() {
        Ok(map)
    } else {
        Err(problems)
    }
}

/// Optional command-line overrides for every config key.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ConfigOverrides {
    /// Number of transforms K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Patch side d (n = d^2).
    #[arg(long)]
    pub patch_side: Option<usize>,
    /// Patch stride r.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Data fidelity weight (defaults to 1e6 / pixels).
    #[arg(long)]
    pub nu: Option<f64>,
    /// Sparsity threshold.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Warm-up starting threshold.
    #[arg(long)]
    pub eta_initial: Option<f64>,
    /// Warm-up length in iterations (0 disables).
    #[arg(long)]
    pub eta_warmup_iters: Option<usize>,
    /// Energy bound C.
    #[arg(long)]
    pub c: Option<f64>,
    /// Outer iterations J.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Recluster every m-th iteration.
    #[arg(long)]
    pub cluster_every_m: Option<usize>,
    /// Initial clustering: random | kmeans.
    #[arg(long)]
    pub init_clustering: Option<String>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolve the solver configuration for an `height x width` grid from an
/// optional config file and the flag overrides. All problems are collected
/// and reported together, keyed by the offending entry.
pub fn resolve_config(
    height: usize,
    width: usize,
    file: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<SolverConfig, Vec<String>> {
    let mut config = SolverConfig::defaults_for(height, width);
    let mut eta_initial_set = false;
    let mut problems = Vec::new();

    if let Some(path) = file {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return Err(vec![format!("config file {}: {e}", path.display())]),
        };
        let map = parse_config_file(&text)?;
        for (key, value) in &map {
            match key.as_str() {
                "k" => parse_into(key, value, &mut config.num_transforms, &mut problems),
                "patch_side" => parse_into(key, value, &mut config.patch_side, &mut problems),
                "stride" => parse_into(key, value, &mut config.stride, &mut problems),
                "nu" => parse_into(key, value, &mut config.nu, &mut problems),
                "eta" => parse_into(key, value, &mut config.eta, &mut problems),
                "eta_initial" => {
                    parse_into(key, value, &mut config.eta_initial, &mut problems);
                    eta_initial_set = true;
                }
                "eta_warmup_iters" => {
                    parse_into(key, value, &mut config.eta_warmup_iters, &mut problems)
                }
                "c" => parse_into(key, value, &mut config.norm_bound, &mut problems),
                "iterations" => parse_into(key, value, &mut config.iterations, &mut problems),
                "cluster_every_m" => {
                    parse_into(key, value, &mut config.cluster_every_m, &mut problems)
                }
                "init_clustering" => match parse_clustering(value) {
                    Some(c) => config.init_clustering = c,
                    None => problems.push(format!(
                        "init_clustering: expected random or kmeans (got {value})"
                    )),
                },
                "seed" => parse_into(key, value, &mut config.seed, &mut problems),
                other => problems.push(format!("{other}: unknown config key")),
            }
        }
    }

    macro_rules! apply {
        ($field:ident, $target:expr) => {
            if let Some(v) = overrides.$field {
                $target = v;
            }
        };
    }
    apply!(k, config.num_transforms);
    apply!(patch_side, config.patch_side);
    apply!(stride, config.stride);
    apply!(nu, config.nu);
    apply!(eta, config.eta);
    if let Some(v) = overrides.eta_initial {
        config.eta_initial = v;
        eta_initial_set = true;
    }
    apply!(eta_warmup_iters, config.eta_warmup_iters);
    apply!(c, config.norm_bound);
    apply!(iterations, config.iterations);
    apply!(cluster_every_m, config.cluster_every_m);
    if let Some(s) = &overrides.init_clustering {
        match parse_clustering(s) {
            Some(c) => config.init_clustering = c,
            None => problems.push(format!(
                "init_clustering: expected random or kmeans (got {s})"
            )),
        }
    }
    apply!(seed, config.seed);

    // The default eta_initial tracks eta unless set explicitly.
    if !eta_initial_set {
        config.eta_initial = 4.0 * config.eta;
    }

    if let Err(mut bad) = config.validate() {
        problems.append(&mut bad);
    }
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(problems)
    }
}

fn parse_clustering(value: &str) -> Option<InitClustering> {
    match value.to_ascii_lowercase().as_str() {
        "random" => Some(InitClustering::Random),
        "kmeans" | "k-means" => Some(InitClustering::KMeans),
        _ => None,
    }
}

fn parse_into<T: std::str::FromStr>(
    key: &str,
    value: &str,
    target: &mut T,
    problems: &mut Vec<String>,
) {
    match value.parse::<T>() {
        Ok(v) => *target = v,
        Err(_) => problems.push(format!("{key}: cannot parse value {value:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags_precedence() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("bcs_cfg_{}.cfg", std::process::id()));
        std::fs::write(&path, "# comment\nk = 4\neta = 0.05\niterations = 9\n").unwrap();
        let overrides = ConfigOverrides {
            eta: Some(0.02),
            ..Default::default()
        };
        let config = resolve_config(64, 64, Some(&path), &overrides).unwrap();
        assert_eq!(config.num_transforms, 4);
        assert_eq!(config.iterations, 9);
        assert_eq!(config.eta, 0.02); // flag wins
        assert_eq!(config.eta_initial, 0.08); // tracks eta
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn unknown_and_invalid_keys_reported_together() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("bcs_cfg_bad_{}.cfg", std::process::id()));
        std::fs::write(&path, "bogus = 1\neta = -3\n").unwrap();
        let err = resolve_config(64, 64, Some(&path), &ConfigOverrides::default()).unwrap_err();
        assert!(err.iter().any(|m| m.starts_with("bogus:")));
        assert!(err.iter().any(|m| m.starts_with("eta:")));
        std::fs::remove_file(&path).ok();
    }
}
