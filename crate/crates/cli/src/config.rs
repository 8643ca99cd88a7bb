//! Run configuration layered as defaults < file < flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fbsde_core::ns_solver::Laplacian;
use fbsde_core::sde_engine::Scheme;
use fbsde_geom::ManifoldKind;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "FBSDE_NS_OUT";
const DEFAULT_OUT: &str = "fbsde-out";

#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        message: String,
    },
    /// Syntax or type error with the parser's location diagnostics.
    Parse {
        path: PathBuf,
        message: String,
    },
    Field {
        field: &'static str,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            ConfigError::Parse { path, message } => {
                write!(f, "{}: {}", path.display(), message.trim_end())
            }
            ConfigError::Field { field, message } => write!(f, "field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One configuration layer; absent keys fall through to the layer below.
///
/// Counts are signed here so that negative values reach validation and are
/// reported by field name rather than as parse errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplacian: Option<Laplacian>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<i64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ConfigLayer {
    fn overlay(&mut self, top: &ConfigLayer) {
        overlay!(self, top; manifold, nu, horizon, degree, paths, dt, seed, max_iters, tol, p,
            laplacian, scheme, out, reference, nodes, samples, threads, grid);
    }

    fn values(&self) -> serde_json::Map<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => serde_json::Map::new(),
        }
    }

    /// Built-in defaults. The output directory comes from [`OUT_ENV`] when set.
    pub fn defaults() -> Self {
        let out = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        ConfigLayer {
            manifold: Some(ManifoldKind::FlatTorus2),
            nu: Some(0.1),
            horizon: Some(0.1),
            // resolved per manifold when absent
            degree: None,
            paths: Some(2000),
            dt: Some(0.01),
            seed: Some(7),
            max_iters: Some(8),
            tol: Some(1e-3),
            p: Some(4.0),
            laplacian: Some(Laplacian::Bochner),
            scheme: Some(Scheme::ExactGeodesicHeun),
            out: Some(out),
            reference: Some(true),
            nodes: Some(3),
            samples: Some(1000),
            threads: Some(0),
            grid: Some(0),
        }
    }
}

/// Reads a TOML or JSON layer; `.json` selects JSON, anything else TOML.
pub fn load_layer(path: &Path) -> Result<ConfigLayer, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        if text.trim().is_empty() {
            return Ok(ConfigLayer::default());
        }
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Default,
    File,
    Flag,
}

/// A key set both in the file and by a flag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub file: serde_json::Value,
    pub flag: serde_json::Value,
}

/// Fully resolved and validated settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifold: ManifoldKind,
    pub nu: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Fourier degree `K` on the torus, harmonic degree `L` on the sphere.
    pub degree: usize,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub p: f64,
    pub laplacian: Laplacian,
    pub scheme: Scheme,
    pub out: PathBuf,
    pub reference: bool,
    pub nodes: usize,
    pub samples: usize,
    /// Worker threads; 0 leaves the pool size to rayon.
    pub threads: usize,
    /// Collocation grid size per axis; 0 selects the fit grid of `degree`.
    pub grid: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Origin>,
    pub overrides: Vec<Override>,
}

fn count(v: Option<i64>, field: &'static str, min: i64) -> Result<usize, ConfigError> {
    let v = v.expect("defaults cover every count");
    if v < min {
        return Err(ConfigError::Field {
            field,
            message: format!("must be at least {min}, got {v}"),
        });
    }
    Ok(v as usize)
}

fn positive(v: Option<f64>, field: &'static str) -> Result<f64, ConfigError> {
    let v = v.expect("defaults cover every real");
    if !(v > 0.0 && v.is_finite()) {
        return Err(ConfigError::Field {
            field,
            message: format!("must be positive and finite, got {v}"),
        });
    }
    Ok(v)
}

/// Merges `defaults < file < flags`, records where each key came from and
/// validates the result.
pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Resolved, ConfigError> {
    let defaults = ConfigLayer::defaults();
    let empty = ConfigLayer::default();
    let file = file.unwrap_or(&empty);
    let mut merged = defaults.clone();
    merged.overlay(file);
    merged.overlay(flags);

    let (fv, gv) = (file.values(), flags.values());
    let mut provenance = BTreeMap::new();
    let mut overrides = Vec::new();
    for key in merged.values().keys() {
        let origin = if gv.contains_key(key) {
            Origin::Flag
        } else if fv.contains_key(key) {
            Origin::File
        } else {
            Origin::Default
        };
        provenance.insert(key.clone(), origin);
        if let (Some(a), Some(b)) = (fv.get(key), gv.get(key)) {
            overrides.push(Override {
                key: key.clone(),
                file: a.clone(),
                flag: b.clone(),
            });
        }
    }

    let manifold = merged.manifold.expect("default manifold");
    let degree = match merged.degree {
        Some(d) => count(Some(d), "degree", 1)?,
        None => {
            provenance.insert("degree".into(), Origin::Default);
            match manifold {
                ManifoldKind::FlatTorus2 => 4,
                ManifoldKind::UnitSphere2 => 3,
            }
        }
    };
    let nu = merged.nu.expect("default nu");
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(ConfigError::Field {
            field: "nu",
            message: format!("must be nonnegative and finite, got {nu}"),
        });
    }
    let p = positive(merged.p, "p")?;
    if p < 1.0 {
        return Err(ConfigError::Field {
            field: "p",
            message: format!("must be at least 1, got {p}"),
        });
    }
    let config = RunConfig {
        manifold,
        nu,
        horizon: positive(merged.horizon, "T")?,
        degree,
        paths: count(merged.paths, "paths", 2)?,
        dt: positive(merged.dt, "dt")?,
        seed: merged.seed.expect("default seed"),
        max_iters: count(merged.max_iters, "max_iters", 1)?,
        tol: positive(merged.tol, "tol")?,
        p,
        laplacian: merged.laplacian.expect("default laplacian"),
        scheme: merged.scheme.expect("default scheme"),
        out: merged.out.expect("default out"),
        reference: merged.reference.expect("default reference"),
        nodes: count(merged.nodes, "nodes", 2)?,
        samples: count(merged.samples, "samples", 1)?,
        threads: count(merged.threads, "threads", 0)?,
        grid: count(merged.grid, "grid", 0)?,
    };
    if config.dt > config.horizon {
        return Err(ConfigError::Field {
            field: "dt",
            message: format!("exceeds the horizon T = {}", config.horizon),
        });
    }
    Ok(Resolved {
        config,
        provenance,
        overrides,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigLayer {
            nu: Some(0.1),
            ..Default::default()
        };
        let flags = ConfigLayer {
            nu: Some(0.2),
            ..Default::default()
        };
        let r = resolve(Some(&file), &flags).unwrap();
        assert_eq!(r.config.nu, 0.2);
        assert_eq!(r.provenance["nu"], Origin::Flag);
        assert_eq!(r.overrides.len(), 1);
        assert_eq!(r.overrides[0].key, "nu");
    }

    #[test]
    fn negative_paths_name_the_field() {
        let flags = ConfigLayer {
            paths: Some(-5),
            ..Default::default()
        };
        match resolve(None, &flags) {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "paths"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degree_default_depends_on_manifold() {
        let flags = ConfigLayer {
            manifold: Some(ManifoldKind::UnitSphere2),
            ..Default::default()
        };
        let r = resolve(None, &flags).unwrap();
        assert_eq!(r.config.degree, 3);
        assert_eq!(r.provenance["degree"], Origin::Default);
    }

    #[test]
    fn resolved_config_round_trips_as_a_layer() {
        let r = resolve(None, &ConfigLayer::default()).unwrap();
        let text = toml::to_string(&r.config).unwrap();
        let layer: ConfigLayer = toml::from_str(&text).unwrap();
        let again = resolve(Some(&layer), &ConfigLayer::default()).unwrap();
        assert_eq!(again.config, r.config);
    }
}
