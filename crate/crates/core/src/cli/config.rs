//! Line-based `key = value` run configuration.
//!
//! `#` starts a comment. Unknown keys are rejected. Later assignments
//! override earlier ones, then `--set key=value` overrides, then the
//! `LIPPMANN_OUTPUT_DIR` and `LIPPMANN_THREADS` environment variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::elasticity::shear_loading;
use crate::error::{Error, Result};
use crate::green::GreenKind;
use crate::grid::Grid;
use crate::microstructure::{
    generate_hard_spheres, voxelize, Microstructure, PackingParams, PhaseTensor, Physics,
    SpherePack,
};
use crate::solvers::{SolveConfig, SolverKind};

use super::voxel_file::{VoxelData, VoxelFile};

pub const ENV_OUTPUT: &str = "LIPPMANN_OUTPUT_DIR";
pub const ENV_THREADS: &str = "LIPPMANN_THREADS";

const KEYS: &[&str] = &[
    "geometry",
    "physics",
    "phases",
    "reference",
    "variant",
    "solver",
    "rel_tol",
    "max_iter",
    "loading",
    "sizes",
    "output",
    "threads",
    "exact",
    "processes",
    "repeats",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("physics", "conduction"),
    ("variant", "filtered"),
    ("solver", "cg"),
    ("rel_tol", "1e-5"),
    ("max_iter", "1000"),
    ("output", "out"),
    ("threads", "0"),
    ("processes", "1,2,4"),
    ("repeats", "1"),
];

/// Where the phase map comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    File(PathBuf),
    Pack {
        path: PathBuf,
        side: usize,
    },
    Spheres {
        params: PackingParams,
        side: usize,
    },
    Laminate {
        dim: usize,
        side: usize,
        axis: usize,
    },
    Checkerboard {
        dim: usize,
        side: usize,
    },
    Uniform {
        dim: usize,
        side: usize,
    },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub dim: usize,
    pub physics: Physics,
    pub phases: Vec<(f64, f64)>,
    pub reference: (f64, f64),
    pub variant: GreenKind,
    pub solve: SolveConfig,
    pub loading: Vec<f64>,
    pub sizes: Vec<usize>,
    pub output: PathBuf,
    pub threads: usize,
    pub exact: Option<f64>,
    pub processes: Vec<usize>,
    pub repeats: usize,
    resolved: BTreeMap<String, String>,
}

/// Parses `key = value` lines into a map, rejecting unknown keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("config line {}: expected key = value", n + 1)))?;
        insert_pair(&mut map, k.trim(), v.trim())?;
    }
    Ok(map)
}

fn insert_pair(map: &mut BTreeMap<String, String>, k: &str, v: &str) -> Result<()> {
    if !KEYS.contains(&k) {
        return Err(Error::Format(format!("unknown config key '{k}'")));
    }
    map.insert(k.to_string(), v.to_string());
    Ok(())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad value '{v}' for {key}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

/// `name a=1 b=2` into the name and its attributes.
fn attributes(v: &str) -> Result<(String, BTreeMap<String, String>)> {
    let mut tokens = v.split_whitespace();
    let name = tokens
        .next()
        .ok_or_else(|| Error::Format("empty geometry".into()))?
        .to_string();
    let mut attrs = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("geometry attribute '{t}' is not key=value")))?;
        attrs.insert(k.to_string(), v.to_string());
    }
    Ok((name, attrs))
}

fn parse_geometry(v: &str) -> Result<Geometry> {
    let (name, attrs) = attributes(v)?;
    let get = |k: &str| {
        attrs
            .get(k)
            .ok_or_else(|| Error::Format(format!("geometry {name} needs {k}=")))
    };
    let int = |k: &str| -> Result<usize> { num(k, get(k)?) };
    let opt_int =
        |k: &str, d: usize| -> Result<usize> { attrs.get(k).map_or(Ok(d), |v| num(k, v)) };
    Ok(match name.as_str() {
        "file" => Geometry::File(PathBuf::from(get("path")?)),
        "pack" => Geometry::Pack {
            path: PathBuf::from(get("path")?),
            side: int("side")?,
        },
        "spheres" => Geometry::Spheres {
            params: PackingParams {
                count: int("count")?,
                radius: num("radius", get("radius")?)?,
                gap: attrs.get("gap").map_or(Ok(0.0), |v| num("gap", v))?,
                seed: attrs.get("seed").map_or(Ok(0), |v| num("seed", v))?,
                max_steps: attrs
                    .get("max_steps")
                    .map_or(Ok(50_000_000), |v| num("max_steps", v))?,
            },
            side: int("side")?,
        },
        "laminate" => Geometry::Laminate {
            dim: opt_int("dim", 1)?,
            side: int("side")?,
            axis: opt_int("axis", 0)?,
        },
        "checkerboard" => Geometry::Checkerboard {
            dim: opt_int("dim", 2)?,
            side: int("side")?,
        },
        "uniform" => Geometry::Uniform {
            dim: opt_int("dim", 3)?,
            side: int("side")?,
        },
        other => return Err(Error::Format(format!("unknown geometry '{other}'"))),
    })
}

/// `a` (conduction) or `mu/nu` (elasticity).
fn parse_material(key: &str, v: &str, physics: Physics) -> Result<(f64, f64)> {
    match physics {
        Physics::Conduction => Ok((num(key, v)?, 0.0)),
        Physics::Elasticity => {
            let (mu, nu) = v.split_once('/').ok_or_else(|| {
                Error::Format(format!("{key}: elasticity materials are written mu/nu"))
            })?;
            Ok((num(key, mu)?, num(key, nu)?))
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, overrides)
    }

    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut map = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("override '{o}' is not key=value")))?;
            insert_pair(&mut map, k.trim(), v.trim())?;
        }
        if let Ok(v) = std::env::var(ENV_OUTPUT) {
            map.insert("output".into(), v);
        }
        if let Ok(v) = std::env::var(ENV_THREADS) {
            map.insert("threads".into(), v);
        }
        for (k, v) in DEFAULTS {
            map.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let need = |k: &str| {
            map.get(k)
                .ok_or_else(|| Error::Format(format!("config lacks '{k}'")))
        };
        let geometry = parse_geometry(need("geometry")?)?;
        let physics = match need("physics")?.as_str() {
            "conduction" => Physics::Conduction,
            "elasticity" => Physics::Elasticity,
            other => return Err(Error::Format(format!("unknown physics '{other}'"))),
        };
        let phases = need("phases")?
            .split(',')
            .map(|s| parse_material("phases", s.trim(), physics))
            .collect::<Result<Vec<_>>>()?;
        if phases.is_empty() || phases.len() > 256 {
            return Err(Error::Format("phases must list 1 to 256 materials".into()));
        }
        let reference = parse_material("reference", need("reference")?, physics)?;
        let variant: GreenKind = need("variant")?.parse()?;
        let solver: SolverKind = need("solver")?.parse()?;
        let solve = SolveConfig::new(
            solver,
            num("rel_tol", need("rel_tol")?)?,
            num("max_iter", need("max_iter")?)?,
        )?;
        let sizes: Vec<usize> = list("sizes", need("sizes")?)?;
        if sizes.is_empty() {
            return Err(Error::Format(
                "sizes must list at least one grid size".into(),
            ));
        }
        let dim = match &geometry {
            Geometry::Laminate { dim, .. }
            | Geometry::Checkerboard { dim, .. }
            | Geometry::Uniform { dim, .. } => *dim,
            Geometry::Pack { .. } | Geometry::Spheres { .. } => 3,
            Geometry::File(path) => VoxelFile::load(path)?.grid.dim(),
        };
        let cfg = RunConfig {
            geometry,
            dim,
            physics,
            phases,
            reference,
            variant,
            solve,
            loading: Vec::new(),
            sizes,
            output: PathBuf::from(need("output")?),
            threads: num("threads", need("threads")?)?,
            exact: map.get("exact").map(|v| num("exact", v)).transpose()?,
            processes: list("processes", need("processes")?)?,
            repeats: num("repeats", need("repeats")?)?,
            resolved: map.clone(),
        };
        let loading = cfg.parse_loading(need("loading")?)?;
        let cfg = RunConfig { loading, ..cfg };
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_loading(&self, v: &str) -> Result<Vec<f64>> {
        let dim = self.dim();
        if let Some(rest) = v.strip_prefix("shear") {
            if self.physics != Physics::Elasticity {
                return Err(Error::Format("shear loading needs elasticity".into()));
            }
            let axes: Vec<usize> = rest
                .split_whitespace()
                .map(|t| num("loading", t))
                .collect::<Result<_>>()?;
            let (i, j) = match axes[..] {
                [] => (0, 1),
                [i, j] => (i, j),
                _ => return Err(Error::Format("loading: shear takes two axes".into())),
            };
            return shear_loading(dim, i, j);
        }
        list("loading", v)
    }

    /// Dimension implied by the geometry.
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn validate(&self) -> Result<()> {
        let m = self.physics.components(self.dim());
        if self.loading.len() != m {
            return Err(Error::Format(format!(
                "loading has {} components, expected {m}",
                self.loading.len()
            )));
        }
        if self.repeats == 0 || self.processes.contains(&0) {
            return Err(Error::Format(
                "repeats and process counts must be positive".into(),
            ));
        }
        self.material(self.reference)?;
        for &p in &self.phases {
            self.material(p)?;
        }
        Ok(())
    }

    pub fn material(&self, (a, nu): (f64, f64)) -> Result<PhaseTensor> {
        match self.physics {
            Physics::Conduction => PhaseTensor::isotropic_conduction(self.dim(), a),
            Physics::Elasticity => PhaseTensor::elasticity(self.dim(), a, nu),
        }
    }

    pub fn catalog(&self) -> Result<Vec<PhaseTensor>> {
        self.phases.iter().map(|&p| self.material(p)).collect()
    }

    pub fn reference_medium(&self) -> Result<PhaseTensor> {
        self.material(self.reference)
    }

    /// Builds the fine-grid microstructure.
    pub fn microstructure(&self) -> Result<Microstructure> {
        let catalog = self.catalog()?;
        match &self.geometry {
            Geometry::File(path) => {
                let file = VoxelFile::load(path)?;
                match file.data {
                    VoxelData::Phases(p) => Microstructure::new(file.grid, p, catalog),
                    VoxelData::Real { .. } => Err(Error::Format(
                        "geometry file must be a phase-index file".into(),
                    )),
                }
            }
            Geometry::Pack { path, side } => {
                let pack = SpherePack::from_text(&std::fs::read_to_string(path)?)?;
                voxelize(&pack, *side, catalog)
            }
            Geometry::Spheres { params, side } => {
                voxelize(&generate_hard_spheres(params)?, *side, catalog)
            }
            Geometry::Laminate { dim, side, axis } => {
                Microstructure::laminate(Grid::new(*dim, *side)?, *axis, catalog)
            }
            Geometry::Checkerboard { dim, side } => {
                Microstructure::checkerboard(Grid::new(*dim, *side)?, catalog)
            }
            Geometry::Uniform { dim, side } => {
                let first = catalog.into_iter().next().expect("validated non-empty");
                Microstructure::uniform(Grid::new(*dim, *side)?, first)
            }
        }
    }

    /// The fully resolved configuration, one `key = value` line per key.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
