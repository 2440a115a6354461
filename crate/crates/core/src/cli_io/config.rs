//! Run configuration: TOML in, validated, hashed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::map_model::{builtin_cat_map, builtin_chart_model, builtin_perturbed_cat, Bump, MapSystem, Weight, CHART_G, EPS_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapId {
    Cat,
    PerturbedCat,
    Chart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub id: MapId,
    #[serde(default)]
    pub eps: f64,
    /// Perturbation seed; 0 is the canonical perturbation.
    #[serde(default)]
    pub seed: u64,
    /// Overrides the smoothness r of the map (C^∞ when absent).
    #[serde(default)]
    pub smoothness: Option<f64>,
}

/// Weight g, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightSpec {
    One,
    Constant { value: f64 },
    Bump { center: [f64; 2], radius: f64, height: f64 },
    /// c0 + c1·cos 2πx₁ + c2·cos 2πx₂.
    Cos { coeffs: [f64; 3] },
}

impl WeightSpec {
    pub fn to_weight(&self) -> Weight {
        match *self {
            WeightSpec::One => Weight::One,
            WeightSpec::Constant { value } => Weight::Constant(value),
            WeightSpec::Bump { center, radius, height } => Weight::Bump(Bump { center, radius, height }),
            WeightSpec::Cos { coeffs } => Weight::CosSum(coeffs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceSpec {
    /// Matching disc |z| < radius.
    pub radius: f64,
    pub match_tol: f64,
    /// Relative N-vs-2N tolerance for the stability filter.
    pub stability_tol: f64,
    /// Ritz values above this residual are dropped before filtering.
    pub max_residual: f64,
    pub grid_factor: usize,
    /// Directory for cached periodic-orbit sets.
    pub orbit_cache: Option<PathBuf>,
}

impl Default for ResonanceSpec {
    fn default() -> Self {
        ResonanceSpec {
            radius: 1.5,
            match_tol: 1e-4,
            stability_tol: 1e-6,
            max_residual: 1e-6,
            grid_factor: 4,
            orbit_cache: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub t_grid: Vec<f64>,
    /// Range of m for the sup inequality.
    pub sup_m_max: usize,
    /// Q_* and ρ_* are evaluated for m ≤ these (0 skips them).
    pub cover_m_max: usize,
    pub partition_m_max: usize,
    pub cover_boxes: usize,
    pub partition_pieces: usize,
    pub tol_cross: f64,
    pub negative_control: bool,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec {
            t_grid: vec![0.5, 1.0, 2.0, 4.0],
            sup_m_max: 6,
            cover_m_max: 4,
            partition_m_max: 4,
            cover_boxes: 4,
            partition_pieces: 4,
            tol_cross: 0.05,
            negative_control: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisoSpec {
    pub matrix_n_max: u32,
    pub per_band: usize,
    pub young_trials: usize,
    pub trace_n0: u32,
    pub iterates: Vec<usize>,
    pub z_samples: usize,
    pub z_radius: f64,
}

impl Default for AnisoSpec {
    fn default() -> Self {
        AnisoSpec {
            matrix_n_max: 6,
            per_band: 3,
            young_trials: 100,
            trace_n0: 8,
            iterates: vec![10, 12, 10],
            z_samples: 8,
            z_radius: 0.1,
        }
    }
}

fn default_n_det() -> usize {
    14
}
fn default_m_max() -> usize {
    10
}
fn default_mc() -> usize {
    2000
}
fn default_n_max_aniso() -> u32 {
    8
}
fn default_n_freq() -> usize {
    32
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    /// Map default when absent.
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    pub p: f64,
    pub q: f64,
    #[serde(default = "default_n_det")]
    pub n_det: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_n_max_aniso")]
    pub n_max_aniso: u32,
    #[serde(default = "default_n_freq")]
    pub n_freq: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub resonances: ResonanceSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub aniso: AnisoSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hard invariants; soft ones come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.p.is_finite() && self.q.is_finite()) {
            return bad("p and q must be finite".into());
        }
        if self.q > 0.0 || self.p < 0.0 {
            return bad(format!("need q ≤ 0 ≤ p, got p = {}, q = {}", self.p, self.q));
        }
        for (name, v) in [
            ("n_det", self.n_det),
            ("m_max", self.m_max),
            ("mc_samples", self.mc_samples),
            ("n_freq", self.n_freq),
            ("bounds.sup_m_max", self.bounds.sup_m_max),
            ("resonances.grid_factor", self.resonances.grid_factor),
            ("aniso.per_band", self.aniso.per_band),
            ("aniso.z_samples", self.aniso.z_samples),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_max_aniso == 0 {
            return bad("n_max_aniso must be positive".into());
        }
        if self.m_max < 4 {
            return bad(format!("m_max = {} leaves fewer than 4 rows for the growth-rate fit", self.m_max));
        }
        if self.map.eps.abs() > EPS_MAX || !self.map.eps.is_finite() {
            return bad(format!("|eps| = {} exceeds {EPS_MAX}", self.map.eps));
        }
        if self.bounds.t_grid.is_empty() || self.bounds.t_grid.iter().any(|t| !(*t > 0.0)) {
            return bad("bounds.t_grid must be a non-empty list of positive numbers".into());
        }
        if self.aniso.iterates.is_empty() || self.aniso.iterates.contains(&0) {
            return bad("aniso.iterates must be a non-empty list of positive integers".into());
        }
        if !(self.resonances.radius > 0.0 && self.resonances.match_tol > 0.0) {
            return bad("resonances.radius and resonances.match_tol must be positive".into());
        }
        let mut warnings = Vec::new();
        if self.p == 0.0 || self.q == 0.0 {
            warnings.push(format!("degenerate exponents p = {}, q = {} (q < 0 < p expected)", self.p, self.q));
        }
        if let Some(r) = self.map.smoothness {
            if r.is_finite() && self.p - self.q >= r - 1.0 {
                warnings.push(format!("p − q = {} ≥ r − 1 = {}", self.p - self.q, r - 1.0));
            }
        }
        if self.map.id == MapId::Cat && self.map.eps != 0.0 {
            warnings.push("eps is ignored for the unperturbed cat map".into());
        }
        Ok(warnings)
    }

    pub fn system(&self) -> Result<MapSystem, CliError> {
        let mut sys = match self.map.id {
            MapId::Cat => builtin_cat_map(),
            MapId::PerturbedCat => builtin_perturbed_cat(self.map.eps, self.map.seed).map_err(CliError::config)?,
            MapId::Chart => builtin_chart_model(self.map.eps).map_err(CliError::config)?.0,
        };
        if let Some(w) = &self.weight {
            sys = sys.with_weight(w.to_weight());
        }
        if let Some(r) = self.map.smoothness {
            sys.smoothness = r;
        }
        Ok(sys)
    }

    /// Chart weight G for the aniso suite (a bump; height 0 gives G ≡ 0).
    pub fn chart_weight(&self) -> Result<Bump, CliError> {
        match &self.weight {
            None => Ok(CHART_G),
            Some(WeightSpec::Bump { center, radius, height }) => Ok(Bump { center: *center, radius: *radius, height: *height }),
            Some(WeightSpec::Constant { value }) if *value == 0.0 => Ok(Bump { height: 0.0, ..CHART_G }),
            Some(w) => Err(CliError::Config(format!("the aniso suite needs a compactly supported bump weight, got {w:?}"))),
        }
    }

    /// SHA-256 of the canonical JSON form, with the output directory blanked
    /// so that identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.resonances.orbit_cache = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
