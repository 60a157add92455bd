//! Flat `section.key = value` run configuration.
//!
//! Every key is declared in [`KEYS`]; anything else is rejected. Blocks are
//! validated, and the steady profile built, before any command runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::dispersion::ModeSolver;
use crate::eigen::pencil_solvers;
use crate::eos::pressure_laws;
use crate::error::{Error, Result, Side};
use crate::mesh::Mesh;
use crate::profile::{build_profile, Fluid, SlabGeometry, SteadyProfile};
use crate::registry::Params;
use crate::synthesis::Bump;
use crate::viscosity::viscosity_laws;

/// Declared key, its default (if any) and a one-line description.
pub struct KeySpec {
    pub key: &'static str,
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

const fn k(key: &'static str, default: Option<&'static str>, doc: &'static str) -> KeySpec {
    KeySpec { key, default, doc }
}

pub const KEYS: &[KeySpec] = &[
    k("geometry.m", Some("1"), "depth of the lower layer, x3 in [-m, 0]"),
    k("geometry.ell", Some("1"), "height of the upper layer, x3 in [0, ell]"),
    k("geometry.g", Some("1"), "gravitational acceleration, > 0"),
    k("geometry.sigma", Some("0.1"), "surface tension, >= 0"),
    k("geometry.L", None, "horizontal period: the cell is (2 pi L T)^2; absent means the plane"),
    k("fluid.lower.law", Some("polytropic"), "pressure law below: polytropic | tabulated"),
    k("fluid.lower.K", Some("2"), "polytropic constant below, P = K rho^gamma"),
    k("fluid.lower.gamma", Some("1"), "polytropic exponent below, >= 1"),
    k("fluid.lower.table", None, "CSV with header `rho,P` for a tabulated law below"),
    k("fluid.lower.rho0", Some("1"), "lower density at the interface"),
    k("fluid.upper.law", Some("polytropic"), "pressure law above: polytropic | tabulated"),
    k("fluid.upper.K", Some("1"), "polytropic constant above"),
    k("fluid.upper.gamma", Some("1"), "polytropic exponent above"),
    k("fluid.upper.table", None, "CSV with header `rho,P` for a tabulated law above"),
    k("viscosity.lower.kind", Some("constant"), "viscosity law below: constant | power"),
    k("viscosity.lower.eps", None, "shear viscosity coefficient below (default 0.1)"),
    k("viscosity.lower.delta", None, "bulk viscosity coefficient below (default 0)"),
    k("viscosity.lower.eps_exp", None, "power law: eps * rho^eps_exp"),
    k("viscosity.lower.delta_exp", None, "power law: delta * rho^delta_exp"),
    k("viscosity.upper.kind", Some("constant"), "viscosity law above: constant | power"),
    k("viscosity.upper.eps", None, "shear viscosity coefficient above (default 0.1)"),
    k("viscosity.upper.delta", None, "bulk viscosity coefficient above (default 0)"),
    k("viscosity.upper.eps_exp", None, "power law: eps * rho^eps_exp"),
    k("viscosity.upper.delta_exp", None, "power law: delta * rho^delta_exp"),
    k("mesh.elements", Some("256"), "finite elements per layer"),
    k("mesh.order", Some("2"), "Lagrange order of the elements: 1 | 2"),
    k("solver.eigen", Some("auto"), "pencil eigensolver: dense | shift-invert | auto"),
    k("sweep.n", Some("48"), "number of log-spaced samples"),
    k("sweep.xi_min", None, "smallest sampled |xi| (default 0.02 xi_c)"),
    k("sweep.xi_max", None, "largest sampled |xi| (default 0.98 xi_c; required when sigma = 0)"),
    k("lattice.L", None, "period for `lattice` (default geometry.L, else 1)"),
    k("lattice.xi_cap", None, "largest lattice |xi| considered (required when sigma = 0)"),
    k("synthesis.mode", Some("nonperiodic"), "nonperiodic | periodic (periodic uses lattice.L)"),
    k("synthesis.f.a", None, "inner radius of the bump support (default 0.3 xi_c)"),
    k("synthesis.f.b", None, "outer radius of the bump support (default 0.7 xi_c)"),
    k("synthesis.f.amp", Some("1"), "bump amplitude"),
    k("synthesis.radial", Some("16"), "Gauss nodes across the bump support"),
    k("synthesis.angular", Some("64"), "minimum (even) trapezoid nodes in angle"),
    k("synthesis.extent", Some("10"), "nonperiodic grids span x1, x2 in [-extent, extent]"),
    k("evolution.xi", None, "frequency to integrate (default: the sweep argmax)"),
    k("evolution.T", None, "horizon (default 5 / lambda, or 50 when stable)"),
    k("evolution.dt", None, "step (default min(1e-2, 1e-2 / lambda))"),
    k("evolution.data", Some("mode"), "initial data: mode (growing mode) | random (smooth random)"),
    k("evolution.seed", Some("1"), "seed for random initial data"),
    k("stability.L", None, "small cell period (default 0.95 of the critical period)"),
    k("stability.modes", Some("8"), "smallest lattice magnitudes carrying random data"),
    k("stability.T", Some("50"), "stability horizon"),
    k("stability.seed", Some("1"), "seed for the stability data"),
    k("output.dir", Some("."), "directory for run.meta"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMode {
    Periodic,
    Nonperiodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    Mode,
    Random,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: SlabGeometry,
    pub rho_minus: f64,
    pub elements: usize,
    pub order: usize,
    pub eigen: String,
    pub sweep_n: usize,
    pub sweep_xi_min: Option<f64>,
    pub sweep_xi_max: Option<f64>,
    pub lattice_period: Option<f64>,
    pub lattice_xi_cap: Option<f64>,
    pub synthesis_mode: SynthesisMode,
    pub bump_a: Option<f64>,
    pub bump_b: Option<f64>,
    pub bump_amp: f64,
    pub radial: usize,
    pub angular: usize,
    pub extent: f64,
    pub evolution_xi: Option<f64>,
    pub evolution_t: Option<f64>,
    pub evolution_dt: Option<f64>,
    pub evolution_data: InitialData,
    pub evolution_seed: u64,
    pub stability_period: Option<f64>,
    pub stability_modes: usize,
    pub stability_t: f64,
    pub stability_seed: u64,
    pub output_dir: PathBuf,
    /// Resolved values, defaults included, used for hashing.
    resolved: BTreeMap<String, String>,
    profile: Arc<SteadyProfile>,
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|s| s.key == key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1)));
        }
        if value.is_empty() {
            return Err(Error::Config(format!("line {}: `{key}` has no value", n + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: `{key}` given twice", n + 1)));
        }
    }
    Ok(out)
}

struct Lookup<'a>(&'a BTreeMap<String, String>);

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).or_else(|| {
            KEYS.iter()
                .find(|s| s.key == key)
                .and_then(|s| s.default)
        })
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Config(format!("`{key}`: expected a finite number, got `{v}`")))
            })
            .transpose()
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| Error::Config(format!("`{key}` is required")))
    }

    fn positive_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.f64_opt(key)? {
            Some(v) if !(v > 0.0) => Err(Error::Config(format!("`{key}` must be positive, got {v}"))),
            o => Ok(o),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key).ok_or_else(|| Error::Config(format!("`{key}` is required")))?;
        v.parse()
            .map_err(|_| Error::Config(format!("`{key}`: expected a nonnegative integer, got `{v}`")))
    }

    fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }
}

impl RunConfig {
    /// Configuration with every key at its default.
    pub fn defaults() -> Result<Self> {
        Self::from_pairs(BTreeMap::new(), None)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::from_str_in(&text, path.parent())
    }

    /// Parse config text; relative table paths resolve against `base`.
    pub fn from_str_in(text: &str, base: Option<&Path>) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?, base)
    }

    /// Apply `key=value` overrides on top of the given pairs.
    pub fn from_pairs_with(
        mut pairs: BTreeMap<String, String>,
        overrides: &[(String, String)],
        base: Option<&Path>,
    ) -> Result<Self> {
        for (k, v) in overrides {
            if !KEYS.iter().any(|s| s.key == k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            pairs.insert(k.clone(), v.clone());
        }
        Self::from_pairs(pairs, base)
    }

    pub fn from_pairs(pairs: BTreeMap<String, String>, base: Option<&Path>) -> Result<Self> {
        let l = Lookup(&pairs);
        let geometry = SlabGeometry {
            m: l.f64("geometry.m")?,
            ell: l.f64("geometry.ell")?,
            g: l.f64("geometry.g")?,
            sigma: l.f64("geometry.sigma")?,
            period: l.f64_opt("geometry.L")?,
        };
        geometry.validate()?;
        let rho_minus = l.f64("fluid.lower.rho0")?;
        if !(rho_minus > 0.0) {
            return Err(Error::Config(format!("`fluid.lower.rho0` must be positive, got {rho_minus}")));
        }
        let lower = build_fluid(&pairs, Side::Lower, base)?;
        let upper = build_fluid(&pairs, Side::Upper, base)?;
        let profile = Arc::new(build_profile(lower, upper, rho_minus, geometry.clone())?);

        let elements = l.usize("mesh.elements")?;
        let order = l.usize("mesh.order")?;
        if elements == 0 {
            return Err(Error::Config("`mesh.elements` must be at least 1".into()));
        }
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!("`mesh.order` must be 1 or 2, got {order}")));
        }
        let eigen = l.string("solver.eigen").unwrap_or_default();
        pencil_solvers().build(&eigen, &Params::new())?;

        let sweep_n = l.usize("sweep.n")?;
        if sweep_n == 0 {
            return Err(Error::Config("`sweep.n` must be at least 1".into()));
        }
        let sweep_xi_min = l.positive_opt("sweep.xi_min")?;
        let sweep_xi_max = l.positive_opt("sweep.xi_max")?;
        if geometry.sigma == 0.0 && sweep_xi_max.is_none() {
            return Err(Error::Config("without surface tension `sweep.xi_max` is required".into()));
        }
        let lattice_period = l.positive_opt("lattice.L")?;
        let lattice_xi_cap = l.positive_opt("lattice.xi_cap")?;

        let synthesis_mode = match l.string("synthesis.mode").as_deref() {
            Some("nonperiodic") => SynthesisMode::Nonperiodic,
            Some("periodic") => SynthesisMode::Periodic,
            other => {
                return Err(Error::Config(format!(
                    "`synthesis.mode` must be periodic or nonperiodic, got `{}`",
                    other.unwrap_or("")
                )))
            }
        };
        let bump_a = l.positive_opt("synthesis.f.a")?;
        let bump_b = l.positive_opt("synthesis.f.b")?;
        let bump_amp = l.f64("synthesis.f.amp")?;
        let radial = l.usize("synthesis.radial")?;
        let angular = l.usize("synthesis.angular")?;
        if radial == 0 || angular < 4 || angular % 2 == 1 {
            return Err(Error::Config(
                "`synthesis.radial` must be >= 1 and `synthesis.angular` even and >= 4".into(),
            ));
        }
        let extent = l.positive_opt("synthesis.extent")?.unwrap_or(10.0);

        let evolution_data = match l.string("evolution.data").as_deref() {
            Some("mode") => InitialData::Mode,
            Some("random") => InitialData::Random,
            other => {
                return Err(Error::Config(format!(
                    "`evolution.data` must be mode or random, got `{}`",
                    other.unwrap_or("")
                )))
            }
        };
        let seed = |key: &str| -> Result<u64> {
            let v = l.raw(key).unwrap_or("0");
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}`: expected a nonnegative integer, got `{v}`")))
        };
        let cfg = RunConfig {
            geometry,
            rho_minus,
            elements,
            order,
            eigen,
            sweep_n,
            sweep_xi_min,
            sweep_xi_max,
            lattice_period,
            lattice_xi_cap,
            synthesis_mode,
            bump_a,
            bump_b,
            bump_amp,
            radial,
            angular,
            extent,
            evolution_xi: l.positive_opt("evolution.xi")?,
            evolution_t: l.positive_opt("evolution.T")?,
            evolution_dt: l.positive_opt("evolution.dt")?,
            evolution_data,
            evolution_seed: seed("evolution.seed")?,
            stability_period: l.positive_opt("stability.L")?,
            stability_modes: l.usize("stability.modes")?,
            stability_t: l.positive_opt("stability.T")?.unwrap_or(50.0),
            stability_seed: seed("stability.seed")?,
            output_dir: PathBuf::from(l.string("output.dir").unwrap_or_else(|| ".".into())),
            resolved: KEYS
                .iter()
                .filter_map(|s| l.raw(s.key).map(|v| (s.key.to_string(), v.to_string())))
                .collect(),
            profile,
        };
        Ok(cfg)
    }

    pub fn profile(&self) -> &Arc<SteadyProfile> {
        &self.profile
    }

    pub fn mesh(&self) -> Result<Mesh> {
        self.mesh_with(self.elements)
    }

    pub fn mesh_with(&self, per_side: usize) -> Result<Mesh> {
        Mesh::uniform(self.geometry.m, self.geometry.ell, per_side, self.order)
    }

    pub fn solver(&self) -> Result<ModeSolver> {
        self.solver_with(self.elements)
    }

    /// Solver on a mesh with `per_side` elements in each layer.
    pub fn solver_with(&self, per_side: usize) -> Result<ModeSolver> {
        let eigen = pencil_solvers().build(&self.eigen, &Params::new())?;
        ModeSolver::new(Arc::clone(&self.profile), Arc::new(self.mesh_with(per_side)?), eigen)
    }

    /// Sweep range, defaulting to `[0.02, 0.98] xi_c`.
    pub fn sweep_range(&self) -> (f64, f64) {
        let xi_c = self.profile.xi_c();
        (
            self.sweep_xi_min.unwrap_or(0.02 * xi_c),
            self.sweep_xi_max.unwrap_or(0.98 * xi_c),
        )
    }

    pub fn lattice_period(&self) -> f64 {
        self.lattice_period.or(self.geometry.period).unwrap_or(1.0)
    }

    pub fn bump(&self) -> Bump {
        let d = Bump::default_for(self.profile.xi_c());
        Bump {
            a: self.bump_a.unwrap_or(d.a),
            b: self.bump_b.unwrap_or(d.b),
            amp: self.bump_amp,
        }
    }

    pub fn stability_period(&self) -> f64 {
        self.stability_period
            .unwrap_or(0.95 * crate::dispersion::critical_period(&self.profile))
    }

    /// Resolved `key = value` listing, defaults included, in key order.
    pub fn canonical(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults().expect("built-in defaults are valid")
    }
}

fn build_fluid(pairs: &BTreeMap<String, String>, side: Side, base: Option<&Path>) -> Result<Fluid> {
    let name = match side {
        Side::Lower => "lower",
        Side::Upper => "upper",
    };
    let l = Lookup(pairs);
    let law = l.string(&format!("fluid.{name}.law")).unwrap_or_default();
    let accepted = pressure_laws().accepted_keys(&law)?;
    let mut params = Params::new();
    for key in accepted {
        let full = format!("fluid.{name}.{key}");
        // defaults apply only to the chosen law's own keys
        let value = match pairs.get(&full) {
            Some(v) => Some(v.clone()),
            None if law == "polytropic" => l.string(&full),
            None => None,
        };
        if let Some(mut v) = value {
            if *key == "table" {
                if let Some(b) = base {
                    v = b.join(&v).to_string_lossy().into_owned();
                }
            }
            params.insert(key.to_string(), v);
        }
    }
    for key in ["K", "gamma", "table"] {
        if !accepted.contains(&key) && pairs.contains_key(&format!("fluid.{name}.{key}")) {
            return Err(Error::Config(format!("`fluid.{name}.{key}` does not apply to law `{law}`")));
        }
    }
    let law = pressure_laws()
        .build(&law, &params)
        .map_err(|e| prefix(e, &format!("fluid.{name}")))?;
    let kind = l.string(&format!("viscosity.{name}.kind")).unwrap_or_default();
    let mut vparams = Params::new();
    for key in ["eps", "delta", "eps_exp", "delta_exp"] {
        if let Some(v) = pairs.get(&format!("viscosity.{name}.{key}")) {
            vparams.insert(key.to_string(), v.clone());
        }
    }
    let viscosity = viscosity_laws()
        .build(&kind, &vparams)
        .map_err(|e| prefix(e, &format!("viscosity.{name}")))?;
    Ok(Fluid { law, viscosity })
}

fn prefix(e: Error, block: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{block}: {m}")),
        Error::Domain(m) => Error::Config(format!("{block}: {m}")),
        other => other,
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (`key = value`, `#` comments):\n");
    for spec in KEYS {
        let d = spec.default.map(|d| format!(" [default {d}]")).unwrap_or_default();
        s.push_str(&format!("  {:<26} {}{}\n", spec.key, spec.doc, d));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_the_reference_profile() {
        let c = RunConfig::defaults().unwrap();
        assert_eq!(c.elements, 256);
        assert!((c.profile().rho_plus - 2.0).abs() < 1e-12);
        assert!((c.profile().xi_c() - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(RunConfig::from_str_in("geometry.sigm = 1", None), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_str_in("geometry.g = 1\ngeometry.g = 2", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_str_in("geometry.g", None), Err(Error::Config(_))));
    }

    #[test]
    fn negative_sigma_names_the_key() {
        match RunConfig::from_str_in("geometry.sigma = -1", None) {
            Err(Error::Config(m)) => assert!(m.contains("geometry.sigma"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn law_specific_keys() {
        let e = RunConfig::from_str_in("fluid.upper.law = tabulated\nfluid.upper.K = 1", None).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let e = RunConfig::from_str_in("viscosity.lower.eps_exp = 1", None).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e:?}");
        let c = RunConfig::from_str_in("viscosity.lower.kind = power\nviscosity.lower.eps_exp = 1", None).unwrap();
        assert_eq!(c.elements, 256);
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = RunConfig::from_str_in("geometry.g = 1", None).unwrap();
        let b = RunConfig::defaults().unwrap();
        let c = RunConfig::from_str_in("geometry.g = 1.5", None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        assert!(KEYS.iter().all(|k| h.contains(k.key)));
    }
}
