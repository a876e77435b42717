//! JSON run configuration.
//!
//! Every field is optional; missing ones take the defaults of the selected
//! `mode` (`real_data` unless stated). Unknown fields are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::basis::{build_bspline_design, build_modulation_design, build_simulation_design, DesignMatrix};
use crate::error::{Error, Result};
use crate::graph::{NetworkKind, SweepOrder};
use crate::mcmc::{BurnInGate, McmcConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    RealData,
    Simulation,
}

/// Regression design used for every cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    /// `(t/100, cos 3 pi t/100, sin 3 pi t/100)`.
    Simulation,
    /// Cubic B-splines with `J` functions.
    BSpline(usize),
    /// Trend plus modulated harmonics, sized by [`BasisSpec`].
    Modulation,
}

impl FromStr for DesignChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulation" => Ok(DesignChoice::Simulation),
            "modulation" => Ok(DesignChoice::Modulation),
            _ => s
                .strip_prefix("bspline:")
                .and_then(|j| j.parse().ok())
                .map(DesignChoice::BSpline)
                .ok_or_else(|| Error::invalid(format!("unknown design `{s}`"))),
        }
    }
}

impl fmt::Display for DesignChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignChoice::Simulation => f.write_str("simulation"),
            DesignChoice::BSpline(j) => write!(f, "bspline:{j}"),
            DesignChoice::Modulation => f.write_str("modulation"),
        }
    }
}

/// Sizes of the modulation design.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    pub j1: usize,
    pub j2: usize,
    pub j3: usize,
    /// Number of harmonics `D`.
    pub d: usize,
    pub period: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            j1: 7,
            j2: 8,
            j3: 4,
            d: 2,
            period: 12.0,
        }
    }
}

impl DesignChoice {
    pub fn build<F: Real>(&self, n_times: usize, basis: &BasisSpec) -> Result<DesignMatrix<F>> {
        match *self {
            DesignChoice::Simulation => build_simulation_design(n_times),
            DesignChoice::BSpline(j) => build_bspline_design(j, n_times),
            DesignChoice::Modulation => {
                build_modulation_design(n_times, basis.j1, basis.j2, basis.j3, basis.d, basis.period)
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    p: Option<f64>,
    k: Option<usize>,
    k_range: Option<[usize; 2]>,
    iters: Option<usize>,
    burn_in: Option<usize>,
    prior_a: Option<f64>,
    prior_g: Option<f64>,
    prior_s0: Option<f64>,
    prior_d0: Option<f64>,
    beta_max: Option<f64>,
    prop_var_alpha: Option<f64>,
    prop_var_beta: Option<f64>,
    beta_init: Option<f64>,
    beta_fixed: Option<f64>,
    aux_sweeps: Option<usize>,
    sweep_order: Option<String>,
    burn_in_gate: Option<String>,
    seed: Option<u64>,
    network: Option<String>,
    design: Option<String>,
    basis: Option<BasisSpec>,
    normalize: Option<bool>,
    panel: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// Sampler settings in double precision; see [`RunConfig::to_mcmc`].
    pub mcmc: McmcConfig<f64>,
    /// Inclusive cluster-count range scanned by model selection.
    pub k_range: (usize, usize),
    pub network: NetworkKind,
    pub design: DesignChoice,
    pub basis: BasisSpec,
    /// Convert each series to normalized anomalies before fitting.
    pub normalize: bool,
    pub panel: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(mode: Mode) -> Self {
        match mode {
            Mode::RealData => Self {
                mode,
                mcmc: McmcConfig::real_data(6),
                k_range: (2, 8),
                network: NetworkKind::Lattice(8),
                design: DesignChoice::Modulation,
                basis: BasisSpec::default(),
                normalize: true,
                panel: None,
                out: None,
            },
            Mode::Simulation => Self {
                mode,
                mcmc: McmcConfig::simulation(3),
                k_range: (2, 8),
                network: NetworkKind::Lattice(4),
                design: DesignChoice::Simulation,
                basis: BasisSpec::default(),
                normalize: false,
                panel: None,
                out: None,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            field: "<document>".into(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::defaults(raw.mode.unwrap_or_default());
        let m = &mut cfg.mcmc;
        macro_rules! take {
            ($($name:ident),*) => { $( if let Some(v) = raw.$name { m.$name = v; } )* };
        }
        take!(p, k, iters, burn_in, prior_a, prior_g, prior_s0, prior_d0, beta_max);
        take!(prop_var_alpha, prop_var_beta, beta_init, aux_sweeps, seed);
        m.beta_fixed = raw.beta_fixed;
        if let Some(order) = raw.sweep_order {
            m.sweep_order = match order.as_str() {
                "sequential" => SweepOrder::Sequential,
                "random" => SweepOrder::Random,
                _ => return Err(field_error("sweep_order", format!("unknown order `{order}`"))),
            };
        }
        if let Some(gate) = raw.burn_in_gate {
            m.burn_in_gate = match gate.as_str() {
                "hold" => BurnInGate::Hold,
                "open" => BurnInGate::Open,
                _ => return Err(field_error("burn_in_gate", format!("unknown gate `{gate}`"))),
            };
        }
        if let Some([lo, hi]) = raw.k_range {
            cfg.k_range = (lo, hi);
        }
        if let Some(n) = raw.network {
            cfg.network = n.parse().map_err(|e: Error| field_error("network", e.to_string()))?;
        }
        if let Some(d) = raw.design {
            cfg.design = d.parse().map_err(|e: Error| field_error("design", e.to_string()))?;
        }
        if let Some(b) = raw.basis {
            cfg.basis = b;
        }
        if let Some(n) = raw.normalize {
            cfg.normalize = n;
        }
        cfg.panel = raw.panel;
        cfg.out = raw.out;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        let (lo, hi) = self.k_range;
        if lo < 1 || lo > hi {
            return Err(field_error("k_range", format!("invalid range [{lo}, {hi}]")));
        }
        for (name, v) in [("basis.j1", self.basis.j1), ("basis.j2", self.basis.j2), ("basis.j3", self.basis.j3)] {
            if v < 4 {
                return Err(field_error(name, format!("cubic splines need at least 4 functions, got {v}")));
            }
        }
        if self.basis.d < 1 {
            return Err(field_error("basis.d", "need at least one harmonic".into()));
        }
        if !(self.basis.period > 0.0) {
            return Err(field_error("basis.period", "must be positive".into()));
        }
        if let DesignChoice::BSpline(j) = self.design {
            if j < 4 {
                return Err(field_error("design", format!("cubic splines need at least 4 functions, got {j}")));
            }
        }
        Ok(())
    }

    /// Sampler settings at precision `F`.
    pub fn to_mcmc<F: Real>(&self) -> McmcConfig<F> {
        self.mcmc.cast()
    }
}

fn field_error(field: &str, message: String) -> Error {
    Error::Config {
        field: field.into(),
        message,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_real_data_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::defaults(Mode::RealData));
        let m = &cfg.mcmc;
        assert_eq!((m.p, m.iters, m.burn_in, m.beta_max), (0.5, 3000, 500, 100.0));
        assert_eq!((m.prop_var_alpha, m.prop_var_beta), (0.1, 1.0));
        assert_eq!(cfg.k_range, (2, 8));
    }

    #[test]
    fn simulation_mode_defaults() {
        let cfg = RunConfig::from_json(r#"{"mode": "simulation"}"#).unwrap();
        let m = &cfg.mcmc;
        assert_eq!((m.iters, m.burn_in, m.beta_max), (1000, 300, 10.0));
        assert_eq!((m.prop_var_beta, m.beta_init), (0.04, 2.0));
        assert_eq!(cfg.network, NetworkKind::Lattice(4));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_json(
            r#"{"k": 4, "network": "knn:6", "design": "bspline:6", "beta_fixed": 0,
                "basis": {"j1": 5}, "sweep_order": "random"}"#,
        )
        .unwrap();
        assert_eq!(cfg.mcmc.k, 4);
        assert_eq!(cfg.network, NetworkKind::Knn(6));
        assert_eq!(cfg.design, DesignChoice::BSpline(6));
        assert_eq!(cfg.mcmc.beta_fixed, Some(0.0));
        assert_eq!(cfg.basis.j1, 5);
        assert_eq!(cfg.basis.j2, 8);
        assert_eq!(cfg.mcmc.sweep_order, SweepOrder::Random);
        let m32 = cfg.to_mcmc::<f32>();
        assert_eq!(m32.beta_fixed, Some(0.0f32));
    }

    #[test]
    fn burn_in_must_be_below_iters() {
        let err = RunConfig::from_json(r#"{"iters": 100, "burn_in": 100}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "burn_in"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = RunConfig::from_json(r#"{"iterations": 10}"#).unwrap_err();
        assert!(err.to_string().contains("iterations"), "{err}");
        let err = RunConfig::from_json(r#"{"basis": {"j4": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("j4"), "{err}");
    }

    #[test]
    fn bad_values_name_their_field() {
        let cases = [
            (r#"{"network": "5nn"}"#, "network"),
            (r#"{"p": 1.5}"#, "p"),
            (r#"{"basis": {"j2": 2}}"#, "basis.j2"),
            (r#"{"k_range": [5, 3]}"#, "k_range"),
        ];
        for (doc, field) in cases {
            match RunConfig::from_json(doc) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn design_round_trips_through_text() {
        for d in [DesignChoice::Simulation, DesignChoice::BSpline(6), DesignChoice::Modulation] {
            assert_eq!(d.to_string().parse::<DesignChoice>().unwrap(), d);
        }
        assert!("bspline:x".parse::<DesignChoice>().is_err());
    }
}
