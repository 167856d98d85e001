//! JSON run configurations.
//!
//! Complex numbers are `[re, im]` pairs and frequencies are integer vectors
//! of length `2n`. Every section except `geometry` and `bundle` has defaults.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::GaugeOptions;
use crate::higgs::{HiggsPairConfig, MetricSpec};
use crate::hodge::{HodgeOptions, MIN_GAP};
use crate::kuranishi::{FixedPointOptions, DEFAULT_MAX_ORDER};
use crate::torus::{Dealias, TorusGeometry};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub geometry: GeometryConfig,
    pub bundle: BundleConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub identities: IdentitiesConfig,
    #[serde(default)]
    pub kuranishi: KuranishiConfig,
    #[serde(default)]
    pub gauge: GaugeConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: usize,
    pub cutoff: usize,
    #[serde(default)]
    pub dealias: Dealias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub rank: usize,
    pub metric: MetricSpec,
    /// `n` constant `r x r` matrices, given as lists of rows.
    pub theta: Vec<Vec<Vec<C64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub validation: f64,
    pub kernel_threshold: f64,
    pub min_gap: f64,
    pub hodge: f64,
    pub mc: f64,
    pub matching: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { identity: 1e-10, validation: 1e-8, kernel_threshold: 1e-8, min_gap: MIN_GAP, hodge: 1e-8, mc: 1e-8, matching: 1e-6 }
    }
}

/// Sample counts for the residual suites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    /// Random inputs per degree combination or identity.
    pub samples: usize,
    /// Frequency band of the random inputs.
    pub band: usize,
    /// Largest output degree of the axiom checks.
    pub max_degree: usize,
    /// Random degree-1 elements for the flatness check.
    pub flatness_samples: usize,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        IdentitiesConfig { samples: 20, band: 1, max_degree: 4, flatness_samples: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KuranishiConfig {
    pub max_order: usize,
    pub radius: f64,
    /// Parameter values `t` at which the series is evaluated and checked.
    pub points: Vec<Vec<C64>>,
}

impl Default for KuranishiConfig {
    fn default() -> Self {
        KuranishiConfig { max_order: DEFAULT_MAX_ORDER, radius: 0.5, points: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeConfig {
    pub max_iter: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_norm: f64,
    /// Kuranishi point `t0` of the round trip; the first evaluation point when absent.
    pub t0: Option<Vec<C64>>,
    /// Number of random gauge parameters.
    pub samples: usize,
    pub gamma_amplitude: f64,
    pub gamma_band: usize,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        let o = GaugeOptions::default();
        GaugeConfig {
            max_iter: o.max_iter,
            damping: o.damping,
            tol: o.tol,
            max_norm: o.max_norm,
            t0: None,
            samples: 1,
            gamma_amplitude: 1e-4,
            gamma_band: 1,
        }
    }
}

impl RunConfig {
    /// Parse and check the schema version; errors are [`Error::Parse`].
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version)));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configurations serialize")
    }

    pub fn higgs(&self) -> Result<HiggsPairConfig> {
        let g = &self.geometry;
        let geom = TorusGeometry::new(g.n, g.cutoff, g.dealias)?;
        let r = self.bundle.rank;
        let mut theta = Vec::with_capacity(self.bundle.theta.len());
        for (j, m) in self.bundle.theta.iter().enumerate() {
            if m.len() != r || m.iter().any(|row| row.len() != r) {
                return Err(Error::InvalidConfig(format!("theta[{j}] is not {r} x {r}")));
            }
            theta.push(m.iter().flatten().copied().collect());
        }
        HiggsPairConfig::new(&geom, r, self.bundle.metric.clone(), &theta)
    }

    pub fn hodge_options(&self) -> HodgeOptions {
        HodgeOptions { kernel_threshold: self.tolerances.kernel_threshold }
    }

    pub fn fixed_point_options(&self) -> FixedPointOptions {
        FixedPointOptions { radius: self.kuranishi.radius, ..FixedPointOptions::default() }
    }

    pub fn gauge_options(&self) -> GaugeOptions {
        let g = &self.gauge;
        GaugeOptions { max_iter: g.max_iter, damping: g.damping, tol: g.tol, max_norm: g.max_norm, matching_tol: self.tolerances.matching }
    }

    /// The round-trip point: `gauge.t0`, else the first evaluation point.
    pub fn t0(&self) -> Option<&[C64]> {
        self.gauge.t0.as_deref().or(self.kuranishi.points.first().map(|p| p.as_slice()))
    }
}
