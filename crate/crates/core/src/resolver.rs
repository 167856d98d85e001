//! Picks the bracket operand order and curvature-coupling sign under which
//! the DGLA identities hold.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dgla::{Convention, Dgla};
use crate::higgs::{chern, HiggsPairConfig, MetricSpec};
use crate::identities;
use crate::random;
use crate::torus::{Dealias, TorusGeometry};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CandidateResult {
    pub convention: Convention,
    pub d_squared: f64,
    pub antisymmetry: f64,
    pub jacobi: f64,
    pub leibniz: f64,
    pub structure_equations: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResolverReport {
    pub tolerance: f64,
    pub candidates: Vec<CandidateResult>,
    pub chosen: Option<Convention>,
}

pub const RESOLVER_TOL: f64 = 1e-10;

/// Rank-2 background on the elliptic curve with a one-mode log-diagonal
/// metric and a nilpotent Higgs field.
pub fn test_background() -> HiggsPairConfig {
    let geom = TorusGeometry::new(1, 6, Dealias::PlainTruncation).unwrap();
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let metric = MetricSpec::LogDiagonal(vec![vec![(vec![1, 1], C64::new(0.15, 0.05))], vec![]]);
    HiggsPairConfig::new(&geom, 2, metric, &[vec![z, one, z, z]]).unwrap()
}

pub fn evaluate(config: &HiggsPairConfig, conv: Convention, seed: u64) -> CandidateResult {
    let ch = chern(config).expect("test background is valid");
    let dg = Dgla::new(config.clone(), ch, conv);
    let g = config.geom();
    let r = config.rank();
    let mut rng = random::rng(seed);
    let mut el = |deg: usize| random::element(g, r, deg, 1, &mut rng);
    let (x0, y0, x1, y1, z1) = (el(0), el(0), el(1), el(1), el(1));
    let d_squared = identities::d_squared(&dg, &x0).max(identities::d_squared(&dg, &x1));
    let antisymmetry = identities::antisymmetry(&dg, &x0, &x1).max(identities::antisymmetry(&dg, &x1, &y1));
    let jacobi = identities::jacobi(&dg, &x0, &x1, &y1)
        .max(identities::jacobi(&dg, &x0, &y0, &x1))
        .max(identities::jacobi(&dg, &x1, &y1, &z1));
    let leibniz = identities::leibniz(&dg, &x0, &x1)
        .max(identities::leibniz(&dg, &x1, &y1))
        .max(identities::leibniz(&dg, &x0, &y0));
    let structure_equations = identities::mc_vs_structure(&dg, &x1);
    let worst = d_squared.max(antisymmetry).max(jacobi).max(leibniz).max(structure_equations);
    CandidateResult {
        convention: conv,
        d_squared,
        antisymmetry,
        jacobi,
        leibniz,
        structure_equations,
        pass: worst <= RESOLVER_TOL,
    }
}

/// Evaluate all four candidates; `chosen` is set only if exactly one passes.
pub fn resolve_with(config: &HiggsPairConfig, seed: u64) -> ResolverReport {
    let candidates: Vec<_> = Convention::CANDIDATES.iter().map(|&c| evaluate(config, c, seed)).collect();
    let passing: Vec<_> = candidates.iter().filter(|c| c.pass).map(|c| c.convention).collect();
    let chosen = if passing.len() == 1 { Some(passing[0]) } else { None };
    ResolverReport { tolerance: RESOLVER_TOL, candidates, chosen }
}

/// The resolver run on [`test_background`], computed once per process.
pub fn resolve() -> &'static ResolverReport {
    static REPORT: OnceLock<ResolverReport> = OnceLock::new();
    REPORT.get_or_init(|| resolve_with(&test_background(), 0x5eed))
}

/// The resolved convention. Panics if the resolver did not single one out.
pub fn convention() -> Convention {
    resolve().chosen.expect("sign-convention resolver did not select a unique candidate")
}

impl Dgla {
    /// The DGLA of `config` with its Chern data and the resolved convention.
    pub fn resolved(config: HiggsPairConfig) -> crate::error::Result<Dgla> {
        let ch = chern(&config)?;
        Ok(Dgla::new(config, ch, convention()))
    }
}
