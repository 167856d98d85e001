//! Residual suites over random band-limited inputs, shared by the
//! command-line driver and the acceptance tests.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deformation::{dbar_square_residual, probe_sections, DeformedOperator};
use crate::dgla::{Dgla, GradedElement};
use crate::form::Form;
use crate::hodge::HodgeSystem;
use crate::identities as id;
use crate::random;

/// Worst residual of one identity over its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Check { name: name.into(), samples: 0, worst: 0.0, tolerance, pass: true }
    }

    pub fn record(&mut self, residual: f64) {
        self.samples += 1;
        if residual.is_nan() {
            self.worst = f64::INFINITY;
        } else if residual > self.worst {
            self.worst = residual;
        }
        self.pass = self.worst <= self.tolerance;
    }

    /// A single-shot check of `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), samples: 1, worst: value, tolerance: bound, pass: value >= bound }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Largest degree with a nonzero `L^i`.
fn top_degree(dg: &Dgla) -> usize {
    2 * dg.config.geom().n()
}

fn element(dg: &Dgla, degree: usize, band: usize, rng: &mut impl Rng) -> GradedElement {
    random::element(dg.config.geom(), dg.config.rank(), degree, band, rng)
}

/// `d^2 = 0`, graded antisymmetry, graded Jacobi and Leibniz for every
/// degree combination whose output degree is at most `max_degree`.
pub fn dgla_axioms(dg: &Dgla, samples: usize, band: usize, max_degree: usize, tol: f64, rng: &mut impl Rng) -> Vec<Check> {
    let top = top_degree(dg).min(max_degree);
    let mut out = Vec::new();
    for i in 0..=top.saturating_sub(2) {
        let mut c = Check::new(format!("d_squared L{i}"), tol);
        for _ in 0..samples {
            c.record(id::d_squared(dg, &element(dg, i, band, rng)));
        }
        out.push(c);
    }
    for i in 0..=top {
        for j in i..=top - i {
            let mut c = Check::new(format!("antisymmetry ({i},{j})"), tol);
            for _ in 0..samples {
                let (x, y) = (element(dg, i, band, rng), element(dg, j, band, rng));
                c.record(id::antisymmetry(dg, &x, &y));
            }
            out.push(c);
        }
    }
    for i in 0..=top {
        for j in i..=top - i {
            for k in j..=top - i - j {
                let mut c = Check::new(format!("jacobi ({i},{j},{k})"), tol);
                for _ in 0..samples {
                    let (x, y, z) = (element(dg, i, band, rng), element(dg, j, band, rng), element(dg, k, band, rng));
                    c.record(id::jacobi(dg, &x, &y, &z));
                }
                out.push(c);
            }
        }
    }
    for i in 0..top {
        for j in 0..top - i {
            let mut c = Check::new(format!("leibniz ({i},{j})"), tol);
            for _ in 0..samples {
                let (x, y) = (element(dg, i, band, rng), element(dg, j, band, rng));
                c.record(id::leibniz(dg, &x, &y));
            }
            out.push(c);
        }
    }
    out
}

fn tx(dg: &Dgla, band: usize, rng: &mut impl Rng) -> (Form, usize) {
    let q = rng.gen_range(0..=dg.config.geom().n());
    (random::tx(dg.config.geom(), q, band, rng), q)
}

fn end(dg: &Dgla, band: usize, rng: &mut impl Rng) -> (Form, usize) {
    let n = dg.config.geom().n();
    let (p, q) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
    let r = dg.config.rank();
    (random::form(dg.config.geom(), r, r, p, q, band, rng), p + q)
}

/// End form with at least one `dz`, so that contractions see it.
fn end_with_dz(dg: &Dgla, band: usize, rng: &mut impl Rng) -> Form {
    let n = dg.config.geom().n();
    let (p, q) = (rng.gen_range(1..=n), rng.gen_range(0..=n));
    let r = dg.config.rank();
    random::form(dg.config.geom(), r, r, p, q, band, rng)
}

fn section_with_dz(dg: &Dgla, band: usize, rng: &mut impl Rng) -> Form {
    let n = dg.config.geom().n();
    let (p, q) = (rng.gen_range(1..=n), rng.gen_range(0..=n));
    random::form(dg.config.geom(), dg.config.rank(), 1, p, q, band, rng)
}

/// The contraction identities and the Cartan-type corollaries, plus the
/// Maurer-Cartan residual against the structure equations.
pub fn cartan_suite(dg: &Dgla, samples: usize, band: usize, tol: f64, rng: &mut impl Rng) -> Vec<Check> {
    let ch = &dg.chern;
    let mut checks: Vec<Check> = [
        "contraction_commute",
        "contraction_sn",
        "cartan_contraction_end",
        "cartan_contraction_section",
        "composition_rule",
        "curvature_expansion",
        "bracket_leibniz",
        "dbar_commutation",
        "mc_vs_structure",
    ]
    .iter()
    .map(|n| Check::new(*n, tol))
    .collect();
    for _ in 0..samples {
        let ((xi, _), (eta, _)) = (tx(dg, band, rng), tx(dg, band, rng));
        checks[0].record(id::contraction_commute(&xi, &eta, &end_with_dz(dg, band, rng)));
        checks[1].record(id::contraction_sn(&xi, &eta, &end_with_dz(dg, band, rng)));
        checks[2].record(id::cartan_contraction(&xi, &eta, &end_with_dz(dg, band, rng), ch, true));
        checks[3].record(id::cartan_contraction(&xi, &eta, &section_with_dz(dg, band, rng), ch, false));
        checks[4].record(id::composition_rule(&xi, &eta, &end_with_dz(dg, band, rng), ch));
        checks[5].record(id::curvature_expansion(&xi, &eta, ch));
        let ((a, ad), (b, _)) = (end(dg, band, rng), end(dg, band, rng));
        checks[6].record(id::bracket_leibniz(&xi, &a, ad, &b, ch));
        checks[7].record(id::dbar_commutation(&xi, &a, ch));
        checks[8].record(id::mc_vs_structure(dg, &element(dg, 1, band, rng)));
    }
    checks
}

/// `Dbar^2 s` against the structure-equation action on every probe section,
/// for random degree-1 elements, and `max |Dbar^2 s|` for the given
/// Maurer-Cartan elements.
pub fn flatness_suite(dg: &Dgla, samples: usize, band: usize, tol: f64, mc_elements: &[GradedElement], mc_tol: f64, rng: &mut impl Rng) -> Vec<Check> {
    let probes = probe_sections(dg.config.geom(), dg.config.rank());
    let mut expansion = Check::new("dbar_squared_vs_structure", tol);
    for _ in 0..samples {
        let x = element(dg, 1, band, rng).scale_real(0.1);
        let op = DeformedOperator::new(dg, x).expect("degree-1 element");
        for s in &probes {
            expansion.record(dbar_square_residual(&op, s).2);
        }
    }
    let mut flat = Check::new("dbar_squared_on_mc_elements", mc_tol);
    for x in mc_elements {
        let op = DeformedOperator::new(dg, x.clone()).expect("degree-1 element");
        let worst = probes.iter().map(|s| dbar_square_residual(&op, s).0.norm()).fold(0.0, f64::max);
        flat.record(worst);
    }
    vec![expansion, flat]
}

fn rel(diff: f64, scale: f64) -> f64 {
    crate::dgla::relative(diff, scale)
}

/// Hodge identities on random inputs in degrees `0 ..= 2`, the matrix-level
/// identities and the spectral diagnostics.
pub fn hodge_suite(sys: &HodgeSystem, samples: usize, band: usize, tol: f64, adjoint_tol: f64, min_gap: f64, rng: &mut impl Rng) -> Vec<Check> {
    let dg = &sys.dgla;
    let mut decomposition = Check::new("x = Hx + Delta G x", tol);
    let mut commute = Check::new("G d = d G", tol);
    let mut adjoint = Check::new("(d a, b) = (a, d* b)", adjoint_tol);
    let mut hd = Check::new("H d = 0 and d* H = 0", adjoint_tol);
    let mut dstar = Check::new("d* d* = 0", adjoint_tol);
    for _ in 0..samples {
        for deg in 0..=2 {
            let v: DVector<C64> = sys.flatten(&element(dg, deg, band, rng));
            let h = sys.harmonic_vec(deg, &v);
            let lg = sys.laplacian_vec(deg, &sys.green_vec(deg, &v));
            decomposition.record(rel((&v - &h - &lg).norm(), v.norm()));

            let dv = sys.d_vec(deg, &v);
            let gd = sys.green_vec(deg + 1, &dv);
            let dgv = sys.d_vec(deg, &sys.green_vec(deg, &v));
            commute.record(rel((&gd - &dgv).norm(), v.norm()));

            let w = sys.flatten(&element(dg, deg + 1, band, rng));
            let lhs = sys.inner(deg + 1, &dv, &w);
            let rhs = sys.inner(deg, &v, &sys.adjoint_vec(deg + 1, &w));
            adjoint.record(rel((lhs - rhs).norm(), sys.norm(deg + 1, &dv) * sys.norm(deg + 1, &w)));

            hd.record(rel(sys.harmonic_vec(deg + 1, &dv).norm(), dv.norm().max(v.norm())));
            hd.record(rel(sys.adjoint_vec(deg, &h).norm(), v.norm()));
            let u = sys.adjoint_vec(deg + 2, &sys.flatten(&element(dg, deg + 2, band, rng)));
            dstar.record(rel(sys.adjoint_vec(deg + 1, &u).norm(), u.norm()));
        }
    }
    let mut positive = Check::new("Laplacian spectrum >= 0", adjoint_tol);
    for deg in 0..=3 {
        let s = &sys.summaries[deg];
        if s.dim > 0 {
            positive.record((-s.min_eigenvalue).max(0.0) / s.lambda_max.max(f64::MIN_POSITIVE));
        }
    }
    let d2 = {
        let mut c = Check::new("matrix d^2 = 0", adjoint_tol);
        c.record(sys.d_squared_matrix_residual());
        c
    };
    vec![decomposition, commute, adjoint, hd, dstar, positive, d2, Check::at_least("eigenvalue gap", sys.min_gap(), min_gap)]
}
