//! The deformed operator `Dbar = dbar_E + {dK, phi_|} + A + theta + B` and
//! the deformed-complex-structure tests.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::dgla::{anticomm_pk_section, Dgla, GradedElement};
use crate::error::{Error, Result};
use crate::form::{Form, Mask};
use crate::grid::Grid;
use crate::torus::{Scalar, Torus};

/// Bound on the pointwise norm of `(phi^i_j)` for a usable deformation.
pub const SMALLNESS: f64 = 0.5;

pub struct DeformedOperator<'a> {
    pub dgla: &'a Dgla,
    pub element: GradedElement,
}

impl<'a> DeformedOperator<'a> {
    pub fn new(dgla: &'a Dgla, element: GradedElement) -> Result<Self> {
        if element.degree != 1 {
            return Err(Error::Precondition(format!("deformation element has degree {}", element.degree)));
        }
        Ok(DeformedOperator { dgla, element })
    }

    /// `{dK, phi_|} s` on E-valued forms.
    fn phi_term(&self, s: &Form) -> Form {
        anticomm_pk_section(&self.element.tx, s, &self.dgla.chern)
    }

    pub fn apply(&self, s: &Form) -> Form {
        let mut out = s.dbar();
        out.axpy(C64::new(1.0, 0.0), &self.phi_term(s));
        out.axpy(C64::new(1.0, 0.0), &self.element.end.wedge(s));
        out.axpy(C64::new(1.0, 0.0), &self.dgla.theta().wedge(s));
        out
    }

    /// `Dbar - dbar_E - {dK, phi_|} - theta`, which should be multiplication by `A + B`.
    pub fn discrepancy(&self, s: &Form) -> Form {
        self.apply(s).sub(&s.dbar()).sub(&self.phi_term(s)).sub(&self.dgla.theta().wedge(s))
    }

    /// The action on `s` of the two structure equations:
    /// `-{dK, (dbar phi - 1/2[phi,phi])_|} s + E ^ s` with `E` the End-valued equation.
    pub fn structure_action(&self, s: &Form) -> Form {
        let (end, tx) = self.dgla.structure_equations(&self.element);
        anticomm_pk_section(&tx, s, &self.dgla.chern).neg().add(&end.wedge(s))
    }
}

/// `Dbar(Dbar s)`, the structure-equation action and their relative gap.
pub fn dbar_square_residual(op: &DeformedOperator, s: &Form) -> (Form, Form, f64) {
    let d2 = op.apply(&op.apply(s));
    let act = op.structure_action(s);
    let rel = crate::dgla::relative(d2.sub(&act).norm(), d2.norm() + act.norm());
    (d2, act, rel)
}

/// Frame sections times every exponential of band at most one.
pub fn probe_sections(geom: &Torus, r: usize) -> Vec<Form> {
    let mut out = Vec::new();
    for idx in 0..geom.len() {
        if geom.freq(idx).iter().any(|k| k.abs() > 1) {
            continue;
        }
        let k = geom.freq(idx).to_vec();
        for a in 0..r {
            let mut s = Form::zero(geom, r, 1);
            s.add_entry(0, 0, a, 0, C64::new(1.0, 0.0), &Scalar::mode(geom, &k, C64::new(1.0, 0.0)));
            out.push(s);
        }
    }
    out
}

/// `l_phi alpha = d(phi_| alpha) - phi_| d alpha` on scalar forms.
pub fn l_phi(phi: &Form, alpha: &Form) -> Form {
    alpha.contract_by(phi).d().sub(&alpha.d().contract_by(phi))
}

/// Largest pointwise operator norm of the coefficient matrix `(phi^i_j)` of
/// a TX-valued (0,1) form, sampled on the inversion grid.
pub fn phi_sup_norm(phi: &Form) -> f64 {
    let g = phi.geom();
    let n = g.n();
    let grid = Grid::inversion(g);
    let mut vals = vec![vec![vec![C64::default(); grid.len()]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let f = phi.entry(0, 1 << j, i, 0);
            if !f.is_zero() {
                vals[i][j] = grid.sample(&f);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for p in 0..grid.len() {
        let m = DMatrix::from_fn(n, n, |i, j| vals[i][j][p]);
        let sv = m.singular_values();
        worst = worst.max(sv.iter().cloned().fold(0.0, f64::max));
    }
    worst
}

fn check_small(phi: &Form) -> Result<()> {
    let s = phi_sup_norm(phi);
    if s >= SMALLNESS {
        return Err(Error::TooLarge(format!("pointwise |phi| = {s:.3} is not below {SMALLNESS}")));
    }
    Ok(())
}

/// `|pi^{0,1} alpha - phi_| pi^{1,0} alpha|` for a scalar 1-form.
pub fn is_deformed_10_form(alpha: &Form, phi: &Form) -> Result<f64> {
    check_small(phi)?;
    let a10 = alpha.bidegree_part(1, 0);
    let a01 = alpha.bidegree_part(0, 1);
    Ok(a01.sub(&a10.contract_by(phi)).norm())
}

/// `|(dbar + l_phi) pi^{1,0} alpha|` for a deformed (1,0)-form `alpha`.
pub fn holomorphic_1form_residual(alpha: &Form, phi: &Form) -> Result<f64> {
    let dev = is_deformed_10_form(alpha, phi)?;
    if dev > 1e-8 * alpha.norm().max(1.0) {
        return Err(Error::Precondition(format!("alpha is not a deformed (1,0)-form (residual {dev:.3e})")));
    }
    let a10 = alpha.bidegree_part(1, 0);
    Ok(a10.dbar().add(&l_phi(phi, &a10)).norm())
}

/// `omega + phi_| omega`, the deformed lift of a (1,0)-form.
pub fn deformed_lift(omega: &Form, phi: &Form) -> Form {
    omega.add(&omega.contract_by(phi))
}

/// Scalar basis 1-form `dz_j` (`bar = false`) or `dzbar_j`.
pub fn coordinate_form(geom: &Torus, j: usize, bar: bool) -> Form {
    let (i, jm): (Mask, Mask) = if bar { (0, 1 << j) } else { (1 << j, 0) };
    Form::constant(geom, 1, 1, i, jm, &[C64::new(1.0, 0.0)])
}
