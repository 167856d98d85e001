//! Relative residuals of the DGLA axioms and the Cartan-type identities.
//!
//! Every function returns `|sum of terms| / sum |term|` for an identity
//! written as a sum that should vanish.

use num_complex::Complex64 as C64;

use crate::dgla::{anticomm_pk, pk_end, pk_section, relative_forms, relative_sum, sn_bracket, Dgla, GradedElement};
use crate::form::{graded_commutator, sign_of, Form};
use crate::higgs::ChernData;

fn s(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `d(d x) = 0`, measured against the pieces of the outer differential.
pub fn d_squared(dg: &Dgla, x: &GradedElement) -> f64 {
    let dx = dg.d(x);
    let (end, tx) = dg.d_terms(&dx);
    let total = dg.d(&dx);
    let scale: f64 = end.iter().map(|f| f.norm()).sum::<f64>() + tx.norm();
    crate::dgla::relative(total.norm(), scale)
}

/// `[x, y] + (-1)^{ij} [y, x] = 0`.
pub fn antisymmetry(dg: &Dgla, x: &GradedElement, y: &GradedElement) -> f64 {
    let a = dg.bracket(x, y);
    let b = dg.bracket(y, x).scale_real(sign_of(x.degree * y.degree));
    relative_sum(&[a, b])
}

/// `(-1)^{ik}[x,[y,z]] + (-1)^{ji}[y,[z,x]] + (-1)^{kj}[z,[x,y]] = 0`.
pub fn jacobi(dg: &Dgla, x: &GradedElement, y: &GradedElement, z: &GradedElement) -> f64 {
    let (i, j, k) = (x.degree, y.degree, z.degree);
    let a = dg.bracket(x, &dg.bracket(y, z)).scale_real(sign_of(i * k));
    let b = dg.bracket(y, &dg.bracket(z, x)).scale_real(sign_of(j * i));
    let c = dg.bracket(z, &dg.bracket(x, y)).scale_real(sign_of(k * j));
    relative_sum(&[a, b, c])
}

/// `d[x,y] - [dx, y] - (-1)^i [x, dy] = 0`.
pub fn leibniz(dg: &Dgla, x: &GradedElement, y: &GradedElement) -> f64 {
    let a = dg.d(&dg.bracket(x, y));
    let b = dg.bracket(&dg.d(x), y).scale_real(-1.0);
    let c = dg.bracket(x, &dg.d(y)).scale_real(-sign_of(x.degree));
    relative_sum(&[a, b, c])
}

/// The Maurer-Cartan residual against the two structure equations.
pub fn mc_vs_structure(dg: &Dgla, x: &GradedElement) -> f64 {
    let mc = dg.mc_residual(x);
    let (end, tx) = dg.structure_equations(x);
    let se = GradedElement::new(2, end, tx);
    relative(mc.sub(&se).norm(), mc.norm() + se.norm())
}

fn relative(res: f64, scale: f64) -> f64 {
    crate::dgla::relative(res, scale)
}

fn tx_deg(phi: &Form) -> usize {
    crate::dgla::degree_of_tx(phi).unwrap_or(0)
}

/// `[i_xi, i_eta] = 0` on a scalar or matrix-valued form `omega`.
pub fn contraction_commute(xi: &Form, eta: &Form, omega: &Form) -> f64 {
    let (a, b) = (tx_deg(xi) as i64 - 1, tx_deg(eta) as i64 - 1);
    let t1 = omega.contract_by(eta).contract_by(xi);
    let t2 = omega.contract_by(xi).contract_by(eta).scale_real(-sign_of((a * b).unsigned_abs() as usize));
    relative_forms(&[t1, t2])
}

/// `i_[xi,eta] = [i_xi, [d, i_eta]]` with graded commutators.
pub fn contraction_sn(xi: &Form, eta: &Form, omega: &Form) -> f64 {
    let a = tx_deg(xi) as i64 - 1;
    let b = tx_deg(eta) as i64 - 1;
    // Q = [d, i_eta] = d i_eta - (-1)^{b} i_eta d, of degree b + 1
    let q = |w: &Form| w.contract_by(eta).d().sub(&w.d().contract_by(eta).scale_real(sign_of(b.unsigned_abs() as usize)));
    let lhs = omega.contract_by(&sn_bracket(xi, eta));
    let t1 = q(omega).contract_by(xi);
    let t2 = q(&omega.contract_by(xi)).scale_real(sign_of((a * (b + 1)).unsigned_abs() as usize));
    relative_forms(&[lhs.neg(), t1, t2.neg()])
}

/// The contraction identity with `d_K` on E-valued forms, for `phi` of degree `j`,
/// `psi` of degree `k`:
/// `[phi,psi]_|w = phi_|dK(psi_|w) - (-1)^{jk+k} dK(psi_|phi_|w) - (-1)^{jk} psi_|dK(phi_|w) - (-1)^{jk+j} psi_|phi_|dK w`.
/// The sign of the last term is the one that follows from `i_[phi,psi] = [i_phi, [dK, i_psi]]`
/// and `[i_phi, i_psi] = 0`; it only matters for `n >= 2` and `j + k` odd.
/// `end` selects the End(E) connection instead of the one on E.
pub fn cartan_contraction(phi: &Form, psi: &Form, omega: &Form, chern: &ChernData, end: bool) -> f64 {
    let (j, k) = (tx_deg(phi), tx_deg(psi));
    let pk = |w: &Form| if end { pk_end(w, chern) } else { pk_section(w, chern) };
    let lhs = omega.contract_by(&sn_bracket(phi, psi));
    let t1 = pk(&omega.contract_by(psi)).contract_by(phi);
    let t2 = pk(&omega.contract_by(phi).contract_by(psi)).scale_real(-sign_of(j * k + k));
    let t3 = pk(&omega.contract_by(phi)).contract_by(psi).scale_real(-sign_of(j * k));
    let t4 = pk(omega).contract_by(phi).contract_by(psi).scale_real(-sign_of(j * k + j));
    relative_forms(&[lhs.neg(), t1, t2, t3, t4])
}

/// `{dK,[phi,psi]_|}A = {dK,phi_|}{dK,psi_|}A - (-1)^{jk}{dK,psi_|}{dK,phi_|}A`.
pub fn composition_rule(phi: &Form, psi: &Form, a: &Form, chern: &ChernData) -> f64 {
    let (j, k) = (tx_deg(phi), tx_deg(psi));
    let lhs = anticomm_pk(&sn_bracket(phi, psi), a, chern);
    let t1 = anticomm_pk(phi, &anticomm_pk(psi, a, chern), chern);
    let t2 = anticomm_pk(psi, &anticomm_pk(phi, a, chern), chern).scale_real(-sign_of(j * k));
    relative_forms(&[lhs.neg(), t1, t2])
}

/// `[phi,psi]_|F = (-1)^i {dK,phi_|}psi_|F - (-1)^{ij+j} {dK,psi_|}phi_|F`.
pub fn curvature_expansion(phi: &Form, psi: &Form, chern: &ChernData) -> f64 {
    let (i, j) = (tx_deg(phi), tx_deg(psi));
    let f = &chern.curv;
    let lhs = f.contract_by(&sn_bracket(phi, psi));
    let t1 = anticomm_pk(phi, &f.contract_by(psi), chern).scale_real(sign_of(i));
    let t2 = anticomm_pk(psi, &f.contract_by(phi), chern).scale_real(-sign_of(i * j + j));
    relative_forms(&[lhs.neg(), t1, t2])
}

/// `{dK,phi_|}[A,B] = [{dK,phi_|}A, B] + (-1)^{ik}[A, {dK,phi_|}B]` with `A` of degree `i`.
pub fn bracket_leibniz(phi: &Form, a: &Form, a_deg: usize, b: &Form, chern: &ChernData) -> f64 {
    let k = tx_deg(phi);
    let lhs = anticomm_pk(phi, &graded_commutator(a, b), chern);
    let t1 = graded_commutator(&anticomm_pk(phi, a, chern), b);
    let t2 = graded_commutator(a, &anticomm_pk(phi, b, chern)).scale_real(sign_of(a_deg * k));
    relative_forms(&[lhs.neg(), t1, t2])
}

/// `dbar{dK,phi_|}A = (-1)^j{dK,phi_|}dbar A - {dK,dbar phi_|}A - [phi_|F, A]`.
pub fn dbar_commutation(phi: &Form, a: &Form, chern: &ChernData) -> f64 {
    let j = tx_deg(phi);
    let lhs = anticomm_pk(phi, a, chern).dbar();
    let t1 = anticomm_pk(phi, &a.dbar(), chern).scale_real(sign_of(j));
    let t2 = anticomm_pk(&phi.dbar(), a, chern).neg();
    let t3 = graded_commutator(&chern.curv.contract_by(phi), a).neg();
    relative_forms(&[lhs.neg(), t1, t2, t3])
}

/// Graded Jacobi for the End bracket alone.
pub fn end_jacobi(a: &Form, i: usize, b: &Form, j: usize, c: &Form, k: usize) -> f64 {
    let t1 = graded_commutator(a, &graded_commutator(b, c)).scale(s(sign_of(i * k)));
    let t2 = graded_commutator(b, &graded_commutator(c, a)).scale(s(sign_of(j * i)));
    let t3 = graded_commutator(c, &graded_commutator(a, b)).scale(s(sign_of(k * j)));
    relative_forms(&[t1, t2, t3])
}
