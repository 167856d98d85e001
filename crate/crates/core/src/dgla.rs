//! The DGLA `L^i = (+)_{p+q=i} A^{p,q}(End E) (+) A^{0,i}(TX)` with its
//! differential and bracket.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::form::{graded_commutator, masks, merge_sign, popcount, sign_of, Form};
use crate::higgs::{ChernData, HiggsPairConfig};
use crate::torus::Scalar;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Homogeneous element of `L^degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedElement {
    pub degree: usize,
    pub end: Form,
    pub tx: Form,
}

impl GradedElement {
    pub fn new(degree: usize, end: Form, tx: Form) -> Self {
        debug_assert!(end.components().all(|(&(i, j), _)| popcount(i) + popcount(j) == degree));
        debug_assert!(tx.components().all(|(&(i, j), _)| i == 0 && popcount(j) == degree));
        GradedElement { degree, end, tx }
    }

    pub fn zero(config: &HiggsPairConfig, degree: usize) -> Self {
        let g = config.geom();
        GradedElement { degree, end: Form::zero(g, config.rank(), config.rank()), tx: Form::zero(g, g.n(), 1) }
    }

    pub fn axpy(&mut self, s: C64, other: &GradedElement) {
        debug_assert_eq!(self.degree, other.degree);
        self.end.axpy(s, &other.end);
        self.tx.axpy(s, &other.tx);
    }

    pub fn add(&self, other: &GradedElement) -> GradedElement {
        let mut out = self.clone();
        out.axpy(ONE, other);
        out
    }

    pub fn sub(&self, other: &GradedElement) -> GradedElement {
        let mut out = self.clone();
        out.axpy(-ONE, other);
        out
    }

    pub fn scale(&self, s: C64) -> GradedElement {
        GradedElement { degree: self.degree, end: self.end.scale(s), tx: self.tx.scale(s) }
    }

    pub fn scale_real(&self, s: f64) -> GradedElement {
        self.scale(C64::new(s, 0.0))
    }

    pub fn sobolev_norm(&self, s: u32) -> f64 {
        (self.end.sobolev_sq(s) + self.tx.sobolev_sq(s)).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.sobolev_norm(0)
    }

    pub fn is_zero(&self) -> bool {
        self.end.is_zero() && self.tx.is_zero()
    }

    /// `(p, q)` End-valued part.
    pub fn end_part(&self, p: usize, q: usize) -> Form {
        self.end.bidegree_part(p, q)
    }

    pub fn band(&self) -> Option<i32> {
        self.end.band().max(self.tx.band())
    }
}

/// Which of the two printed bracket formulas is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketOrder {
    /// `((-1)^i {dK, phi_|} B - (-1)^{(i+1)j} {dK, psi_|} A - [A,B], [phi,psi])`
    PhiActsOnB,
    /// `((-1)^i {dK, psi_|} A - (-1)^{(i+1)j} {dK, phi_|} B - [A,B], [phi,psi])`
    PsiActsOnA,
}

/// Sign of the curvature coupling `v -> s(p) v _| F` in the differential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureSign {
    /// `(-1)^p v _| F` for `v` of degree `p`.
    Alternating,
    /// `-v _| F` in every degree.
    AlwaysNegative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Convention {
    pub bracket: BracketOrder,
    pub curvature: CurvatureSign,
}

impl Convention {
    pub const CANDIDATES: [Convention; 4] = [
        Convention { bracket: BracketOrder::PhiActsOnB, curvature: CurvatureSign::Alternating },
        Convention { bracket: BracketOrder::PhiActsOnB, curvature: CurvatureSign::AlwaysNegative },
        Convention { bracket: BracketOrder::PsiActsOnA, curvature: CurvatureSign::Alternating },
        Convention { bracket: BracketOrder::PsiActsOnA, curvature: CurvatureSign::AlwaysNegative },
    ];

    fn curvature_sign(&self, p: usize) -> f64 {
        match self.curvature {
            CurvatureSign::Alternating => sign_of(p),
            CurvatureSign::AlwaysNegative => -1.0,
        }
    }
}

fn tx_degree(phi: &Form) -> Option<usize> {
    phi.components().next().map(|(&(_, j), _)| popcount(j))
}

/// `d_K A = dA + [conn, A]` on End-valued forms.
pub fn pk_end(a: &Form, chern: &ChernData) -> Form {
    a.d().add(&graded_commutator(&chern.conn, a))
}

/// `d_K s = ds + conn ^ s` on E-valued forms.
pub fn pk_section(s: &Form, chern: &ChernData) -> Form {
    s.d().add(&chern.conn.wedge(s))
}

/// `{d_K, phi _|} A = d_K(phi _| A) + (-1)^i phi _| d_K A` for `phi` in `A^{0,i}(TX)`.
pub fn anticomm_pk(phi: &Form, a: &Form, chern: &ChernData) -> Form {
    anticomm_with(phi, a, |x| pk_end(x, chern))
}

/// The same operator on E-valued forms.
pub fn anticomm_pk_section(phi: &Form, s: &Form, chern: &ChernData) -> Form {
    anticomm_with(phi, s, |x| pk_section(x, chern))
}

fn anticomm_with(phi: &Form, a: &Form, pk: impl Fn(&Form) -> Form) -> Form {
    let n = phi.geom().n();
    let mut out = Form::zero(a.geom(), a.rows(), a.cols());
    for i in 0..=n {
        let ph = phi.degree_part(i);
        if ph.is_zero() {
            continue;
        }
        out.axpy(ONE, &pk(&a.contract_by(&ph)));
        out.axpy(C64::new(sign_of(i), 0.0), &pk(a).contract_by(&ph));
    }
    out
}

/// Graded Lie bracket on `A^*(End E)`.
pub fn lie_bracket_end(a: &Form, b: &Form) -> Form {
    graded_commutator(a, b)
}

/// Schouten-Nijenhuis bracket of TX-valued `(0, i)` and `(0, j)` forms:
/// `sum_c (phi^a ^ d_a psi^c - (-1)^{ij} psi^a ^ d_a phi^c) d/dz_c`.
pub fn sn_bracket(phi: &Form, psi: &Form) -> Form {
    let g = phi.geom();
    let n = g.n();
    let mut out = Form::zero(g, n, 1);
    for (&(_, jm), pv) in phi.components() {
        for (&(_, lm), qv) in psi.components() {
            let s = merge_sign(jm, lm);
            if s == 0.0 {
                continue;
            }
            let s = C64::new(s, 0.0);
            for c in 0..n {
                for a in 0..n {
                    let dq = qv[c].d(a);
                    let dp = pv[c].d(a);
                    out.add_entry_product(0, jm | lm, c, 0, s, &pv[a], &dq);
                    out.add_entry_product(0, jm | lm, c, 0, -s, &qv[a], &dp);
                }
            }
        }
    }
    out
}

/// Background data with a fixed sign convention.
#[derive(Clone, Debug)]
pub struct Dgla {
    pub config: HiggsPairConfig,
    pub chern: ChernData,
    pub convention: Convention,
}

impl Dgla {
    pub fn new(config: HiggsPairConfig, chern: ChernData, convention: Convention) -> Self {
        Dgla { config, chern, convention }
    }

    pub fn theta(&self) -> &Form {
        self.config.theta()
    }

    /// `B(v) = s(p) v _| F` for `v` of degree `p`.
    pub fn curvature_coupling(&self, v: &Form, p: usize) -> Form {
        self.chern.curv.contract_by(v).scale_real(self.convention.curvature_sign(p))
    }

    /// The four End-valued pieces `dbar A`, `[theta, A]`, `B(phi)`, `C(phi)`
    /// and the TX part `dbar phi`.
    pub fn d_terms(&self, x: &GradedElement) -> ([Form; 4], Form) {
        let t = [
            x.end.dbar(),
            graded_commutator(self.theta(), &x.end),
            self.curvature_coupling(&x.tx, x.degree),
            anticomm_pk(&x.tx, self.theta(), &self.chern),
        ];
        (t, x.tx.dbar())
    }

    pub fn d(&self, x: &GradedElement) -> GradedElement {
        let ([a, b, c, e], tx) = self.d_terms(x);
        let end = a.add(&b).add(&c).add(&e);
        GradedElement::new(x.degree + 1, end, tx)
    }

    /// The three End-valued pieces of the bracket and the TX part.
    pub fn bracket_terms(&self, x: &GradedElement, y: &GradedElement) -> ([Form; 3], Form) {
        let (i, j) = (x.degree, y.degree);
        let ch = &self.chern;
        let (first, second) = match self.convention.bracket {
            BracketOrder::PhiActsOnB => (anticomm_pk(&x.tx, &y.end, ch), anticomm_pk(&y.tx, &x.end, ch)),
            BracketOrder::PsiActsOnA => (anticomm_pk(&y.tx, &x.end, ch), anticomm_pk(&x.tx, &y.end, ch)),
        };
        let t = [
            first.scale_real(sign_of(i)),
            second.scale_real(-sign_of((i + 1) * j)),
            graded_commutator(&x.end, &y.end).neg(),
        ];
        (t, sn_bracket(&x.tx, &y.tx))
    }

    pub fn bracket(&self, x: &GradedElement, y: &GradedElement) -> GradedElement {
        let ([a, b, c], tx) = self.bracket_terms(x, y);
        GradedElement::new(x.degree + y.degree, a.add(&b).add(&c), tx)
    }

    /// `d x - 1/2 [x, x]`.
    pub fn mc_residual(&self, x: &GradedElement) -> GradedElement {
        debug_assert_eq!(x.degree, 1);
        self.d(x).sub(&self.bracket(x, x).scale_real(0.5))
    }

    /// The two structure equations evaluated directly: the End part
    /// `dbar(A+B) - phi_|F + [theta, A+B] + {dK,phi_|}theta + {dK,phi_|}(A+B) + 1/2[A+B, A+B]`
    /// and the TX part `dbar phi - 1/2 [phi, phi]`.
    pub fn structure_equations(&self, x: &GradedElement) -> (Form, Form) {
        let ab = &x.end;
        let phi = &x.tx;
        let ch = &self.chern;
        let end = ab
            .dbar()
            .sub(&ch.curv.contract_by(phi))
            .add(&graded_commutator(self.theta(), ab))
            .add(&anticomm_pk(phi, self.theta(), ch))
            .add(&anticomm_pk(phi, ab, ch))
            .add(&graded_commutator(ab, ab).scale_real(0.5));
        let tx = phi.dbar().sub(&sn_bracket(phi, phi).scale_real(0.5));
        (end, tx)
    }
}

/// `|sum of terms| / sum |term|`, zero when every term vanishes.
pub fn relative(residual: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        if residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        residual / scale
    }
}

/// Relative residual of a list of graded elements that should sum to zero.
pub fn relative_sum(terms: &[GradedElement]) -> f64 {
    let mut total = terms[0].clone();
    for t in &terms[1..] {
        total = total.add(t);
    }
    relative(total.norm(), terms.iter().map(|t| t.norm()).sum())
}

/// Relative residual of a list of forms that should sum to zero.
pub fn relative_forms(terms: &[Form]) -> f64 {
    let mut total = terms[0].clone();
    for t in &terms[1..] {
        total = total.add(t);
    }
    relative(total.norm(), terms.iter().map(|t| t.norm()).sum())
}

/// A unit `(0, q)` TX basis form `f d/dz_c (x) dzbar_J`.
pub fn tx_basis(f: Scalar, c: usize, jm: u8) -> Form {
    let g = f.geom().clone();
    let mut out = Form::zero(&g, g.n(), 1);
    out.add_entry(0, jm, c, 0, ONE, &f);
    out
}

/// Every `(0, q)` mask over `n` axes.
pub fn tx_masks(n: usize, q: usize) -> Vec<u8> {
    masks(n, q)
}

pub(crate) fn degree_of_tx(phi: &Form) -> Option<usize> {
    tx_degree(phi)
}
