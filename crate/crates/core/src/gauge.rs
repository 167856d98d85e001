//! Gauge actions on degree-1 elements and the gauge-fixing workflow.
//!
//! An element `eta = (A + B, phi)` is handled through the total 1-form
//! `M = A + B + theta - phi _| conn`, for which
//! `Dbar s = sum dzbar_k V_k s + M s` with `V_k = dbar_k - phi^i_k d_i`.
//! The `dz` coefficients `b_i` of `M` represent the Higgs field
//! `b_i zeta_i` with `zeta_i = dz_i + phi^i_k dzbar_k`, and the `dzbar`
//! coefficients `a_k` the holomorphic structure `dbar_phi + a`, read as
//! values on the `V_k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dgla::GradedElement;
use crate::error::{Error, Result};
use crate::form::{Form, Mask};
use crate::grid::Grid;
use crate::hodge::HodgeSystem;
use crate::kuranishi::{evaluate_epsilon, FixedPointOptions, KuranishiSeries};
use crate::torus::{Scalar, Torus};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Bound on the pointwise size of `D xi` for `z + xi(z)` to be a diffeomorphism.
pub const DIFFEO_BOUND: f64 = 0.5;

/// `gamma = (upsilon, xi)` in `L^0`.
#[derive(Clone, Debug)]
pub struct GaugeParameter {
    pub upsilon: Form,
    pub xi: Form,
}

impl GaugeParameter {
    pub fn from_element(g: &GradedElement) -> Self {
        GaugeParameter { upsilon: g.end.clone(), xi: g.tx.clone() }
    }

    pub fn to_element(&self) -> GradedElement {
        GradedElement::new(0, self.upsilon.clone(), self.xi.clone())
    }
}

/// `sum upsilon^k / k!` with truncated products, stopping once a term is below `1e-14`.
pub fn exp_endo(upsilon: &Form) -> Form {
    let g = upsilon.geom();
    let r = upsilon.rows();
    let id: Vec<C64> = (0..r * r).map(|e| if e / r == e % r { ONE } else { C64::default() }).collect();
    let mut out = Form::constant(g, r, r, 0, 0, &id);
    let mut term = out.clone();
    for k in 1..200 {
        term = term.wedge(upsilon).scale_real(1.0 / k as f64);
        if term.is_zero() {
            break;
        }
        out.axpy(ONE, &term);
        if term.norm() < 1e-14 {
            break;
        }
    }
    out.prune()
}

fn total_form(dg: &crate::dgla::Dgla, eta: &GradedElement) -> Form {
    eta.end.add(dg.theta()).sub(&dg.chern.conn.contract_by(&eta.tx))
}

fn from_total(dg: &crate::dgla::Dgla, m: &Form, phi: &Form) -> GradedElement {
    let ab = m.sub(dg.theta()).add(&dg.chern.conn.contract_by(phi));
    GradedElement::new(1, ab.prune(), phi.clone().prune())
}

/// `exp(-upsilon) Dbar_eta exp(upsilon)`: `phi` is kept and
/// `M' = g^{-1} M g + g^{-1}(dbar g - phi _| d g)`.
pub fn vertical_gauge(dg: &crate::dgla::Dgla, eta: &GradedElement, upsilon: &Form) -> Result<GradedElement> {
    if eta.degree != 1 {
        return Err(Error::Precondition(format!("gauge action needs a degree-1 element, got degree {}", eta.degree)));
    }
    if upsilon.is_zero() {
        return Ok(eta.clone());
    }
    let g = exp_endo(upsilon);
    let ginv = exp_endo(&upsilon.neg());
    let m = total_form(dg, eta);
    let deriv = g.dbar().sub(&g.d().contract_by(&eta.tx));
    let m2 = ginv.wedge(&m).wedge(&g).add(&ginv.wedge(&deriv));
    Ok(from_total(dg, &m2, &eta.tx))
}

/// `-xi _| conn`, the first-order parallel transport along `xi`.
pub fn parallel_transport_first_order(xi: &Form, chern: &crate::higgs::ChernData) -> Form {
    chern.conn.contract_by(xi).neg()
}

/// Values of Fourier series at the displaced points `z + xi(z)` of a grid.
struct Displaced {
    geom: Torus,
    side: usize,
    /// `exps[(p * dims + a) * side + (k + N)] = exp(2 pi i k x'_a(p))`.
    exps: Vec<C64>,
    npts: usize,
}

impl Displaced {
    fn new(grid: &Grid, shift: &[Vec<C64>]) -> Self {
        let geom = grid.geom().clone();
        let (n, dims, side, cut) = (geom.n(), geom.dims(), geom.side(), geom.cutoff() as i32);
        let npts = grid.len();
        let mut exps = vec![C64::default(); npts * dims * side];
        for p in 0..npts {
            let mut x = grid.point(p);
            for a in 0..n {
                x[a] += shift[a][p].re;
                x[n + a] += shift[a][p].im;
            }
            for (a, xa) in x.iter().enumerate() {
                for k in -cut..=cut {
                    exps[(p * dims + a) * side + (k + cut) as usize] = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * xa);
                }
            }
        }
        Displaced { geom, side, exps, npts }
    }

    fn eval(&self, f: &Scalar) -> Vec<C64> {
        let dims = self.geom.dims();
        let cut = self.geom.cutoff() as i32;
        let modes: Vec<(Vec<usize>, C64)> =
            f.nonzeros().map(|(i, c)| (self.geom.freq(i).iter().map(|&k| (k + cut) as usize).collect(), c)).collect();
        (0..self.npts)
            .map(|p| {
                let base = p * dims * self.side;
                modes
                    .iter()
                    .map(|(ks, c)| ks.iter().enumerate().fold(*c, |acc, (a, &k)| acc * self.exps[base + a * self.side + k]))
                    .sum()
            })
            .collect()
    }
}

type Field = Vec<DMatrix<C64>>;

fn sample_matrix(values: impl Fn(usize, usize) -> Vec<C64>, rows: usize, cols: usize, npts: usize) -> Field {
    let mut out = vec![DMatrix::zeros(rows, cols); npts];
    for i in 0..rows {
        for j in 0..cols {
            let v = values(i, j);
            for (p, m) in out.iter_mut().enumerate() {
                m[(i, j)] = v[p];
            }
        }
    }
    out
}

fn analyze_into(grid: &Grid, field: &Field, out: &mut Form, i: Mask, j: Mask) {
    let (rows, cols) = (field[0].nrows(), field[0].ncols());
    for a in 0..rows {
        for b in 0..cols {
            let vals: Vec<C64> = field.iter().map(|m| m[(a, b)]).collect();
            let f = grid.analyze(&vals);
            if !f.is_zero() {
                out.add_entry(i, j, a, b, ONE, &f);
            }
        }
    }
}

/// Pointwise `max sqrt(sum |d_k xi^i|^2 + |dbar_k xi^i|^2)` on `grid`.
fn jacobian_size(xi: &Form, grid: &Grid) -> f64 {
    let n = xi.geom().n();
    let mut acc = vec![0.0; grid.len()];
    for i in 0..n {
        let f = xi.entry(0, 0, i, 0);
        for k in 0..n {
            for v in [grid.sample(&f.d(k)), grid.sample(&f.dbar(k))] {
                for (a, z) in acc.iter_mut().zip(v) {
                    *a += z.norm_sqr();
                }
            }
        }
    }
    acc.into_iter().fold(0.0, f64::max).sqrt()
}

/// Pullback of `eta` along `f(z) = z + xi(z)`, followed by the bundle map
/// `exp(-xi _| conn)`. Computed pointwise on the oversampled grid and
/// truncated back to the box.
pub fn diffeo_action(dg: &crate::dgla::Dgla, eta: &GradedElement, xi: &Form) -> Result<GradedElement> {
    if eta.degree != 1 {
        return Err(Error::Precondition(format!("gauge action needs a degree-1 element, got degree {}", eta.degree)));
    }
    if xi.is_zero() {
        return Ok(eta.clone());
    }
    let geom = dg.config.geom();
    let (n, r) = (geom.n(), dg.config.rank());
    let grid = Grid::oversampled(geom);
    let size = jacobian_size(xi, &grid);
    if size >= DIFFEO_BOUND {
        return Err(Error::TooLarge(format!("pointwise |D xi| = {size:.3} is not below {DIFFEO_BOUND}")));
    }
    let npts = grid.len();
    let xi_s: Vec<Vec<C64>> = (0..n).map(|i| grid.sample(&xi.entry(0, 0, i, 0))).collect();
    let disp = Displaced::new(&grid, &xi_s);
    let m = total_form(dg, eta);
    let phi = &eta.tx;
    // at w = z + xi(z)
    let mdz: Vec<Field> = (0..n).map(|i| sample_matrix(|a, b| disp.eval(&m.entry(1 << i, 0, a, b)), r, r, npts)).collect();
    let mdzb: Vec<Field> = (0..n).map(|k| sample_matrix(|a, b| disp.eval(&m.entry(0, 1 << k, a, b)), r, r, npts)).collect();
    let phi_w = sample_matrix(|i, k| disp.eval(&phi.entry(0, 1 << k, i, 0)), n, n, npts);
    // at z
    let dxi = sample_matrix(|i, k| grid.sample(&xi.entry(0, 0, i, 0).d(k)), n, n, npts);
    let dbxi = sample_matrix(|i, k| grid.sample(&xi.entry(0, 0, i, 0).dbar(k)), n, n, npts);
    let conn: Vec<Field> = (0..n).map(|i| sample_matrix(|a, b| grid.sample(&dg.chern.conn.entry(1 << i, 0, a, b)), r, r, npts)).collect();
    let psi = exp_endo(&parallel_transport_first_order(xi, &dg.chern));
    let psi_inv = exp_endo(&dg.chern.conn.contract_by(xi));
    let sample_end = |f: &Form, i: Mask, j: Mask| sample_matrix(|a, b| grid.sample(&f.entry(i, j, a, b)), r, r, npts);
    let psi_s = sample_end(&psi, 0, 0);
    let psi_inv_s = sample_end(&psi_inv, 0, 0);
    let (dpsi, dbpsi) = (psi.d(), psi.dbar());
    let dpsi_s: Vec<Field> = (0..n).map(|i| sample_end(&dpsi, 1 << i, 0)).collect();
    let dbpsi_s: Vec<Field> = (0..n).map(|k| sample_end(&dbpsi, 0, 1 << k)).collect();
    let theta: Vec<DMatrix<C64>> = (0..n)
        .map(|i| DMatrix::from_fn(r, r, |a, b| dg.theta().entry(1 << i, 0, a, b).mean()))
        .collect();

    let mut phi_new: Field = vec![DMatrix::zeros(n, n); npts];
    let mut ab_dz: Vec<Field> = vec![vec![DMatrix::zeros(r, r); npts]; n];
    let mut ab_dzb: Vec<Field> = vec![vec![DMatrix::zeros(r, r); npts]; n];
    for p in 0..npts {
        let ph = &phi_w[p];
        let (dx, dbx) = (&dxi[p], &dbxi[p]);
        let id = DMatrix::<C64>::identity(n, n);
        let pm = &id + dx + ph * dbx.map(|z| z.conj());
        let qm = dbx + ph * (&id + dx.map(|z| z.conj()));
        let pinv = pm.clone().try_inverse().ok_or_else(|| Error::TooLarge("pulled-back frame is singular".into()))?;
        let phin = &pinv * &qm;
        // b_i = M_i, a_l = Mbar_l, both at w
        let b: Vec<DMatrix<C64>> = (0..n).map(|i| mdz[i][p].clone()).collect();
        let a: Vec<DMatrix<C64>> = (0..n).map(|l| mdzb[l][p].clone()).collect();
        let c: Vec<DMatrix<C64>> =
            (0..n).map(|j| (0..n).fold(DMatrix::zeros(r, r), |acc, l| acc + &a[l] * dbx[(l, j)].conj())).collect();
        let (pi, pinv_b) = (&psi_s[p], &psi_inv_s[p]);
        let bn: Vec<DMatrix<C64>> = (0..n)
            .map(|k| {
                let raw = (0..n).fold(DMatrix::zeros(r, r), |acc, i| acc + &b[i] * pm[(i, k)]);
                pinv_b * raw * pi
            })
            .collect();
        for k in 0..n {
            let mut app = DMatrix::zeros(r, r);
            for l in 0..n {
                let w = if l == k { ONE } else { C64::default() } + dx[(l, k)].conj();
                app += &a[l] * w;
            }
            for j in 0..n {
                app -= &c[j] * phin[(j, k)];
            }
            let mut vpsi = dbpsi_s[k][p].clone();
            for i in 0..n {
                vpsi -= &dpsi_s[i][p] * phin[(i, k)];
            }
            let an = pinv_b * app * pi + pinv_b * vpsi;
            let mut phic = DMatrix::zeros(r, r);
            for i in 0..n {
                phic += &conn[i][p] * phin[(i, k)];
            }
            ab_dzb[k][p] = an + phic;
            ab_dz[k][p] = &bn[k] - &theta[k];
        }
        phi_new[p] = phin;
    }
    let mut end = Form::zero(geom, r, r);
    for k in 0..n {
        analyze_into(&grid, &ab_dz[k], &mut end, 1 << k, 0);
        analyze_into(&grid, &ab_dzb[k], &mut end, 0, 1 << k);
    }
    let mut tx = Form::zero(geom, n, 1);
    for k in 0..n {
        let col: Field = phi_new.iter().map(|m| m.columns(k, 1).into_owned()).collect();
        analyze_into(&grid, &col, &mut tx, 0, 1 << k);
    }
    Ok(GradedElement::new(1, end.prune(), tx.prune()))
}

/// The complex-structure part of [`diffeo_action`].
pub fn diffeo_pullback_phi(dg: &crate::dgla::Dgla, phi: &Form, xi: &Form) -> Result<Form> {
    let r = dg.config.rank();
    let eta = GradedElement::new(1, Form::zero(phi.geom(), r, r), phi.clone());
    Ok(diffeo_action(dg, &eta, xi)?.tx)
}

/// `eta_gamma`: the diffeomorphism action of `xi`, then the vertical action of `upsilon`.
pub fn full_gauge(dg: &crate::dgla::Dgla, eta: &GradedElement, gamma: &GradedElement) -> Result<GradedElement> {
    if gamma.degree != 0 {
        return Err(Error::Precondition(format!("gauge parameter has degree {}", gamma.degree)));
    }
    let p = GaugeParameter::from_element(gamma);
    let moved = diffeo_action(dg, eta, &p.xi)?;
    vertical_gauge(dg, &moved, &p.upsilon)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeOptions {
    pub max_iter: usize,
    pub damping: f64,
    /// Stop once the Gram norm of `d* eta_gamma` is at most this.
    pub tol: f64,
    /// Largest accepted Gram norm of `eta`.
    pub max_norm: f64,
    pub matching_tol: f64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions { max_iter: 50, damping: 1.0, tol: 1e-8, max_norm: 0.5, matching_tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct GaugeFix {
    pub gamma: GradedElement,
    pub eta_gamma: GradedElement,
    pub iterations: usize,
    /// Gram norm of `d* eta_gamma`.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// `gamma <- gamma - damping * G d*(eta_gamma)` from `gamma_0 = -G d* eta`.
pub fn gauge_fix(eta: &GradedElement, sys: &HodgeSystem, opts: &GaugeOptions) -> Result<GaugeFix> {
    let dg = &sys.dgla;
    let v = sys.flatten(eta);
    let size = sys.norm(1, &v);
    if size > opts.max_norm {
        return Err(Error::TooLarge(format!("|eta| = {size:.3e} exceeds {:.3e}", opts.max_norm)));
    }
    let r0 = sys.adjoint_vec(1, &v);
    let mut gamma: DVector<C64> = -sys.green_vec(0, &r0);
    let mut history = vec![sys.norm(0, &r0)];
    if history[0] <= opts.tol {
        let gamma = DVector::zeros(sys.dim(0));
        return Ok(GaugeFix { gamma: sys.unflatten(0, &gamma), eta_gamma: eta.clone(), iterations: 0, residual: history[0], history });
    }
    for it in 1..=opts.max_iter {
        let ge = sys.unflatten(0, &gamma);
        let eg = full_gauge(dg, eta, &ge)?;
        let res_vec = sys.adjoint_vec(1, &sys.flatten(&eg));
        let res = sys.norm(0, &res_vec);
        history.push(res);
        if res <= opts.tol {
            return Ok(GaugeFix { gamma: ge, eta_gamma: eg, iterations: it, residual: res, history });
        }
        if !res.is_finite() {
            break;
        }
        gamma -= sys.green_vec(0, &res_vec) * C64::new(opts.damping, 0.0);
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: *history.last().unwrap() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `H^1` coordinates `[re, im]` of the gauge-fixed element.
    pub t: Vec<[f64; 2]>,
    pub matching_residual: f64,
    pub obstruction_norm: f64,
    pub gauge_iterations: usize,
    pub gauge_residual: f64,
    pub gamma_norm: f64,
}

impl MatchReport {
    pub fn t_complex(&self) -> Vec<C64> {
        self.t.iter().map(|z| C64::new(z[0], z[1])).collect()
    }
}

/// Gauge-fix `eta`, read `t` from the harmonic part and compare with `eps(t)`.
pub fn match_to_kuranishi(eta: &GradedElement, sys: &HodgeSystem, series: &KuranishiSeries, opts: &GaugeOptions) -> Result<MatchReport> {
    let fix = gauge_fix(eta, sys, opts)?;
    let t = sys.harmonic_coords(&fix.eta_gamma)?;
    let ev = evaluate_epsilon(series, sys, &t, &FixedPointOptions::default())?;
    let diff = sys.flatten(&fix.eta_gamma.sub(&ev.value));
    let matching_residual = sys.norm(1, &diff);
    let obstruction_norm = series.obstruction_at(&t).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if matching_residual > opts.matching_tol {
        return Err(Error::Mismatch { residual: matching_residual, tolerance: opts.matching_tol });
    }
    Ok(MatchReport {
        t: t.iter().map(|z| [z.re, z.im]).collect(),
        matching_residual,
        obstruction_norm,
        gauge_iterations: fix.iterations,
        gauge_residual: fix.residual,
        gamma_norm: sys.norm(0, &sys.flatten(&fix.gamma)),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// `|full_gauge(t eta, t gamma) - t eta - t d gamma|` at each `t`, and the log-log slope.
pub fn remainder_slope(dg: &crate::dgla::Dgla, eta: &GradedElement, gamma: &GradedElement, ts: &[f64]) -> Result<(Vec<f64>, f64)> {
    let dgam = dg.d(gamma);
    let mut rem = Vec::with_capacity(ts.len());
    for &t in ts {
        let out = full_gauge(dg, &eta.scale_real(t), &gamma.scale_real(t))?;
        rem.push(out.sub(&eta.scale_real(t)).sub(&dgam.scale_real(t)).norm());
    }
    let slope = loglog_slope(ts, &rem);
    Ok((rem, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{probe_sections, DeformedOperator};
    use crate::dgla::Dgla;
    use crate::higgs::{HiggsPairConfig, MetricSpec};
    use crate::hodge::HodgeOptions;
    use crate::kuranishi::KuranishiSeries;
    use crate::random;
    use crate::resolver::test_background;
    use crate::torus::{Dealias, TorusGeometry};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn flat(r: usize, cut: usize) -> Dgla {
        let g = TorusGeometry::new(1, cut, Dealias::PlainTruncation).unwrap();
        let cfg = HiggsPairConfig::new(&g, r, MetricSpec::Identity, &[vec![c(0.0); r * r]]).unwrap();
        Dgla::resolved(cfg).unwrap()
    }

    fn curved() -> Dgla {
        Dgla::resolved(test_background()).unwrap()
    }

    fn constant_xi(geom: &Torus, v: C64) -> Form {
        Form::constant(geom, 1, 1, 0, 0, &[v])
    }

    fn identity(geom: &Torus, r: usize) -> Form {
        let id: Vec<C64> = (0..r * r).map(|e| if e / r == e % r { ONE } else { C64::default() }).collect();
        Form::constant(geom, r, r, 0, 0, &id)
    }

    #[test]
    fn exp_endo_inverse_and_nilpotent() {
        let dg = curved();
        let g = dg.config.geom().clone();
        assert_eq!(exp_endo(&Form::zero(&g, 2, 2)), identity(&g, 2));
        let mut rng = random::rng(11);
        let u = random::form(&g, 2, 2, 0, 0, 1, &mut rng).scale_real(0.02);
        let prod = exp_endo(&u).wedge(&exp_endo(&u.neg()));
        assert!(prod.sub(&identity(&g, 2)).norm() <= 1e-12, "{}", prod.sub(&identity(&g, 2)).norm());
        let z = C64::default();
        let nil = Form::constant(&g, 2, 2, 0, 0, &[z, C64::new(0.7, -0.2), z, z]);
        assert_eq!(exp_endo(&nil), identity(&g, 2).add(&nil));
    }

    #[test]
    fn vertical_is_operator_conjugation() {
        let dg = curved();
        let g = dg.config.geom().clone();
        let mut rng = random::rng(12);
        let eta = random::element(&g, 2, 1, 1, &mut rng).scale_real(0.1);
        assert_eq!(vertical_gauge(&dg, &eta, &Form::zero(&g, 2, 2)).unwrap(), eta);
        let u = random::form(&g, 2, 2, 0, 0, 1, &mut rng).scale_real(0.02);
        let out = vertical_gauge(&dg, &eta, &u).unwrap();
        assert_eq!(out.tx, eta.tx);
        let (ex, exinv) = (exp_endo(&u), exp_endo(&u.neg()));
        let (op, op2) = (DeformedOperator::new(&dg, eta).unwrap(), DeformedOperator::new(&dg, out).unwrap());
        for s in probe_sections(&g, 2) {
            let lhs = op2.apply(&s);
            let rhs = exinv.wedge(&op.apply(&ex.wedge(&s)));
            let rel = lhs.sub(&rhs).norm() / (lhs.norm() + rhs.norm());
            assert!(rel <= 1e-9, "{rel}");
        }
    }

    #[test]
    fn vertical_preserves_maurer_cartan() {
        let dg = curved();
        let g = dg.config.geom().clone();
        let mut rng = random::rng(13);
        let u = random::form(&g, 2, 2, 0, 0, 1, &mut rng).scale_real(0.02);
        let out = vertical_gauge(&dg, &GradedElement::zero(&dg.config, 1), &u).unwrap();
        assert!(!out.is_zero());
        assert!(dg.mc_residual(&out).norm() <= 1e-9);
    }

    #[test]
    fn parallel_transport_cases() {
        let dg = flat(2, 2);
        let g = dg.config.geom().clone();
        assert!(parallel_transport_first_order(&constant_xi(&g, c(0.3)), &dg.chern).is_zero());

        // K = diag(exp rho, 1), rho = c e_k + conj(c) e_{-k}: conn = diag(d rho, 0) dz.
        let dg = curved();
        let g = dg.config.geom().clone();
        let xi = C64::new(0.4, -0.1);
        let p = parallel_transport_first_order(&constant_xi(&g, xi), &dg.chern);
        let cc = C64::new(0.15, 0.05);
        let k = [1, 1];
        let rho = Scalar::mode(&g, &k, cc).add(&Scalar::mode(&g, &[-1, -1], cc.conj()));
        let mut expect = Form::zero(&g, 2, 2);
        expect.add_entry(0, 0, 0, 0, -xi, &rho.d(0));
        assert!(p.sub(&expect).norm() <= 1e-12 * expect.norm());

        // {dK, dbar xi _|} - dbar P' + P' dbar = -xi _| F, for constant xi.
        let xif = constant_xi(&g, xi);
        let rhs_form = dg.chern.curv.contract_by(&xif).neg();
        for s in probe_sections(&g, 2) {
            let lhs = crate::dgla::anticomm_pk_section(&xif.dbar(), &s, &dg.chern)
                .sub(&p.wedge(&s).dbar())
                .add(&p.wedge(&s.dbar()));
            let rhs = rhs_form.wedge(&s);
            assert!(lhs.sub(&rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    /// `f(z + v)` for a constant shift `v`, by phase rotation of the coefficients.
    fn shifted(f: &Scalar, v: C64) -> Scalar {
        let g = f.geom();
        let c: Vec<C64> = (0..g.len())
            .map(|i| {
                let k = g.freq(i);
                let phase = 2.0 * std::f64::consts::PI * (k[0] as f64 * v.re + k[1] as f64 * v.im);
                f.coeffs()[i] * C64::from_polar(1.0, phase)
            })
            .collect();
        Scalar::from_coeffs(g, c)
    }

    #[test]
    fn constant_xi_is_a_translation() {
        let dg = flat(1, 4);
        let g = dg.config.geom().clone();
        let mut rng = random::rng(14);
        let eta = random::element(&g, 1, 1, 1, &mut rng).scale_real(0.1);
        assert_eq!(diffeo_action(&dg, &eta, &Form::zero(&g, 1, 1)).unwrap(), eta);
        let v = C64::new(0.13, -0.29);
        let out = diffeo_action(&dg, &eta, &constant_xi(&g, v)).unwrap();
        let expect = GradedElement::new(1, eta.end.map_entries(|f| shifted(f, v)), eta.tx.map_entries(|f| shifted(f, v)));
        assert!(out.sub(&expect).norm() <= 1e-12);
        let phi = diffeo_pullback_phi(&dg, &Form::zero(&g, 1, 1), &constant_xi(&g, v)).unwrap();
        assert!(phi.norm() <= 1e-14);
    }

    #[test]
    fn pullback_phi_first_order() {
        let dg = curved();
        let g = dg.config.geom().clone();
        let mut rng = random::rng(15);
        let phi = random::tx(&g, 1, 1, &mut rng).scale_real(0.3);
        let xi = random::tx(&g, 0, 1, &mut rng).scale_real(0.05);
        let ts = [1e-1, 1e-2, 1e-3];
        let rem: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let out = diffeo_pullback_phi(&dg, &phi.scale_real(t), &xi.scale_real(t)).unwrap();
                out.sub(&phi.scale_real(t)).sub(&xi.dbar().scale_real(t)).norm()
            })
            .collect();
        assert!(loglog_slope(&ts, &rem) >= 1.9, "{rem:?}");
    }

    #[test]
    fn large_xi_is_rejected() {
        let dg = flat(1, 3);
        let g = dg.config.geom().clone();
        let mut rng = random::rng(16);
        let xi = random::tx(&g, 0, 1, &mut rng).scale_real(5.0);
        let eta = GradedElement::zero(&dg.config, 1);
        assert!(matches!(diffeo_action(&dg, &eta, &xi), Err(Error::TooLarge(_))));
    }

    #[test]
    fn full_gauge_reductions_and_remainder() {
        let dg = curved();
        let g = dg.config.geom().clone();
        let mut rng = random::rng(17);
        let eta = random::element(&g, 2, 1, 1, &mut rng).scale_real(0.1);
        let gamma = random::element(&g, 2, 0, 1, &mut rng).scale_real(0.02);
        assert_eq!(full_gauge(&dg, &eta, &GradedElement::zero(&dg.config, 0)).unwrap(), eta);
        let vert = GradedElement::new(0, gamma.end.clone(), Form::zero(&g, 1, 1));
        assert_eq!(full_gauge(&dg, &eta, &vert).unwrap(), vertical_gauge(&dg, &eta, &gamma.end).unwrap());
        let (_, slope) = remainder_slope(&dg, &eta, &gamma, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(slope >= 1.9, "{slope}");
    }

    #[test]
    fn full_gauge_preserves_maurer_cartan_at_truncation_level() {
        let dg = curved();
        let g = dg.config.geom().clone();
        let mut rng = random::rng(18);
        let gamma = random::element(&g, 2, 0, 1, &mut rng).scale_real(1e-3);
        let out = full_gauge(&dg, &GradedElement::zero(&dg.config, 1), &gamma).unwrap();
        assert!(out.norm() > 1e-4);
        assert!(dg.mc_residual(&out).norm() <= 1e-10);
    }

    fn nilpotent() -> HodgeSystem {
        let g = TorusGeometry::new(1, 3, Dealias::PlainTruncation).unwrap();
        let z = C64::default();
        let cfg = HiggsPairConfig::new(&g, 2, MetricSpec::Identity, &[vec![z, c(1.0), z, z]]).unwrap();
        HodgeSystem::assemble(Dgla::resolved(cfg).unwrap(), HodgeOptions::default()).unwrap()
    }

    #[test]
    fn gauge_fix_on_coclosed_input_is_trivial() {
        let sys = nilpotent();
        let h = sys.harmonic_element(1, &[c(0.01), c(0.0), c(-0.02), c(0.0), c(0.005)]);
        let fix = gauge_fix(&h, &sys, &GaugeOptions::default()).unwrap();
        assert_eq!(fix.iterations, 0);
        assert!(fix.gamma.is_zero());
    }

    #[test]
    fn gauge_fix_linear_regime() {
        let sys = nilpotent();
        let g = sys.dgla.config.geom().clone();
        let mut rng = random::rng(19);
        let eta0 = random::element(&g, 2, 1, 1, &mut rng);
        let t = 1e-3;
        let eta = eta0.scale_real(t);
        let fix = gauge_fix(&eta, &sys, &GaugeOptions::default()).unwrap();
        let size = sys.norm(1, &sys.flatten(&eta0));
        assert!(fix.history[1] <= 1e-10 * t * size + 10.0 * (t * size).powi(2), "{:?}", fix.history);
        assert!(fix.residual <= 1e-8);
        // gamma lies in the image of G, orthogonal to H^0
        let gv = sys.flatten(&fix.gamma);
        assert!(sys.harmonic_vec(0, &gv).norm() <= 1e-12 * gv.norm());
    }

    #[test]
    fn abelian_exact_orbit_is_gauged_away() {
        let dg = flat(1, 3);
        let sys = HodgeSystem::assemble(dg, HodgeOptions::default()).unwrap();
        let g = sys.dgla.config.geom().clone();
        let mut rng = random::rng(20);
        let u = random::form(&g, 1, 1, 0, 0, 1, &mut rng).scale_real(0.01);
        let eta = GradedElement::new(1, u.dbar(), Form::zero(&g, 1, 1));
        let fix = gauge_fix(&eta, &sys, &GaugeOptions::default()).unwrap();
        assert!(fix.eta_gamma.norm() <= 1e-8, "{}", fix.eta_gamma.norm());
    }

    #[test]
    fn kuranishi_points_match_themselves() {
        let sys = nilpotent();
        let series = KuranishiSeries::solve(&sys, 5).unwrap();
        let t0 = [C64::new(0.01, 0.003), c(0.0), c(-0.004), C64::new(0.0, 0.002), c(0.003)];
        let eps = evaluate_epsilon(&series, &sys, &t0, &FixedPointOptions::default()).unwrap().value;
        let rep = match_to_kuranishi(&eps, &sys, &series, &GaugeOptions::default()).unwrap();
        let err: f64 = rep.t_complex().iter().zip(&t0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-8, "{err}");
        assert_eq!(rep.gauge_iterations, 0);
    }

    #[test]
    fn abelian_round_trip_recovers_t() {
        let dg = flat(1, 3);
        let sys = HodgeSystem::assemble(dg, HodgeOptions::default()).unwrap();
        let series = KuranishiSeries::solve(&sys, 3).unwrap();
        let g = sys.dgla.config.geom().clone();
        let mut rng = random::rng(21);
        let gamma = random::element(&g, 1, 0, 1, &mut rng).scale_real(1e-3);
        let t0 = [c(0.01), C64::new(0.0, -0.02), c(0.004)];
        let eps = evaluate_epsilon(&series, &sys, &t0, &FixedPointOptions::default()).unwrap().value;
        let eta = full_gauge(&sys.dgla, &eps, &gamma).unwrap();
        let opts = GaugeOptions { tol: 1e-14, ..GaugeOptions::default() };
        let rep = match_to_kuranishi(&eta, &sys, &series, &opts).unwrap();
        let err: f64 = rep.t_complex().iter().zip(&t0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * 0.023 + 1e-9, "{err}");
    }
}
