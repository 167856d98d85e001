//! The Kuranishi family `eps(t) = eps_1(t) + 1/2 d* G [eps(t), eps(t)]`
//! solved order by order, and its obstruction `H[eps(t), eps(t)]`.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dgla::GradedElement;
use crate::error::{Error, Result};
use crate::hodge::HodgeSystem;

/// Exponent vector of a monomial in `t_1 .. t_m`.
pub type Monomial = Vec<u32>;

pub const DEFAULT_MAX_ORDER: usize = 5;
/// Coefficients at or below this size are treated as zero in emitted equations.
pub const ZERO_TOL: f64 = 1e-12;

pub struct KuranishiSeries {
    pub m: usize,
    pub h2_dim: usize,
    pub max_order: usize,
    /// `terms[nu]` maps degree-`nu` monomials to their coefficient in `L^1`;
    /// exact zeros are omitted for `nu >= 2`.
    pub terms: Vec<BTreeMap<Monomial, GradedElement>>,
    /// `H^2` coordinates of the coefficient of each monomial of degree
    /// `2 ..= max_order + 1` in `[eps, eps]`.
    pub obstruction: BTreeMap<Monomial, Vec<C64>>,
    vecs: Vec<BTreeMap<Monomial, DVector<C64>>>,
}

fn unit(m: usize, j: usize) -> Monomial {
    let mut e = vec![0; m];
    e[j] = 1;
    e
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn mono_eval(m: &Monomial, t: &[C64]) -> C64 {
    m.iter().zip(t).fold(C64::new(1.0, 0.0), |acc, (&e, &x)| acc * x.powu(e))
}

pub fn degree(m: &Monomial) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

/// `sum_{a+b=nu} [eps_a, eps_b]` per monomial, using the symmetry of the
/// bracket on `L^1` to halve the work.
fn bracket_sums(sys: &HodgeSystem, terms: &[BTreeMap<Monomial, GradedElement>], nu: usize) -> BTreeMap<Monomial, DVector<C64>> {
    let dg = &sys.dgla;
    let mut acc: BTreeMap<Monomial, DVector<C64>> = BTreeMap::new();
    let top = terms.len() - 1;
    for a in 1..nu {
        let b = nu - a;
        if a > b || b > top {
            continue;
        }
        for (ma, xa) in &terms[a] {
            for (mb, xb) in &terms[b] {
                if a == b && ma > mb {
                    continue;
                }
                let w = if a == b && ma == mb { 1.0 } else { 2.0 };
                let v = sys.flatten(&dg.bracket(xa, xb));
                let slot = acc.entry(mono_mul(ma, mb)).or_insert_with(|| DVector::zeros(v.len()));
                slot.axpy(C64::new(w, 0.0), &v, C64::new(1.0, 0.0));
            }
        }
    }
    acc
}

impl KuranishiSeries {
    /// `eps_nu = 1/2 d* G sum_{a+b=nu} [eps_a, eps_b]` for `nu = 2 ..= max_order`.
    pub fn solve(sys: &HodgeSystem, max_order: usize) -> Result<Self> {
        let m = sys.harmonic_dim(1);
        if m == 0 {
            return Err(Error::Precondition("H^1 is zero; nothing to deform".into()));
        }
        if max_order == 0 {
            return Err(Error::Precondition("max_order must be at least 1".into()));
        }
        let mut terms = vec![BTreeMap::new(); max_order + 1];
        let mut vecs = vec![BTreeMap::new(); max_order + 1];
        for (j, h) in sys.harmonic[1].iter().enumerate() {
            terms[1].insert(unit(m, j), sys.unflatten(1, h));
            vecs[1].insert(unit(m, j), h.clone());
        }
        let mut obstruction = BTreeMap::new();
        for nu in 2..=max_order + 1 {
            for (mono, br) in bracket_sums(sys, &terms, nu) {
                obstruction.insert(mono.clone(), sys.harmonic_coords_vec(2, &br));
                if nu <= max_order {
                    let v = sys.adjoint_vec(2, &sys.green_vec(2, &br)) * C64::new(0.5, 0.0);
                    if v.iter().any(|z| *z != C64::default()) {
                        terms[nu].insert(mono.clone(), sys.unflatten(1, &v));
                        vecs[nu].insert(mono, v);
                    }
                }
            }
        }
        Ok(KuranishiSeries { m, h2_dim: sys.harmonic_dim(2), max_order, terms, obstruction, vecs })
    }

    /// `eps_1(t) = sum t_j eta_j`.
    pub fn epsilon_1(&self, sys: &HodgeSystem, t: &[C64]) -> DVector<C64> {
        let mut v = DVector::zeros(sys.dim(1));
        for (j, h) in sys.harmonic[1].iter().enumerate() {
            v.axpy(t[j], h, C64::new(1.0, 0.0));
        }
        v
    }

    /// Sum of the stored monomial terms at `t`, as `L^1` coordinates.
    pub fn series_vec(&self, t: &[C64]) -> DVector<C64> {
        let mut out: Option<DVector<C64>> = None;
        for (mono, v) in self.vecs.iter().flatten() {
            let c = mono_eval(mono, t);
            match &mut out {
                Some(o) => o.axpy(c, v, C64::new(1.0, 0.0)),
                None => out = Some(v * c),
            }
        }
        out.expect("series has order-one terms")
    }

    /// `H^2` coordinates of the truncated obstruction polynomial at `t`.
    pub fn obstruction_at(&self, t: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::default(); self.h2_dim];
        for (mono, c) in &self.obstruction {
            let w = mono_eval(mono, t);
            for (o, x) in out.iter_mut().zip(c) {
                *o += w * x;
            }
        }
        out
    }

    /// Largest `|eps_nu - 1/2 d* G sum [eps_a, eps_b]|` relative to the
    /// terms and to `sum |eps_a| |eps_b|`, recomputed over all ordered pairs
    /// through the element-level API.
    pub fn recursion_residual(&self, sys: &HodgeSystem) -> Result<f64> {
        let dg = &sys.dgla;
        let mut worst: f64 = 0.0;
        for nu in 2..=self.max_order {
            // Per monomial: the bracket sum and the size of its inputs.
            let mut sums: BTreeMap<Monomial, (GradedElement, f64)> = BTreeMap::new();
            for a in 1..nu {
                for (ma, xa) in &self.terms[a] {
                    for (mb, xb) in &self.terms[nu - a] {
                        let br = dg.bracket(xa, xb);
                        let size = xa.norm() * xb.norm();
                        let key = mono_mul(ma, mb);
                        match sums.get_mut(&key) {
                            Some((s, m)) => {
                                s.axpy(C64::new(1.0, 0.0), &br);
                                *m += size;
                            }
                            None => {
                                sums.insert(key, (br, size));
                            }
                        }
                    }
                }
            }
            for (mono, (s, size)) in &sums {
                let target = sys.adjoint_apply(&sys.green_apply(s)?)?.scale_real(0.5);
                let stored = self.terms[nu].get(mono).cloned().unwrap_or_else(|| GradedElement::zero(&dg.config, 1));
                let res = stored.sub(&target).norm();
                let scale = stored.norm() + target.norm() + size;
                if res > 0.0 {
                    worst = worst.max(crate::dgla::relative(res, scale));
                }
            }
            for mono in self.terms[nu].keys() {
                if !sums.contains_key(mono) {
                    worst = f64::INFINITY;
                }
            }
        }
        Ok(worst)
    }

    /// Largest `|d* eps_nu|` over stored terms.
    pub fn adjoint_residual(&self, sys: &HodgeSystem) -> f64 {
        self.vecs.iter().flatten().map(|(_, v)| sys.adjoint_vec(1, v).norm()).fold(0.0, f64::max)
    }

    /// Indices `j` whose pure powers `t_j^k` all have zero obstruction.
    pub fn unobstructed_axes(&self) -> Vec<usize> {
        (0..self.m)
            .filter(|&j| {
                self.obstruction
                    .iter()
                    .filter(|(mono, _)| mono.iter().enumerate().all(|(i, &e)| i == j || e == 0))
                    .all(|(_, c)| c.iter().all(|z| z.norm() <= ZERO_TOL))
            })
            .collect()
    }
}

pub fn solve_series(sys: &HodgeSystem, max_order: usize) -> Result<KuranishiSeries> {
    KuranishiSeries::solve(sys, max_order)
}

/// One polynomial `sum_m c_m t^m = 0` per `H^2` coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyEquation {
    pub h2_index: usize,
    /// Monomial exponents with `[re, im]` coefficients; zero coefficients omitted.
    pub terms: Vec<(Monomial, [f64; 2])>,
}

impl PolyEquation {
    pub fn is_trivial(&self) -> bool {
        self.terms.is_empty()
    }
}

pub fn kuranishi_space_equations(series: &KuranishiSeries) -> Vec<PolyEquation> {
    (0..series.h2_dim)
        .map(|k| PolyEquation {
            h2_index: k,
            terms: series
                .obstruction
                .iter()
                .filter(|(_, c)| c[k].norm() > ZERO_TOL)
                .map(|(mono, c)| (mono.clone(), [c[k].re, c[k].im]))
                .collect(),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EpsilonValue {
    /// Series evaluation.
    pub value: GradedElement,
    /// Converged fixed point of `x <- eps_1 + 1/2 d* G [x, x]`.
    pub fixed_point: GradedElement,
    /// Gram norm of `value - fixed_point`.
    pub gap: f64,
    pub iterations: usize,
    /// Ratio of the last two successive-difference norms; the empirical
    /// contraction factor of the fixed-point map.
    pub contraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Largest accepted `|t|`.
    pub radius: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { radius: 0.5, max_iter: 200, tol: 1e-15 }
    }
}

fn tnorm(t: &[C64]) -> f64 {
    t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `x <- eps_1 + 1/2 d* G [x, x]` from `x = eps_1`.
pub fn fixed_point(sys: &HodgeSystem, eps1: &DVector<C64>, opts: &FixedPointOptions) -> Result<(DVector<C64>, usize, f64)> {
    let dg = &sys.dgla;
    let mut x = eps1.clone();
    let mut prev_diff = f64::INFINITY;
    let mut contraction = 0.0;
    let mut growth = 0;
    let scale = sys.norm(1, eps1).max(f64::MIN_POSITIVE);
    for it in 1..=opts.max_iter {
        let el = sys.unflatten(1, &x);
        let br = sys.flatten(&dg.bracket(&el, &el));
        let next = eps1 + sys.adjoint_vec(2, &sys.green_vec(2, &br)) * C64::new(0.5, 0.0);
        let diff = sys.norm(1, &(&next - &x));
        x = next;
        if !diff.is_finite() || diff > 1e6 * scale {
            return Err(Error::Divergent(scale));
        }
        if prev_diff.is_finite() && prev_diff > 0.0 {
            contraction = diff / prev_diff;
        }
        if diff <= opts.tol * scale {
            return Ok((x, it, contraction));
        }
        growth = if diff > prev_diff { growth + 1 } else { 0 };
        if growth >= 3 {
            return Err(Error::Divergent(scale));
        }
        prev_diff = diff;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: prev_diff })
}

pub fn evaluate_epsilon(series: &KuranishiSeries, sys: &HodgeSystem, t: &[C64], opts: &FixedPointOptions) -> Result<EpsilonValue> {
    if t.len() != series.m {
        return Err(Error::Shape(format!("t has {} entries, H^1 has dimension {}", t.len(), series.m)));
    }
    if tnorm(t) > opts.radius {
        return Err(Error::TooLarge(format!("|t| = {:.3e} exceeds the radius {:.3e}", tnorm(t), opts.radius)));
    }
    let v = series.series_vec(t);
    let (fp, iterations, contraction) = fixed_point(sys, &series.epsilon_1(sys, t), opts)?;
    let gap = sys.norm(1, &(&v - &fp));
    Ok(EpsilonValue { value: sys.unflatten(1, &v), fixed_point: sys.unflatten(1, &fp), gap, iterations, contraction })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// Gram norm of `d eps - 1/2 [eps, eps]`.
    pub mc_residual_norm: f64,
    /// Gram norm of `H [eps, eps]`.
    pub obstruction_norm: f64,
    /// Norm of the truncated obstruction polynomial at `t`.
    pub obstruction_poly_norm: f64,
    pub fixed_point_gap: f64,
    pub contraction: f64,
}

pub fn mc_check(series: &KuranishiSeries, sys: &HodgeSystem, t: &[C64], opts: &FixedPointOptions) -> Result<McReport> {
    let ev = evaluate_epsilon(series, sys, t, opts)?;
    let dg = &sys.dgla;
    let mc = sys.flatten(&dg.mc_residual(&ev.value));
    let br = sys.flatten(&dg.bracket(&ev.value, &ev.value));
    let h = sys.harmonic_vec(2, &br);
    Ok(McReport {
        mc_residual_norm: sys.norm(2, &mc),
        obstruction_norm: sys.norm(2, &h),
        obstruction_poly_norm: tnorm(&series.obstruction_at(t)),
        fixed_point_gap: ev.gap,
        contraction: ev.contraction,
    })
}
