//! Background Higgs-pair data: the metric `K`, the Higgs field `theta`, and
//! the Chern connection `K^{-1} dK` with its curvature.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{graded_commutator, Form};
use crate::grid::Grid;
use crate::torus::{Scalar, Torus};

/// Hermitian metric on the trivial rank-`r` bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    Identity,
    /// Constant Hermitian matrix, row-major.
    Constant(Vec<C64>),
    /// `K = sum_k M_k e_k` with row-major matrices `M_k`.
    Modes(Vec<(Vec<i32>, Vec<C64>)>),
    /// `K = diag(exp(rho_1), ..., exp(rho_r))` with real `rho_a` given as
    /// `sum (c e_k + conj(c) e_{-k})`; one mode list per diagonal entry.
    LogDiagonal(Vec<Vec<(Vec<i32>, C64)>>),
}

/// Sampled `K`, `K^{-1}` and `dK/dz_j` at the points of a grid.
pub struct MetricSamples {
    pub k: Vec<DMatrix<C64>>,
    pub k_inv: Vec<DMatrix<C64>>,
    pub dk: Vec<Vec<DMatrix<C64>>>,
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct HiggsPairConfig {
    geom: Torus,
    r: usize,
    metric: MetricSpec,
    k: Form,
    theta: Form,
}

/// Largest condition number of `K` accepted on the sample grid.
pub const MAX_CONDITION: f64 = 1e10;

impl HiggsPairConfig {
    /// `theta` lists the `n` constant matrices multiplying `dz_1 .. dz_n`, row-major.
    pub fn new(geom: &Torus, r: usize, metric: MetricSpec, theta: &[Vec<C64>]) -> Result<Self> {
        let n = geom.n();
        if r == 0 {
            return Err(Error::InvalidConfig("rank r must be positive".into()));
        }
        if theta.len() != n {
            return Err(Error::InvalidConfig(format!("theta needs {n} matrices, got {}", theta.len())));
        }
        let mut th = Form::zero(geom, r, r);
        for (j, m) in theta.iter().enumerate() {
            if m.len() != r * r {
                return Err(Error::InvalidConfig(format!("theta[{j}] has {} entries, expected {}", m.len(), r * r)));
            }
            th.axpy(C64::new(1.0, 0.0), &Form::constant(geom, r, r, 1 << j, 0, m));
        }
        let k = metric_form(geom, r, &metric)?;
        Ok(HiggsPairConfig { geom: geom.clone(), r, metric, k, theta: th.prune() })
    }

    /// Arbitrary (1,0) Higgs field; used to exercise validation failures.
    pub fn with_theta_form(geom: &Torus, r: usize, metric: MetricSpec, theta: Form) -> Result<Self> {
        let k = metric_form(geom, r, &metric)?;
        Ok(HiggsPairConfig { geom: geom.clone(), r, metric, k, theta })
    }

    pub fn geom(&self) -> &Torus {
        &self.geom
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    /// `K` as a truncated End-valued 0-form.
    pub fn k_form(&self) -> &Form {
        &self.k
    }

    pub fn theta(&self) -> &Form {
        &self.theta
    }

    /// Whether `K` is a constant matrix field.
    pub fn constant_metric(&self) -> bool {
        match &self.metric {
            MetricSpec::Identity | MetricSpec::Constant(_) => true,
            MetricSpec::Modes(m) => m.iter().all(|(k, _)| k.iter().all(|&x| x == 0)),
            MetricSpec::LogDiagonal(d) => d.iter().all(|l| l.iter().all(|(k, _)| k.iter().all(|&x| x == 0))),
        }
    }

    /// Pointwise `K`, `K^{-1}`, `dK` on `grid`. Rejects non-Hermitian,
    /// indefinite or ill-conditioned samples.
    pub fn sample_metric(&self, grid: &Grid) -> Result<MetricSamples> {
        let n = self.geom.n();
        let r = self.r;
        let npts = grid.len();
        let mut k = vec![DMatrix::<C64>::zeros(r, r); npts];
        let mut dk = vec![vec![DMatrix::<C64>::zeros(r, r); n]; npts];
        match &self.metric {
            MetricSpec::LogDiagonal(rhos) => {
                for (a, modes) in rhos.iter().enumerate() {
                    let rho = real_field(&self.geom, modes)?;
                    let vals = grid.sample(&rho);
                    let dvals: Vec<_> = (0..n).map(|j| grid.sample(&rho.d(j))).collect();
                    for p in 0..npts {
                        let e = vals[p].re.exp();
                        k[p][(a, a)] = C64::new(e, 0.0);
                        for j in 0..n {
                            dk[p][j][(a, a)] = dvals[j][p] * e;
                        }
                    }
                }
            }
            _ => {
                for row in 0..r {
                    for col in 0..r {
                        let f = self.k.entry(0, 0, row, col);
                        if f.is_zero() {
                            continue;
                        }
                        let vals = grid.sample(&f);
                        let dvals: Vec<_> = (0..n).map(|j| grid.sample(&f.d(j))).collect();
                        for p in 0..npts {
                            k[p][(row, col)] = vals[p];
                            for j in 0..n {
                                dk[p][j][(row, col)] = dvals[j][p];
                            }
                        }
                    }
                }
            }
        }
        let mut k_inv = Vec::with_capacity(npts);
        let mut condition: f64 = 1.0;
        for m in &k {
            let herm = (m - m.adjoint()).norm();
            if herm > 1e-10 * m.norm().max(1.0) {
                return Err(Error::InvalidConfig(format!("K is not Hermitian on the grid (defect {herm:.3e})")));
            }
            let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
            let ev = h.clone().symmetric_eigenvalues();
            let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo <= 0.0 {
                return Err(Error::InvalidConfig(format!("K is not positive-definite on the grid (eigenvalue {lo:.3e})")));
            }
            condition = condition.max(hi / lo);
            if condition > MAX_CONDITION {
                return Err(Error::SingularMetric(condition));
            }
            k_inv.push(h.try_inverse().ok_or(Error::SingularMetric(f64::INFINITY))?);
        }
        Ok(MetricSamples { k, k_inv, dk, condition })
    }
}

fn real_field(geom: &Torus, modes: &[(Vec<i32>, C64)]) -> Result<Scalar> {
    let mut f = Scalar::zero(geom);
    for (k, c) in modes {
        let idx = geom.index_of(k).ok_or_else(|| Error::InvalidConfig(format!("frequency {k:?} outside the cutoff box")))?;
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        let nidx = geom.index_of(&neg).unwrap();
        f.coeffs_mut()[idx] += c;
        f.coeffs_mut()[nidx] += c.conj();
    }
    Ok(f)
}

fn metric_form(geom: &Torus, r: usize, metric: &MetricSpec) -> Result<Form> {
    let mut k = Form::zero(geom, r, r);
    match metric {
        MetricSpec::Identity => {
            for a in 0..r {
                k.add_entry(0, 0, a, a, C64::new(1.0, 0.0), &Scalar::constant(geom, C64::new(1.0, 0.0)));
            }
        }
        MetricSpec::Constant(m) => {
            if m.len() != r * r {
                return Err(Error::InvalidConfig(format!("constant K has {} entries, expected {}", m.len(), r * r)));
            }
            k = Form::constant(geom, r, r, 0, 0, m);
        }
        MetricSpec::Modes(list) => {
            for (freq, m) in list {
                if m.len() != r * r {
                    return Err(Error::InvalidConfig(format!("K mode {freq:?} has {} entries, expected {}", m.len(), r * r)));
                }
                if geom.index_of(freq).is_none() {
                    return Err(Error::InvalidConfig(format!("K mode {freq:?} outside the cutoff box")));
                }
                for (e, v) in m.iter().enumerate() {
                    k.add_entry(0, 0, e / r, e % r, C64::new(1.0, 0.0), &Scalar::mode(geom, freq, *v));
                }
            }
        }
        MetricSpec::LogDiagonal(rhos) => {
            if rhos.len() != r {
                return Err(Error::InvalidConfig(format!("log-diagonal K needs {r} exponents, got {}", rhos.len())));
            }
            let grid = Grid::inversion(geom);
            for (a, modes) in rhos.iter().enumerate() {
                let rho = real_field(geom, modes)?;
                let vals: Vec<C64> = grid.sample(&rho).iter().map(|v| C64::new(v.re.exp(), 0.0)).collect();
                k.add_entry(0, 0, a, a, C64::new(1.0, 0.0), &grid.analyze(&vals));
            }
        }
    }
    Ok(k)
}

/// `conn = K^{-1} dK` (type (1,0)) and `curv = dbar conn` (type (1,1)).
#[derive(Clone, Debug)]
pub struct ChernData {
    pub conn: Form,
    pub curv: Form,
    pub condition: f64,
}

impl ChernData {
    /// Chern data of the identity metric.
    pub fn flat(geom: &Torus, r: usize) -> Self {
        ChernData { conn: Form::zero(geom, r, r), curv: Form::zero(geom, r, r), condition: 1.0 }
    }
}

pub fn chern(config: &HiggsPairConfig) -> Result<ChernData> {
    let geom = config.geom();
    let r = config.rank();
    let grid = Grid::inversion(geom);
    let s = config.sample_metric(&grid)?;
    let mut conn = Form::zero(geom, r, r);
    if !config.constant_metric() {
        let npts = grid.len();
        for j in 0..geom.n() {
            let prods: Vec<DMatrix<C64>> = (0..npts).map(|p| &s.k_inv[p] * &s.dk[p][j]).collect();
            for row in 0..r {
                for col in 0..r {
                    let vals: Vec<C64> = prods.iter().map(|m| m[(row, col)]).collect();
                    let f = grid.analyze(&vals);
                    let f = clean(f, 1e-15);
                    if !f.is_zero() {
                        conn.add_entry(1 << j, 0, row, col, C64::new(1.0, 0.0), &f);
                    }
                }
            }
        }
    }
    let conn = conn.prune();
    let curv = conn.dbar().prune();
    Ok(ChernData { conn, curv, condition: s.condition })
}

/// Zero out coefficients below `tol` times the largest one (round-off from the FFT).
fn clean(mut f: Scalar, tol: f64) -> Scalar {
    let max = f.coeffs().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for v in f.coeffs_mut() {
        if v.norm() <= tol * max {
            *v = C64::default();
        }
    }
    f
}

/// `|dbar F| + |dF + [conn, F]|`, both parts of `d_K F = 0`.
pub fn bianchi_residual(c: &ChernData) -> f64 {
    c.curv.dbar().norm() + c.curv.d().add(&graded_commutator(&c.conn, &c.curv)).norm()
}

/// Residual norms for the Higgs-field conditions and the metric.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub dbar_theta: f64,
    pub theta_wedge_theta: f64,
    pub k_hermitian_defect: f64,
    pub k_condition: f64,
    pub k_positive: bool,
    pub bianchi: f64,
    pub pass: bool,
}

pub fn validate_higgs(config: &HiggsPairConfig, tol: f64) -> ValidationReport {
    let th = config.theta();
    let dbar_theta = th.dbar().norm();
    let theta_wedge_theta = th.wedge(th).norm();
    let kf = config.k_form();
    let k_hermitian_defect = kf.sub(&kf.conj_transpose_coeffs()).norm();
    let (k_condition, k_positive, bianchi) = match chern(config) {
        Ok(c) => (c.condition, true, bianchi_residual(&c)),
        Err(Error::SingularMetric(c)) => (c, true, f64::NAN),
        Err(_) => (f64::NAN, false, f64::NAN),
    };
    let pass = dbar_theta <= tol
        && theta_wedge_theta <= tol
        && k_hermitian_defect <= tol
        && k_positive
        && k_condition.is_finite()
        && k_condition <= MAX_CONDITION
        && bianchi.is_finite()
        && bianchi <= tol.max(1e-8);
    ValidationReport { dbar_theta, theta_wedge_theta, k_hermitian_defect, k_condition, k_positive, bianchi, pass }
}
