//! Matrix-valued differential forms on the torus.
//!
//! A [`Form`] is a sum of `M_{IJ} dz_I ^ dzbar_J` with `I`, `J` bitmasks
//! (bit `a` is axis `a`) and `M_{IJ}` a `rows x cols` matrix of scalar
//! fields. End(E)-valued forms are `r x r`, E-valued forms `r x 1`,
//! scalar forms `1 x 1`, and TX-valued `(0, q)` forms `n x 1` with entry `c`
//! the coefficient of `d/dz_c`.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::torus::{Scalar, Torus};

pub type Mask = u8;

pub fn popcount(m: Mask) -> usize {
    m.count_ones() as usize
}

fn parity(count: usize) -> f64 {
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of sorting the concatenation `A . B` of two index sets, zero if they meet.
pub fn merge_sign(a: Mask, b: Mask) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    let mut count = 0;
    for j in 0..8 {
        if b & (1 << j) != 0 {
            count += popcount(a >> (j + 1));
        }
    }
    parity(count)
}

/// `(dz_I1 dzbar_J1) ^ (dz_I2 dzbar_J2) = sign * dz_{I1 I2} dzbar_{J1 J2}`.
pub fn wedge_sign(i1: Mask, j1: Mask, i2: Mask, j2: Mask) -> f64 {
    let s = merge_sign(i1, i2) * merge_sign(j1, j2);
    if s == 0.0 {
        0.0
    } else {
        s * parity(popcount(j1) * popcount(i2))
    }
}

/// All masks over `n` axes with exactly `p` bits, ascending.
pub fn masks(n: usize, p: usize) -> Vec<Mask> {
    (0..(1u16 << n)).map(|m| m as Mask).filter(|&m| popcount(m) == p).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    geom: Torus,
    rows: usize,
    cols: usize,
    comps: BTreeMap<(Mask, Mask), Vec<Scalar>>,
}

impl Form {
    pub fn zero(geom: &Torus, rows: usize, cols: usize) -> Self {
        Form { geom: geom.clone(), rows, cols, comps: BTreeMap::new() }
    }

    /// Scalar function as a `1 x 1` zero-form.
    pub fn function(f: Scalar) -> Self {
        let mut out = Form::zero(f.geom(), 1, 1);
        out.comps.insert((0, 0), vec![f]);
        out
    }

    /// Constant complex matrix times `dz_I dzbar_J`; `m` is row-major.
    pub fn constant(geom: &Torus, rows: usize, cols: usize, i: Mask, j: Mask, m: &[C64]) -> Self {
        assert_eq!(m.len(), rows * cols);
        let mut out = Form::zero(geom, rows, cols);
        out.set(i, j, m.iter().map(|&v| Scalar::constant(geom, v)).collect());
        out
    }

    pub fn geom(&self) -> &Torus {
        &self.geom
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn components(&self) -> impl Iterator<Item = (&(Mask, Mask), &Vec<Scalar>)> {
        self.comps.iter()
    }

    pub fn get(&self, i: Mask, j: Mask) -> Option<&Vec<Scalar>> {
        self.comps.get(&(i, j))
    }

    pub fn entry(&self, i: Mask, j: Mask, row: usize, col: usize) -> Scalar {
        self.comps.get(&(i, j)).map(|m| m[row * self.cols + col].clone()).unwrap_or_else(|| Scalar::zero(&self.geom))
    }

    pub fn set(&mut self, i: Mask, j: Mask, m: Vec<Scalar>) {
        assert_eq!(m.len(), self.rows * self.cols);
        assert!(popcount(i) <= self.geom.n() && popcount(j) <= self.geom.n());
        self.comps.insert((i, j), m);
    }

    fn slot(&mut self, i: Mask, j: Mask) -> &mut Vec<Scalar> {
        let (geom, len) = (&self.geom, self.rows * self.cols);
        self.comps.entry((i, j)).or_insert_with(|| vec![Scalar::zero(geom); len])
    }

    /// `self[I,J][row,col] += s * f`.
    pub fn add_entry(&mut self, i: Mask, j: Mask, row: usize, col: usize, s: C64, f: &Scalar) {
        let cols = self.cols;
        self.slot(i, j)[row * cols + col].axpy(s, f);
    }

    pub fn add_entry_product(&mut self, i: Mask, j: Mask, row: usize, col: usize, s: C64, f: &Scalar, g: &Scalar) {
        let cols = self.cols;
        f.mul_acc(g, s, &mut self.slot(i, j)[row * cols + col]);
    }

    /// Drop components that are identically zero.
    pub fn prune(mut self) -> Self {
        self.comps.retain(|_, m| m.iter().any(|f| !f.is_zero()));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.comps.values().all(|m| m.iter().all(|f| f.is_zero()))
    }

    /// Keep only the `(p, q)` part.
    pub fn bidegree_part(&self, p: usize, q: usize) -> Form {
        let mut out = Form::zero(&self.geom, self.rows, self.cols);
        for (&(i, j), m) in &self.comps {
            if popcount(i) == p && popcount(j) == q {
                out.comps.insert((i, j), m.clone());
            }
        }
        out
    }

    /// Keep only components of total degree `d`.
    pub fn degree_part(&self, d: usize) -> Form {
        let mut out = Form::zero(&self.geom, self.rows, self.cols);
        for (&(i, j), m) in &self.comps {
            if popcount(i) + popcount(j) == d {
                out.comps.insert((i, j), m.clone());
            }
        }
        out
    }

    pub fn axpy(&mut self, s: C64, other: &Form) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "form shapes differ");
        for (&(i, j), m) in &other.comps {
            let dst = self.slot(i, j);
            for (a, b) in dst.iter_mut().zip(m) {
                a.axpy(s, b);
            }
        }
    }

    pub fn add(&self, other: &Form) -> Form {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &Form) -> Form {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn scale(&self, s: C64) -> Form {
        let mut out = self.clone();
        for m in out.comps.values_mut() {
            for f in m.iter_mut() {
                *f = f.scale(s);
            }
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Form {
        self.scale(C64::new(s, 0.0))
    }

    pub fn neg(&self) -> Form {
        self.scale_real(-1.0)
    }

    /// Apply a map to every scalar entry.
    pub fn map_entries(&self, f: impl Fn(&Scalar) -> Scalar) -> Form {
        let mut out = self.clone();
        for m in out.comps.values_mut() {
            for e in m.iter_mut() {
                *e = f(e);
            }
        }
        out
    }

    /// Wedge product with matrix composition of the coefficients. A `1 x 1`
    /// operand acts as a scalar on either side.
    pub fn wedge(&self, other: &Form) -> Form {
        let (rows, inner, cols, mode) = if self.rows == 1 && self.cols == 1 {
            (other.rows, 1, other.cols, 1)
        } else if other.rows == 1 && other.cols == 1 {
            (self.rows, 1, self.cols, 2)
        } else {
            assert_eq!(self.cols, other.rows, "wedge: incompatible matrix shapes");
            (self.rows, self.cols, other.cols, 0)
        };
        let mut out = Form::zero(&self.geom, rows, cols);
        for (&(i1, j1), a) in &self.comps {
            for (&(i2, j2), b) in &other.comps {
                let s = wedge_sign(i1, j1, i2, j2);
                if s == 0.0 {
                    continue;
                }
                let s = C64::new(s, 0.0);
                let (i, j) = (i1 | i2, j1 | j2);
                for r in 0..rows {
                    for c in 0..cols {
                        match mode {
                            1 => out.add_entry_product(i, j, r, c, s, &a[0], &b[r * cols + c]),
                            2 => out.add_entry_product(i, j, r, c, s, &a[r * cols + c], &b[0]),
                            _ => {
                                for k in 0..inner {
                                    out.add_entry_product(i, j, r, c, s, &a[r * inner + k], &b[k * cols + c]);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `dbar = sum_j dzbar_j ^ d/dzbar_j`.
    pub fn dbar(&self) -> Form {
        let n = self.geom.n();
        let mut out = Form::zero(&self.geom, self.rows, self.cols);
        for (&(i, j), m) in &self.comps {
            for a in 0..n {
                let s = wedge_sign(0, 1 << a, i, j);
                if s == 0.0 {
                    continue;
                }
                let s = C64::new(s, 0.0);
                for (e, f) in m.iter().enumerate() {
                    let df = f.dbar(a);
                    out.add_entry(i, j | (1 << a), e / self.cols, e % self.cols, s, &df);
                }
            }
        }
        out
    }

    /// `d = sum_j dz_j ^ d/dz_j`, the (1,0) part of the exterior derivative.
    pub fn d(&self) -> Form {
        let n = self.geom.n();
        let mut out = Form::zero(&self.geom, self.rows, self.cols);
        for (&(i, j), m) in &self.comps {
            for a in 0..n {
                let s = wedge_sign(1 << a, 0, i, j);
                if s == 0.0 {
                    continue;
                }
                let s = C64::new(s, 0.0);
                for (e, f) in m.iter().enumerate() {
                    let df = f.d(a);
                    out.add_entry(i | (1 << a), j, e / self.cols, e % self.cols, s, &df);
                }
            }
        }
        out
    }

    /// Contraction `phi _| self` with a TX-valued `(0, q)` form:
    /// `phi _| (f dz_I dzbar_K) = sum phi^a_J f dzbar_J ^ (d/dz_a _| dz_I) dzbar_K`.
    pub fn contract_by(&self, phi: &Form) -> Form {
        let n = self.geom.n();
        assert_eq!((phi.rows, phi.cols), (n, 1), "contraction needs an n x 1 TX-valued form");
        let mut out = Form::zero(&self.geom, self.rows, self.cols);
        for (&(pi, pj), v) in &phi.comps {
            debug_assert_eq!(pi, 0, "TX-valued forms carry no dz factors");
            for (&(i, k), m) in &self.comps {
                for a in 0..n {
                    if i & (1 << a) == 0 || v[a].is_zero() {
                        continue;
                    }
                    let rest = i & !(1 << a);
                    // d/dz_a _| dz_I = (-1)^{#(I below a)} dz_{I - a}
                    let s_int = parity(popcount(i & ((1 << a) - 1)));
                    let s = s_int * wedge_sign(0, pj, rest, k);
                    if s == 0.0 {
                        continue;
                    }
                    let s = C64::new(s, 0.0);
                    for (e, f) in m.iter().enumerate() {
                        out.add_entry_product(rest, pj | k, e / self.cols, e % self.cols, s, &v[a], f);
                    }
                }
            }
        }
        out
    }

    /// Matrix conjugate transpose with pointwise complex conjugation of the
    /// coefficient functions (forms are conjugated componentwise, `dz` kept).
    pub fn conj_transpose_coeffs(&self) -> Form {
        let mut out = Form::zero(&self.geom, self.cols, self.rows);
        for (&k, m) in &self.comps {
            let mut t = vec![Scalar::zero(&self.geom); m.len()];
            for r in 0..self.rows {
                for c in 0..self.cols {
                    t[c * self.rows + r] = m[r * self.cols + c].conj();
                }
            }
            out.comps.insert(k, t);
        }
        out
    }

    /// Spectral Sobolev norm over every scalar channel.
    pub fn sobolev_norm(&self, s: u32) -> f64 {
        self.sobolev_sq(s).sqrt()
    }

    pub fn sobolev_sq(&self, s: u32) -> f64 {
        self.comps.values().flat_map(|m| m.iter()).map(|f| f.sobolev_sq(s)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sobolev_norm(0)
    }

    /// Largest frequency in the support.
    pub fn band(&self) -> Option<i32> {
        self.comps.values().flat_map(|m| m.iter()).filter_map(|f| f.band()).max()
    }
}

/// Graded commutator of End-valued forms, `[A, B] = A ^ B - (-1)^{ij} B ^ A`,
/// for homogeneous total degrees `i`, `j`. Mixed-degree inputs are split.
pub fn graded_commutator(a: &Form, b: &Form) -> Form {
    let n = a.geom().n();
    let mut out = Form::zero(a.geom(), a.rows(), b.cols());
    for da in 0..=2 * n {
        let ap = a.degree_part(da);
        if ap.is_zero() {
            continue;
        }
        for db in 0..=2 * n {
            let bp = b.degree_part(db);
            if bp.is_zero() {
                continue;
            }
            out.axpy(C64::new(1.0, 0.0), &ap.wedge(&bp));
            out.axpy(C64::new(-parity(da * db), 0.0), &bp.wedge(&ap));
        }
    }
    out
}

/// Scalar `(p, q)` basis form `dz_I ^ dzbar_J` with coefficient `f`.
pub fn scalar_form(f: Scalar, i: Mask, j: Mask) -> Form {
    let mut out = Form::zero(f.geom(), 1, 1);
    out.set(i, j, vec![f]);
    out
}

pub(crate) fn sign_of(count: usize) -> f64 {
    parity(count)
}
