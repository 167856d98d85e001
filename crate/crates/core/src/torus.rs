//! Truncated Fourier fields on the square torus `C^n / (Z^n + i Z^n)`.
//!
//! A scalar field is stored densely over the frequency box `|k_i| <= N`,
//! `k` in `Z^{2n}`. Axis `a < n` is `x_a = Re z_a`, axis `n + a` is
//! `y_a = Im z_a`. The torus has volume one, so the zero mode is the mean.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How products are re-truncated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Dealias {
    #[default]
    PlainTruncation,
    TwoThirdsRule,
}

/// Complex dimension, cutoff and dealiasing policy, plus index tables.
#[derive(Debug)]
pub struct TorusGeometry {
    n: usize,
    cutoff: i32,
    dealias: Dealias,
    side: usize,
    len: usize,
    strides: Vec<usize>,
    freqs: Vec<i32>,
}

pub type Torus = Arc<TorusGeometry>;

impl PartialEq for TorusGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.cutoff == other.cutoff && self.dealias == other.dealias
    }
}

impl TorusGeometry {
    pub fn new(n: usize, cutoff: usize, dealias: Dealias) -> Result<Torus> {
        if n == 0 || cutoff == 0 {
            return Err(Error::InvalidGeometry(format!("need n >= 1 and N >= 1, got n={n}, N={cutoff}")));
        }
        if n > 4 {
            return Err(Error::InvalidGeometry(format!("n={n} too large for dense storage")));
        }
        let side = 2 * cutoff + 1;
        let dims = 2 * n;
        let len = side.pow(dims as u32);
        let mut strides = vec![1usize; dims];
        for a in (0..dims.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * side;
        }
        let mut freqs = vec![0i32; len * dims];
        for idx in 0..len {
            let mut rem = idx;
            for a in 0..dims {
                let q = rem / strides[a];
                rem %= strides[a];
                freqs[idx * dims + a] = q as i32 - cutoff as i32;
            }
        }
        Ok(Arc::new(TorusGeometry { n, cutoff: cutoff as i32, dealias, side, len, strides, freqs }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Frequency cutoff `N`.
    pub fn cutoff(&self) -> usize {
        self.cutoff as usize
    }

    pub fn dealias(&self) -> Dealias {
        self.dealias
    }

    /// Number of real axes, `2n`.
    pub fn dims(&self) -> usize {
        2 * self.n
    }

    /// Points per axis of the frequency box, `2N + 1`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of frequencies in the box.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn freq(&self, idx: usize) -> &[i32] {
        let d = self.dims();
        &self.freqs[idx * d..(idx + 1) * d]
    }

    pub fn index_of(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.dims() {
            return None;
        }
        let mut idx = 0;
        for (a, &ka) in k.iter().enumerate() {
            if ka.abs() > self.cutoff {
                return None;
            }
            idx += (ka + self.cutoff) as usize * self.strides[a];
        }
        Some(idx)
    }

    pub fn zero_index(&self) -> usize {
        (self.len - 1) / 2
    }

    /// Largest frequency kept by products.
    pub fn product_cutoff(&self) -> i32 {
        match self.dealias {
            Dealias::PlainTruncation => self.cutoff,
            Dealias::TwoThirdsRule => (2 * self.cutoff) / 3,
        }
    }

    /// `mu_j(k) = pi i k_j + pi k_{n+j}`, the symbol of `d/dz_j`.
    pub fn mu(&self, idx: usize, j: usize) -> C64 {
        let k = self.freq(idx);
        C64::new(PI * k[self.n + j] as f64, PI * k[j] as f64)
    }

    /// `nu_j(k) = pi i k_j - pi k_{n+j}`, the symbol of `d/dzbar_j`.
    pub fn nu(&self, idx: usize, j: usize) -> C64 {
        let k = self.freq(idx);
        C64::new(-PI * k[self.n + j] as f64, PI * k[j] as f64)
    }

    /// `|2 pi k|^2`.
    pub fn wave_sq(&self, idx: usize) -> f64 {
        self.freq(idx).iter().map(|&k| (2.0 * PI * k as f64).powi(2)).sum()
    }
}

/// A truncated Fourier series on the torus.
#[derive(Clone, PartialEq)]
pub struct Scalar {
    geom: Torus,
    c: Vec<C64>,
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nz: Vec<_> = self.nonzeros().map(|(i, v)| (self.geom.freq(i).to_vec(), v)).collect();
        f.debug_struct("Scalar").field("modes", &nz).finish()
    }
}

impl Scalar {
    pub fn zero(geom: &Torus) -> Self {
        Scalar { geom: geom.clone(), c: vec![C64::new(0.0, 0.0); geom.len()] }
    }

    pub fn constant(geom: &Torus, v: C64) -> Self {
        let mut s = Self::zero(geom);
        s.c[geom.zero_index()] = v;
        s
    }

    /// `v * e_k`. Panics if `k` is outside the box.
    pub fn mode(geom: &Torus, k: &[i32], v: C64) -> Self {
        let mut s = Self::zero(geom);
        let idx = geom.index_of(k).expect("frequency outside cutoff box");
        s.c[idx] = v;
        s
    }

    pub fn from_coeffs(geom: &Torus, c: Vec<C64>) -> Self {
        assert_eq!(c.len(), geom.len());
        Scalar { geom: geom.clone(), c }
    }

    pub fn geom(&self) -> &Torus {
        &self.geom
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.c
    }

    pub fn coeff(&self, k: &[i32]) -> C64 {
        self.geom.index_of(k).map(|i| self.c[i]).unwrap_or_default()
    }

    pub fn mean(&self) -> C64 {
        self.c[self.geom.zero_index()]
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.c.iter().enumerate().filter(|(_, v)| v.re != 0.0 || v.im != 0.0).map(|(i, v)| (i, *v))
    }

    pub fn is_zero(&self) -> bool {
        self.nonzeros().next().is_none()
    }

    /// Largest `|k_i|` over the support, or `None` for the zero field.
    pub fn band(&self) -> Option<i32> {
        self.nonzeros().map(|(i, _)| self.geom.freq(i).iter().map(|k| k.abs()).max().unwrap_or(0)).max()
    }

    pub fn add_assign(&mut self, other: &Scalar) {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Scalar) {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a -= b;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Scalar) {
        if s == C64::new(0.0, 0.0) {
            return;
        }
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: C64) -> Scalar {
        Scalar { geom: self.geom.clone(), c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Scalar {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    pub fn neg(&self) -> Scalar {
        self.scale_real(-1.0)
    }

    /// Pointwise product as a truncated convolution.
    pub fn mul(&self, other: &Scalar) -> Scalar {
        let mut out = Scalar::zero(&self.geom);
        self.mul_acc(other, C64::new(1.0, 0.0), &mut out);
        out
    }

    /// `out += s * self * other`.
    pub fn mul_acc(&self, other: &Scalar, s: C64, out: &mut Scalar) {
        let g = &*self.geom;
        let keep = g.product_cutoff();
        let dims = g.dims();
        let z = g.zero_index();
        let a: Vec<_> = self.nonzeros().collect();
        let b: Vec<_> = other.nonzeros().collect();
        if a.is_empty() || b.is_empty() {
            return;
        }
        if 4 * b.len() < g.len() {
            for &(ia, va) in &a {
                let ka = g.freq(ia);
                let va = va * s;
                'inner: for &(ib, vb) in &b {
                    let kb = g.freq(ib);
                    for d in 0..dims {
                        if (ka[d] + kb[d]).abs() > keep {
                            continue 'inner;
                        }
                    }
                    out.c[ia + ib - z] += va * vb;
                }
            }
            return;
        }
        // Dense `other`: walk the admissible sub-box of `kb` row by row.
        let n = g.cutoff() as i32;
        let last = dims - 1;
        let mut lo = vec![0i32; dims];
        let mut hi = vec![0i32; dims];
        let mut kb = vec![0i32; dims];
        'outer: for &(ia, va) in &a {
            let ka = g.freq(ia);
            let va = va * s;
            for d in 0..dims {
                lo[d] = (-n).max(-keep - ka[d]);
                hi[d] = n.min(keep - ka[d]);
                if lo[d] > hi[d] {
                    continue 'outer;
                }
            }
            let width = (hi[last] - lo[last] + 1) as usize;
            kb.copy_from_slice(&lo);
            loop {
                let ib = g.index_of(&kb).expect("inside the box");
                let dst = ia + ib - z;
                for (o, v) in out.c[dst..dst + width].iter_mut().zip(&other.c[ib..ib + width]) {
                    *o += va * v;
                }
                let mut d = last;
                loop {
                    if d == 0 {
                        continue 'outer;
                    }
                    d -= 1;
                    if kb[d] < hi[d] {
                        kb[d] += 1;
                        break;
                    }
                    kb[d] = lo[d];
                }
            }
        }
    }

    /// `d/dz_j`, `j` zero-based.
    pub fn d(&self, j: usize) -> Scalar {
        assert!(j < self.geom.n(), "axis {j} out of range");
        let c = self.c.iter().enumerate().map(|(i, v)| if *v == C64::default() { *v } else { v * self.geom.mu(i, j) }).collect();
        Scalar { geom: self.geom.clone(), c }
    }

    /// `d/dzbar_j`, `j` zero-based.
    pub fn dbar(&self, j: usize) -> Scalar {
        assert!(j < self.geom.n(), "axis {j} out of range");
        let c = self.c.iter().enumerate().map(|(i, v)| if *v == C64::default() { *v } else { v * self.geom.nu(i, j) }).collect();
        Scalar { geom: self.geom.clone(), c }
    }

    /// Pointwise complex conjugate: `c(k) -> conj(c(-k))`.
    pub fn conj(&self) -> Scalar {
        let len = self.c.len();
        let c = (0..len).map(|i| self.c[len - 1 - i].conj()).collect();
        Scalar { geom: self.geom.clone(), c }
    }

    /// Truncate to the box `|k_i| <= band`.
    pub fn truncate(&self, band: i32) -> Scalar {
        let mut out = self.clone();
        for (i, v) in out.c.iter_mut().enumerate() {
            if self.geom.freq(i).iter().any(|k| k.abs() > band) {
                *v = C64::default();
            }
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.c.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Spectral Sobolev norm squared with weight `(1 + |2 pi k|^2)^s`.
    pub fn sobolev_sq(&self, s: u32) -> f64 {
        self.nonzeros().map(|(i, v)| (1.0 + self.geom.wave_sq(i)).powi(s as i32) * v.norm_sqr()).sum()
    }

    /// Evaluate at a point given by `2n` real coordinates.
    pub fn eval(&self, x: &[f64]) -> C64 {
        let g = &*self.geom;
        self.nonzeros()
            .map(|(i, v)| {
                let ph: f64 = g.freq(i).iter().zip(x).map(|(&k, &xa)| k as f64 * xa).sum();
                v * C64::from_polar(1.0, 2.0 * PI * ph)
            })
            .sum()
    }
}
