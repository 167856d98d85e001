//! Uniform sample grids and the transforms between them and the frequency box.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::torus::{Scalar, Torus};

/// An `M^{2n}` uniform grid; point `j` has coordinates `j_a / M`.
pub struct Grid {
    geom: Torus,
    m: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    pub fn new(geom: &Torus, m: usize) -> Self {
        assert!(m >= geom.side(), "grid of {m} points cannot resolve the box");
        let mut planner = FftPlanner::new();
        let len = m.pow(geom.dims() as u32);
        Grid { geom: geom.clone(), m, len, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    /// The `(4N + 1)^{2n}` grid used for pointwise inversion.
    pub fn inversion(geom: &Torus) -> Self {
        Self::new(geom, 4 * geom.cutoff() + 1)
    }

    /// Grid oversampled four times relative to the box.
    pub fn oversampled(geom: &Torus) -> Self {
        Self::new(geom, 4 * geom.side())
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn geom(&self) -> &Torus {
        &self.geom
    }

    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let d = self.geom.dims();
        let mut x = vec![0.0; d];
        for a in (0..d).rev() {
            x[a] = (idx % self.m) as f64 / self.m as f64;
            idx /= self.m;
        }
        x
    }

    fn slot(&self, k: &[i32]) -> usize {
        let m = self.m as i64;
        k.iter().fold(0usize, |acc, &ka| acc * self.m + (ka as i64).rem_euclid(m) as usize)
    }

    fn transform_all(&self, buf: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let d = self.geom.dims();
        let m = self.m;
        let mut line = vec![C64::default(); m];
        let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
        for a in 0..d {
            let stride = m.pow((d - 1 - a) as u32);
            let block = stride * m;
            for base in (0..self.len).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = buf[start + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, l) in line.iter().enumerate() {
                        buf[start + t * stride] = *l;
                    }
                }
            }
        }
    }

    /// Values of `f` at every grid point.
    pub fn sample(&self, f: &Scalar) -> Vec<C64> {
        let mut buf = vec![C64::default(); self.len];
        for (i, v) in f.nonzeros() {
            buf[self.slot(self.geom.freq(i))] += v;
        }
        self.transform_all(&mut buf, &self.inv);
        buf
    }

    /// Normalised discrete Fourier coefficients of grid values; look them up
    /// with [`Grid::coefficient`].
    pub fn forward(&self, vals: &[C64]) -> Vec<C64> {
        let mut buf = vals.to_vec();
        self.transform_all(&mut buf, &self.fwd);
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Entry of a [`Grid::forward`] buffer at frequency `k` (taken mod `M`).
    pub fn coefficient(&self, buf: &[C64], k: &[i32]) -> C64 {
        buf[self.slot(k)]
    }

    /// Discrete Fourier coefficients of grid values, restricted to the box.
    pub fn analyze(&self, vals: &[C64]) -> Scalar {
        assert_eq!(vals.len(), self.len);
        let mut buf = vals.to_vec();
        self.transform_all(&mut buf, &self.fwd);
        let scale = 1.0 / self.len as f64;
        let g = &self.geom;
        let c = (0..g.len()).map(|i| buf[self.slot(g.freq(i))] * scale).collect();
        Scalar::from_coeffs(g, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{Dealias, TorusGeometry};

    #[test]
    fn sample_then_analyze_round_trips() {
        let g = TorusGeometry::new(1, 3, Dealias::PlainTruncation).unwrap();
        let mut f = Scalar::mode(&g, &[1, -2], C64::new(0.5, 0.25));
        f.add_assign(&Scalar::mode(&g, &[-3, 3], C64::new(-1.0, 2.0)));
        let grid = Grid::new(&g, 11);
        let vals = grid.sample(&f);
        let x = grid.point(17);
        assert!((vals[17] - f.eval(&x)).norm() < 1e-12);
        let back = grid.analyze(&vals);
        assert!(back.sub(&f).norm_sq().sqrt() < 1e-13);
    }
}
