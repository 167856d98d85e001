//! Coordinates on the truncated spaces `L^i`.
//!
//! A basis vector is a single Fourier mode in one matrix entry of one
//! `(I, J)` component. End(E) slots come first, ordered by `(p, I, J,
//! entry)`, then TX slots ordered by `(J, c)`; the frequency index runs
//! fastest.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::dgla::GradedElement;
use crate::form::{masks, Form, Mask};
use crate::torus::{Scalar, Torus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    End { i: Mask, j: Mask, entry: usize },
    Tx { j: Mask, c: usize },
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub degree: usize,
    pub slots: Vec<Slot>,
    geom: Torus,
    r: usize,
}

impl Layout {
    pub fn new(geom: &Torus, r: usize, degree: usize) -> Self {
        let n = geom.n();
        let mut slots = Vec::new();
        for p in 0..=degree.min(n) {
            let q = degree - p;
            if q > n {
                continue;
            }
            for i in masks(n, p) {
                for j in masks(n, q) {
                    for entry in 0..r * r {
                        slots.push(Slot::End { i, j, entry });
                    }
                }
            }
        }
        if degree <= n {
            for j in masks(n, degree) {
                for c in 0..n {
                    slots.push(Slot::Tx { j, c });
                }
            }
        }
        Layout { degree, slots, geom: geom.clone(), r }
    }

    pub fn dim(&self) -> usize {
        self.slots.len() * self.geom.len()
    }

    pub fn box_len(&self) -> usize {
        self.geom.len()
    }

    pub fn slot_of(&self, alpha: usize) -> (Slot, usize) {
        let b = self.geom.len();
        (self.slots[alpha / b], alpha % b)
    }

    pub fn flatten(&self, x: &GradedElement) -> DVector<C64> {
        let b = self.geom.len();
        let mut v = DVector::zeros(self.dim());
        for (s, slot) in self.slots.iter().enumerate() {
            let f = match *slot {
                Slot::End { i, j, entry } => x.end.get(i, j).map(|m| &m[entry]),
                Slot::Tx { j, c } => x.tx.get(0, j).map(|m| &m[c]),
            };
            if let Some(f) = f {
                for (k, c) in f.coeffs().iter().enumerate() {
                    v[s * b + k] = *c;
                }
            }
        }
        v
    }

    pub fn unflatten(&self, v: &DVector<C64>) -> GradedElement {
        let g = &self.geom;
        let b = g.len();
        let (n, r) = (g.n(), self.r);
        let mut end = Form::zero(g, r, r);
        let mut tx = Form::zero(g, n, 1);
        for (s, slot) in self.slots.iter().enumerate() {
            let c = v.as_slice()[s * b..(s + 1) * b].to_vec();
            if c.iter().all(|z| *z == C64::default()) {
                continue;
            }
            let f = Scalar::from_coeffs(g, c);
            match *slot {
                Slot::End { i, j, entry } => end.add_entry(i, j, entry / r, entry % r, C64::new(1.0, 0.0), &f),
                Slot::Tx { j, c } => tx.add_entry(0, j, c, 0, C64::new(1.0, 0.0), &f),
            }
        }
        GradedElement::new(self.degree, end, tx)
    }

    /// The basis element `alpha`.
    pub fn basis(&self, alpha: usize) -> GradedElement {
        let g = &self.geom;
        let (slot, k) = self.slot_of(alpha);
        let f = Scalar::mode(g, g.freq(k), C64::new(1.0, 0.0));
        let (n, r) = (g.n(), self.r);
        let mut end = Form::zero(g, r, r);
        let mut tx = Form::zero(g, n, 1);
        match slot {
            Slot::End { i, j, entry } => end.add_entry(i, j, entry / r, entry % r, C64::new(1.0, 0.0), &f),
            Slot::Tx { j, c } => tx.add_entry(0, j, c, 0, C64::new(1.0, 0.0), &f),
        }
        GradedElement::new(self.degree, end, tx)
    }
}
