//! Deterministic band-limited test inputs.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dgla::GradedElement;
use crate::form::{masks, Form};
use crate::torus::{Scalar, Torus};

/// What [`random_bandlimited`] should produce.
#[derive(Clone, Copy, Debug)]
pub enum Shape {
    Scalar,
    /// End(E)-valued `(p, q)` form of rank `r`.
    End { r: usize, p: usize, q: usize },
    /// TX-valued `(0, q)` form.
    Tx { q: usize },
    /// E-valued `(p, q)` form of rank `r`.
    Section { r: usize, p: usize, q: usize },
    /// Element of `L^i` for rank `r`.
    Element { r: usize, degree: usize },
}

#[derive(Clone, Debug)]
pub enum Random {
    Scalar(Scalar),
    Form(Form),
    Element(GradedElement),
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample(rng: &mut impl Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Uniform coefficients on every frequency with `|k_i| <= band`.
pub fn scalar(geom: &Torus, band: usize, rng: &mut impl Rng) -> Scalar {
    assert!(band <= geom.cutoff(), "band {band} exceeds the cutoff");
    let mut f = Scalar::zero(geom);
    let b = band as i32;
    for idx in 0..geom.len() {
        if geom.freq(idx).iter().all(|k| k.abs() <= b) {
            f.coeffs_mut()[idx] = sample(rng);
        }
    }
    f
}

pub fn form(geom: &Torus, rows: usize, cols: usize, p: usize, q: usize, band: usize, rng: &mut impl Rng) -> Form {
    let n = geom.n();
    let mut out = Form::zero(geom, rows, cols);
    if p > n || q > n {
        return out;
    }
    for i in masks(n, p) {
        for j in masks(n, q) {
            out.set(i, j, (0..rows * cols).map(|_| scalar(geom, band, rng)).collect());
        }
    }
    out
}

pub fn tx(geom: &Torus, q: usize, band: usize, rng: &mut impl Rng) -> Form {
    form(geom, geom.n(), 1, 0, q, band, rng)
}

/// All End-valued bidegrees `p + q = degree`, plus the TX part.
pub fn element(geom: &Torus, r: usize, degree: usize, band: usize, rng: &mut impl Rng) -> GradedElement {
    let n = geom.n();
    let mut end = Form::zero(geom, r, r);
    for p in 0..=degree.min(n) {
        let q = degree - p;
        if q <= n {
            end.axpy(C64::new(1.0, 0.0), &form(geom, r, r, p, q, band, rng));
        }
    }
    GradedElement::new(degree, end, tx(geom, degree, band, rng))
}

pub fn random_bandlimited(geom: &Torus, shape: Shape, band: usize, seed: u64) -> Random {
    let mut g = rng(seed);
    match shape {
        Shape::Scalar => Random::Scalar(scalar(geom, band, &mut g)),
        Shape::End { r, p, q } => Random::Form(form(geom, r, r, p, q, band, &mut g)),
        Shape::Tx { q } => Random::Form(tx(geom, q, band, &mut g)),
        Shape::Section { r, p, q } => Random::Form(form(geom, r, 1, p, q, band, &mut g)),
        Shape::Element { r, degree } => Random::Element(element(geom, r, degree, band, &mut g)),
    }
}
