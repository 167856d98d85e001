//! Finite Hodge theory for `d_TE` on the truncated spaces `L^0 .. L^4`.
//!
//! The differential and the Gram matrices are assembled sparsely in the
//! coordinates of [`Layout`]. Coordinates coupled by either matrix are
//! grouped into connected components; every component gets a dense
//! generalized eigenproblem `G Delta v = lambda G v`. For a constant
//! background each component is a single frequency.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgla::{Dgla, GradedElement};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::layout::{Layout, Slot};

/// Highest degree with a Laplacian, harmonic space and Green operator.
pub const MAX_DEGREE: usize = 3;
/// Highest degree whose Gram matrix is assembled (needed for `Delta` on `L^3`).
const TOP: usize = MAX_DEGREE + 1;

pub const DEFAULT_KERNEL_THRESHOLD: f64 = 1e-8;
/// Gap below which the kernel split is flagged unreliable.
pub const MIN_GAP: f64 = 1e4;

const CACHE_MAGIC: &[u8; 8] = b"HDGSYS01";
const CACHE_VERSION: u32 = 1;

/// Column-major sparse complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: usize,
    pub columns: Vec<Vec<(usize, C64)>>,
}

impl SparseMat {
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(|c| c.len()).sum()
    }

    pub fn mul(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.rows);
        for (j, col) in self.columns.iter().enumerate() {
            let xj = x[j];
            if xj == C64::default() {
                continue;
            }
            for &(i, v) in col {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `A^H y`.
    pub fn adjoint_mul(&self, y: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.cols, self.columns.iter().map(|col| col.iter().map(|&(i, v)| v.conj() * y[i]).sum()))
    }

    pub fn frobenius(&self) -> f64 {
        self.columns.iter().flatten().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `self * other` with exact zeros dropped.
    pub fn compose(&self, other: &SparseMat) -> SparseMat {
        assert_eq!(self.cols, other.rows);
        let columns = other
            .columns
            .iter()
            .map(|col| {
                let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
                for &(k, v) in col {
                    for &(i, w) in &self.columns[k] {
                        *acc.entry(i).or_default() += w * v;
                    }
                }
                acc.into_iter().filter(|(_, v)| *v != C64::default()).collect()
            })
            .collect();
        SparseMat { rows: self.rows, cols: other.cols, columns }
    }
}

/// The sparse matrices the whole system is built from; this is what the
/// cache stores.
#[derive(Clone, Debug, PartialEq)]
pub struct HodgeMatrices {
    /// `dmat[i]: L^i -> L^{i+1}` for `i = 0..=3`.
    pub dmat: Vec<SparseMat>,
    /// `gram[i]` for `i = 0..=4`, with `(x, y) = y^H G x`.
    pub gram: Vec<SparseMat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HodgeOptions {
    /// Eigenvalues below this multiple of the largest one (per degree) are harmonic.
    pub kernel_threshold: f64,
}

impl Default for HodgeOptions {
    fn default() -> Self {
        HodgeOptions { kernel_threshold: DEFAULT_KERNEL_THRESHOLD }
    }
}

/// Per-degree summary of the kernel split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub degree: usize,
    pub dim: usize,
    pub harmonic_dim: usize,
    pub lambda_max: f64,
    pub threshold: f64,
    /// Smallest eigenvalue above the threshold over the largest below it.
    pub gap: f64,
    pub min_eigenvalue: f64,
}

struct Block {
    /// Global coordinates per degree, ascending.
    nodes: Vec<Vec<usize>>,
    gram: Vec<DMatrix<C64>>,
    chol: Vec<Option<Cholesky<C64, Dyn>>>,
    /// `dmat[i]` maps `nodes[i]` to `nodes[i + 1]`.
    dmat: Vec<DMatrix<C64>>,
    values: Vec<DVector<f64>>,
    /// Gram-orthonormal eigenvectors, one column per eigenvalue.
    vectors: Vec<DMatrix<C64>>,
}

pub struct HodgeSystem {
    pub dgla: Dgla,
    pub options: HodgeOptions,
    pub layouts: Vec<Layout>,
    pub matrices: HodgeMatrices,
    pub summaries: Vec<DegreeSummary>,
    /// Canonical Gram-orthonormal harmonic basis per degree `0..=3`.
    pub harmonic: Vec<Vec<DVector<C64>>>,
    blocks: Vec<Block>,
    /// `(block, position)` of every coordinate, per degree.
    locate: Vec<Vec<(usize, usize)>>,
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// Sparse matrix of `d_TE: L^i -> L^{i+1}`, one column per basis element.
pub fn assemble_d(dgla: &Dgla, from: &Layout, to: &Layout) -> SparseMat {
    let columns = (0..from.dim())
        .map(|alpha| {
            let img = dgla.d(&from.basis(alpha));
            let v = to.flatten(&img);
            v.iter().enumerate().filter(|(_, z)| **z != C64::default()).map(|(i, z)| (i, *z)).collect()
        })
        .collect();
    SparseMat { rows: to.dim(), cols: from.dim(), columns }
}

/// Gram matrix of `L^i`. End slots pair by `tr(u K^{-1} v^H K)` integrated
/// over the torus, TX slots by the flat metric; distinct `(I, J)` slots are
/// orthogonal.
pub fn assemble_gram(dgla: &Dgla, layout: &Layout) -> Result<SparseMat> {
    let config = &dgla.config;
    let g = config.geom();
    let r = config.rank();
    let b = layout.box_len();
    let dim = layout.dim();
    // pairing[(b, d, c, a)](q): Fourier coefficient of (K^{-1})_{bd} K_{ca} at q
    let pairing: Box<dyn Fn(usize, usize, usize, usize, &[i32]) -> C64> = if config.constant_metric() {
        let k = constant_k(dgla);
        let kinv = k.clone().try_inverse().ok_or(Error::SingularMetric(f64::INFINITY))?;
        Box::new(move |bb, d, c, a, q: &[i32]| if q.iter().all(|&x| x == 0) { kinv[(bb, d)] * k[(c, a)] } else { C64::default() })
    } else {
        let grid = Grid::inversion(g);
        let s = config.sample_metric(&grid)?;
        let mut bufs = vec![Vec::new(); r * r * r * r];
        for bb in 0..r {
            for d in 0..r {
                for c in 0..r {
                    for a in 0..r {
                        let vals: Vec<C64> = (0..grid.len()).map(|p| s.k_inv[p][(bb, d)] * s.k[p][(c, a)]).collect();
                        bufs[((bb * r + d) * r + c) * r + a] = grid.forward(&vals);
                    }
                }
            }
        }
        Box::new(move |bb, d, c, a, q: &[i32]| grid.coefficient(&bufs[((bb * r + d) * r + c) * r + a], q))
    };
    let mut columns = vec![Vec::new(); dim];
    let dims = g.dims();
    let mut q = vec![0i32; dims];
    let mut mq = vec![0i32; dims];
    for (sa, slot_a) in layout.slots.iter().enumerate() {
        match *slot_a {
            Slot::Tx { .. } => {
                for k in 0..b {
                    columns[sa * b + k].push((sa * b + k, one()));
                }
            }
            Slot::End { i, j, entry } => {
                let (a, bb) = (entry / r, entry % r);
                for (sb, slot_b) in layout.slots.iter().enumerate() {
                    let Slot::End { i: i2, j: j2, entry: e2 } = *slot_b else { continue };
                    if (i2, j2) != (i, j) {
                        continue;
                    }
                    let (c, d) = (e2 / r, e2 % r);
                    for k in 0..b {
                        let fk = g.freq(k);
                        for l in 0..b {
                            let fl = g.freq(l);
                            for t in 0..dims {
                                q[t] = fl[t] - fk[t];
                                mq[t] = -q[t];
                            }
                            // Hermitian average of the two quadrature values
                            let v = 0.5 * (pairing(bb, d, c, a, &q) + pairing(d, bb, a, c, &mq).conj());
                            if v != C64::default() {
                                columns[sa * b + k].push((sb * b + l, v));
                            }
                        }
                    }
                }
            }
        }
    }
    for col in &mut columns {
        col.sort_by_key(|e| e.0);
    }
    Ok(SparseMat { rows: dim, cols: dim, columns })
}

fn constant_k(dgla: &Dgla) -> DMatrix<C64> {
    let r = dgla.config.rank();
    let kf = dgla.config.k_form();
    DMatrix::from_fn(r, r, |a, b| kf.entry(0, 0, a, b).mean())
}

pub fn assemble_matrices(dgla: &Dgla) -> Result<(Vec<Layout>, HodgeMatrices)> {
    let g = dgla.config.geom();
    let r = dgla.config.rank();
    let layouts: Vec<Layout> = (0..=TOP).map(|i| Layout::new(g, r, i)).collect();
    let dmat = (0..TOP).map(|i| assemble_d(dgla, &layouts[i], &layouts[i + 1])).collect();
    let gram = layouts.iter().map(|l| assemble_gram(dgla, l)).collect::<Result<_>>()?;
    Ok((layouts, HodgeMatrices { dmat, gram }))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

fn dense_block(m: &SparseMat, rows: &[usize], cols: &[usize], row_pos: &[usize]) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (cj, &c) in cols.iter().enumerate() {
        for &(i, v) in &m.columns[c] {
            out[(row_pos[i], cj)] = v;
        }
    }
    out
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

impl HodgeSystem {
    pub fn assemble(dgla: Dgla, options: HodgeOptions) -> Result<Self> {
        let (layouts, matrices) = assemble_matrices(&dgla)?;
        Self::from_matrices(dgla, options, layouts, matrices)
    }

    /// Assemble, reusing the sparse matrices stored under `dir` when the
    /// content hash matches. Returns whether the cache was hit.
    pub fn assemble_cached(dgla: Dgla, options: HodgeOptions, dir: &Path) -> Result<(Self, bool)> {
        let path = cache_path(&dgla, dir);
        if path.exists() {
            let matrices = load_matrices(&path, &cache_key(&dgla))?;
            let g = dgla.config.geom();
            let layouts = (0..=TOP).map(|i| Layout::new(g, dgla.config.rank(), i)).collect();
            return Ok((Self::from_matrices(dgla, options, layouts, matrices)?, true));
        }
        let (layouts, matrices) = assemble_matrices(&dgla)?;
        fs::create_dir_all(dir).map_err(|e| Error::Cache(e.to_string()))?;
        save_matrices(&path, &cache_key(&dgla), &matrices)?;
        Ok((Self::from_matrices(dgla, options, layouts, matrices)?, false))
    }

    pub fn from_matrices(dgla: Dgla, options: HodgeOptions, layouts: Vec<Layout>, matrices: HodgeMatrices) -> Result<Self> {
        let dims: Vec<usize> = layouts.iter().map(|l| l.dim()).collect();
        let offsets: Vec<usize> = dims.iter().scan(0, |acc, &d| { let o = *acc; *acc += d; Some(o) }).collect();
        let total: usize = dims.iter().sum();
        let mut parent: Vec<usize> = (0..total).collect();
        for (i, m) in matrices.dmat.iter().enumerate() {
            for (c, col) in m.columns.iter().enumerate() {
                for &(row, _) in col {
                    union(&mut parent, offsets[i] + c, offsets[i + 1] + row);
                }
            }
        }
        for (i, m) in matrices.gram.iter().enumerate() {
            for (c, col) in m.columns.iter().enumerate() {
                for &(row, _) in col {
                    union(&mut parent, offsets[i] + c, offsets[i] + row);
                }
            }
        }
        // roots are the smallest member, so blocks come out in a fixed order
        let mut block_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut nodes: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut locate: Vec<Vec<(usize, usize)>> = dims.iter().map(|&d| vec![(0, 0); d]).collect();
        for (deg, &d) in dims.iter().enumerate() {
            for alpha in 0..d {
                let root = find(&mut parent, offsets[deg] + alpha);
                let next = block_of_root.len();
                let b = *block_of_root.entry(root).or_insert(next);
                if b == nodes.len() {
                    nodes.push(vec![Vec::new(); TOP + 1]);
                }
                locate[deg][alpha] = (b, nodes[b][deg].len());
                nodes[b][deg].push(alpha);
            }
        }
        let pos: Vec<Vec<usize>> = locate.iter().map(|l| l.iter().map(|p| p.1).collect()).collect();
        let blocks = nodes.into_iter().map(|nd| build_block(nd, &matrices, &pos)).collect::<Result<Vec<_>>>()?;
        let mut sys = HodgeSystem { dgla, options, layouts, matrices, summaries: Vec::new(), harmonic: Vec::new(), blocks, locate };
        sys.summaries = (0..=MAX_DEGREE).map(|d| sys.summarize(d)).collect();
        sys.harmonic = (0..=MAX_DEGREE).map(|d| sys.canonical_basis(d)).collect();
        Ok(sys)
    }

    fn summarize(&self, degree: usize) -> DegreeSummary {
        let vals: Vec<f64> = self.blocks.iter().flat_map(|b| b.values[degree].iter().cloned()).collect();
        let lambda_max = vals.iter().cloned().fold(0.0, f64::max);
        let threshold = self.options.kernel_threshold * lambda_max;
        let below = vals.iter().filter(|&&v| v <= threshold);
        let above = vals.iter().filter(|&&v| v > threshold);
        let max_below = below.clone().cloned().fold(0.0, f64::max);
        let min_above = above.cloned().fold(f64::INFINITY, f64::min);
        let gap = if min_above.is_infinite() { f64::INFINITY } else { min_above / max_below.max(f64::EPSILON * lambda_max) };
        DegreeSummary {
            degree,
            dim: vals.len(),
            harmonic_dim: below.count(),
            lambda_max,
            threshold,
            gap,
            min_eigenvalue: vals.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn threshold(&self, degree: usize) -> f64 {
        self.summaries[degree].threshold
    }

    /// Gram-Schmidt of `H e_alpha` over ascending `alpha`, done per block and
    /// merged by pivot; equal to the global procedure since blocks are orthogonal.
    fn canonical_basis(&self, degree: usize) -> Vec<DVector<C64>> {
        let thr = self.threshold(degree);
        let dim = self.layouts[degree].dim();
        let mut out: Vec<(usize, DVector<C64>)> = Vec::new();
        for b in &self.blocks {
            let kernel: Vec<usize> = (0..b.values[degree].len()).filter(|&k| b.values[degree][k] <= thr).collect();
            if kernel.is_empty() {
                continue;
            }
            let v0 = b.vectors[degree].select_columns(&kernel);
            let g = &b.gram[degree];
            let mut found: Vec<DVector<C64>> = Vec::new();
            for (p, &alpha) in b.nodes[degree].iter().enumerate() {
                if found.len() == kernel.len() {
                    break;
                }
                let mut h = &v0 * (v0.adjoint() * g.column(p));
                for f in &found {
                    let c = (f.adjoint() * g * &h)[(0, 0)];
                    h -= f * c;
                }
                let nrm = (h.adjoint() * g * &h)[(0, 0)].re.max(0.0).sqrt();
                let scale = g[(p, p)].re.sqrt();
                if nrm > 1e-6 * scale {
                    h /= C64::new(nrm, 0.0);
                    let mut global = DVector::zeros(dim);
                    for (q, &beta) in b.nodes[degree].iter().enumerate() {
                        global[beta] = h[q];
                    }
                    out.push((alpha, global));
                    found.push(h);
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out.into_iter().map(|e| e.1).collect()
    }

    pub fn harmonic_dim(&self, degree: usize) -> usize {
        self.harmonic[degree].len()
    }

    pub fn dim(&self, degree: usize) -> usize {
        self.layouts[degree].dim()
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > MAX_DEGREE {
            return Err(Error::Precondition(format!("degree {degree} is outside the assembled range 0..={MAX_DEGREE}")));
        }
        Ok(())
    }

    pub fn flatten(&self, x: &GradedElement) -> DVector<C64> {
        self.layouts[x.degree].flatten(x)
    }

    pub fn unflatten(&self, degree: usize, v: &DVector<C64>) -> GradedElement {
        self.layouts[degree].unflatten(v)
    }

    /// `(x, y) = y^H G x`.
    pub fn inner(&self, degree: usize, x: &DVector<C64>, y: &DVector<C64>) -> C64 {
        y.dotc(&self.matrices.gram[degree].mul(x))
    }

    pub fn norm(&self, degree: usize, x: &DVector<C64>) -> f64 {
        self.inner(degree, x, x).re.max(0.0).sqrt()
    }

    fn gather(&self, degree: usize, b: usize, x: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.blocks[b].nodes[degree].len(), self.blocks[b].nodes[degree].iter().map(|&a| x[a]))
    }

    fn scatter(&self, degree: usize, b: usize, local: &DVector<C64>, out: &mut DVector<C64>) {
        for (p, &a) in self.blocks[b].nodes[degree].iter().enumerate() {
            out[a] = local[p];
        }
    }

    /// Apply a per-block map `L^degree -> L^target`.
    fn blockwise(&self, degree: usize, target: usize, x: &DVector<C64>, f: impl Fn(&Block, DVector<C64>) -> DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.layouts[target].dim());
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.nodes[degree].is_empty() || b.nodes[target].is_empty() {
                continue;
            }
            let local = self.gather(degree, bi, x);
            if local.iter().all(|z| *z == C64::default()) {
                continue;
            }
            self.scatter(target, bi, &f(b, local), &mut out);
        }
        out
    }

    /// `d_TE` through the assembled matrix.
    pub fn d_vec(&self, degree: usize, x: &DVector<C64>) -> DVector<C64> {
        self.matrices.dmat[degree].mul(x)
    }

    /// `d* = G_{i-1}^{-1} D_{i-1}^H G_i`; zero on `L^0`.
    pub fn adjoint_vec(&self, degree: usize, x: &DVector<C64>) -> DVector<C64> {
        if degree == 0 {
            return DVector::zeros(self.layouts[0].dim());
        }
        self.blockwise(degree, degree - 1, x, |b, y| {
            let w = b.dmat[degree - 1].adjoint() * (&b.gram[degree] * y);
            match &b.chol[degree - 1] {
                Some(c) => c.solve(&w),
                None => w,
            }
        })
    }

    /// `d d* + d* d`, computed from the two operators.
    pub fn laplacian_vec(&self, degree: usize, x: &DVector<C64>) -> DVector<C64> {
        let mut out = self.adjoint_vec(degree + 1, &self.d_vec(degree, x));
        if degree > 0 {
            out += self.d_vec(degree - 1, &self.adjoint_vec(degree, x));
        }
        out
    }

    pub fn harmonic_vec(&self, degree: usize, x: &DVector<C64>) -> DVector<C64> {
        let thr = self.threshold(degree);
        self.blockwise(degree, degree, x, |b, y| spectral_apply(b, degree, &y, |l| if l <= thr { Some(1.0) } else { None }))
    }

    pub fn green_vec(&self, degree: usize, x: &DVector<C64>) -> DVector<C64> {
        let thr = self.threshold(degree);
        self.blockwise(degree, degree, x, |b, y| spectral_apply(b, degree, &y, |l| if l > thr { Some(1.0 / l) } else { None }))
    }

    /// Coordinates of `x` against the canonical harmonic basis.
    pub fn harmonic_coords_vec(&self, degree: usize, x: &DVector<C64>) -> Vec<C64> {
        let gx = self.matrices.gram[degree].mul(x);
        self.harmonic[degree].iter().map(|h| h.dotc(&gx)).collect()
    }

    pub fn d(&self, x: &GradedElement) -> Result<GradedElement> {
        self.check_degree(x.degree)?;
        Ok(self.unflatten(x.degree + 1, &self.d_vec(x.degree, &self.flatten(x))))
    }

    pub fn adjoint_apply(&self, x: &GradedElement) -> Result<GradedElement> {
        self.check_degree(x.degree)?;
        let deg = x.degree.saturating_sub(1);
        Ok(self.unflatten(deg, &self.adjoint_vec(x.degree, &self.flatten(x))))
    }

    pub fn laplacian(&self, x: &GradedElement) -> Result<GradedElement> {
        self.check_degree(x.degree)?;
        Ok(self.unflatten(x.degree, &self.laplacian_vec(x.degree, &self.flatten(x))))
    }

    pub fn harmonic_project(&self, x: &GradedElement) -> Result<GradedElement> {
        self.check_degree(x.degree)?;
        Ok(self.unflatten(x.degree, &self.harmonic_vec(x.degree, &self.flatten(x))))
    }

    pub fn green_apply(&self, x: &GradedElement) -> Result<GradedElement> {
        self.check_degree(x.degree)?;
        Ok(self.unflatten(x.degree, &self.green_vec(x.degree, &self.flatten(x))))
    }

    pub fn harmonic_coords(&self, x: &GradedElement) -> Result<Vec<C64>> {
        self.check_degree(x.degree)?;
        Ok(self.harmonic_coords_vec(x.degree, &self.flatten(x)))
    }

    /// `sum_j c_j eta_j` in `L^degree`.
    pub fn harmonic_element(&self, degree: usize, coords: &[C64]) -> GradedElement {
        let mut v = DVector::zeros(self.layouts[degree].dim());
        for (c, h) in coords.iter().zip(&self.harmonic[degree]) {
            v.axpy(*c, h, one());
        }
        self.unflatten(degree, &v)
    }

    pub fn harmonic_basis(&self, degree: usize) -> Vec<GradedElement> {
        self.harmonic[degree].iter().map(|h| self.unflatten(degree, h)).collect()
    }

    /// Sorted eigenvalues of `Delta` on `L^degree`.
    pub fn spectrum(&self, degree: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().flat_map(|b| b.values[degree].iter().cloned()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// `|D_{i+1} D_i|_F / (|D_{i+1}|_F |D_i|_F)`, worst over `i = 0..=2`.
    pub fn d_squared_matrix_residual(&self) -> f64 {
        (0..MAX_DEGREE)
            .map(|i| {
                let (a, b) = (&self.matrices.dmat[i + 1], &self.matrices.dmat[i]);
                let scale = a.frobenius() * b.frobenius();
                crate::dgla::relative(a.compose(b).frobenius(), scale)
            })
            .fold(0.0, f64::max)
    }

    /// Worst per-degree gap; the split is reliable when this is at least [`MIN_GAP`].
    pub fn min_gap(&self) -> f64 {
        self.summaries.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min)
    }

    pub fn harmonic_dims(&self) -> Vec<usize> {
        (0..=MAX_DEGREE).map(|d| self.harmonic_dim(d)).collect()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Block index and position of a coordinate.
    pub fn locate(&self, degree: usize, alpha: usize) -> (usize, usize) {
        self.locate[degree][alpha]
    }
}

/// `V f(Lambda) V^H G y` over eigenpairs where `f` is defined.
fn spectral_apply(b: &Block, degree: usize, y: &DVector<C64>, f: impl Fn(f64) -> Option<f64>) -> DVector<C64> {
    let gy = &b.gram[degree] * y;
    let mut out = DVector::zeros(y.len());
    for (k, &l) in b.values[degree].iter().enumerate() {
        if let Some(w) = f(l) {
            let v = b.vectors[degree].column(k);
            let c = v.dotc(&gy) * w;
            out.axpy(c, &v, one());
        }
    }
    out
}

fn build_block(nodes: Vec<Vec<usize>>, m: &HodgeMatrices, pos: &[Vec<usize>]) -> Result<Block> {
    let gram: Vec<DMatrix<C64>> = (0..=TOP).map(|i| hermitize(&dense_block(&m.gram[i], &nodes[i], &nodes[i], &pos[i]))).collect();
    let dmat: Vec<DMatrix<C64>> = (0..TOP).map(|i| dense_block(&m.dmat[i], &nodes[i + 1], &nodes[i], &pos[i + 1])).collect();
    let mut chol = Vec::with_capacity(TOP + 1);
    for g in &gram {
        if g.nrows() == 0 {
            chol.push(None);
            continue;
        }
        let c = Cholesky::new(g.clone()).ok_or_else(|| Error::Precondition("Gram matrix is not positive definite".into()))?;
        chol.push(Some(c));
    }
    let mut values = Vec::with_capacity(MAX_DEGREE + 1);
    let mut vectors = Vec::with_capacity(MAX_DEGREE + 1);
    for i in 0..=MAX_DEGREE {
        let n = nodes[i].len();
        if n == 0 {
            values.push(DVector::zeros(0));
            vectors.push(DMatrix::zeros(0, 0));
            continue;
        }
        let g = &gram[i];
        let mut glap = dmat[i].adjoint() * &gram[i + 1] * &dmat[i];
        if i > 0 {
            if let Some(c) = &chol[i - 1] {
                let gd = g * &dmat[i - 1];
                glap += &gd * c.solve(&gd.adjoint());
            }
        }
        let l = chol[i].as_ref().expect("nonempty block").l();
        let linv = l.clone().try_inverse().ok_or_else(|| Error::Precondition("singular Gram factor".into()))?;
        let a = hermitize(&(&linv * glap * linv.adjoint()));
        let eig = a.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let u = eig.eigenvectors.select_columns(&order);
        vectors.push(linv.adjoint() * u);
        values.push(vals);
    }
    Ok(Block { nodes, gram, chol, dmat, values, vectors })
}

/// Content hash of everything the sparse matrices depend on.
pub fn cache_key(dgla: &Dgla) -> [u8; 32] {
    let c = &dgla.config;
    let g = c.geom();
    let mut h = Sha256::new();
    h.update(CACHE_MAGIC);
    h.update(CACHE_VERSION.to_le_bytes());
    h.update((g.n() as u64).to_le_bytes());
    h.update((g.cutoff() as u64).to_le_bytes());
    h.update(format!("{:?}", g.dealias()).as_bytes());
    h.update((c.rank() as u64).to_le_bytes());
    h.update(format!("{:?}", c.metric()).as_bytes());
    for ((i, j), m) in c.theta().components() {
        h.update([*i, *j]);
        for f in m {
            for z in f.coeffs() {
                h.update(z.re.to_bits().to_le_bytes());
                h.update(z.im.to_bits().to_le_bytes());
            }
        }
    }
    h.update(format!("{:?}", dgla.convention).as_bytes());
    h.finalize().into()
}

pub fn cache_path(dgla: &Dgla, dir: &Path) -> PathBuf {
    let hex: String = cache_key(dgla).iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("hodge-{hex}.bin"))
}

fn write_mat(buf: &mut Vec<u8>, m: &SparseMat) {
    buf.extend((m.rows as u64).to_le_bytes());
    buf.extend((m.cols as u64).to_le_bytes());
    for col in &m.columns {
        buf.extend((col.len() as u64).to_le_bytes());
        for &(i, v) in col {
            buf.extend((i as u64).to_le_bytes());
            buf.extend(v.re.to_bits().to_le_bytes());
            buf.extend(v.im.to_bits().to_le_bytes());
        }
    }
}

/// Binary format: magic, `u32` version, 32-byte key, `u32` count of `d`
/// matrices, `u32` count of Gram matrices, then each matrix as `u64` rows,
/// `u64` cols and per column a `u64` length followed by `(u64 row, f64 re,
/// f64 im)` triples, all little-endian.
pub fn save_matrices(path: &Path, key: &[u8; 32], m: &HodgeMatrices) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend(CACHE_MAGIC);
    buf.extend(CACHE_VERSION.to_le_bytes());
    buf.extend(key);
    buf.extend((m.dmat.len() as u32).to_le_bytes());
    buf.extend((m.gram.len() as u32).to_le_bytes());
    for mat in m.dmat.iter().chain(&m.gram) {
        write_mat(&mut buf, mat);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::Cache(e.to_string()))?;
    f.write_all(&buf).map_err(|e| Error::Cache(e.to_string()))
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self.buf.get(self.at..self.at + n).ok_or_else(|| Error::Cache("truncated cache file".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn mat(&mut self) -> Result<SparseMat> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let mut columns = Vec::with_capacity(cols);
        for _ in 0..cols {
            let len = self.u64()? as usize;
            let mut col = Vec::with_capacity(len);
            for _ in 0..len {
                let i = self.u64()? as usize;
                if i >= rows {
                    return Err(Error::Cache("row index out of range".into()));
                }
                col.push((i, C64::new(self.f64()?, self.f64()?)));
            }
            columns.push(col);
        }
        Ok(SparseMat { rows, cols, columns })
    }
}

pub fn load_matrices(path: &Path, key: &[u8; 32]) -> Result<HodgeMatrices> {
    let mut buf = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::Cache(e.to_string()))?;
    let mut r = Reader { buf: &buf, at: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let v = r.u32()?;
    if v != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {v}")));
    }
    if r.take(32)? != key {
        return Err(Error::Cache("content hash mismatch".into()));
    }
    let nd = r.u32()? as usize;
    let ng = r.u32()? as usize;
    let dmat = (0..nd).map(|_| r.mat()).collect::<Result<_>>()?;
    let gram = (0..ng).map(|_| r.mat()).collect::<Result<_>>()?;
    if r.at != buf.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    Ok(HodgeMatrices { dmat, gram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::higgs::{HiggsPairConfig, MetricSpec};
    use crate::random;
    use crate::torus::{Dealias, TorusGeometry};

    fn z() -> C64 {
        C64::default()
    }

    fn abelian(n_cut: usize) -> HodgeSystem {
        let g = TorusGeometry::new(1, n_cut, Dealias::PlainTruncation).unwrap();
        let c = HiggsPairConfig::new(&g, 1, MetricSpec::Identity, &[vec![z()]]).unwrap();
        HodgeSystem::assemble(Dgla::resolved(c).unwrap(), HodgeOptions::default()).unwrap()
    }

    fn nilpotent() -> HodgeSystem {
        let g = TorusGeometry::new(1, 3, Dealias::PlainTruncation).unwrap();
        let o = C64::new(1.0, 0.0);
        let c = HiggsPairConfig::new(&g, 2, MetricSpec::Identity, &[vec![z(), o, z(), z()]]).unwrap();
        HodgeSystem::assemble(Dgla::resolved(c).unwrap(), HodgeOptions::default()).unwrap()
    }

    #[test]
    fn abelian_dimensions() {
        let s = abelian(3);
        assert_eq!(s.harmonic_dims(), vec![2, 3, 1, 0]);
        assert!(s.min_gap() >= MIN_GAP);
    }

    #[test]
    fn abelian_laplacian_is_the_symbol() {
        let s = abelian(2);
        let g = s.dgla.config.geom().clone();
        // End 0-form e_k: Delta = |nu|^2 = pi^2 |k|^2
        for k in 0..g.len() {
            let mut v = DVector::zeros(s.dim(0));
            v[k] = C64::new(1.0, 0.0);
            let lv = s.laplacian_vec(0, &v);
            let expect = g.nu(k, 0).norm_sqr();
            assert!((lv[k] - expect).norm() < 1e-12, "{} vs {}", lv[k], expect);
            assert!(lv.norm() - lv[k].norm() < 1e-12);
        }
    }

    #[test]
    fn hodge_decomposition_nilpotent() {
        let s = nilpotent();
        let mut rng = random::rng(7);
        for deg in 0..=2 {
            let x = random::element(s.dgla.config.geom(), 2, deg, 3, &mut rng);
            let v = s.flatten(&x);
            let h = s.harmonic_vec(deg, &v);
            let lg = s.laplacian_vec(deg, &s.green_vec(deg, &v));
            let res = (&v - &h - &lg).norm() / v.norm();
            assert!(res < 1e-10, "degree {deg}: {res}");
        }
        assert!(s.d_squared_matrix_residual() < 1e-14);
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGeometry::new(1, 2, Dealias::PlainTruncation).unwrap();
        let c = HiggsPairConfig::new(&g, 1, MetricSpec::Identity, &[vec![z()]]).unwrap();
        let dg = Dgla::resolved(c).unwrap();
        let (a, hit) = HodgeSystem::assemble_cached(dg.clone(), HodgeOptions::default(), dir.path()).unwrap();
        assert!(!hit);
        let (b, hit) = HodgeSystem::assemble_cached(dg, HodgeOptions::default(), dir.path()).unwrap();
        assert!(hit);
        assert_eq!(a.matrices, b.matrices);
        assert_eq!(a.spectrum(1), b.spectrum(1));
    }
}
