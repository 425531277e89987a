//! Chain matrix `A`, its exact nilpotent resolvent `e^{At}`, the intrinsic
//! scale matrices `M_t` and `T_t`, the sphere projection of the driving
//! measure, and the resulting Ornstein–Uhlenbeck density with its
//! structural diagnostics.

use std::sync::Arc;

use ndarray::ArrayD;

use crate::error::{KolmoError, Result};
use crate::grid::RectGrid;
use crate::quad::gauss_legendre_01;
use crate::scalar::Scalar;
use crate::stable::{LevyModel, SphericalMeasure, StableDensityEvaluator};

/// Minimal dense matrix; the chain dimension `nd` stays single-digit.
#[derive(Debug, Clone, PartialEq)]
pub struct DMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn scale(&self, f: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * f).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(other.data.iter()).map(|(&a, &b)| a + b).collect(),
        }
    }
}

/// Smallest singular value of a small square block via Jacobi iteration on
/// `BᵀB`.
fn min_singular_value<T: Scalar>(block: &DMat<T>) -> T {
    let d = block.rows;
    if d == 1 {
        return block.get(0, 0).abs();
    }
    // S = BᵀB, symmetric positive semi-definite.
    let mut s = DMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = T::zero();
            for k in 0..d {
                acc += block.get(k, i) * block.get(k, j);
            }
            s.set(i, j, acc);
        }
    }
    for _ in 0..60 {
        let (mut p, mut q, mut big) = (0usize, 1usize, T::zero());
        for i in 0..d {
            for j in i + 1..d {
                if s.get(i, j).abs() > big {
                    big = s.get(i, j).abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < T::of(1e-30) {
            break;
        }
        let theta = (s.get(q, q) - s.get(p, p)) / (T::of(2.0) * s.get(p, q));
        let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
        let c = (t * t + T::one()).sqrt().recip();
        let sn = t * c;
        let mut rot = DMat::identity(d);
        rot.set(p, p, c);
        rot.set(q, q, c);
        rot.set(p, q, sn);
        rot.set(q, p, -sn);
        let mut rot_t = DMat::identity(d);
        rot_t.set(p, p, c);
        rot_t.set(q, q, c);
        rot_t.set(p, q, -sn);
        rot_t.set(q, p, sn);
        s = rot_t.matmul(&s).matmul(&rot);
    }
    let mut min_ev = T::infinity();
    for i in 0..d {
        min_ev = min_ev.min(s.get(i, i));
    }
    min_ev.max(T::zero()).sqrt()
}

/// Sub-diagonal chain matrix with full-rank coupling blocks.
#[derive(Debug, Clone)]
pub struct ChainMatrix<T> {
    n: usize,
    d: usize,
    /// `A_{i,i-1}` for i = 2..n, each a d×d block.
    subblocks: Vec<DMat<T>>,
    /// `A^k / k!` for k = 0..n-1 (the series truncates: A is nilpotent).
    powers: Vec<DMat<T>>,
}

pub const RANK_TOL: f64 = 1e-10;

impl<T: Scalar> ChainMatrix<T> {
    pub fn new(n: usize, d: usize, subblocks: Vec<DMat<T>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(KolmoError::InvalidModel("n, d must be positive".into()));
        }
        if subblocks.len() != n - 1 {
            return Err(KolmoError::InvalidModel(format!(
                "need {} sub-diagonal blocks, got {}",
                n - 1,
                subblocks.len()
            )));
        }
        for (k, b) in subblocks.iter().enumerate() {
            if b.rows != d || b.cols != d {
                return Err(KolmoError::InvalidModel("sub-block shape".into()));
            }
            let sv = min_singular_value(b);
            if sv <= T::of(RANK_TOL) {
                return Err(KolmoError::InvalidModel(format!(
                    "block A_{{{},{}}} nearly rank-deficient: min singular value {sv}",
                    k + 2,
                    k + 1
                )));
            }
        }
        let nd = n * d;
        let mut full = DMat::zeros(nd, nd);
        for (k, b) in subblocks.iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    full.set((k + 1) * d + r, k * d + c, b.get(r, c));
                }
            }
        }
        let mut powers = vec![DMat::identity(nd)];
        let mut cur = DMat::identity(nd);
        for k in 1..n {
            cur = cur.matmul(&full).scale(T::of_usize(k).recip());
            powers.push(cur.clone());
        }
        Ok(Self { n, d, subblocks, powers })
    }

    /// Scalar chain with all couplings equal to `a` (d = 1).
    pub fn scalar_chain(n: usize, a: T) -> Result<Self> {
        let blocks = (1..n).map(|_| DMat { rows: 1, cols: 1, data: vec![a] }).collect();
        Self::new(n, 1, blocks)
    }

    pub fn levels(&self) -> usize {
        self.n
    }

    pub fn block(&self) -> usize {
        self.d
    }

    pub fn nd(&self) -> usize {
        self.n * self.d
    }

    pub fn subblock(&self, i: usize) -> &DMat<T> {
        &self.subblocks[i]
    }

    /// `A x`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let d = self.d;
        for a in 0..d {
            out[a] = T::zero();
        }
        for i in 1..self.n {
            let b = &self.subblocks[i - 1];
            for r in 0..d {
                let mut acc = T::zero();
                for c in 0..d {
                    acc += b.get(r, c) * x[(i - 1) * d + c];
                }
                out[i * d + r] = acc;
            }
        }
    }

    /// Exact resolvent `e^{At}`: the nilpotent series truncates at order n-1.
    pub fn resolvent(&self, t: T) -> DMat<T> {
        let mut out = self.powers[0].clone();
        let mut tk = T::one();
        for k in 1..self.n {
            tk = tk * t;
            out = out.add(&self.powers[k].scale(tk));
        }
        out
    }

    pub fn apply_resolvent(&self, t: T, x: &[T], out: &mut [T]) {
        self.resolvent(t).matvec(x, out);
    }

    /// Block `(i,j)` (0-based levels, i ≥ j) of `A^{i-j}/(i-j)!`: the
    /// constant part of the resolvent block, `[e^{At}]_{ij} = C_{ij} t^{i-j}`.
    pub fn resolvent_block_constant(&self, i: usize, j: usize) -> DMat<T> {
        let d = self.d;
        let mut out = DMat::zeros(d, d);
        if i < j {
            return out;
        }
        let p = &self.powers[i - j];
        for r in 0..d {
            for c in 0..d {
                out.set(r, c, p.get(i * d + r, j * d + c));
            }
        }
        out
    }

    /// Embedding `B : R^d -> R^{nd}` into the first block.
    pub fn embed(&self, y: &[T], out: &mut [T]) {
        for v in out.iter_mut() {
            *v = T::zero();
        }
        out[..self.d].copy_from_slice(y);
    }
}

/// Intrinsic scale matrices `M_t` (block i gets `t^{i-1}`) and
/// `T_t = t^{1/α} M_t`, stored as per-coordinate diagonal factors.
#[derive(Debug, Clone, Copy)]
pub struct ScaleOps<T> {
    pub n: usize,
    pub d: usize,
    pub alpha: T,
}

impl<T: Scalar> ScaleOps<T> {
    pub fn new(n: usize, d: usize, alpha: T) -> Self {
        Self { n, d, alpha }
    }

    pub fn nd(&self) -> usize {
        self.n * self.d
    }

    /// Diagonal of `M_t`.
    pub fn m_diag(&self, t: T, out: &mut [T]) {
        for i in 0..self.n {
            let f = t.powi(i as i32);
            for a in i * self.d..(i + 1) * self.d {
                out[a] = f;
            }
        }
    }

    /// Diagonal of `T_t = t^{1/α} M_t`.
    pub fn t_diag(&self, t: T, out: &mut [T]) {
        self.m_diag(t, out);
        let f = t.powf(self.alpha.recip());
        for v in out.iter_mut() {
            *v *= f;
        }
    }

    /// `det M_t = t^{d n(n-1)/2}`.
    pub fn det_m(&self, t: T) -> T {
        let e = (self.d * self.n * (self.n - 1) / 2) as i32;
        t.powi(e)
    }

    pub fn det_t(&self, t: T) -> T {
        self.det_m(t) * t.powf(T::of_usize(self.nd()) / self.alpha)
    }
}

/// Push-forward of the base spherical measure through the normalized lift
/// `l(v,s) = e^{vA}Bs / |e^{vA}Bs|` with weights `w q_j |e^{vA}Bs|^α`.
pub fn projected_measure<T: Scalar>(
    chain: &ChainMatrix<T>,
    base: &LevyModel<T>,
    n_time_nodes: usize,
) -> Result<LevyModel<T>> {
    if base.dim() != chain.block() {
        return Err(KolmoError::InvalidModel("base measure dimension must equal block size".into()));
    }
    let nd = chain.nd();
    let (nodes, weights) = gauss_legendre_01::<T>(n_time_nodes);
    let mut atoms: Vec<(Vec<T>, T)> = Vec::new();
    let mut embedded = vec![T::zero(); nd];
    let mut lifted = vec![T::zero(); nd];
    for (v, q) in nodes.iter().zip(weights.iter()) {
        let res = chain.resolvent(*v);
        for (s, w) in base.measure.atoms_iter() {
            chain.embed(s, &mut embedded);
            res.matvec(&embedded, &mut lifted);
            let norm = lifted.iter().map(|&c| c * c).sum::<T>().sqrt();
            assert!(norm > T::zero(), "lift of a unit vector cannot vanish: B is injective");
            let dir: Vec<T> = lifted.iter().map(|&c| c / norm).collect();
            atoms.push((dir, w * *q * norm.powf(base.alpha)));
        }
    }
    let measure = SphericalMeasure::atoms(nd, &atoms)?;
    LevyModel::new(base.alpha, measure)
}

/// Ornstein–Uhlenbeck transition density
/// `p(t,x,y) = det(M_t)^{-1} p_S(t, M_t^{-1}(e^{At}x - y))`.
pub struct OuKernel<T> {
    pub chain: Arc<ChainMatrix<T>>,
    pub scale: ScaleOps<T>,
    pub eval: Arc<StableDensityEvaluator<T>>,
}

impl<T: Scalar> OuKernel<T> {
    pub fn new(chain: Arc<ChainMatrix<T>>, eval: Arc<StableDensityEvaluator<T>>) -> Self {
        let scale = ScaleOps::new(chain.levels(), chain.block(), eval.alpha());
        Self { chain, scale, eval }
    }

    pub fn density(&self, t: T, x: &[T], y: &[T]) -> T {
        let nd = self.chain.nd();
        debug_assert!(nd <= 8);
        let mut fx = [T::zero(); 8];
        self.chain.apply_resolvent(t, x, &mut fx[..nd]);
        let mut m = [T::zero(); 8];
        self.scale.m_diag(t, &mut m[..nd]);
        let mut z = [T::zero(); 8];
        for a in 0..nd {
            z[a] = (fx[a] - y[a]) / m[a];
        }
        self.eval.density(t, &z[..nd]) / self.scale.det_m(t)
    }
}

/// Finite-difference residuals of the structural derivative identity
/// `D_{x_i} p(t,x,y) + Σ_{j≥i} C_{ji} t^{j-i} D_{y_j} p(t,x,y) = 0`
/// with the constants read from the resolvent blocks. Returns the max
/// relative residual per level.
pub fn scaling_identity_residuals<T: Scalar>(
    kernel: &OuKernel<T>,
    t: T,
    x: &[T],
    y: &[T],
    fd_step: T,
) -> Result<Vec<T>> {
    let n = kernel.chain.levels();
    let d = kernel.chain.block();
    let nd = n * d;
    let mut m = vec![T::zero(); nd];
    kernel.scale.m_diag(t, &mut m);
    let min_scale = m.iter().fold(T::infinity(), |a, &b| a.min(b));
    if fd_step < T::of(1e-7) * min_scale {
        return Err(KolmoError::Domain("fd step underflows the grid scale".into()));
    }
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let mut worst = T::zero();
        for a in 0..d {
            let col = i * d + a;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += fd_step;
            xm[col] -= fd_step;
            let dx = (kernel.density(t, &xp, y) - kernel.density(t, &xm, y)) / (fd_step + fd_step);
            // Σ_{j≥i} [C_{ji} t^{j-i} D_{y_j} p]_a
            let mut dy_sum = T::zero();
            for j in i..n {
                let cji = kernel.chain.resolvent_block_constant(j, i);
                let tj = t.powi((j - i) as i32);
                for b in 0..d {
                    let coeff = cji.get(b, a);
                    if coeff == T::zero() {
                        continue;
                    }
                    let row = j * d + b;
                    let mut yp = y.to_vec();
                    let mut ym = y.to_vec();
                    yp[row] += fd_step;
                    ym[row] -= fd_step;
                    let dyj =
                        (kernel.density(t, x, &yp) - kernel.density(t, x, &ym)) / (fd_step + fd_step);
                    dy_sum += coeff * tj * dyj;
                }
            }
            let denom = dx.abs().max(dy_sum.abs()).max(T::of(1e-12));
            worst = worst.max((dx + dy_sum).abs() / denom);
        }
        residuals.push(worst);
    }
    Ok(residuals)
}

/// `∫ w(y) |values(y)| dy` over a sampled (derivative) grid.
pub fn weighted_abs_moment<T: Scalar, W: Fn(&[T]) -> T>(
    grid: &RectGrid<T>,
    values: &ArrayD<T>,
    weight: W,
) -> T {
    let dim = grid.dim();
    let mut pt = vec![T::zero(); dim];
    let mut acc = T::zero();
    for (flat, &v) in values.iter().enumerate() {
        grid.point_of_flat(flat, &mut pt);
        acc += weight(&pt) * v.abs();
    }
    acc * grid.cell_volume()
}

/// Stable smoothing moment `∫ |y|^γ |D^l p_S(t, y)| dy` on a sampled grid;
/// γ must stay below α or the integral diverges.
pub fn smoothing_moment<T: Scalar>(
    grid: &RectGrid<T>,
    values: &ArrayD<T>,
    gamma: T,
    alpha: T,
) -> Result<T> {
    if gamma < T::zero() || gamma >= alpha {
        return Err(KolmoError::Domain(format!(
            "moment order gamma = {gamma} must lie in [0, alpha = {alpha})"
        )));
    }
    Ok(weighted_abs_moment(grid, values, |y| {
        y.iter().map(|&c| c * c).sum::<T>().sqrt().powf(gamma)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolvent_two_level_closed_form() {
        let chain = ChainMatrix::scalar_chain(2, 0.7f64).unwrap();
        let r = chain.resolvent(2.0);
        assert_eq!(r.get(0, 0), 1.0);
        assert_eq!(r.get(0, 1), 0.0);
        assert!((r.get(1, 0) - 1.4).abs() < 1e-15);
        assert_eq!(r.get(1, 1), 1.0);
    }

    #[test]
    fn resolvent_at_zero_is_identity() {
        let chain = ChainMatrix::scalar_chain(3, 1.0f64).unwrap();
        assert_eq!(chain.resolvent(0.0), DMat::identity(3));
    }

    #[test]
    fn resolvent_three_level_matches_series_oracle() {
        // Generic dense-series oracle (50 terms; exact here since A is
        // nilpotent); block (3,1) must be t^2/2.
        let chain = ChainMatrix::scalar_chain(3, 1.0f64).unwrap();
        let t = 1.37f64;
        let r = chain.resolvent(t);
        let mut a = DMat::<f64>::zeros(3, 3);
        a.set(1, 0, 1.0);
        a.set(2, 1, 1.0);
        let mut oracle = DMat::<f64>::identity(3);
        let mut term = DMat::<f64>::identity(3);
        for k in 1..50 {
            term = term.matmul(&a).scale(t / k as f64);
            oracle = oracle.add(&term);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.get(i, j) - oracle.get(i, j)).abs() < 1e-12);
            }
        }
        assert!((r.get(2, 0) - t * t / 2.0).abs() < 1e-14);
    }

    #[test]
    fn resolvent_semigroup_property() {
        let chain = ChainMatrix::scalar_chain(4, 1.3f64).unwrap();
        let a = chain.resolvent(0.4);
        let b = chain.resolvent(0.9);
        let ab = a.matmul(&b);
        let direct = chain.resolvent(1.3);
        for i in 0..4 {
            for j in 0..4 {
                assert!((ab.get(i, j) - direct.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilation_conjugation_identity() {
        // e^{At} = M_t e^{A} M_t^{-1} for the chain structure.
        let chain = ChainMatrix::scalar_chain(3, 0.8f64).unwrap();
        let scale = ScaleOps::new(3, 1, 1.5f64);
        let t = 0.63f64;
        let e1 = chain.resolvent(1.0);
        let et = chain.resolvent(t);
        let mut m = vec![0.0; 3];
        scale.m_diag(t, &mut m);
        for i in 0..3 {
            for j in 0..3 {
                let conj = m[i] * e1.get(i, j) / m[j];
                assert!((et.get(i, j) - conj).abs() < 1e-12, "block ({i},{j})");
            }
        }
    }

    #[test]
    fn m_scale_group_property_and_det() {
        let scale = ScaleOps::new(3, 2, 1.2f64);
        let mut ms = vec![0.0; 6];
        let mut mt = vec![0.0; 6];
        let mut mst = vec![0.0; 6];
        scale.m_diag(0.3, &mut ms);
        scale.m_diag(0.7, &mut mt);
        scale.m_diag(0.21, &mut mst);
        for a in 0..6 {
            assert!((ms[a] * mt[a] - mst[a]).abs() < 1e-15);
        }
        assert!((scale.det_m(0.5) - 0.5f64.powi(6)).abs() < 1e-15);
        let mut m1 = vec![0.0; 6];
        scale.m_diag(1.0, &mut m1);
        assert!(m1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rank_validation_rejects_degenerate_block() {
        let blocks = vec![DMat { rows: 1, cols: 1, data: vec![0.0f64] }];
        assert!(ChainMatrix::new(2, 1, blocks).is_err());
    }

    #[test]
    fn min_singular_value_2x2() {
        let b = DMat { rows: 2, cols: 2, data: vec![3.0f64, 0.0, 0.0, 0.5] };
        let sv = min_singular_value(&b);
        assert!((sv - 0.5).abs() < 1e-10);
    }

    #[test]
    fn projected_measure_identity_when_single_level() {
        let base = LevyModel::new(1.5, SphericalMeasure::canonical(1, 1.0f64).unwrap()).unwrap();
        let chain = ChainMatrix::new(1, 1, vec![]).unwrap();
        let lifted = projected_measure(&chain, &base, 8).unwrap();
        assert_eq!(lifted.dim(), 1);
        assert!((lifted.measure.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projected_symbol_hand_value() {
        // n=2, d=1, A21=1, μ = {±1}/2, α=1.5: symbol at p=(0,1) is
        // -∫_0^1 v^{3/2} dv = -0.4.
        let base = LevyModel::new(1.5, SphericalMeasure::canonical(1, 1.0f64).unwrap()).unwrap();
        let chain = ChainMatrix::scalar_chain(2, 1.0).unwrap();
        let lifted = projected_measure(&chain, &base, 16).unwrap();
        let got = crate::stable::levy_symbol(&[0.0, 1.0], &lifted).unwrap();
        assert!((got + 0.4).abs() < 1e-6, "projected symbol {got} vs -0.4");
        // total weight = ∫_0^1 (1+v^2)^{3/4} dv
        let mut oracle = 0.0f64;
        let nn = 200_000;
        for k in 0..nn {
            let v = (k as f64 + 0.5) / nn as f64;
            oracle += (1.0 + v * v).powf(0.75);
        }
        oracle /= nn as f64;
        assert!((lifted.measure.total_mass() - oracle).abs() < 1e-7);
    }

    #[test]
    fn projected_measure_is_nondegenerate_under_rank_condition() {
        let base = LevyModel::new(1.5, SphericalMeasure::canonical(1, 1.0f64).unwrap()).unwrap();
        let chain = ChainMatrix::scalar_chain(2, 1.0).unwrap();
        let lifted = projected_measure(&chain, &base, 16).unwrap();
        let rep = crate::stable::nondegeneracy_ratio(&lifted, 4096).unwrap();
        assert!(rep.eta_low > 0.05, "eta_low {}", rep.eta_low);
        // frozen from a dense direction sweep during development
        assert!((rep.eta_low - 0.118).abs() < 5e-3);
        assert!((rep.eta_high - 1.188).abs() < 5e-3);
    }
}
