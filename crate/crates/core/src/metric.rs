//! Anisotropic distances, the intrinsic dilation, regime splitting and
//! sampled Hölder-norm estimation.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KolmoError, Result};
use crate::scalar::Scalar;

/// Chain geometry: `n` levels of size `d` with stability index α.
#[derive(Debug, Clone, Copy)]
pub struct MetricParams<T> {
    pub n: usize,
    pub d: usize,
    pub alpha: T,
}

impl<T: Scalar> MetricParams<T> {
    pub fn new(n: usize, d: usize, alpha: T) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(KolmoError::InvalidModel("n, d must be positive".into()));
        }
        if !(alpha > T::zero() && alpha < T::of(2.0)) {
            return Err(KolmoError::InvalidModel("alpha outside (0,2)".into()));
        }
        Ok(Self { n, d, alpha })
    }

    pub fn nd(&self) -> usize {
        self.n * self.d
    }

    /// Homogeneity weight of level `i` (0-based): `1 + α i`.
    pub fn level_weight(&self, i: usize) -> T {
        T::one() + self.alpha * T::of_usize(i)
    }

    /// Per-level distance exponent `1/(1+α i)`.
    pub fn level_exponent(&self, i: usize) -> T {
        self.level_weight(i).recip()
    }

    /// `α_i = α/(1+α i)` (0-based level).
    pub fn alpha_i(&self, i: usize) -> T {
        self.alpha / self.level_weight(i)
    }

    /// Euclidean norm of the level-`i` block of `x - y`.
    fn block_dist(&self, x: &[T], y: &[T], i: usize) -> T {
        let mut acc = T::zero();
        for a in i * self.d..(i + 1) * self.d {
            let dv = x[a] - y[a];
            acc += dv * dv;
        }
        acc.sqrt()
    }

    /// Anisotropic spatial distance `Σ_j |(x-x')_j|^{1/(1+α(j-1))}`.
    pub fn distance(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            acc += self.block_dist(x, y, i).powf(self.level_exponent(i));
        }
        acc
    }

    /// Partial distance over levels `from..n` (0-based `from`).
    pub fn distance_partial(&self, x: &[T], y: &[T], from: usize) -> T {
        let mut acc = T::zero();
        for i in from..self.n {
            acc += self.block_dist(x, y, i).powf(self.level_exponent(i));
        }
        acc
    }

    /// Space-time parabolic distance: adds `|s-t|^{1/α}`.
    pub fn distance_parabolic(&self, t: T, x: &[T], s: T, y: &[T]) -> T {
        (s - t).abs().powf(self.alpha.recip()) + self.distance(x, y)
    }

    /// Intrinsic dilation `δ_λ(t,x) = (λ^α t, λ^{1+α(i-1)} x_i)`.
    pub fn dilate(&self, t: T, x: &[T], lambda: T) -> Result<(T, Vec<T>)> {
        if !(lambda > T::zero()) {
            return Err(KolmoError::Domain("dilation factor must be positive".into()));
        }
        let mut out = vec![T::zero(); self.nd()];
        for i in 0..self.n {
            let f = lambda.powf(self.level_weight(i));
            for a in i * self.d..(i + 1) * self.d {
                out[a] = f * x[a];
            }
        }
        Ok((lambda.powf(self.alpha) * t, out))
    }

    /// Anisotropic distance in `z`-coordinates from the origin, per-level
    /// weights optionally restricted to levels `from..`.
    pub fn origin_distance_partial(&self, z: &[T], from: usize) -> T {
        let zero = vec![T::zero(); self.nd()];
        self.distance_partial(z, &zero, from)
    }
}

/// Off-diagonal / diagonal dichotomy with the crossover time
/// `t0 = (t + c0 d^α(x,x')) ∧ T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Diagonal,
    OffDiagonal,
}

pub fn regime_split<T: Scalar>(
    t: T,
    horizon: T,
    x: &[T],
    x_prime: &[T],
    c0: T,
    params: &MetricParams<T>,
) -> Result<(Regime, T)> {
    if !(c0 > T::zero() && c0 <= T::one()) {
        return Err(KolmoError::Domain("c0 must lie in (0,1]".into()));
    }
    let d = params.distance(x, x_prime);
    let t0 = (t + c0 * d.powf(params.alpha)).min(horizon);
    if horizon - t <= c0 * d.powf(params.alpha) {
        Ok((Regime::OffDiagonal, t0))
    } else {
        Ok((Regime::Diagonal, t0))
    }
}

/// Sampled anisotropic Hölder norm.
#[derive(Debug, Clone)]
pub struct HolderEstimate<T> {
    pub gamma: T,
    pub sup_norm: T,
    pub per_level: Vec<T>,
    pub pairs_used: usize,
}

impl<T: Scalar> HolderEstimate<T> {
    pub fn total(&self) -> T {
        self.sup_norm + self.per_level.iter().copied().sum::<T>()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(w, "# config={h}")?;
        }
        writeln!(w, "level,seminorm,pairs_used")?;
        writeln!(w, "sup,{},{}", self.sup_norm, self.pairs_used)?;
        for (i, s) in self.per_level.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, s, self.pairs_used)?;
        }
        Ok(())
    }
}

/// Sampling strategy: per level, stratified dyadic separation scales; sup
/// quotients over pairs differing only in that level's block.
#[derive(Debug, Clone)]
pub struct HolderSampling<T> {
    /// Sampling box (per-coordinate low/high).
    pub lows: Vec<T>,
    pub highs: Vec<T>,
    /// Smallest separation scale; three more dyadic scales above it.
    pub base_separation: T,
    /// Finite-difference step for the level-1 gradient when γ > 1.
    pub fd_step: T,
    pub seed: u64,
}

pub fn holder_norm_estimate<T, F>(
    phi: &F,
    gamma: T,
    params: &MetricParams<T>,
    pair_budget: usize,
    sampling: &HolderSampling<T>,
) -> Result<HolderEstimate<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> T + ?Sized,
{
    if !(gamma > T::zero() && gamma < T::of(2.0)) {
        return Err(KolmoError::Domain("gamma must lie in (0,2)".into()));
    }
    if pair_budget == 0 {
        return Err(KolmoError::Domain("empty pair budget".into()));
    }
    let nd = params.nd();
    if sampling.lows.len() != nd || sampling.highs.len() != nd {
        return Err(KolmoError::GridMismatch("sampling box dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut sup_norm = T::zero();
    let mut per_level = vec![T::zero(); params.n];
    let scales = 4usize;
    let per_cell = (pair_budget / (params.n * scales)).max(1);
    let mut x = vec![T::zero(); nd];
    let mut xp = vec![T::zero(); nd];
    let mut pairs_used = 0usize;
    for level in 0..params.n {
        let level_exp = gamma / params.level_weight(level);
        let use_gradient = level == 0 && gamma > T::one();
        for scale in 0..scales {
            let sep = sampling.base_separation * T::of((1u64 << scale) as f64);
            for _ in 0..per_cell {
                for a in 0..nd {
                    let u = T::of(rng.gen::<f64>());
                    x[a] = sampling.lows[a] + u * (sampling.highs[a] - sampling.lows[a]);
                    xp[a] = x[a];
                }
                // displace only the level's block
                let mut norm2 = T::zero();
                let mut delta = vec![T::zero(); params.d];
                for dv in delta.iter_mut() {
                    *dv = T::of(rng.gen::<f64>() * 2.0 - 1.0);
                    norm2 += *dv * *dv;
                }
                let norm = norm2.sqrt();
                if norm <= T::zero() {
                    continue;
                }
                for (a, dv) in delta.iter().enumerate() {
                    xp[level * params.d + a] = x[level * params.d + a] + *dv / norm * sep;
                }
                pairs_used += 1;
                let v = phi(&x);
                sup_norm = sup_norm.max(v.abs());
                if use_gradient {
                    // C^{γ} with γ in (1,2) on the first level: FD gradient quotient.
                    let h = sampling.fd_step;
                    let mut worst = T::zero();
                    for a in 0..params.d {
                        let mut fwd = x.clone();
                        let mut bwd = x.clone();
                        fwd[a] += h;
                        bwd[a] -= h;
                        let g_x = (phi(&fwd) - phi(&bwd)) / (h + h);
                        let mut fwd_p = xp.clone();
                        let mut bwd_p = xp.clone();
                        fwd_p[a] += h;
                        bwd_p[a] -= h;
                        let g_xp = (phi(&fwd_p) - phi(&bwd_p)) / (h + h);
                        worst = worst.max((g_x - g_xp).abs());
                    }
                    let q = worst / sep.powf(gamma - T::one());
                    per_level[level] = per_level[level].max(q);
                } else {
                    let q = (phi(&xp) - v).abs() / sep.powf(level_exp);
                    per_level[level] = per_level[level].max(q);
                }
            }
        }
    }
    if pairs_used == 0 {
        return Err(KolmoError::Domain("degenerate sample: no usable pairs".into()));
    }
    Ok(HolderEstimate { gamma, sup_norm, per_level, pairs_used })
}

/// Sup over sampled pairs of `|D_{x1}φ(x) - D_{x1}φ(x')| / d^{γ-1}(x,x')`;
/// coincident pairs are skipped, an empty sample returns 0.
pub fn reverse_taylor_check<T, G>(
    grad1: &G,
    gamma: T,
    params: &MetricParams<T>,
    pairs: &[(Vec<T>, Vec<T>)],
) -> Result<T>
where
    T: Scalar,
    G: Fn(&[T]) -> Vec<T> + ?Sized,
{
    if !(gamma > T::one()) {
        return Err(KolmoError::Domain("reverse Taylor check needs gamma > 1".into()));
    }
    let mut sup = T::zero();
    for (x, xp) in pairs {
        let dist = params.distance(x, xp);
        if !(dist > T::zero()) {
            continue;
        }
        let gx = grad1(x);
        let gxp = grad1(xp);
        let mut diff = T::zero();
        for a in 0..params.d {
            diff = diff.max((gx[a] - gxp[a]).abs());
        }
        sup = sup.max(diff / dist.powf(gamma - T::one()));
    }
    Ok(sup)
}
