//! Stable spherical measures, Lévy symbols and non-degeneracy diagnostics.
//!
//! A symmetric α-stable generator on `R^d` is described by its spherical
//! measure μ on the unit sphere through the symbol
//! `Ψ(p) = -∫ |p·s|^α μ(ds)`. Uniform measures are represented internally by
//! a fixed-order symmetric atomization so that the symbol, the sampler and
//! the sphere projection all share one code path.

mod density;
mod evaluator;
mod sampling;

pub use density::{
    heat_kernel_derivative_grid, heat_kernel_grid, stable_density_grid, stable_derivative_grid,
    GridSpec, Std1dStable,
};
pub use evaluator::{EvaluatorConfig, StableDensityEvaluator};
pub use sampling::{sample_stable, sample_stable_into, sample_standard_sas};

use crate::error::{KolmoError, Result};
use crate::scalar::Scalar;

pub const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Atoms,
    Uniform,
}

/// Symmetric measure on the unit sphere `S^{d-1}`, stored as atoms.
#[derive(Debug, Clone)]
pub struct SphericalMeasure<T> {
    dim: usize,
    kind: MeasureKind,
    /// Flattened directions, stride `dim`.
    directions: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> SphericalMeasure<T> {
    /// Builds an atomic measure; symmetrizes so that every atom has its
    /// antipode with equal weight.
    pub fn atoms(dim: usize, atoms: &[(Vec<T>, T)]) -> Result<Self> {
        if dim == 0 {
            return Err(KolmoError::InvalidModel("dimension must be positive".into()));
        }
        let mut dirs: Vec<Vec<T>> = Vec::new();
        let mut weights: Vec<T> = Vec::new();
        for (s, w) in atoms {
            if s.len() != dim {
                return Err(KolmoError::InvalidModel("atom dimension mismatch".into()));
            }
            if !w.is_finite() || *w < T::zero() {
                return Err(KolmoError::InvalidModel("atom weights must be finite and nonnegative".into()));
            }
            let norm = s.iter().map(|&c| c * c).sum::<T>().sqrt();
            if (norm - T::one()).abs() > T::of(UNIT_NORM_TOL) {
                return Err(KolmoError::InvalidModel(format!(
                    "atom direction norm {} deviates from 1 beyond {UNIT_NORM_TOL}",
                    norm
                )));
            }
            let half = *w * T::of(0.5);
            let neg: Vec<T> = s.iter().map(|&c| -c).collect();
            for (d, hw) in [(s.clone(), half), (neg, half)] {
                if let Some(k) = dirs.iter().position(|q| same_direction(q, &d)) {
                    weights[k] += hw;
                } else {
                    dirs.push(d);
                    weights.push(hw);
                }
            }
        }
        if !weights.iter().any(|&w| w > T::zero()) {
            return Err(KolmoError::Degenerate("all atom weights vanish".into()));
        }
        let mut flat = Vec::with_capacity(dirs.len() * dim);
        for d in &dirs {
            flat.extend_from_slice(d);
        }
        Ok(Self { dim, kind: MeasureKind::Atoms, directions: flat, weights })
    }

    /// Canonical-direction measure: atoms `±e_k`, each axis carrying equal
    /// total weight summing to `total_mass`.
    pub fn canonical(dim: usize, total_mass: T) -> Result<Self> {
        let per_atom = total_mass / T::of_usize(2 * dim);
        let mut atoms = Vec::new();
        for k in 0..dim {
            let mut e = vec![T::zero(); dim];
            e[k] = T::one();
            atoms.push((e, per_atom + per_atom));
        }
        Self::atoms(dim, &atoms)
    }

    /// Uniform measure of the given total mass, atomized with `n_pairs`
    /// symmetric pairs from a quasi-uniform sphere design (d ≤ 3).
    pub fn uniform(dim: usize, total_mass: T, n_pairs: usize) -> Result<Self> {
        if !(total_mass > T::zero()) {
            return Err(KolmoError::InvalidModel("total mass must be positive".into()));
        }
        let mut m = match dim {
            1 => Self::atoms(1, &[(vec![T::one()], total_mass)])?,
            2 => {
                let mut atoms = Vec::with_capacity(n_pairs);
                let w = total_mass / T::of_usize(n_pairs);
                for k in 0..n_pairs {
                    let theta = T::PI() * (T::of_usize(k) + T::of(0.5)) / T::of_usize(n_pairs);
                    atoms.push((vec![theta.cos(), theta.sin()], w));
                }
                Self::atoms(2, &atoms)?
            }
            3 => {
                // Fibonacci hemisphere design.
                let golden = T::of(0.5) * (T::one() + T::of(5.0).sqrt());
                let mut atoms = Vec::with_capacity(n_pairs);
                let w = total_mass / T::of_usize(n_pairs);
                for k in 0..n_pairs {
                    let z = (T::of_usize(k) + T::of(0.5)) / T::of_usize(n_pairs);
                    let r = (T::one() - z * z).max(T::zero()).sqrt();
                    let phi = T::of(2.0) * T::PI() * T::of_usize(k) / golden;
                    atoms.push((vec![r * phi.cos(), r * phi.sin(), z], w));
                }
                Self::atoms(3, &atoms)?
            }
            _ => {
                return Err(KolmoError::InvalidModel(
                    "uniform atomization implemented for d <= 3".into(),
                ))
            }
        };
        m.kind = MeasureKind::Uniform;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn total_mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn direction(&self, k: usize) -> &[T] {
        &self.directions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> T {
        self.weights[k]
    }

    pub fn atoms_iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        (0..self.n_atoms()).map(move |k| (self.direction(k), self.weight(k)))
    }

    /// One representative per antipodal pair with the combined pair weight.
    pub fn symmetric_pairs(&self) -> Vec<(Vec<T>, T)> {
        let mut taken = vec![false; self.n_atoms()];
        let mut out = Vec::new();
        for k in 0..self.n_atoms() {
            if taken[k] {
                continue;
            }
            taken[k] = true;
            let dir = self.direction(k).to_vec();
            let neg: Vec<T> = dir.iter().map(|&c| -c).collect();
            let mut w = self.weight(k);
            for j in k + 1..self.n_atoms() {
                if !taken[j] && same_direction(self.direction(j), &neg) {
                    taken[j] = true;
                    w += self.weight(j);
                    break;
                }
            }
            out.push((dir, w));
        }
        out
    }
}

fn same_direction<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.iter()
        .zip(b.iter())
        .all(|(&x, &y)| (x - y).abs() <= T::of(UNIT_NORM_TOL))
}

/// Stability index plus spherical measure.
#[derive(Debug, Clone)]
pub struct LevyModel<T> {
    pub alpha: T,
    pub measure: SphericalMeasure<T>,
}

impl<T: Scalar> LevyModel<T> {
    pub fn new(alpha: T, measure: SphericalMeasure<T>) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::of(2.0)) {
            return Err(KolmoError::InvalidModel(format!(
                "alpha must lie strictly inside (0,2), got {alpha}"
            )));
        }
        Ok(Self { alpha, measure })
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }
}

/// Lévy symbol `Ψ(p) = -∫ |p·s|^α μ(ds)`; exact sum over the atomization.
pub fn levy_symbol<T: Scalar>(p: &[T], model: &LevyModel<T>) -> Result<T> {
    if p.iter().any(|c| !c.is_finite()) {
        return Err(KolmoError::NonFinite("levy_symbol input"));
    }
    Ok(levy_symbol_unchecked(p, model))
}

#[inline]
pub fn levy_symbol_unchecked<T: Scalar>(p: &[T], model: &LevyModel<T>) -> T {
    let dim = model.dim();
    let alpha = model.alpha;
    let mut acc = T::zero();
    for (dir, w) in model.measure.atoms_iter() {
        let mut dot = T::zero();
        for a in 0..dim {
            dot += p[a] * dir[a];
        }
        acc += w * dot.abs().powf(alpha);
    }
    -acc
}

/// Empirical non-degeneracy bracket of the symbol over a quasi-uniform
/// direction sweep.
#[derive(Debug, Clone, Copy)]
pub struct NondegeneracyReport<T> {
    pub eta_low: T,
    pub eta_high: T,
}

impl<T: Scalar> NondegeneracyReport<T> {
    /// Single constant `η = max(eta_high, 1/eta_low)`; infinite when the
    /// sweep found a vanishing direction.
    pub fn eta(&self) -> T {
        if self.eta_low > T::zero() {
            self.eta_high.max(self.eta_low.recip())
        } else {
            T::infinity()
        }
    }
}

pub fn nondegeneracy_ratio<T: Scalar>(
    model: &LevyModel<T>,
    n_directions: usize,
) -> Result<NondegeneracyReport<T>> {
    if model.measure.total_mass() <= T::zero() {
        return Err(KolmoError::Degenerate("zero spherical measure".into()));
    }
    if n_directions < 16 && model.dim() > 1 {
        return Err(KolmoError::Domain("need at least 16 sweep directions".into()));
    }
    let dirs = sweep_directions::<T>(model.dim(), n_directions);
    let mut lo = T::infinity();
    let mut hi = T::zero();
    for p in dirs.chunks(model.dim()) {
        let v = -levy_symbol_unchecked(p, model);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(NondegeneracyReport { eta_low: lo, eta_high: hi })
}

/// Quasi-uniform unit vectors (flattened) used for direction sweeps.
pub fn sweep_directions<T: Scalar>(dim: usize, n: usize) -> Vec<T> {
    match dim {
        1 => vec![T::one(), -T::one()],
        2 => {
            let mut out = Vec::with_capacity(2 * n);
            for k in 0..n {
                let theta = T::of(2.0) * T::PI() * T::of_usize(k) / T::of_usize(n);
                out.push(theta.cos());
                out.push(theta.sin());
            }
            out
        }
        _ => {
            // Fibonacci sphere, both hemispheres via the offset trick.
            let golden = T::of(0.5) * (T::one() + T::of(5.0).sqrt());
            let mut out = Vec::with_capacity(dim * n);
            for k in 0..n {
                let z = T::of(2.0) * (T::of_usize(k) + T::of(0.5)) / T::of_usize(n) - T::one();
                let r = (T::one() - z * z).max(T::zero()).sqrt();
                let phi = T::of(2.0) * T::PI() * T::of_usize(k) / golden;
                let mut v = vec![T::zero(); dim];
                v[0] = r * phi.cos();
                v[1] = r * phi.sin();
                v[2] = z;
                out.extend_from_slice(&v);
            }
            out
        }
    }
}
