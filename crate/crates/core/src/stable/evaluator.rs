//! Interpolating evaluator for the stable density and its derivatives.
//!
//! One reference table at unit time is built by Fourier inversion; every
//! other time is reached through the exact α-scaling
//! `p_S(t,z) = t^{-nd/α} p_S(1, t^{-1/α} z)` (derivatives gain `t^{-|l|/α}`).
//! Queries outside the table range return 0 and bump a warning counter;
//! quadratures recover the missing far field through the one-big-jump ray
//! patch exposed by [`StableDensityEvaluator::tail_pairs`].

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::ArrayD;

use crate::error::{KolmoError, Result};
use crate::grid::{OutOfRange, RectGrid};
use crate::quad::gamma_fn;
use crate::scalar::Scalar;
use crate::stable::density::{stable_density_grid, stable_derivative_grid, GridSpec, DECAY_THRESHOLD};
use crate::stable::{nondegeneracy_ratio, LevyModel, NondegeneracyReport};

#[derive(Debug, Clone)]
pub struct EvaluatorConfig {
    /// Requested half extent of the unit-time table; one-dimensional models
    /// get at least `1200` regardless (cheap, and it pushes periodization
    /// ghosts far beyond the quadrature region).
    pub half_extent: f64,
    /// Hard cap on points per axis (memory guard).
    pub max_points_per_axis: usize,
    /// Build derivative tables for all multi-indices up to this total order.
    pub deriv_order: usize,
    /// Margin applied to the decay-driven step bound.
    pub step_safety: f64,
    /// Upper bound on the table step, so interpolation error stays small
    /// even when the decay bound alone would allow a coarse grid.
    pub max_step: f64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            half_extent: 72.0,
            max_points_per_axis: 4096,
            deriv_order: 2,
            step_safety: 0.95,
            max_step: 0.08,
        }
    }
}

pub struct StableDensityEvaluator<T> {
    model: LevyModel<T>,
    grid: RectGrid<T>,
    /// Tables keyed by derivative multi-index; entry 0 is the density.
    tables: Vec<(Vec<usize>, ArrayD<T>)>,
    eta: NondegeneracyReport<T>,
    mass_defect: T,
    tail_pairs: Vec<(Vec<T>, T)>,
    tail_constant: T,
    std1d: crate::stable::Std1dStable<T>,
    out_of_range: AtomicU64,
}

impl<T: Scalar> StableDensityEvaluator<T> {
    pub fn new(model: LevyModel<T>, cfg: &EvaluatorConfig) -> Result<Self> {
        let dim = model.dim();
        let sweep = if dim == 1 { 2 } else { 512 * dim };
        let eta = nondegeneracy_ratio(&model, sweep)?;
        if !(eta.eta_low > T::zero()) {
            return Err(KolmoError::Degenerate(
                "symbol vanishes along some direction; density table would not decay".into(),
            ));
        }
        // Step bound: exp(Ψ(p)) ≤ threshold on the frequency-box boundary at
        // unit time needs |p| ≥ (ln(1/thr)/eta_low)^{1/α} along the worst axis.
        let ln_thr = -T::of(DECAY_THRESHOLD).ln();
        let p_needed = (ln_thr / eta.eta_low).powf(model.alpha.recip());
        let h = (T::PI() / p_needed * T::of(cfg.step_safety)).min(T::of(cfg.max_step));
        let extent = if dim == 1 { cfg.half_extent.max(1200.0) } else { cfg.half_extent };
        let max_points = if dim == 1 { cfg.max_points_per_axis.max(40_000) } else { cfg.max_points_per_axis };
        let count_raw = (2.0 * extent / h.to_f64_lossy()).ceil() as usize;
        let count = next_smooth(count_raw);
        let cfg = {
            let mut c = cfg.clone();
            c.max_points_per_axis = max_points;
            c.half_extent = extent;
            c
        };
        if count > cfg.max_points_per_axis {
            return Err(KolmoError::Resolution {
                msg: format!(
                    "unit-time table needs {count} points per axis for extent {}",
                    cfg.half_extent
                ),
                suggested_points: count,
            });
        }
        let half = T::of(count as f64) * h / T::of(2.0);
        let spec = GridSpec { half_extents: vec![half; dim], counts: vec![count; dim] };

        let base = stable_density_grid(&model, T::one(), &spec)?;
        let mass_defect = base.mass_defect;
        let grid = base.grid.clone();
        let mut tables = vec![(vec![0usize; dim], base.values)];
        for idx in multi_indices(dim, cfg.deriv_order) {
            if idx.iter().sum::<usize>() == 0 {
                continue;
            }
            let (_, vals) = stable_derivative_grid(&model, T::one(), &spec, &idx)?;
            tables.push((idx, vals));
        }

        let tail_pairs = model.measure.symmetric_pairs();
        let a = model.alpha.to_f64_lossy();
        let tail_constant = T::of(gamma_fn(a) * (std::f64::consts::PI * a / 2.0).sin() / std::f64::consts::PI);
        let std1d = crate::stable::Std1dStable::new(model.alpha)?;
        Ok(Self {
            model,
            grid,
            tables,
            eta,
            mass_defect,
            tail_pairs,
            tail_constant,
            std1d,
            out_of_range: AtomicU64::new(0),
        })
    }

    pub fn model(&self) -> &LevyModel<T> {
        &self.model
    }

    pub fn alpha(&self) -> T {
        self.model.alpha
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn grid(&self) -> &RectGrid<T> {
        &self.grid
    }

    pub fn eta(&self) -> NondegeneracyReport<T> {
        self.eta
    }

    pub fn table_mass_defect(&self) -> T {
        self.mass_defect
    }

    /// Symmetrized atom pairs with `(direction, pair weight)`; drives the
    /// one-big-jump tail patch.
    pub fn tail_pairs(&self) -> &[(Vec<T>, T)] {
        &self.tail_pairs
    }

    /// 1-D symmetric stable tail constant `Γ(α) sin(πα/2)/π`.
    pub fn tail_constant(&self) -> T {
        self.tail_constant
    }

    /// Shared standard 1-D stable density (symbol `e^{-|q|^α}`).
    pub fn std1d(&self) -> &crate::stable::Std1dStable<T> {
        &self.std1d
    }

    pub fn out_of_range_count(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub fn table(&self, idx: &[usize]) -> Option<&ArrayD<T>> {
        self.tables.iter().find(|(k, _)| k.as_slice() == idx).map(|(_, v)| v)
    }

    pub fn deriv_indices(&self) -> impl Iterator<Item = &[usize]> {
        self.tables.iter().map(|(k, _)| k.as_slice())
    }

    /// Density at unit time; zero (counted) outside the table.
    #[inline]
    pub fn density_t1(&self, z: &[T]) -> T {
        if !self.grid.contains(z) {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
            return T::zero();
        }
        self.grid.interp_cubic(&self.tables[0].1, z, OutOfRange::Zero).max(T::zero())
    }

    #[inline]
    pub fn deriv_t1(&self, z: &[T], table: &ArrayD<T>) -> T {
        if !self.grid.contains(z) {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
            return T::zero();
        }
        self.grid.interp_cubic(table, z, OutOfRange::Zero)
    }

    /// `p_S(t, z)` through exact α-scaling of the unit-time table.
    pub fn density(&self, t: T, z: &[T]) -> T {
        let inv = t.powf(-self.alpha().recip());
        let scale = inv.powi(self.dim() as i32);
        let mut zz = [T::zero(); 8];
        for (a, &c) in z.iter().enumerate() {
            zz[a] = c * inv;
        }
        scale * self.density_t1(&zz[..self.dim()])
    }

    /// `D^idx p_S(t, z)`.
    pub fn deriv(&self, t: T, z: &[T], idx: &[usize]) -> Result<T> {
        let table = self
            .table(idx)
            .ok_or_else(|| KolmoError::Domain(format!("derivative table {idx:?} not built")))?;
        let order: usize = idx.iter().sum();
        let inv = t.powf(-self.alpha().recip());
        let scale = inv.powi((self.dim() + order) as i32);
        let mut zz = [T::zero(); 8];
        for (a, &c) in z.iter().enumerate() {
            zz[a] = c * inv;
        }
        Ok(scale * self.deriv_t1(&zz[..self.dim()], table))
    }
}

/// All multi-indices of the given length with total order ≤ `max_order`.
pub fn multi_indices(len: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; len];
    fn rec(a: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if a == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[a] = v;
            rec(a + 1, left - v, cur, out);
        }
        cur[a] = 0;
    }
    rec(0, max_order, &mut cur, &mut out);
    out
}

/// Smallest integer ≥ n with only factors 2, 3, 5 (keeps FFTs fast).
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(8);
    loop {
        let mut k = m;
        for f in [2usize, 3, 5] {
            while k % f == 0 {
                k /= f;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::SphericalMeasure;

    #[test]
    fn multi_index_enumeration() {
        let idx = multi_indices(2, 2);
        assert_eq!(idx.len(), 6); // (0,0),(0,1),(0,2),(1,0),(1,1),(2,0)
        assert!(idx.contains(&vec![1, 1]));
    }

    #[test]
    fn next_smooth_values() {
        assert_eq!(next_smooth(1000), 1000);
        assert_eq!(next_smooth(1021), 1024);
        assert_eq!(next_smooth(1537), 1600);
    }

    #[test]
    fn cauchy_evaluator_matches_closed_form_at_two_times() {
        let model =
            LevyModel::new(1.0, SphericalMeasure::canonical(1, 1.0).unwrap()).unwrap();
        let cfg = EvaluatorConfig { half_extent: 60.0, max_points_per_axis: 8192, deriv_order: 1, step_safety: 0.95, max_step: 0.08 };
        let ev = StableDensityEvaluator::new(model, &cfg).unwrap();
        for t in [0.3f64, 1.0, 1.7] {
            for y in [0.0f64, 0.4, 2.0, 8.0] {
                let exact = t / (std::f64::consts::PI * (t * t + y * y));
                let got = ev.density(t, &[y]);
                assert!(
                    (got - exact).abs() < 2e-6 + 1e-4 * exact,
                    "t={t} y={y}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn out_of_range_is_zero_and_counted() {
        let model =
            LevyModel::new(1.5, SphericalMeasure::canonical(1, 1.0).unwrap()).unwrap();
        let ev = StableDensityEvaluator::new(model, &EvaluatorConfig::default()).unwrap();
        assert_eq!(ev.density(1.0, &[1.0e9]), 0.0);
        assert_eq!(ev.out_of_range_count(), 1);
    }

    #[test]
    fn derivative_matches_finite_difference_of_density() {
        let model =
            LevyModel::new(1.5, SphericalMeasure::canonical(1, 1.0).unwrap()).unwrap();
        let ev = StableDensityEvaluator::new(model, &EvaluatorConfig::default()).unwrap();
        let t = 0.6f64;
        for y in [0.35f64, 1.1, 3.0] {
            let h = 1e-3;
            let fd = (ev.density(t, &[y + h]) - ev.density(t, &[y - h])) / (2.0 * h);
            let sp = ev.deriv(t, &[y], &[1]).unwrap();
            assert!((fd - sp).abs() < 1e-3 * sp.abs().max(1e-3), "y={y}: {fd} vs {sp}");
        }
    }
}
