//! Deterministic flow of the transport part, the frozen shift and density,
//! the frozen semigroup and Green kernel, and the flow/shift sensitivity
//! diagnostics.
//!
//! The drift is only Hölder, so the flow may be non-unique; the fixed-step
//! RK4 trajectory with a deterministic step is *the* flow everywhere in this
//! crate. The realized convergence order is measured, not assumed.

use std::sync::Arc;

use crate::catalog::Drift;
use crate::error::{KolmoError, Result};
use crate::metric::MetricParams;
use crate::ou::{ChainMatrix, ScaleOps};
use crate::quad::{simpson_weights, DensityCloud, DerivativeCloud, QuadProfile};
use crate::scalar::Scalar;
use crate::stable::StableDensityEvaluator;

/// Drift together with its declared regularity metadata.
#[derive(Clone)]
pub struct DriftSpec<T> {
    pub drift: Arc<dyn Drift<T>>,
    /// Declared sup over levels of the level-wise Hölder norms.
    pub declared_h_norm: T,
    pub beta: T,
}

impl<T: Scalar> DriftSpec<T> {
    /// Regularity target `γ_i` of level `i` (0-based): 0 at the top,
    /// `1 + α(i-1)` below.
    pub fn gamma_level(i: usize, alpha: T) -> T {
        if i == 0 {
            T::zero()
        } else {
            T::one() + alpha * T::of_usize(i - 1)
        }
    }
}

/// Time-discretized trajectory `θ_{τ,·}(ξ)` with the drift sampled along it.
#[derive(Debug, Clone)]
pub struct FlowPath<T> {
    pub tau: T,
    pub xi: Vec<T>,
    pub step: T,
    /// Node times `τ + k·step`.
    pub times: Vec<T>,
    /// States, stride `nd`.
    pub states: Vec<T>,
    /// Drift values at the nodes, stride `nd`.
    pub drift_values: Vec<T>,
}

impl<T: Scalar> FlowPath<T> {
    pub fn nd(&self) -> usize {
        self.xi.len()
    }

    pub fn t_end(&self) -> T {
        *self.times.last().unwrap()
    }

    pub fn node_state(&self, k: usize) -> &[T] {
        let nd = self.nd();
        &self.states[k * nd..(k + 1) * nd]
    }

    pub fn node_drift(&self, k: usize) -> &[T] {
        let nd = self.nd();
        &self.drift_values[k * nd..(k + 1) * nd]
    }

    pub fn covers(&self, t: T, s: T) -> bool {
        let tol = self.step * T::of(1e-9);
        t >= self.tau - tol && s <= self.t_end() + tol && t <= s
    }

    /// Linear interpolation of the state.
    pub fn state_at(&self, t: T, out: &mut [T]) -> Result<()> {
        if !self.covers(t, t) {
            return Err(KolmoError::PathCoverage { t: t.to_f64_lossy(), s: t.to_f64_lossy() });
        }
        let u = ((t - self.tau) / self.step).max(T::zero());
        let k = (u.to_f64_lossy().floor() as usize).min(self.times.len() - 1);
        if k + 1 >= self.times.len() {
            out.copy_from_slice(self.node_state(self.times.len() - 1));
            return Ok(());
        }
        let frac = u - T::of_usize(k);
        let a = self.node_state(k);
        let b = self.node_state(k + 1);
        for i in 0..out.len() {
            out[i] = a[i] + (b[i] - a[i]) * frac;
        }
        Ok(())
    }

    /// Max residual of the integral equation
    /// `θ(s) - ξ - ∫ (Aθ + F)` re-quadratured with the trapezoid rule.
    pub fn integral_residual(&self, chain: &ChainMatrix<T>) -> T {
        let nd = self.nd();
        let mut acc = vec![T::zero(); nd];
        let mut rhs_prev = vec![T::zero(); nd];
        let mut rhs_cur = vec![T::zero(); nd];
        let mut worst = T::zero();
        chain.apply(self.node_state(0), &mut rhs_prev);
        for a in 0..nd {
            rhs_prev[a] += self.node_drift(0)[a];
        }
        let half = T::of(0.5);
        for k in 1..self.times.len() {
            chain.apply(self.node_state(k), &mut rhs_cur);
            for a in 0..nd {
                rhs_cur[a] += self.node_drift(k)[a];
                acc[a] += half * self.step * (rhs_prev[a] + rhs_cur[a]);
                let res = (self.node_state(k)[a] - self.xi[a] - acc[a]).abs();
                if res > worst {
                    worst = res;
                }
            }
            std::mem::swap(&mut rhs_prev, &mut rhs_cur);
        }
        worst
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(w, "# config={h}")?;
        }
        let nd = self.nd();
        let mut headers = vec!["time".to_string()];
        headers.extend((0..nd).map(|a| format!("theta{}", a + 1)));
        writeln!(w, "{}", headers.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let coords: Vec<String> = self.node_state(k).iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{t},{}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-step RK4 integration of `θ' = Aθ + F(s,θ)` from `(tau, xi)`.
pub fn integrate_flow<T: Scalar>(
    tau: T,
    xi: &[T],
    drift: &dyn Drift<T>,
    chain: &ChainMatrix<T>,
    t_end: T,
    n_steps: usize,
) -> Result<FlowPath<T>> {
    if n_steps < 8 {
        return Err(KolmoError::Domain("need at least 8 flow steps".into()));
    }
    if !(t_end >= tau) {
        return Err(KolmoError::Domain("flow horizon before start".into()));
    }
    let nd = chain.nd();
    let h = (t_end - tau) / T::of_usize(n_steps);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity((n_steps + 1) * nd);
    let mut drift_values = Vec::with_capacity((n_steps + 1) * nd);

    let mut y = xi.to_vec();
    let mut f = vec![T::zero(); nd];
    let rhs = |t: T, y: &[T], out: &mut [T], ax: &mut [T], fv: &mut [T]| {
        chain.apply(y, ax);
        drift.eval_into(t, y, fv);
        for a in 0..y.len() {
            out[a] = ax[a] + fv[a];
        }
    };
    let mut ax = vec![T::zero(); nd];
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![T::zero(); nd], vec![T::zero(); nd], vec![T::zero(); nd], vec![T::zero(); nd]);
    let mut tmp = vec![T::zero(); nd];
    for step in 0..=n_steps {
        let t = tau + h * T::of_usize(step);
        times.push(t);
        drift.eval_into(t, &y, &mut f);
        if y.iter().any(|v| !v.is_finite()) || f.iter().any(|v| !v.is_finite()) {
            return Err(KolmoError::FlowBlowup {
                t: t.to_f64_lossy(),
                msg: "non-finite state or drift".into(),
            });
        }
        states.extend_from_slice(&y);
        drift_values.extend_from_slice(&f);
        if step == n_steps {
            break;
        }
        let half = T::of(0.5);
        rhs(t, &y, &mut k1, &mut ax, &mut tmp);
        let mut y2 = y.clone();
        for a in 0..nd {
            y2[a] = y[a] + half * h * k1[a];
        }
        rhs(t + half * h, &y2, &mut k2, &mut ax, &mut tmp);
        for a in 0..nd {
            y2[a] = y[a] + half * h * k2[a];
        }
        rhs(t + half * h, &y2, &mut k3, &mut ax, &mut tmp);
        for a in 0..nd {
            y2[a] = y[a] + h * k3[a];
        }
        rhs(t + h, &y2, &mut k4, &mut ax, &mut tmp);
        let sixth = T::of(1.0 / 6.0);
        for a in 0..nd {
            y[a] += h * sixth * (k1[a] + T::of(2.0) * (k2[a] + k3[a]) + k4[a]);
        }
    }
    Ok(FlowPath { tau, xi: xi.to_vec(), step: h, times, states, drift_values })
}

/// Frozen proxy at the freezing pair `(τ, ξ)`: flow, shift and density.
pub struct FrozenProxy<T> {
    pub chain: Arc<ChainMatrix<T>>,
    pub scale: ScaleOps<T>,
    pub drift: Arc<dyn Drift<T>>,
    pub path: FlowPath<T>,
}

impl<T: Scalar> FrozenProxy<T> {
    pub fn new(
        chain: Arc<ChainMatrix<T>>,
        drift: Arc<dyn Drift<T>>,
        alpha: T,
        tau: T,
        xi: &[T],
        t_end: T,
        n_steps: usize,
    ) -> Result<Self> {
        let path = integrate_flow(tau, xi, drift.as_ref(), &chain, t_end, n_steps)?;
        let scale = ScaleOps::new(chain.levels(), chain.block(), alpha);
        Ok(Self { chain, scale, drift, path })
    }

    pub fn nd(&self) -> usize {
        self.chain.nd()
    }

    pub fn tau(&self) -> T {
        self.path.tau
    }

    pub fn xi(&self) -> &[T] {
        &self.path.xi
    }

    /// Frozen shift `m̃(t,s,x) = e^{A(s-t)}x + ∫_t^s e^{A(s-v)} F(v,θ_v) dv`,
    /// Simpson over path nodes plus trapezoid end fragments.
    pub fn frozen_shift(&self, t: T, s: T, x: &[T], out: &mut [T]) -> Result<()> {
        if !self.path.covers(t, s) {
            return Err(KolmoError::PathCoverage { t: t.to_f64_lossy(), s: s.to_f64_lossy() });
        }
        let nd = self.nd();
        self.chain.apply_resolvent(s - t, x, out);
        if s <= t {
            return Ok(());
        }
        // node range strictly inside [t, s]
        let h = self.path.step;
        let u_lo = (t - self.path.tau) / h;
        let u_hi = (s - self.path.tau) / h;
        let k_lo = u_lo.to_f64_lossy().ceil() as usize;
        let k_hi = (u_hi.to_f64_lossy().floor() as usize).min(self.path.times.len() - 1);
        let mut acc = vec![T::zero(); nd];
        let mut g = vec![T::zero(); nd];

        let eval_g = |v: T, theta_f: &[T], acc_w: T, acc: &mut [T], g: &mut [T]| {
            // e^{A(s-v)} F(v, θ_v)
            self.chain.apply_resolvent(s - v, theta_f, g);
            for a in 0..nd {
                acc[a] += acc_w * g[a];
            }
        };

        if k_hi > k_lo {
            let w = simpson_weights::<T>(k_hi - k_lo + 1);
            for (j, k) in (k_lo..=k_hi).enumerate() {
                eval_g(self.path.times[k], self.path.node_drift(k), w[j] * h, &mut acc, &mut g);
            }
        }
        // end fragments [t, node_lo] and [node_hi, s] by the trapezoid
        let mut theta_t = vec![T::zero(); nd];
        let mut f_t = vec![T::zero(); nd];
        let frag = |val: T, k: usize| (val - self.path.times[k]).abs() > h * T::of(1e-9);
        if k_lo <= k_hi && frag(t, k_lo) {
            self.path.state_at(t, &mut theta_t)?;
            self.drift.eval_into(t, &theta_t, &mut f_t);
            let len = self.path.times[k_lo] - t;
            let half = T::of(0.5) * len;
            eval_g(t, &f_t, half, &mut acc, &mut g);
            eval_g(self.path.times[k_lo], self.path.node_drift(k_lo), half, &mut acc, &mut g);
        }
        if k_hi >= k_lo && frag(s, k_hi) {
            self.path.state_at(s, &mut theta_t)?;
            self.drift.eval_into(s, &theta_t, &mut f_t);
            let len = s - self.path.times[k_hi];
            let half = T::of(0.5) * len;
            eval_g(self.path.times[k_hi], self.path.node_drift(k_hi), half, &mut acc, &mut g);
            eval_g(s, &f_t, half, &mut acc, &mut g);
        }
        if k_hi < k_lo {
            // both endpoints inside one cell
            self.path.state_at(t, &mut theta_t)?;
            self.drift.eval_into(t, &theta_t, &mut f_t);
            let half = T::of(0.5) * (s - t);
            eval_g(t, &f_t, half, &mut acc, &mut g);
            self.path.state_at(s, &mut theta_t)?;
            self.drift.eval_into(s, &theta_t, &mut f_t);
            eval_g(s, &f_t, half, &mut acc, &mut g);
        }
        for a in 0..nd {
            out[a] += acc[a];
        }
        Ok(())
    }

    /// Frozen density `p̃(t,s,x,y)` through the scaled stable evaluator.
    pub fn frozen_density(
        &self,
        eval: &StableDensityEvaluator<T>,
        t: T,
        s: T,
        x: &[T],
        y: &[T],
    ) -> Result<T> {
        let nd = self.nd();
        let mut shift = vec![T::zero(); nd];
        self.frozen_shift(t, s, x, &mut shift)?;
        let dt = s - t;
        let mut m = vec![T::zero(); nd];
        self.scale.m_diag(dt, &mut m);
        let mut z = vec![T::zero(); nd];
        for a in 0..nd {
            z[a] = (y[a] - shift[a]) / m[a];
        }
        Ok(eval.density(dt, &z) / self.scale.det_m(dt))
    }

    /// `T_{s-t}`-scaled frame `(m̃, diag T)` used by cloud quadratures.
    pub fn frame(&self, t: T, s: T, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let nd = self.nd();
        let mut shift = vec![T::zero(); nd];
        self.frozen_shift(t, s, x, &mut shift)?;
        let mut tdiag = vec![T::zero(); nd];
        self.scale.t_diag(s - t, &mut tdiag);
        Ok((shift, tdiag))
    }
}

/// `P̃_{t,s}φ(x) = ∫ p̃(t,s,x,y)φ(y) dy` by mass-normalized cloud quadrature;
/// collapses to `φ(x)` as `s → t`.
pub fn semigroup_value<T: Scalar, F: FnMut(&[T]) -> T>(
    proxy: &FrozenProxy<T>,
    cloud: &DensityCloud<T>,
    t: T,
    s: T,
    x: &[T],
    mut phi: F,
) -> Result<T> {
    if s - t <= T::of(1e-14) {
        return Ok(phi(x));
    }
    let (shift, tdiag) = proxy.frame(t, s, x)?;
    let nd = shift.len();
    let mut y = [T::zero(); 8];
    Ok(cloud.integrate_normalized(|z| {
        for a in 0..nd {
            y[a] = shift[a] + tdiag[a] * z[a];
        }
        phi(&y[..nd])
    }))
}

/// Gradient of the frozen semigroup in the first block,
/// `D_{x_1,c} P̃_{t,s}φ(x) = Σ_j (-E_{jc}/T_j) ∫ ∂_{z_j} p_S(1,z) φ(m̃+Tz) dz`
/// with `E = e^{A(s-t)}` (table derivative, no finite differences).
pub fn semigroup_grad1<T: Scalar, F: Fn(&[T]) -> T>(
    proxy: &FrozenProxy<T>,
    deriv_clouds: &[DerivativeCloud<T>],
    t: T,
    s: T,
    x: &[T],
    phi: F,
) -> Result<Vec<T>> {
    let nd = proxy.nd();
    let d = proxy.chain.block();
    debug_assert_eq!(deriv_clouds.len(), nd);
    let (shift, tdiag) = proxy.frame(t, s, x)?;
    let resolvent = proxy.chain.resolvent(s - t);
    let mut out = vec![T::zero(); d];
    let mut y = [T::zero(); 8];
    for (j, dc) in deriv_clouds.iter().enumerate() {
        let integral = dc.integrate(|z| {
            for a in 0..nd {
                y[a] = shift[a] + tdiag[a] * z[a];
            }
            phi(&y[..nd])
        });
        for (c, o) in out.iter_mut().enumerate() {
            let e = resolvent.get(j, c);
            if e != T::zero() {
                *o += -e / tdiag[j] * integral;
            }
        }
    }
    Ok(out)
}

/// Green kernel `G̃_{v,r} f(t,x) = ∫_v^r P̃_{t,s} f(s,·)(x) ds`, composite
/// Simpson in time.
pub fn green_value<T: Scalar, F: Fn(T, &[T]) -> T>(
    proxy: &FrozenProxy<T>,
    cloud: &DensityCloud<T>,
    t: T,
    v: T,
    r: T,
    f: F,
    n_time_nodes: usize,
) -> Result<T> {
    if !(v <= r) {
        return Err(KolmoError::Domain("green kernel needs v <= r".into()));
    }
    if r - v <= T::of(1e-14) {
        return Ok(T::zero());
    }
    let n = n_time_nodes.max(3);
    let w = simpson_weights::<T>(n);
    let h = (r - v) / T::of_usize(n - 1);
    let mut acc = T::zero();
    for (k, wk) in w.iter().enumerate() {
        let s = v + h * T::of_usize(k);
        let val = semigroup_value(proxy, cloud, t, s, &proxy.path.xi.clone(), |y| f(s, y))?;
        acc += *wk * h * val;
    }
    Ok(acc)
}

/// Green kernel evaluated at an arbitrary spatial point.
#[allow(clippy::too_many_arguments)]
pub fn green_value_at<T: Scalar, F: Fn(T, &[T]) -> T>(
    proxy: &FrozenProxy<T>,
    cloud: &DensityCloud<T>,
    t: T,
    v: T,
    r: T,
    x: &[T],
    f: F,
    n_time_nodes: usize,
) -> Result<T> {
    if !(v <= r) {
        return Err(KolmoError::Domain("green kernel needs v <= r".into()));
    }
    if r - v <= T::of(1e-14) {
        return Ok(T::zero());
    }
    let n = n_time_nodes.max(3);
    let w = simpson_weights::<T>(n);
    let h = (r - v) / T::of_usize(n - 1);
    let mut acc = T::zero();
    for (k, wk) in w.iter().enumerate() {
        let s = v + h * T::of_usize(k);
        let val = semigroup_value(proxy, cloud, t, s, x, |y| f(s, y))?;
        acc += *wk * h * val;
    }
    Ok(acc)
}

/// Expansion of `D^ϑ_x D^ϱ_y p̃` into unit-time table combinations:
/// returns `(z-multi-index, coefficient)` terms such that
/// `D^ϑ_x D^ϱ_y p̃(t,s,x,y) = det(T)^{-1} Σ coeff · (D^κ p_S)(1, z(y))`.
pub fn proxy_derivative_terms<T: Scalar>(
    chain: &ChainMatrix<T>,
    tdiag: &[T],
    dt: T,
    theta_x: &[usize],
    rho_y: &[usize],
) -> Vec<(Vec<usize>, T)> {
    let nd = chain.nd();
    let resolvent = chain.resolvent(dt);
    let mut base = vec![0usize; nd];
    let mut coeff = T::one();
    for (c, &r) in rho_y.iter().enumerate() {
        base[c] += r;
        for _ in 0..r {
            coeff = coeff / tdiag[c];
        }
    }
    let mut terms: Vec<(Vec<usize>, T)> = vec![(base, coeff)];
    for (b, &order) in theta_x.iter().enumerate() {
        for _ in 0..order {
            let mut next: Vec<(Vec<usize>, T)> = Vec::new();
            for (idx, c) in &terms {
                for j in 0..nd {
                    let e = resolvent.get(j, b);
                    if e == T::zero() {
                        continue;
                    }
                    let mut nidx = idx.clone();
                    nidx[j] += 1;
                    next.push((nidx, *c * (-e / tdiag[j])));
                }
            }
            terms = merge_terms(next);
        }
    }
    terms
}

fn merge_terms<T: Scalar>(terms: Vec<(Vec<usize>, T)>) -> Vec<(Vec<usize>, T)> {
    let mut out: Vec<(Vec<usize>, T)> = Vec::new();
    for (idx, c) in terms {
        if let Some(e) = out.iter_mut().find(|(k, _)| *k == idx) {
            e.1 += c;
        } else {
            out.push((idx, c));
        }
    }
    out
}

/// `∫ |D^ϱ_y D^ϑ_x p̃(t,s,x,y)| w(y - m̃) dy` by the exact change of
/// variables `y = m̃ + T∘z`; the weight receives the offset from the shift.
#[allow(clippy::too_many_arguments)]
pub fn frozen_smoothing_moment<T: Scalar, W: FnMut(&[T]) -> T>(
    proxy: &FrozenProxy<T>,
    eval: &StableDensityEvaluator<T>,
    profile: &QuadProfile,
    t: T,
    s: T,
    x: &[T],
    theta_x: &[usize],
    rho_y: &[usize],
    mut weight_offset: W,
) -> Result<T> {
    let nd = proxy.nd();
    let (_, tdiag) = proxy.frame(t, s, x)?;
    let terms = proxy_derivative_terms(&proxy.chain, &tdiag, s - t, theta_x, rho_y);
    let mut off = vec![T::zero(); nd];
    crate::quad::integrate_abs_combo(eval, profile, &terms, |z| {
        for a in 0..nd {
            off[a] = tdiag[a] * z[a];
        }
        weight_offset(&off)
    })
}

/// Row of the flow/shift sensitivity report.
#[derive(Debug, Clone)]
pub struct SensitivityRow<T> {
    pub pair_distance: T,
    /// `d(θ_{t,s}(x), θ_{t,s}(x')) / (d(x,x') + (s-t)^{1/α})`
    pub flow_ratio: T,
    /// first-block shift difference against `(s-t) d^β + (s-t)^{(α+β)/α}`
    pub shift_first_ratio: T,
    /// change-of-freezing shift distance at `t0` against `d(x,x')`
    pub refreeze_ratio: T,
}

/// Sensitivity sweep over sampled pairs; all ratios must come out finite,
/// the bound constants themselves are not asserted.
#[allow(clippy::too_many_arguments)]
pub fn flow_sensitivity_report<T: Scalar>(
    chain: &Arc<ChainMatrix<T>>,
    drift: &Arc<dyn Drift<T>>,
    metric: &MetricParams<T>,
    beta: T,
    pairs: &[(Vec<T>, Vec<T>)],
    t: T,
    s: T,
    c0: T,
    n_steps: usize,
) -> Result<Vec<SensitivityRow<T>>> {
    let alpha = metric.alpha;
    let nd = chain.nd();
    let mut rows = Vec::with_capacity(pairs.len());
    for (x, xp) in pairs {
        let dxx = metric.distance(x, xp);
        let proxy_x =
            FrozenProxy::new(chain.clone(), drift.clone(), alpha, t, x, s, n_steps)?;
        let proxy_xp =
            FrozenProxy::new(chain.clone(), drift.clone(), alpha, t, xp, s, n_steps)?;
        let mut th_x = vec![T::zero(); nd];
        let mut th_xp = vec![T::zero(); nd];
        proxy_x.path.state_at(s, &mut th_x)?;
        proxy_xp.path.state_at(s, &mut th_xp)?;
        let flow_ratio =
            metric.distance(&th_x, &th_xp) / (dxx + (s - t).powf(alpha.recip()));

        // first-block shift difference with matched first components
        let mut y = x.clone();
        let mut yp = xp.clone();
        yp[..chain.block()].copy_from_slice(&x[..chain.block()]);
        let mut m_x = vec![T::zero(); nd];
        let mut m_xp = vec![T::zero(); nd];
        proxy_x.frozen_shift(t, s, &y, &mut m_x)?;
        proxy_xp.frozen_shift(t, s, &yp, &mut m_xp)?;
        let mut first = T::zero();
        for a in 0..chain.block() {
            first = first.max((m_x[a] - m_xp[a]).abs());
        }
        let denom = (s - t) * dxx.powf(beta) + (s - t).powf((alpha + beta) / alpha);
        let shift_first_ratio = if dxx > T::zero() { first / denom } else { T::zero() };

        // change of freezing point at the regime-crossover time
        let t0 = (t + c0 * dxx.powf(alpha)).min(s);
        let refreeze_ratio = if dxx > T::zero() && t0 > t {
            let mut a_shift = vec![T::zero(); nd];
            let mut b_shift = vec![T::zero(); nd];
            proxy_x.frozen_shift(t, t0, xp, &mut a_shift)?;
            proxy_xp.frozen_shift(t, t0, xp, &mut b_shift)?;
            metric.distance(&a_shift, &b_shift) / dxx
        } else {
            T::zero()
        };
        let _ = &mut y;
        rows.push(SensitivityRow { pair_distance: dxx, flow_ratio, shift_first_ratio, refreeze_ratio });
    }
    Ok(rows)
}

/// Sampled estimate of the drift Hölder norm `sup_i ‖F_i‖_{L∞(C^{γ_i+β}_d)}`
/// over a box, used to validate declared norms.
pub fn drift_h_norm_estimate<T: Scalar>(
    drift: &dyn Drift<T>,
    metric: &MetricParams<T>,
    beta: T,
    pair_budget: usize,
    sampling: &crate::metric::HolderSampling<T>,
    times: &[T],
) -> Result<T> {
    let mut worst = T::zero();
    let mut out = vec![T::zero(); metric.nd()];
    for level in 0..metric.n {
        let gamma = DriftSpec::<T>::gamma_level(level, metric.alpha) + beta;
        for &tt in times {
            for comp in 0..metric.d {
                let coord = level * metric.d + comp;
                let f = |x: &[T]| {
                    let mut buf = vec![T::zero(); x.len()];
                    drift.eval_into(tt, x, &mut buf);
                    buf[coord]
                };
                let est = crate::metric::holder_norm_estimate(
                    &f,
                    gamma.min(T::of(1.999)),
                    metric,
                    pair_budget,
                    sampling,
                )?;
                // seminorm part only: the H-norm tracks the level-wise moduli
                for s in est.per_level {
                    worst = worst.max(s);
                }
            }
        }
    }
    let _ = &mut out;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ConstantDrift, CosDrift, ZeroDrift};

    fn chain2() -> Arc<ChainMatrix<f64>> {
        Arc::new(ChainMatrix::scalar_chain(2, 1.0).unwrap())
    }

    #[test]
    fn zero_drift_flow_is_resolvent_action() {
        let chain = chain2();
        let drift = ZeroDrift { n: 2, d: 1 };
        let xi = [0.7, -0.3];
        let path = integrate_flow(0.2, &xi, &drift, &chain, 1.0, 256).unwrap();
        let mut exact = [0.0; 2];
        for (k, &t) in path.times.iter().enumerate() {
            chain.apply_resolvent(t - 0.2, &xi, &mut exact);
            let got = path.node_state(k);
            for a in 0..2 {
                assert!((got[a] - exact[a]).abs() < 1e-8, "node {k}");
            }
        }
    }

    #[test]
    fn constant_drift_matches_variation_of_constants_oracle() {
        // θ(s) = e^{A(s-τ)}ξ + ∫_τ^s e^{A(s-v)} c dv; the oracle sums the
        // nilpotent series term-by-term, exactly.
        let chain = chain2();
        let c = [0.4, -0.9];
        let drift = ConstantDrift { values: c.to_vec(), d: 1 };
        let xi = [0.1, 0.2];
        let tau = 0.0;
        let s = 1.0;
        let path = integrate_flow(tau, &xi, &drift, &chain, s, 512).unwrap();
        // ∫ e^{A u} c du over [0, s-τ] = Σ_k A^k (s-τ)^{k+1}/(k+1)! c
        let dt = s - tau;
        let mut integral = [c[0] * dt, c[1] * dt];
        // A c = (0, c1): add (s²/2) * A c
        integral[1] += dt * dt / 2.0 * c[0];
        let mut exact = [0.0; 2];
        chain.apply_resolvent(dt, &xi, &mut exact);
        exact[0] += integral[0];
        exact[1] += integral[1];
        let got = path.node_state(path.times.len() - 1);
        for a in 0..2 {
            assert!((got[a] - exact[a]).abs() < 1e-10, "{:?} vs {:?}", got, exact);
        }
    }

    #[test]
    fn step_halving_reports_consistent_order() {
        let chain = chain2();
        let drift = CosDrift::desk(2, 1, 0.8);
        let xi = [0.3, -0.5];
        let reference = integrate_flow(0.0, &xi, &drift, &chain, 1.0, 4096).unwrap();
        let r_end = reference.node_state(reference.times.len() - 1).to_vec();
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let p = integrate_flow(0.0, &xi, &drift, &chain, 1.0, n).unwrap();
            let e = p.node_state(p.times.len() - 1);
            let err = (0..2).map(|a| (e[a] - r_end[a]).abs()).fold(0.0f64, f64::max);
            errs.push(err);
        }
        // smooth drift: RK4 should show at least third-order decay per halving
        let rate1 = (errs[0] / errs[1]).log2();
        let rate2 = (errs[1] / errs[2]).log2();
        assert!(rate1 > 2.5 && rate2 > 2.5, "rates {rate1} {rate2} errs {errs:?}");
    }

    #[test]
    fn integral_residual_small_for_smooth_drift() {
        let chain = chain2();
        let drift = CosDrift::desk(2, 1, 0.8);
        let path = integrate_flow(0.0, &[0.0, 0.0], &drift, &chain, 1.0, 512).unwrap();
        let res = path.integral_residual(&chain);
        // trapezoid re-quadrature at step h: O(h²)
        assert!(res < 5.0 / (512.0f64 * 512.0), "residual {res}");
    }

    #[test]
    fn zero_drift_shift_is_resolvent() {
        let chain = chain2();
        let drift: Arc<dyn Drift<f64>> = Arc::new(ZeroDrift { n: 2, d: 1 });
        let proxy = FrozenProxy::new(chain.clone(), drift, 1.5, 0.0, &[0.5, 0.5], 1.0, 64).unwrap();
        let x = [1.0, -2.0];
        let mut shift = [0.0; 2];
        proxy.frozen_shift(0.25, 0.75, &x, &mut shift).unwrap();
        let mut exact = [0.0; 2];
        chain.apply_resolvent(0.5, &x, &mut exact);
        for a in 0..2 {
            assert!((shift[a] - exact[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn identification_shift_equals_flow_at_own_freezing() {
        // m̃^{t,x}_{t,s}(x) = θ_{t,s}(x) when the freezing pair is (t,x).
        let chain = chain2();
        let drift: Arc<dyn Drift<f64>> = Arc::new(CosDrift::desk(2, 1, 0.7));
        let x = [0.4, -0.2];
        let t = 0.1;
        let proxy = FrozenProxy::new(chain.clone(), drift, 1.5, t, &x, 1.0, 512).unwrap();
        let nd = 2;
        for s in [0.2, 0.5, 0.85, 1.0] {
            let mut shift = vec![0.0; nd];
            proxy.frozen_shift(t, s, &x, &mut shift).unwrap();
            let mut theta = vec![0.0; nd];
            proxy.path.state_at(s, &mut theta).unwrap();
            for a in 0..nd {
                assert!(
                    (shift[a] - theta[a]).abs() < 1e-6,
                    "s={s}, comp {a}: {} vs {}",
                    shift[a],
                    theta[a]
                );
            }
        }
    }

    #[test]
    fn shift_is_affine_in_x() {
        let chain = chain2();
        let drift: Arc<dyn Drift<f64>> = Arc::new(CosDrift::desk(2, 1, 0.7));
        let proxy = FrozenProxy::new(chain.clone(), drift, 1.5, 0.0, &[0.1, 0.1], 1.0, 64).unwrap();
        let (t, s) = (0.1, 0.7);
        let x = [0.2, 0.3];
        let h = [0.31, -0.17];
        let xh = [x[0] + h[0], x[1] + h[1]];
        let mut mx = [0.0; 2];
        let mut mxh = [0.0; 2];
        proxy.frozen_shift(t, s, &x, &mut mx).unwrap();
        proxy.frozen_shift(t, s, &xh, &mut mxh).unwrap();
        let mut eh = [0.0; 2];
        chain.apply_resolvent(s - t, &h, &mut eh);
        for a in 0..2 {
            assert!((mxh[a] - mx[a] - eh[a]).abs() < 1e-13);
        }
    }

    #[test]
    fn simpson_weights_integrate_cubics() {
        for n in [3usize, 5, 9, 4, 6] {
            let w = simpson_weights::<f64>(n);
            let h = 1.0 / (n - 1) as f64;
            let got: f64 =
                w.iter().enumerate().map(|(k, &wk)| wk * h * (k as f64 * h).powi(3)).sum();
            assert!((got - 0.25).abs() < 1e-12, "n={n}: {got}");
        }
    }

    #[test]
    fn coverage_violation_is_reported() {
        let chain = chain2();
        let drift: Arc<dyn Drift<f64>> = Arc::new(ZeroDrift { n: 2, d: 1 });
        let proxy = FrozenProxy::new(chain, drift, 1.5, 0.5, &[0.0, 0.0], 1.0, 64).unwrap();
        let mut out = [0.0; 2];
        assert!(matches!(
            proxy.frozen_shift(0.0, 0.9, &[0.0, 0.0], &mut out),
            Err(KolmoError::PathCoverage { .. })
        ));
    }
}
