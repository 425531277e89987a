//! Exact-in-law symmetric stable variates (Chambers–Mallows–Stuck).

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::stable::LevyModel;

/// Standard symmetric α-stable variate with `E e^{ipZ} = e^{-|p|^α}`.
pub fn sample_standard_sas<T: Scalar, R: Rng + ?Sized>(alpha: T, rng: &mut R) -> T {
    let u01: f64 = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
    let w: f64 = -(rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16)).ln();
    let u = std::f64::consts::PI * (u01 - 0.5);
    let a = alpha.to_f64_lossy();
    if (a - 1.0).abs() < 1e-9 {
        return T::of(u.tan());
    }
    let s1 = (a * u).sin() / u.cos().powf(1.0 / a);
    let s2 = ((u - a * u).cos() / w).powf((1.0 - a) / a);
    T::of(s1 * s2)
}

/// Increment of the stable process over horizon `t`:
/// sum over symmetrized atom pairs of `(t w̃_k)^{1/α} Z_k s_k`.
pub fn sample_stable<T: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<T>,
    t: T,
    rng: &mut R,
) -> Result<Vec<T>> {
    let dim = model.dim();
    let mut out = vec![T::zero(); dim];
    sample_stable_into(model, &model.measure.symmetric_pairs(), t, rng, &mut out);
    Ok(out)
}

/// Allocation-free path used by the SDE driver; `pairs` must come from
/// `measure.symmetric_pairs()`.
pub fn sample_stable_into<T: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<T>,
    pairs: &[(Vec<T>, T)],
    t: T,
    rng: &mut R,
    out: &mut [T],
) {
    let inv_alpha = model.alpha.recip();
    for v in out.iter_mut() {
        *v = T::zero();
    }
    for (dir, w) in pairs {
        if !(*w > T::zero()) {
            continue;
        }
        let scale = (t * *w).powf(inv_alpha);
        let z = sample_standard_sas(model.alpha, rng) * scale;
        for (o, &s) in out.iter_mut().zip(dir.iter()) {
            *o += z * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::SphericalMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_1d(alpha: f64) -> LevyModel<f64> {
        LevyModel::new(alpha, SphericalMeasure::canonical(1, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn empirical_char_function_matches_symbol() {
        // E cos(pZ) vs exp(tΨ(p)) within 4/√N at fixed probes.
        let model = model_1d(1.5);
        let t = 0.8f64;
        let n = 200_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pairs = model.measure.symmetric_pairs();
        let probes = [0.25f64, 0.5, 1.0, 2.0, 3.5];
        let mut acc = [0.0f64; 5];
        let mut z = [0.0f64; 1];
        for _ in 0..n {
            sample_stable_into(&model, &pairs, t, &mut rng, &mut z);
            for (a, &p) in acc.iter_mut().zip(probes.iter()) {
                *a += (p * z[0]).cos();
            }
        }
        let tol = 4.0 / (n as f64).sqrt();
        for (a, &p) in acc.iter().zip(probes.iter()) {
            let emp = a / n as f64;
            let exact = (t * -(p.abs().powf(1.5))).exp();
            assert!(
                (emp - exact).abs() < tol,
                "p={p}: empirical {emp} vs {exact} (tol {tol})"
            );
        }
    }

    #[test]
    fn interquartile_range_scales_as_t_to_inv_alpha() {
        let model = model_1d(1.4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = model.measure.symmetric_pairs();
        let times = [0.01f64, 0.04, 0.16, 0.64];
        let mut iqrs = Vec::new();
        for &t in &times {
            let mut xs: Vec<f64> = (0..40_000)
                .map(|_| {
                    let mut z = [0.0f64; 1];
                    sample_stable_into(&model, &pairs, t, &mut rng, &mut z);
                    z[0]
                })
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            iqrs.push(xs[30_000] - xs[10_000]);
        }
        // log-log slope vs 1/alpha.
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0f64, 0.0, 0.0, 0.0);
        for (t, iqr) in times.iter().zip(iqrs.iter()) {
            let (x, y) = (t.ln(), iqr.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let n = times.len() as f64;
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 1.0 / 1.4).abs() < 0.05,
            "IQR scaling slope {slope} vs {}",
            1.0 / 1.4
        );
    }

    #[test]
    fn odd_statistics_vanish() {
        let model = model_1d(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = model.measure.symmetric_pairs();
        let n = 100_000;
        let mut acc = 0.0f64;
        for _ in 0..n {
            let mut z = [0.0f64; 1];
            sample_stable_into(&model, &pairs, 1.0, &mut rng, &mut z);
            acc += z[0].sin(); // bounded odd statistic
        }
        let mean = acc / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt() * 1.0, "odd statistic mean {mean}");
    }

    #[test]
    fn seeded_draws_are_deterministic() {
        let model = model_1d(1.5);
        let mut a = ChaCha8Rng::seed_from_u64(123);
        let mut b = ChaCha8Rng::seed_from_u64(123);
        let za = sample_stable(&model, 0.5, &mut a).unwrap();
        let zb = sample_stable(&model, 0.5, &mut b).unwrap();
        assert_eq!(za, zb);
    }
}
