//! Axis-by-axis n-dimensional FFT on dynamic-dimension arrays.

use ndarray::{ArrayD, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// In-place n-D transform; `inverse` selects the conjugate transform.
/// rustfft is unnormalized, callers apply their own scale factors.
pub fn fft_nd_inplace<T: Scalar>(data: &mut ArrayD<Complex<T>>, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let ndim = data.ndim();
    for axis in 0..ndim {
        let len = data.shape()[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            fft.process(&mut buf);
            for (v, b) in lane.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }
}

/// DFT frequency for bin `k` of `n` samples with spacing `h`:
/// `2*pi*k'/(n*h)` with `k'` the signed alias of `k`.
pub fn frequency<T: Scalar>(k: usize, n: usize, h: T) -> T {
    let signed = if k <= n / 2 { k as isize } else { k as isize - n as isize };
    T::of(2.0) * T::PI() * T::of(signed as f64) / (T::of_usize(n) * h)
}
