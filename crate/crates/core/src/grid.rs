//! Rectangular grids, sampled densities and their on-disk formats.
//!
//! Two grid conventions coexist:
//! * periodic (FFT) grids: `count` nodes from `low` with the upper bound
//!   exclusive, so the plain Riemann sum is the torus trapezoid rule;
//! * inclusive grids for solution fields, with genuine trapezoid weights.

use std::io::{Read, Write};

use ndarray::{ArrayD, IxDyn};

use crate::error::{KolmoError, Result};
use crate::scalar::Scalar;

/// Out-of-range policy for interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfRange {
    Zero,
    Clamp,
}

/// Uniform rectangular grid in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct RectGrid<T> {
    lows: Vec<T>,
    steps: Vec<T>,
    counts: Vec<usize>,
    periodic: bool,
}

impl<T: Scalar> RectGrid<T> {
    /// Inclusive-endpoint grid: nodes `low + j*(high-low)/(n-1)`.
    pub fn from_bounds(lows: &[T], highs: &[T], counts: &[usize]) -> Result<Self> {
        if lows.len() != highs.len() || lows.len() != counts.len() {
            return Err(KolmoError::GridMismatch("bounds/counts length".into()));
        }
        let mut steps = Vec::with_capacity(lows.len());
        for a in 0..lows.len() {
            if counts[a] < 2 || !(highs[a] > lows[a]) {
                return Err(KolmoError::GridMismatch(format!("axis {a}: need 2+ nodes and high > low")));
            }
            steps.push((highs[a] - lows[a]) / T::of_usize(counts[a] - 1));
        }
        Ok(Self { lows: lows.to_vec(), steps, counts: counts.to_vec(), periodic: false })
    }

    /// Periodic FFT grid centered at the origin: nodes `-half + j*h`,
    /// `h = 2*half/count`, upper bound exclusive.
    pub fn centered_periodic(half_extents: &[T], counts: &[usize]) -> Result<Self> {
        if half_extents.len() != counts.len() {
            return Err(KolmoError::GridMismatch("extents/counts length".into()));
        }
        let mut lows = Vec::with_capacity(counts.len());
        let mut steps = Vec::with_capacity(counts.len());
        for a in 0..counts.len() {
            if counts[a] < 4 || !(half_extents[a] > T::zero()) {
                return Err(KolmoError::GridMismatch(format!("axis {a}: need 4+ nodes, positive extent")));
            }
            lows.push(-half_extents[a]);
            steps.push(half_extents[a] + half_extents[a]) ;
        }
        for a in 0..counts.len() {
            steps[a] = steps[a] / T::of_usize(counts[a]);
        }
        Ok(Self { lows, steps, counts: counts.to_vec(), periodic: true })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lows(&self) -> &[T] {
        &self.lows
    }

    pub fn steps(&self) -> &[T] {
        &self.steps
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn high(&self, axis: usize) -> T {
        if self.periodic {
            self.lows[axis] + self.steps[axis] * T::of_usize(self.counts[axis])
        } else {
            self.lows[axis] + self.steps[axis] * T::of_usize(self.counts[axis] - 1)
        }
    }

    pub fn node(&self, axis: usize, j: usize) -> T {
        self.lows[axis] + self.steps[axis] * T::of_usize(j)
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinates for a flat row-major index (last axis fastest).
    pub fn point_of_flat(&self, mut flat: usize, out: &mut [T]) {
        for a in (0..self.dim()).rev() {
            let j = flat % self.counts[a];
            flat /= self.counts[a];
            out[a] = self.node(a, j);
        }
    }

    /// Volume element of one cell.
    pub fn cell_volume(&self) -> T {
        self.steps.iter().fold(T::one(), |acc, &h| acc * h)
    }

    pub fn contains(&self, x: &[T]) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lows[a] && x[a] <= self.high(a))
    }

    /// Riemann sum (exact trapezoid on the torus for periodic grids).
    pub fn integral_riemann(&self, values: &ArrayD<T>) -> T {
        values.iter().copied().sum::<T>() * self.cell_volume()
    }

    /// Trapezoid rule with halved weights on inclusive boundaries.
    pub fn integral_trapezoid(&self, values: &ArrayD<T>) -> T {
        if self.periodic {
            return self.integral_riemann(values);
        }
        let dim = self.dim();
        let mut acc = T::zero();
        let mut idx = vec![0usize; dim];
        for (flat, &v) in values.iter().enumerate() {
            let mut f = flat;
            for a in (0..dim).rev() {
                idx[a] = f % self.counts[a];
                f /= self.counts[a];
            }
            let mut w = T::one();
            for a in 0..dim {
                if idx[a] == 0 || idx[a] == self.counts[a] - 1 {
                    w = w * T::of(0.5);
                }
            }
            acc += w * v;
        }
        acc * self.cell_volume()
    }

    /// Multilinear interpolation.
    pub fn interp_linear(&self, values: &ArrayD<T>, x: &[T], oor: OutOfRange) -> T {
        let dim = self.dim();
        debug_assert!(dim <= 8);
        let mut base = [0usize; 8];
        let mut frac = [T::zero(); 8];
        for a in 0..dim {
            let u = (x[a] - self.lows[a]) / self.steps[a];
            let max_idx = self.counts[a] - 1;
            if u < T::zero() || u > T::of_usize(max_idx) {
                match oor {
                    OutOfRange::Zero => return T::zero(),
                    OutOfRange::Clamp => {
                        let uc = u.max(T::zero()).min(T::of_usize(max_idx));
                        base[a] = uc.to_f64_lossy().floor() as usize;
                        if base[a] >= max_idx {
                            base[a] = max_idx - 1;
                        }
                        frac[a] = uc - T::of_usize(base[a]);
                        continue;
                    }
                }
            }
            let mut b = u.to_f64_lossy().floor() as usize;
            if b >= max_idx {
                b = max_idx - 1;
            }
            base[a] = b;
            frac[a] = u - T::of_usize(b);
        }
        let mut acc = T::zero();
        let corners = 1usize << dim;
        let mut idx = [0usize; 8];
        for c in 0..corners {
            let mut w = T::one();
            for a in 0..dim {
                if (c >> a) & 1 == 1 {
                    idx[a] = base[a] + 1;
                    w = w * frac[a];
                } else {
                    idx[a] = base[a];
                    w = w * (T::one() - frac[a]);
                }
            }
            acc += w * values[IxDyn(&idx[..dim])];
        }
        acc
    }

    /// Tensor Catmull–Rom cubic interpolation; falls back to linear in the
    /// one-cell boundary layer.
    pub fn interp_cubic(&self, values: &ArrayD<T>, x: &[T], oor: OutOfRange) -> T {
        let dim = self.dim();
        debug_assert!(dim <= 4);
        let mut base = [0usize; 4];
        let mut w = [[T::zero(); 4]; 4];
        for a in 0..dim {
            let u = (x[a] - self.lows[a]) / self.steps[a];
            let max_idx = self.counts[a] - 1;
            if u < T::zero() || u > T::of_usize(max_idx) {
                match oor {
                    OutOfRange::Zero => return T::zero(),
                    OutOfRange::Clamp => return self.interp_linear(values, x, oor),
                }
            }
            let b = u.to_f64_lossy().floor() as usize;
            if b < 1 || b + 2 > max_idx {
                return self.interp_linear(values, x, oor);
            }
            base[a] = b - 1;
            let s = u - T::of_usize(b);
            let s2 = s * s;
            let s3 = s2 * s;
            let half = T::of(0.5);
            w[a][0] = half * (-s3 + s2 + s2 - s);
            w[a][1] = half * (T::of(3.0) * s3 - T::of(5.0) * s2 + T::of(2.0));
            w[a][2] = half * (-T::of(3.0) * s3 + T::of(4.0) * s2 + s);
            w[a][3] = half * (s3 - s2);
        }
        let mut acc = T::zero();
        let total = 1usize << (2 * dim); // 4^dim
        let mut idx = [0usize; 4];
        for c in 0..total {
            let mut weight = T::one();
            let mut cc = c;
            for a in 0..dim {
                let o = cc & 3;
                cc >>= 2;
                idx[a] = base[a] + o;
                weight = weight * w[a][o];
            }
            acc += weight * values[IxDyn(&idx[..dim])];
        }
        acc
    }
}

/// Sampled density of a stable / OU kernel at a fixed time.
#[derive(Debug, Clone)]
pub struct GridDensity<T> {
    pub grid: RectGrid<T>,
    pub values: ArrayD<T>,
    /// Evaluation time of the kernel.
    pub time: T,
    /// |1 - integral| reported by the producing transform.
    pub mass_defect: T,
    /// Most negative raw value seen before clamping.
    pub min_raw_value: T,
}

impl<T: Scalar> GridDensity<T> {
    pub fn new(grid: RectGrid<T>, values: ArrayD<T>, time: T) -> Self {
        Self { grid, values, time, mass_defect: T::zero(), min_raw_value: T::zero() }
    }

    pub fn dims(&self) -> usize {
        self.grid.dim()
    }

    pub fn integral(&self) -> T {
        self.grid.integral_riemann(&self.values)
    }

    /// Max |p(y) - p(-y)| over the grid (periodic centered grids only).
    pub fn evenness_defect(&self) -> T {
        let dim = self.dims();
        let counts = self.grid.counts().to_vec();
        let mut worst = T::zero();
        let mut idx = vec![0usize; dim];
        let mut mirrored = vec![0usize; dim];
        for (flat, &v) in self.values.iter().enumerate() {
            let mut f = flat;
            for a in (0..dim).rev() {
                idx[a] = f % counts[a];
                f /= counts[a];
            }
            for a in 0..dim {
                mirrored[a] = if idx[a] == 0 { 0 } else { counts[a] - idx[a] };
            }
            let m = self.values[IxDyn(&mirrored)];
            let d = (v - m).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Binary dump: 32-byte header (magic `KSGD`, version, dims, per-axis
    /// counts, zero padding), then row-major little-endian f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; 32];
        header[0..4].copy_from_slice(b"KSGD");
        header[4..8].copy_from_slice(&1u32.to_le_bytes());
        let dims = self.dims() as u32;
        header[8..12].copy_from_slice(&dims.to_le_bytes());
        if self.dims() > 5 {
            return Err(KolmoError::Format("KSGD supports at most 5 axes".into()));
        }
        for (a, &c) in self.grid.counts().iter().enumerate() {
            let off = 12 + 4 * a;
            header[off..off + 4].copy_from_slice(&(c as u32).to_le_bytes());
        }
        w.write_all(&header)?;
        for &v in self.values.iter() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a KSGD dump; grid geometry must be supplied by the caller and is
    /// checked against the stored per-axis counts.
    pub fn read_binary<R: Read>(mut r: R, grid: RectGrid<T>, time: T) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[0..4] != b"KSGD" {
            return Err(KolmoError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != 1 {
            return Err(KolmoError::Format(format!("unsupported version {version}")));
        }
        let dims = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if dims != grid.dim() {
            return Err(KolmoError::GridMismatch(format!("stored dims {dims} != grid dims {}", grid.dim())));
        }
        let mut counts = Vec::with_capacity(dims);
        for a in 0..dims {
            let off = 12 + 4 * a;
            counts.push(u32::from_le_bytes(header[off..off + 4].try_into().unwrap()) as usize);
        }
        if counts != grid.counts() {
            return Err(KolmoError::GridMismatch("stored counts differ from grid".into()));
        }
        let total: usize = counts.iter().product();
        let mut raw = vec![0u8; total * 8];
        r.read_exact(&mut raw)?;
        let mut vals = Vec::with_capacity(total);
        for chunk in raw.chunks_exact(8) {
            vals.push(T::of(f64::from_le_bytes(chunk.try_into().unwrap())));
        }
        let values = ArrayD::from_shape_vec(IxDyn(&counts), vals)
            .map_err(|e| KolmoError::Format(e.to_string()))?;
        Ok(Self::new(grid, values, time))
    }

    /// CSV export: one row per grid point, coordinates then value.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(w, "# config={h}")?;
        }
        let dim = self.dims();
        let mut headers: Vec<String> = (0..dim).map(|a| format!("y{}", a + 1)).collect();
        headers.push("value".into());
        writeln!(w, "{}", headers.join(","))?;
        let mut pt = vec![T::zero(); dim];
        for (flat, &v) in self.values.iter().enumerate() {
            self.grid.point_of_flat(flat, &mut pt);
            let coords: Vec<String> = pt.iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{},{}", coords.join(","), v)?;
        }
        Ok(())
    }
}
