//! Internal 4-D FFT engine shared by the semiperiodic and Euclidean grids.
//!
//! Both public grid types are flat 4-tori whose axes are powers of two; they
//! differ only in circumferences. This module owns that shared shape
//! ([`Lattice4`]), the centered-order convention, and the separable FFT with
//! the crate-wide continuum normalization:
//!
//! * physical samples live at x_j = (i - n/2) dx, i = 0..n, per axis;
//! * frequencies live at ξ_j = (k - n/2) dξ with dξ = 2π / circumference;
//! * forward transform  F(ξ) = Σ_x f(x) e^{-i x·ξ} ∏ dx_j  (a Riemann sum
//!   for the continuum Fourier integral);
//! * inverse transform  f(x) = (2π)^{-4} Σ_ξ F(ξ) e^{+i x·ξ} ∏ dξ_j.
//!
//! The two compose to the identity exactly (up to rounding), and Parseval
//! reads ∫|f|² = (2π)^{-4} Σ_ξ |F(ξ)|² ∏ dξ_j.
//!
//! Centered order is converted to the DFT's natural order by an XOR
//! permutation: for a power-of-two axis, (i + n/2) mod n == i ^ (n/2), and
//! because every axis length is a power of two the four per-axis swaps fuse
//! into a single linear-index XOR mask. The permutation is an involution, so
//! the same pass recenters the output.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::sync::Mutex;

/// Shape of a 4-D periodic lattice: per-axis sample counts and physical
/// circumferences. Axis 0 is slowest-varying in memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Lattice4 {
    pub n: [usize; 4],
    pub circ: [f64; 4],
}

impl Lattice4 {
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    /// Physical grid spacing along `axis`.
    pub fn dx(&self, axis: usize) -> f64 {
        self.circ[axis] / self.n[axis] as f64
    }

    /// Frequency spacing along `axis`: dξ = 2π / circumference.
    pub fn dxi(&self, axis: usize) -> f64 {
        2.0 * PI / self.circ[axis]
    }

    /// Volume of one physical cell, ∏ dx_j.
    pub fn cell(&self) -> f64 {
        (0..4).map(|a| self.dx(a)).product()
    }

    /// Volume weight of one frequency cell in Parseval form,
    /// (2π)^{-4} ∏ dξ_j.
    pub fn freq_cell(&self) -> f64 {
        (0..4).map(|a| self.dxi(a)).product::<f64>() / (2.0 * PI).powi(4)
    }

    /// Largest resolved frequency magnitude along `axis` (Nyquist).
    pub fn nyquist(&self, axis: usize) -> f64 {
        self.n[axis] as f64 / 2.0 * self.dxi(axis)
    }

    /// Memory stride of `axis` (axis 3 is contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    /// Physical coordinate of index `i` along `axis` (centered order).
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 - self.n[axis] as f64 / 2.0) * self.dx(axis)
    }

    /// Frequency of index `k` along `axis` (centered order).
    pub fn freq(&self, axis: usize, k: usize) -> f64 {
        (k as f64 - self.n[axis] as f64 / 2.0) * self.dxi(axis)
    }

    /// Per-axis table of centered coordinates.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Per-axis table of centered frequencies.
    pub fn freqs(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|k| self.freq(axis, k)).collect()
    }

    /// Decompose a linear index into per-axis indices.
    pub fn split(&self, mut idx: usize) -> [usize; 4] {
        let mut c = [0usize; 4];
        for axis in (0..4).rev() {
            c[axis] = idx % self.n[axis];
            idx /= self.n[axis];
        }
        c
    }

    /// Visit every lattice site with its per-axis indices, in memory order.
    pub fn for_each(&self, mut f: impl FnMut(usize, [usize; 4])) {
        let [n0, n1, n2, n3] = self.n;
        let mut idx = 0;
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    for i3 in 0..n3 {
                        f(idx, [i0, i1, i2, i3]);
                        idx += 1;
                    }
                }
            }
        }
    }
}

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// XOR mask that swaps centered and natural order on all four axes at once.
fn center_mask(lat: &Lattice4) -> usize {
    (0..4).map(|a| (lat.n[a] / 2) * lat.stride(a)).sum()
}

/// In-place permutation between centered and natural order (self-inverse).
fn recenter(data: &mut [Complex64], lat: &Lattice4) {
    let mask = center_mask(lat);
    for i in 0..data.len() {
        let j = i ^ mask;
        if j > i {
            data.swap(i, j);
        }
    }
}

/// One separable FFT pass over every line of `axis`. `forward` selects the
/// transform direction; no normalization is applied here.
fn fft_axis(data: &mut [Complex64], lat: &Lattice4, axis: usize, forward: bool) {
    let n = lat.n[axis];
    let stride = lat.stride(axis);
    let fft = {
        let mut planner = PLANNER.lock().unwrap();
        if forward {
            planner.plan_fft_forward(n)
        } else {
            planner.plan_fft_inverse(n)
        }
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    if axis == 3 {
        for line in data.chunks_exact_mut(n) {
            fft.process_with_scratch(line, &mut scratch);
        }
        return;
    }
    // Strided axis: gather each line into a contiguous buffer, transform,
    // scatter back. Lines are enumerated by (outer block, inner offset).
    let mut line = vec![Complex64::default(); n];
    let block = n * stride;
    let outer = data.len() / block;
    for b in 0..outer {
        let base = b * block;
        for off in 0..stride {
            let start = base + off;
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[start + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[start + k * stride] = *v;
            }
        }
    }
}

/// Forward transform, centered physical samples → centered frequency
/// coefficients, normalized as a Riemann sum of ∫ f e^{-ix·ξ} dx.
pub(crate) fn forward(data: &mut [Complex64], lat: &Lattice4) {
    recenter(data, lat);
    for axis in 0..4 {
        fft_axis(data, lat, axis, true);
    }
    recenter(data, lat);
    let scale = lat.cell();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse transform, exact inverse of [`forward`].
pub(crate) fn inverse(data: &mut [Complex64], lat: &Lattice4) {
    recenter(data, lat);
    for axis in 0..4 {
        fft_axis(data, lat, axis, false);
    }
    recenter(data, lat);
    let scale = (0..4).map(|a| lat.dxi(a)).product::<f64>() / (2.0 * PI).powi(4);
    for v in data.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Lattice4 {
        Lattice4 {
            n: [8, 4, 4, 4],
            circ: [4.0 * PI, 2.0 * PI, 2.0 * PI, 2.0 * PI],
        }
    }

    #[test]
    fn recenter_is_involution() {
        let lat = toy();
        let orig: Vec<Complex64> = (0..lat.len())
            .map(|i| Complex64::new(i as f64, -(i as f64)))
            .collect();
        let mut data = orig.clone();
        recenter(&mut data, &lat);
        assert_ne!(data, orig);
        recenter(&mut data, &lat);
        assert_eq!(data, orig);
    }

    #[test]
    fn recenter_swaps_half_axis() {
        // On a single centered axis the permutation must send index i to
        // i + n/2 (mod n); spot-check through the linear mask.
        let lat = toy();
        let mask = center_mask(&lat);
        let idx = |c: [usize; 4]| -> usize {
            ((c[0] * lat.n[1] + c[1]) * lat.n[2] + c[2]) * lat.n[3] + c[3]
        };
        assert_eq!(idx([0, 0, 0, 0]) ^ mask, idx([4, 2, 2, 2]));
        assert_eq!(idx([5, 1, 3, 2]) ^ mask, idx([1, 3, 1, 0]));
    }

    #[test]
    fn roundtrip_is_identity() {
        let lat = toy();
        let orig: Vec<Complex64> = (0..lat.len())
            .map(|i| {
                let s = i as f64;
                Complex64::new((0.3 * s).sin(), (0.17 * s).cos())
            })
            .collect();
        let mut data = orig.clone();
        forward(&mut data, &lat);
        inverse(&mut data, &lat);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_hits_single_bin() {
        // f(x) = e^{i k·x} with k = (1/2, 1, 0, -1) on the lattice must put
        // all mass at that frequency, with value ∏circ = (2π)^4 · L1
        // (since Σ over sites of 1 · ∏dx = total volume).
        let lat = toy();
        let k = [0.5, 1.0, 0.0, -1.0];
        let mut data = vec![Complex64::default(); lat.len()];
        lat.for_each(|idx, c| {
            let phase: f64 = (0..4).map(|a| k[a] * lat.coord(a, c[a])).sum();
            data[idx] = Complex64::new(0.0, phase).exp();
        });
        forward(&mut data, &lat);
        let volume: f64 = lat.circ.iter().product();
        lat.for_each(|idx, c| {
            let on_bin = (0..4).all(|a| (lat.freq(a, c[a]) - k[a]).abs() < 1e-12);
            let expect = if on_bin { volume } else { 0.0 };
            assert!(
                (data[idx] - expect).norm() < 1e-9 * volume,
                "bin {c:?}: got {}, want {expect}",
                data[idx]
            );
        });
    }
}
