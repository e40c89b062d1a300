//! Grids, fields and their Fourier transforms.
//!
//! The spatial domain ℝ × T³ is modeled as a flat 4-torus with one elongated
//! axis: x₁ runs over a circle of circumference 2πL1 (L1 a positive integer,
//! the "long" direction standing in for ℝ), while x₂, x₃, x₄ run over the
//! unit torus of circumference 2π. Frequencies therefore live on
//! (1/L1)ℤ × ℤ³. Line integrals over ℝ become sums weighted by 1/L1, and
//! every estimate can be re-run at larger L1 to watch its limit.
//!
//! A second, fully symmetric grid ([`EuclidField`]) models ℝ⁴ as a periodic
//! box of circumference 2π·side per axis; it hosts the Euclidean-profile
//! comparisons.
//!
//! Conventions (fixed crate-wide):
//! * samples are stored with x₁ slowest-varying, in centered ascending
//!   order: index i on an axis of n points holds coordinate (i − n/2)·dx;
//! * `forward_fourier` computes the Riemann sum of ∫ f(x) e^{−ix·ξ} dx and
//!   `inverse_fourier` its exact inverse, so the pair composes to the
//!   identity and Parseval reads ∫|f|² = (2π)^{−4} Σ_ξ |F(ξ)|² ∏dξ.

use crate::fft::{self, Lattice4};
use crate::{C64, Error, Result};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

fn power_of_two_at_least(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "{what} must be a power of two >= {min}, got {n}"
        )));
    }
    Ok(())
}

/// Shape of the semiperiodic grid: long-circle half-period `l1` and the
/// sample counts along the long and periodic axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    l1: u32,
    n1: usize,
    nper: usize,
}

impl GridSpec {
    /// A tiny default grid for smoke runs: L1 = 2, 16 × 8³ samples.
    pub fn small() -> Self {
        Self { l1: 2, n1: 16, nper: 8 }
    }

    pub fn new(l1: u32, n1: usize, nper: usize) -> Result<Self> {
        if l1 < 1 {
            return Err(Error::InvalidGrid("L1 must be a positive integer".into()));
        }
        power_of_two_at_least(n1, 4, "n1")?;
        power_of_two_at_least(nper, 4, "nper")?;
        Ok(Self { l1, n1, nper })
    }

    /// Long-circle half-period L1 (circumference 2πL1).
    pub fn l1(&self) -> u32 {
        self.l1
    }

    /// Samples along x₁.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Samples along each periodic axis.
    pub fn nper(&self) -> usize {
        self.nper
    }

    /// Total number of samples, n1 · nper³.
    pub fn len(&self) -> usize {
        self.n1 * self.nper * self.nper * self.nper
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing along x₁.
    pub fn dx1(&self) -> f64 {
        2.0 * PI * self.l1 as f64 / self.n1 as f64
    }

    /// Frequency spacing along ξ₁ (= 1/L1).
    pub fn dxi1(&self) -> f64 {
        1.0 / self.l1 as f64
    }

    /// Largest resolved |ξ₁|.
    pub fn nyquist1(&self) -> f64 {
        self.n1 as f64 / (2.0 * self.l1 as f64)
    }

    /// Largest resolved frequency along a periodic axis.
    pub fn nyquist_per(&self) -> f64 {
        self.nper as f64 / 2.0
    }

    /// Smallest per-axis Nyquist frequency.
    pub fn nyquist_min(&self) -> f64 {
        self.nyquist1().min(self.nyquist_per())
    }

    pub(crate) fn lattice(&self) -> Lattice4 {
        Lattice4 {
            n: [self.n1, self.nper, self.nper, self.nper],
            circ: [2.0 * PI * self.l1 as f64, 2.0 * PI, 2.0 * PI, 2.0 * PI],
        }
    }
}

/// Complex samples of u(x) on a [`GridSpec`] grid, centered order,
/// x₁ slowest-varying.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: GridSpec,
    values: Vec<C64>,
}

/// Fourier coefficients F(ξ) on the dual lattice of a [`GridSpec`] grid,
/// centered order, ξ₁ slowest-varying.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    spec: GridSpec,
    coeffs: Vec<C64>,
}

impl Field {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![C64::default(); spec.len()] }
    }

    /// Sample a closure at every grid point x = (x₁, x₂, x₃, x₄).
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 4]) -> C64) -> Self {
        let lat = spec.lattice();
        let mut values = vec![C64::default(); spec.len()];
        let tables: Vec<Vec<f64>> = (0..4).map(|a| lat.coords(a)).collect();
        lat.for_each(|idx, c| {
            let x = [tables[0][c[0]], tables[1][c[1]], tables[2][c[2]], tables[3][c[3]]];
            values[idx] = f(x);
        });
        Self { spec, values }
    }

    pub(crate) fn from_values(spec: GridSpec, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// ∫ f(x) dx as the Riemann sum over all samples.
    pub fn integral(&self) -> C64 {
        let cell = self.spec.lattice().cell();
        self.values.iter().sum::<C64>() * cell
    }

    /// Fourier transform; alias of [`forward_fourier`].
    pub fn fourier(&self) -> Spectrum {
        forward_fourier(self)
    }
}

impl Spectrum {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, coeffs: vec![C64::default(); spec.len()] }
    }

    /// Populate a spectrum from a closure of the frequency ξ ∈ (1/L1)ℤ × ℤ³.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 4]) -> C64) -> Self {
        let lat = spec.lattice();
        let mut coeffs = vec![C64::default(); spec.len()];
        let tables: Vec<Vec<f64>> = (0..4).map(|a| lat.freqs(a)).collect();
        lat.for_each(|idx, c| {
            let xi = [tables[0][c[0]], tables[1][c[1]], tables[2][c[2]], tables[3][c[3]]];
            coeffs[idx] = f(xi);
        });
        Self { spec, coeffs }
    }

    pub(crate) fn from_coeffs(spec: GridSpec, coeffs: Vec<C64>) -> Self {
        debug_assert_eq!(coeffs.len(), spec.len());
        Self { spec, coeffs }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// Coefficient at the lattice frequency nearest ξ (exact when ξ is on
    /// the lattice); `None` outside the resolved band.
    pub fn at_freq(&self, xi: [f64; 4]) -> Option<C64> {
        let lat = self.spec.lattice();
        let mut idx = 0;
        for a in 0..4 {
            let k = (xi[a] / lat.dxi(a)).round() + lat.n[a] as f64 / 2.0;
            if k < 0.0 || k >= lat.n[a] as f64 {
                return None;
            }
            idx = idx * lat.n[a] + k as usize;
        }
        Some(self.coeffs[idx])
    }

    /// Inverse transform; alias of [`inverse_fourier`].
    pub fn inverse(&self) -> Field {
        inverse_fourier(self)
    }
}

/// Forward transform: F(ξ) = Σ_x f(x) e^{−ix·ξ} ∏dx (Riemann sum of the
/// continuum Fourier integral over the box).
pub fn forward_fourier(f: &Field) -> Spectrum {
    let lat = f.spec.lattice();
    let mut coeffs = f.values.clone();
    fft::forward(&mut coeffs, &lat);
    Spectrum { spec: f.spec, coeffs }
}

/// Inverse transform: f(x) = (2π)^{−4} Σ_ξ F(ξ) e^{+ix·ξ} ∏dξ; exact
/// inverse of [`forward_fourier`].
pub fn inverse_fourier(s: &Spectrum) -> Field {
    let lat = s.spec.lattice();
    let mut values = s.coeffs.clone();
    fft::inverse(&mut values, &lat);
    Field { spec: s.spec, values }
}

/// Complex samples on a fully symmetric periodic box standing in for ℝ⁴:
/// each axis has circumference 2π·side and n4 samples, centered order.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclidField {
    side: f64,
    n4: usize,
    values: Vec<C64>,
}

impl EuclidField {
    pub fn zeros(side: f64, n4: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidGrid(format!("side must be positive, got {side}")));
        }
        power_of_two_at_least(n4, 8, "n4")?;
        Ok(Self { side, n4, values: vec![C64::default(); n4.pow(4)] })
    }

    /// Sample a closure at every point y of the box [−π·side, π·side)⁴.
    pub fn from_fn(side: f64, n4: usize, f: impl Fn([f64; 4]) -> C64) -> Result<Self> {
        let mut field = Self::zeros(side, n4)?;
        let lat = field.lattice();
        let coords = lat.coords(0);
        let mut values = vec![C64::default(); lat.len()];
        lat.for_each(|idx, c| {
            values[idx] = f([coords[c[0]], coords[c[1]], coords[c[2]], coords[c[3]]]);
        });
        field.values = values;
        Ok(field)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn n4(&self) -> usize {
        self.n4
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub(crate) fn lattice(&self) -> Lattice4 {
        Lattice4 { n: [self.n4; 4], circ: [2.0 * PI * self.side; 4] }
    }

    /// Forward transform with the same normalization as [`forward_fourier`];
    /// frequencies live on (1/side)ℤ⁴.
    pub fn fourier(&self) -> Vec<C64> {
        let lat = self.lattice();
        let mut coeffs = self.values.clone();
        fft::forward(&mut coeffs, &lat);
        coeffs
    }

    /// Overwrite samples from coefficients produced by [`Self::fourier`].
    pub fn set_from_fourier(&mut self, mut coeffs: Vec<C64>) {
        let lat = self.lattice();
        assert_eq!(coeffs.len(), lat.len());
        fft::inverse(&mut coeffs, &lat);
        self.values = coeffs;
    }
}

pub(crate) const MAGIC_SEMI: &str = "SPNLS1";
const MAGIC_EUCLID: &str = "SPNLS4";

pub(crate) fn read_header_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing newline after header".into()));
    }
    line.pop();
    String::from_utf8(line).map_err(|_| Error::MalformedHeader("header is not ASCII".into()))
}

pub(crate) fn read_payload(r: &mut impl Read, len: usize) -> Result<Vec<C64>> {
    let expected = len * 16;
    let mut bytes = Vec::with_capacity(expected);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload { expected, got: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

pub(crate) fn write_payload(w: &mut impl Write, values: &[C64]) -> Result<()> {
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// Write a semiperiodic field: ASCII header `SPNLS1 <L1> <n1> <nper>\n`
/// followed by little-endian (re, im) f64 pairs in memory order.
pub fn write_field(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MAGIC_SEMI} {} {} {}", f.spec.l1, f.spec.n1, f.spec.nper)?;
    write_payload(&mut w, &f.values)?;
    w.flush()?;
    Ok(())
}

/// Read a field written by [`write_field`] (bit-exact round trip).
pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let header = read_header_line(&mut r)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != MAGIC_SEMI {
        return Err(Error::MalformedHeader(format!("expected `{MAGIC_SEMI} L1 n1 nper`, got `{header}`")));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::MalformedHeader(format!("bad {what}: `{s}`")))
    };
    let l1 = parse(parts[1], "L1")? as u32;
    let spec = GridSpec::new(l1, parse(parts[2], "n1")?, parse(parts[3], "nper")?)?;
    let values = read_payload(&mut r, spec.len())?;
    Ok(Field { spec, values })
}

/// Write a Euclidean box field: header `SPNLS4 <side> <n4>\n` + payload.
pub fn write_euclid_field(path: impl AsRef<Path>, f: &EuclidField) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MAGIC_EUCLID} {} {}", f.side, f.n4)?;
    write_payload(&mut w, &f.values)?;
    w.flush()?;
    Ok(())
}

/// Read a field written by [`write_euclid_field`].
pub fn read_euclid_field(path: impl AsRef<Path>) -> Result<EuclidField> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let header = read_header_line(&mut r)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != MAGIC_EUCLID {
        return Err(Error::MalformedHeader(format!("expected `{MAGIC_EUCLID} side n4`, got `{header}`")));
    }
    let side: f64 = parts[1]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad side: `{}`", parts[1])))?;
    let n4: usize = parts[2]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad n4: `{}`", parts[2])))?;
    let mut field = EuclidField::zeros(side, n4)?;
    field.values = read_payload(&mut r, field.len())?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(0, 16, 8).is_err());
        assert!(GridSpec::new(2, 12, 8).is_err());
        assert!(GridSpec::new(2, 16, 2).is_err());
        let spec = GridSpec::new(16, 256, 4).unwrap();
        assert_eq!(spec.len(), 256 * 64);
        assert!((spec.dxi1() - 1.0 / 16.0).abs() < 1e-15);
        assert!((spec.nyquist1() - 8.0).abs() < 1e-15);
        assert!((spec.nyquist_per() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_identity() {
        let spec = GridSpec::small();
        let f = Field::from_fn(spec, |x| {
            C64::new((x[0] * 0.5 + x[1]).sin(), (x[2] - 0.3 * x[3]).cos())
        });
        let back = inverse_fourier(&forward_fourier(&f));
        let scale: f64 = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn parseval() {
        let spec = GridSpec::new(2, 32, 8).unwrap();
        let f = Field::from_fn(spec, |x| {
            C64::new((1.3 * x[0]).cos() * (x[1] + x[2]).sin(), (0.7 * x[3]).sin())
        });
        let cell = spec.lattice().cell();
        let phys: f64 = f.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
        let s = forward_fourier(&f);
        let fcell = spec.lattice().freq_cell();
        let freq: f64 = s.coeffs().iter().map(|v| v.norm_sqr()).sum::<f64>() * fcell;
        assert!((phys - freq).abs() < 1e-10 * phys);
    }

    #[test]
    fn gaussian_line_transform() {
        // f(x) = e^{-x1^2/2}, constant on the periodic axes. Its transform is
        // sqrt(2pi) e^{-xi1^2/2} (2pi)^3 at xi' = 0; with L1 = 16, n1 = 256
        // the truncation and aliasing errors are ~e^{-128}. Spot values
        // frozen from an independent high-precision computation.
        let spec = GridSpec::new(16, 256, 4).unwrap();
        let f = Field::from_fn(spec, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let s = forward_fourier(&f);
        for (xi1, want) in [
            (0.0, 621.76967854297091),
            (0.5, 548.70981543519140),
            (1.25, 284.66690217498431),
        ] {
            let got = s.at_freq([xi1, 0.0, 0.0, 0.0]).unwrap();
            assert!(
                (got.re - want).abs() < 1e-10 * want && got.im.abs() < 1e-10 * want,
                "xi1 = {xi1}: got {got}, want {want}"
            );
        }
        // Off the xi' = 0 slab everything vanishes.
        let off = s.at_freq([0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(off.norm() < 1e-10);
    }

    #[test]
    fn translation_law() {
        // Shifting samples by a whole number of cells along x1 multiplies
        // the transform by e^{-i a xi1}.
        let spec = GridSpec::small();
        let f = Field::from_fn(spec, |x| {
            C64::new((-x[0] * x[0] / 3.0).exp() * x[1].cos(), 0.1 * x[2].sin())
        });
        let cells = 3usize;
        let a = cells as f64 * spec.dx1();
        let stride = spec.nper().pow(3);
        let mut shifted = Field::zeros(spec);
        let n1 = spec.n1();
        for i in 0..n1 {
            let src = i * stride;
            let dst = ((i + cells) % n1) * stride;
            shifted.values_mut()[dst..dst + stride].copy_from_slice(&f.values()[src..src + stride]);
        }
        let sf = forward_fourier(&f);
        let ss = forward_fourier(&shifted);
        let lat = spec.lattice();
        let mut worst: f64 = 0.0;
        lat.for_each(|idx, c| {
            let xi1 = lat.freq(0, c[0]);
            let want = sf.coeffs()[idx] * C64::new(0.0, -a * xi1).exp();
            worst = worst.max((ss.coeffs()[idx] - want).norm());
        });
        let scale = sf.coeffs().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12 * scale, "worst deviation {worst}");
    }

    #[test]
    fn field_file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.spnls1");
        let spec = GridSpec::small();
        let f = Field::from_fn(spec, |x| C64::new(x[0].sin() + x[1], x[2] * x[3]));
        write_field(&path, &f).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(g.spec(), spec);
        assert_eq!(g.values(), f.values());
    }

    #[test]
    fn euclid_file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.spnls4");
        let f = EuclidField::from_fn(2.0, 8, |y| {
            C64::new((-(y[0] * y[0] + y[1] * y[1]) / 2.0).exp(), y[2] - y[3])
        })
        .unwrap();
        write_euclid_field(&path, &f).unwrap();
        let g = read_euclid_field(&path).unwrap();
        assert_eq!(g.side(), f.side());
        assert_eq!(g.values(), f.values());
    }

    #[test]
    fn read_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("a");
        std::fs::write(&bad_magic, b"SPNLSX 2 16 8\n").unwrap();
        assert!(matches!(read_field(&bad_magic), Err(Error::MalformedHeader(_))));

        let truncated = dir.path().join("b");
        std::fs::write(&truncated, b"SPNLS1 2 16 8\n\x00\x01").unwrap();
        assert!(matches!(
            read_field(&truncated),
            Err(Error::TruncatedPayload { .. })
        ));

        let bad_grid = dir.path().join("c");
        std::fs::write(&bad_grid, b"SPNLS1 2 15 8\n").unwrap();
        assert!(matches!(read_field(&bad_grid), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn euclid_fourier_roundtrip() {
        let mut f = EuclidField::from_fn(2.0, 16, |y| {
            C64::new((-(y.iter().map(|v| v * v).sum::<f64>()) / 2.0).exp(), 0.0)
        })
        .unwrap();
        let orig = f.values().to_vec();
        let coeffs = f.fourier();
        f.set_from_fourier(coeffs);
        for (a, b) in f.values().iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
