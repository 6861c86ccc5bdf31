//! Spectral scalar fields on the flat unit torus [0,1)².
//!
//! Fields are sampled on an n×n grid of points (i/n, j/n) with n a power of
//! two, so the rectangle rule is the natural (spectrally accurate) quadrature
//! and the area weights 1/n² sum to exactly 1. All differential operators act
//! through the FFT: mode k carries the continuous symbol (2π|k|)², which makes
//! `poisson_solve` and `dirichlet_energy` exact on band-limited fields.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

/// Errors from grid construction, spectral operations, or field I/O.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid size {0} must be a power of two, at least 16")]
    GridSize(usize),
    #[error("field length {got} does not match grid with {want} points")]
    ValueCount { want: usize, got: usize },
    #[error("fields live on different grids ({0} vs {1})")]
    GridMismatch(usize, usize),
    #[error("source term has mean {0:e}, expected zero within 1e-10")]
    NonZeroMean(f64),
    #[error("weight field must be strictly positive, found {value} at index {index}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform n×n sampling of the unit torus; total area is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    /// Requires n to be a power of two with n ≥ 16.
    pub fn new(n: usize) -> Result<Self, FieldError> {
        if n >= 16 && n.is_power_of_two() {
            Ok(Self { n })
        } else {
            Err(FieldError::GridSize(n))
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Quadrature weight of one grid point (1/n²).
    pub fn weight(&self) -> f64 {
        1.0 / (self.n * self.n) as f64
    }

    /// Grid spacing 1/n.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinates of the point stored at `index = row * n + col`.
    pub fn point(&self, index: usize) -> TorusPoint {
        let row = index / self.n;
        let col = index % self.n;
        TorusPoint::new(col as f64 / self.n as f64, row as f64 / self.n as f64)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n && col < self.n);
        row * self.n + col
    }
}

/// Point on the unit torus, stored with coordinates wrapped into [0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    // v slightly below an integer can round to exactly 1.0.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed displacement wrapped into [-1/2, 1/2].
fn wrap_half(d: f64) -> f64 {
    d - d.round()
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x: wrap_unit(x), y: wrap_unit(y) }
    }

    /// Shortest displacement from `other` to `self`, components in [-1/2, 1/2].
    pub fn delta(&self, other: TorusPoint) -> (f64, f64) {
        (wrap_half(self.x - other.x), wrap_half(self.y - other.y))
    }

    /// Geodesic (shortest flat) distance on the torus, at most √2/2.
    pub fn distance(&self, other: TorusPoint) -> f64 {
        let (dx, dy) = self.delta(other);
        dx.hypot(dy)
    }
}

/// Scalar field sampled on a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl TorusField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, values: vec![0.0; grid.cells()] }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.cells()] }
    }

    /// Samples `f(x, y)` at the grid points.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.cells());
        for row in 0..n {
            let y = row as f64 / n as f64;
            for col in 0..n {
                let x = col as f64 / n as f64;
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.cells() {
            return Err(FieldError::ValueCount { want: grid.cells(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Area-weighted mean ∫ u.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.weight()
    }

    /// Returns the mean-zero projection u − ∫u.
    pub fn mean_zero(&self) -> Self {
        let m = self.mean();
        let values = self.values.iter().map(|v| v - m).collect();
        Self { grid: self.grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Pointwise map, preserving the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    fn check_same_grid(&self, other: &TorusField) -> Result<(), FieldError> {
        if self.grid.n() != other.grid.n() {
            return Err(FieldError::GridMismatch(self.grid.n(), other.grid.n()));
        }
        Ok(())
    }

    /// Writes the flat binary format: n as u64 LE, then n² doubles LE,
    /// row-major.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), FieldError> {
        w.write_all(&(self.grid.n() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the flat binary format written by [`TorusField::write_binary`].
    pub fn read_binary(mut r: impl Read) -> Result<Self, FieldError> {
        let mut header = [0_u8; 8];
        r.read_exact(&mut header)?;
        let n = u64::from_le_bytes(header) as usize;
        let grid = TorusGrid::new(n)?;
        let mut values = vec![0.0; grid.cells()];
        let mut buf = [0_u8; 8];
        for (index, v) in values.iter_mut().enumerate() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(FieldError::NonFinite(index));
            }
        }
        Ok(Self { grid, values })
    }

    /// Writes an `x,y,value` table for plotting.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), FieldError> {
        writeln!(w, "x,y,value")?;
        for (index, v) in self.values.iter().enumerate() {
            let p = self.grid.point(index);
            writeln!(w, "{},{},{}", p.x, p.y, v)?;
        }
        Ok(())
    }
}

/// Cached FFT plans for one grid size.
struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn spectral(n: usize) -> Arc<Spectral> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Spectral>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Spectral {
                n,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn transpose(buf: &mut [Complex<f64>], n: usize) {
    for row in 0..n {
        for col in (row + 1)..n {
            buf.swap(row * n + col, col * n + row);
        }
    }
}

impl Spectral {
    /// Forward 2-D transform, normalized so entries are Fourier coefficients
    /// of the expansion in e^{2πi k·x}.
    fn fft2(&self, real: &[f64]) -> Vec<Complex<f64>> {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> =
            real.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        transpose(&mut buf, n);
        self.fwd.process(&mut buf);
        transpose(&mut buf, n);
        let scale = 1.0 / (n * n) as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Inverse of [`Spectral::fft2`]; discards the imaginary dust.
    fn ifft2(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        let n = self.n;
        self.inv.process(&mut spec);
        transpose(&mut spec, n);
        self.inv.process(&mut spec);
        transpose(&mut spec, n);
        spec.into_iter().map(|c| c.re).collect()
    }
}

/// Signed integer frequency of DFT index i (Nyquist maps to +n/2).
fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Squared continuous symbol (2π|k|)² of −Δ at DFT index pair (ki, kj).
fn symbol(ki: usize, kj: usize, n: usize) -> f64 {
    let kx = wavenumber(kj, n) as f64;
    let ky = wavenumber(ki, n) as f64;
    (2.0 * std::f64::consts::PI).powi(2) * (kx * kx + ky * ky)
}

/// Solves −Δu = f spectrally for mean-zero f; the result is mean-zero.
///
/// Errors with [`FieldError::NonZeroMean`] when |∫f| > 1e-10.
pub fn poisson_solve(f: &TorusField) -> Result<TorusField, FieldError> {
    let mean = f.mean();
    if mean.abs() > 1e-10 {
        return Err(FieldError::NonZeroMean(mean));
    }
    let n = f.grid.n();
    let sp = spectral(n);
    let mut spec = sp.fft2(f.values());
    for ki in 0..n {
        for kj in 0..n {
            let idx = ki * n + kj;
            if ki == 0 && kj == 0 {
                spec[idx] = Complex::new(0.0, 0.0);
            } else {
                spec[idx] /= symbol(ki, kj, n);
            }
        }
    }
    let values = sp.ifft2(spec);
    Ok(TorusField { grid: f.grid, values })
}

/// Spectral Laplacian Δu (mode k multiplied by −(2π|k|)²).
pub fn laplacian(u: &TorusField) -> TorusField {
    let n = u.grid.n();
    let sp = spectral(n);
    let mut spec = sp.fft2(u.values());
    for ki in 0..n {
        for kj in 0..n {
            spec[ki * n + kj] *= -symbol(ki, kj, n);
        }
    }
    TorusField { grid: u.grid, values: sp.ifft2(spec) }
}

/// Dirichlet energy ½∫|∇u|² via Parseval: ½ Σ (2π|k|)² |û_k|².
pub fn dirichlet_energy(u: &TorusField) -> f64 {
    let n = u.grid.n();
    let sp = spectral(n);
    let spec = sp.fft2(u.values());
    let mut energy = 0.0;
    for ki in 0..n {
        for kj in 0..n {
            energy += symbol(ki, kj, n) * spec[ki * n + kj].norm_sqr();
        }
    }
    0.5 * energy
}

/// Max-shifted log ∫ h e^{scale·u}; finite for every finite input.
///
/// The weight h must be strictly positive on the whole grid.
pub fn log_mean_exp(u: &TorusField, h: &TorusField, scale: f64) -> Result<f64, FieldError> {
    u.check_same_grid(h)?;
    for (index, &value) in h.values().iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FieldError::NonPositiveWeight { index, value });
        }
    }
    let shift = u
        .values()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(scale * v));
    let w = u.grid.weight();
    let sum: f64 = u
        .values()
        .iter()
        .zip(h.values())
        .map(|(&uv, &hv)| w * hv * (scale * uv - shift).exp())
        .sum();
    Ok(shift + sum.ln())
}

/// Spectral injection onto the doubled grid (zero padding in frequency).
///
/// Exact on band-limited fields: values at even points of the fine grid
/// reproduce the coarse field up to rounding. Nyquist rows/columns are split
/// evenly between ±n/2 so real fields stay real.
pub fn refine_double(u: &TorusField) -> TorusField {
    let n = u.grid.n();
    let m = 2 * n;
    let sp_in = spectral(n);
    let coarse = sp_in.fft2(u.values());
    let mut fine = vec![Complex::new(0.0, 0.0); m * m];
    // Index images of coarse frequency i on the fine grid, with split weights
    // for the Nyquist mode.
    let images = |i: usize| -> Vec<(usize, f64)> {
        let k = wavenumber(i, n);
        if i == n / 2 {
            vec![(n / 2, 0.5), (m - n / 2, 0.5)]
        } else if k >= 0 {
            vec![(k as usize, 1.0)]
        } else {
            vec![((m as i64 + k) as usize, 1.0)]
        }
    };
    for ki in 0..n {
        for kj in 0..n {
            let c = coarse[ki * n + kj];
            for &(ti, wi) in &images(ki) {
                for &(tj, wj) in &images(kj) {
                    fine[ti * m + tj] += c * (wi * wj);
                }
            }
        }
    }
    let sp_out = spectral(m);
    let values = sp_out.ifft2(fine);
    TorusField { grid: TorusGrid { n: m }, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    /// Deterministic rough test field (full spectrum, mean-zero).
    fn scrambled(g: TorusGrid, seed: u64) -> TorusField {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1_u64 << 53) as f64 - 0.5
        };
        let values = (0..g.cells()).map(|_| next()).collect();
        TorusField::from_values(g, values).unwrap().mean_zero()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(TorusGrid::new(8).is_err());
        assert!(TorusGrid::new(48).is_err());
        assert!(TorusGrid::new(16).is_ok());
    }

    #[test]
    fn area_weights_sum_to_exactly_one() {
        let g = grid(64);
        let total: f64 = (0..g.cells()).map(|_| g.weight()).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn torus_distance_wraps() {
        let p = TorusPoint::new(0.05, 0.0);
        let q = TorusPoint::new(0.95, 0.0);
        assert!((p.distance(q) - 0.1).abs() < 1e-15);
        assert!(TorusPoint::new(0.5, 0.5).distance(TorusPoint::new(0.0, 0.0)) <= 0.5_f64.sqrt());
    }

    #[test]
    fn mean_zero_projection() {
        let g = grid(32);
        let u = TorusField::from_fn(g, |x, y| 3.0 + (TAU * x).sin() * (TAU * y).cos());
        let z = u.mean_zero();
        assert!(z.mean().abs() < 1e-12);
    }

    #[test]
    fn dirichlet_energy_frozen_values() {
        let g = grid(64);
        let u = TorusField::from_fn(g, |x, _| (TAU * x).sin());
        assert!((dirichlet_energy(&u) - PI * PI).abs() < 1e-10);
        let v = TorusField::from_fn(g, |x, y| (TAU * x).sin() + (2.0 * TAU * y).cos());
        assert!((dirichlet_energy(&v) - 5.0 * PI * PI).abs() < 1e-9);
        // Quadratic scaling.
        let w = v.map(|t| 3.0 * t);
        assert!((dirichlet_energy(&w) - 45.0 * PI * PI).abs() < 1e-8);
    }

    #[test]
    fn poisson_solves_single_mode() {
        let g = grid(32);
        let f = TorusField::from_fn(g, |x, _| TAU * TAU * (TAU * x).cos());
        let u = poisson_solve(&f).unwrap();
        let expect = TorusField::from_fn(g, |x, _| (TAU * x).cos());
        let err = u
            .values()
            .iter()
            .zip(expect.values())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(err < 1e-12, "sup error {err}");
    }

    #[test]
    fn poisson_laplacian_roundtrip_on_rough_field() {
        let g = grid(64);
        let u = scrambled(g, 7);
        let back = poisson_solve(&laplacian(&u).map(|v| -v)).unwrap();
        let err = u
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(err < 1e-10 * u.sup_norm().max(1.0), "sup error {err}");
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let g = grid(16);
        let f = TorusField::constant(g, 0.5);
        assert!(matches!(poisson_solve(&f), Err(FieldError::NonZeroMean(_))));
    }

    #[test]
    fn log_mean_exp_matches_direct_sum_and_shifts() {
        let g = grid(32);
        let u = TorusField::from_fn(g, |x, y| (TAU * x).sin() + 0.5 * (TAU * y).cos());
        let h = TorusField::from_fn(g, |x, _| 1.0 + 0.5 * (TAU * x).cos());
        let direct: f64 = u
            .values()
            .iter()
            .zip(h.values())
            .map(|(&uv, &hv)| g.weight() * hv * (0.7 * uv).exp())
            .sum::<f64>()
            .ln();
        let got = log_mean_exp(&u, &h, 0.7).unwrap();
        assert!((got - direct).abs() < 1e-13);

        // Constant fields reduce to scale·c exactly (h ≡ 1 sums to 1).
        let c = TorusField::constant(g, 3.25);
        let one = TorusField::constant(g, 1.0);
        assert!((log_mean_exp(&c, &one, 2.0).unwrap() - 6.5).abs() < 1e-13);

        // Huge amplitudes stay finite thanks to the max shift.
        let big = u.map(|v| 1e4 * v);
        assert!(log_mean_exp(&big, &one, 1.0).unwrap().is_finite());
    }

    #[test]
    fn log_mean_exp_rejects_nonpositive_weight() {
        let g = grid(16);
        let u = TorusField::zeros(g);
        let h = TorusField::from_fn(g, |x, _| x - 0.5);
        assert!(matches!(
            log_mean_exp(&u, &h, 1.0),
            Err(FieldError::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn refine_double_preserves_band_limited_fields() {
        let g = grid(16);
        let u = TorusField::from_fn(g, |x, y| (TAU * x).sin() - 2.0 * (2.0 * TAU * y).sin());
        let fine = refine_double(&u);
        assert_eq!(fine.grid().n(), 32);
        // Even fine points coincide with the coarse samples.
        for row in 0..16 {
            for col in 0..16 {
                let c = u.values()[g.index(row, col)];
                let f = fine.values()[fine.grid().index(2 * row, 2 * col)];
                assert!((c - f).abs() < 1e-12);
            }
        }
        assert!((dirichlet_energy(&u) - dirichlet_energy(&fine)).abs() < 1e-9);
        assert!((u.mean() - fine.mean()).abs() < 1e-13);
    }

    #[test]
    fn refine_double_keeps_rough_fields_real_and_consistent() {
        let g = grid(16);
        let u = scrambled(g, 3);
        let fine = refine_double(&u);
        // The refinement is a spectral interpolant: it reproduces the coarse
        // samples even with an occupied Nyquist mode.
        for row in 0..16 {
            for col in 0..16 {
                let c = u.values()[g.index(row, col)];
                let f = fine.values()[fine.grid().index(2 * row, 2 * col)];
                assert!((c - f).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let g = grid(16);
        let u = scrambled(g, 11);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 * g.cells());
        let back = TorusField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(u, back);
    }

    #[test]
    fn csv_header_and_rows() {
        let g = grid(16);
        let u = TorusField::zeros(g);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,value"));
        assert_eq!(lines.next(), Some("0,0,0"));
        assert_eq!(text.lines().count(), 1 + g.cells());
    }
}
