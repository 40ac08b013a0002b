//! Periodic scalar fields on the unit 3-torus and the spectral machinery
//! behind the nonlocal (Coulombic) energy term.
//!
//! Fields are sampled at cell centers `((i+1/2)/n, (j+1/2)/n, (k+1/2)/n)` of a
//! uniform n^3 grid, stored x-fastest. The Green-function action is realized
//! spectrally: the periodic Poisson problem `-lap v = rho - mean(rho)` is
//! solved exactly in Fourier space with integer wave vectors, and the double
//! integral `∫∫ G (u-m)(u-m)` collapses to `∫ v (u-m)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::Fft;

use crate::error::{Error, Result};

/// Scalar samples on a uniform periodic n^3 grid over `[0,1)^3`.
#[derive(Debug, Clone)]
pub struct PeriodicField {
    n: usize,
    values: Vec<f64>,
}

impl PeriodicField {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n * n] }
    }

    /// Samples `f` at the cell centers of the grid.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n * n);
        let h = 1.0 / n as f64;
        for k in 0..n {
            let z = (k as f64 + 0.5) * h;
            for j in 0..n {
                let y = (j as f64 + 0.5) * h;
                for i in 0..n {
                    let x = (i as f64 + 0.5) * h;
                    values.push(f(x, y, z));
                }
            }
        }
        Self { n, values }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(Error::Inconsistency(format!(
                "field data has {} entries, expected {}^3 = {}",
                values.len(),
                n,
                n * n * n
            )));
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Value at grid indices, wrapped periodically.
    #[inline]
    pub fn at(&self, i: i64, j: i64, k: i64) -> f64 {
        let n = self.n as i64;
        let w = |t: i64| t.rem_euclid(n) as usize;
        self.values[self.idx(w(i), w(j), w(k))]
    }

    /// Coordinates of the cell center at grid indices.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = 1.0 / self.n as f64;
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule integral over the torus, which is spectrally accurate
    /// for smooth periodic integrands.
    pub fn integral(&self) -> f64 {
        self.mean()
    }

    /// Pointwise linear combination `self + c * other`.
    pub fn axpy(&self, c: f64, other: &PeriodicField) -> Result<PeriodicField> {
        if self.n != other.n {
            return Err(Error::Inconsistency("grid resolutions differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self { n: self.n, values })
    }

    /// Periodic trilinear interpolation at an arbitrary point of the torus.
    pub fn sample_trilinear(&self, p: [f64; 3]) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = p[a].rem_euclid(1.0) * nf - 0.5;
            let f = u.floor();
            base[a] = f as i64;
            frac[a] = u - f;
        }
        let mut acc = 0.0;
        for dk in 0..2 {
            let wz = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
            for dj in 0..2 {
                let wy = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                for di in 0..2 {
                    let wx = if di == 0 { 1.0 - frac[0] } else { frac[0] };
                    acc += wx
                        * wy
                        * wz
                        * self.at(base[0] + di, base[1] + dj, base[2] + dk);
                }
            }
        }
        acc
    }

    /// Forward spectral transform; returns normalized Fourier coefficients of
    /// the sample array (plain DFT over grid indices, scaled by 1/n^3).
    pub fn fft_forward(&self) -> SpectralField {
        let n = self.n;
        let mut data: Vec<Complex<f64>> =
            self.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft3_in_place(&mut data, n, FftDirection::Forward);
        let scale = 1.0 / (n * n * n) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
        SpectralField { n, coeffs: data }
    }
}

/// Direction tag for the 3-d FFT helper.
#[derive(Clone, Copy, PartialEq, Eq)]
enum FftDirection {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, dir == FftDirection::Forward);
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| {
            let mut planner = rustfft::FftPlanner::new();
            match dir {
                FftDirection::Forward => planner.plan_fft_forward(n),
                FftDirection::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// In-place 3-d FFT over an x-fastest n^3 array, one axis at a time.
fn fft3_in_place(data: &mut [Complex<f64>], n: usize, dir: FftDirection) {
    let fft = plan(n, dir);
    let mut line = vec![Complex::new(0.0, 0.0); n];
    // axis 0: contiguous
    for chunk in data.chunks_exact_mut(n) {
        fft.process(chunk);
    }
    // axis 1: stride n within each z-slab
    for k in 0..n {
        for i in 0..n {
            let base = i + n * n * k;
            for j in 0..n {
                line[j] = data[base + n * j];
            }
            fft.process(&mut line);
            for j in 0..n {
                data[base + n * j] = line[j];
            }
        }
    }
    // axis 2: stride n^2
    for j in 0..n {
        for i in 0..n {
            let base = i + n * j;
            for k in 0..n {
                line[k] = data[base + n * n * k];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[base + n * n * k] = line[k];
            }
        }
    }
}

/// Fourier coefficients of a periodic field (same x-fastest layout, index
/// `kappa` per axis mapping to the signed wave number `kappa` or `kappa - n`).
#[derive(Debug, Clone)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Complex<f64>>,
}

impl SpectralField {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    /// Signed wave number for a raw index along one axis.
    #[inline]
    pub fn wave(n: usize, kappa: usize) -> i64 {
        if kappa <= n / 2 {
            kappa as i64
        } else {
            kappa as i64 - n as i64
        }
    }

    /// Applies a real multiplier `g(|m|^2, m)` diagonally in Fourier space.
    pub fn apply_multiplier(&mut self, g: impl Fn(f64, [i64; 3]) -> f64) {
        let n = self.n;
        for kz in 0..n {
            let mz = Self::wave(n, kz);
            for ky in 0..n {
                let my = Self::wave(n, ky);
                for kx in 0..n {
                    let mx = Self::wave(n, kx);
                    let k2 = (mx * mx + my * my + mz * mz) as f64;
                    let idx = kx + n * (ky + n * kz);
                    let m = g(k2, [mx, my, mz]);
                    self.coeffs[idx] *= m;
                }
            }
        }
    }

    /// Inverse transform back to grid samples (real part; the imaginary part
    /// must be at rounding level for conjugate-symmetric coefficients).
    pub fn to_field(&self) -> PeriodicField {
        let n = self.n;
        let mut data = self.coeffs.clone();
        fft3_in_place(&mut data, n, FftDirection::Inverse);
        let values = data.iter().map(|c| c.re).collect();
        PeriodicField { n, values }
    }
}

/// Solves the periodic Poisson problem `-lap v = rho - mean(rho)` with
/// `mean(v) = 0`, exactly in Fourier space.
pub fn poisson_solve(rho: &PeriodicField) -> Result<PeriodicField> {
    if rho.n() < 4 {
        return Err(Error::Config(format!(
            "poisson_solve requires grid resolution >= 4, got {}",
            rho.n()
        )));
    }
    let mut hat = rho.fft_forward();
    hat.apply_multiplier(|k2, _| {
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / (4.0 * PI * PI * k2)
        }
    });
    Ok(hat.to_field())
}

/// Applies the forward spectral Laplacian `-lap` (zero on the mean mode).
/// Used as the round-trip oracle for [`poisson_solve`].
pub fn neg_laplacian_spectral(u: &PeriodicField) -> PeriodicField {
    let mut hat = u.fft_forward();
    hat.apply_multiplier(|k2, _| 4.0 * PI * PI * k2);
    hat.to_field()
}

/// The nonlocal energy `∫∫ G(x,y) (u(x)-m)(u(y)-m) dx dy`, evaluated as
/// `∫ v (u-m)` with `v` the Poisson potential of `u`.
///
/// `m` must equal `mean(u)` up to 1e-8; the mean is a derived quantity here,
/// not a free parameter, because the torus Poisson problem needs a zero-mean
/// right-hand side.
pub fn nonlocal_energy(u: &PeriodicField, m: f64) -> Result<f64> {
    let mean = u.mean();
    if (m - mean).abs() > 1e-8 * (1.0 + mean.abs()) {
        return Err(Error::Inconsistency(format!(
            "nonlocal_energy: m = {m} differs from mean(u) = {mean}"
        )));
    }
    let v = poisson_solve(u)?;
    let n3 = (u.n() * u.n() * u.n()) as f64;
    let dot: f64 = v
        .values()
        .iter()
        .zip(u.values())
        .map(|(vi, ui)| vi * (ui - mean))
        .sum();
    Ok(dot / n3)
}

/// Same energy evaluated on the Fourier side (Parseval route):
/// `sum_{k != 0} |u_hat_k|^2 / (4 pi^2 |k|^2)`.
pub fn nonlocal_energy_fourier(u: &PeriodicField) -> f64 {
    let hat = u.fft_forward();
    let n = u.n();
    let mut acc = 0.0;
    for kz in 0..n {
        let mz = SpectralField::wave(n, kz);
        for ky in 0..n {
            let my = SpectralField::wave(n, ky);
            for kx in 0..n {
                let mx = SpectralField::wave(n, kx);
                let k2 = (mx * mx + my * my + mz * mz) as f64;
                if k2 == 0.0 {
                    continue;
                }
                let c = hat.coeffs[kx + n * (ky + n * kz)];
                acc += c.norm_sqr() / (4.0 * PI * PI * k2);
            }
        }
    }
    acc
}

/// Interpolation mode for [`sample_at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    /// Periodic trilinear interpolation (exact on per-cell trilinear data).
    #[default]
    Trilinear,
    /// Band-limited spectral evaluation with the cell-center phase removed.
    Spectral,
}

/// Samples a periodic field at arbitrary torus points.
pub fn sample_at(field: &PeriodicField, points: &[[f64; 3]], mode: SampleMode) -> Vec<f64> {
    match mode {
        SampleMode::Trilinear => points.iter().map(|p| field.sample_trilinear(*p)).collect(),
        SampleMode::Spectral => {
            let hat = field.fft_forward();
            let n = field.n();
            // Collect significant modes with the cell-center phase folded in,
            // so that evaluation reproduces the underlying band-limited
            // function rather than the raw sample sequence.
            let cutoff = 1e-14 * hat.coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
            let mut modes: Vec<([i64; 3], Complex<f64>)> = Vec::new();
            for kz in 0..n {
                let mz = SpectralField::wave(n, kz);
                for ky in 0..n {
                    let my = SpectralField::wave(n, ky);
                    for kx in 0..n {
                        let mx = SpectralField::wave(n, kx);
                        let c = hat.coeffs[kx + n * (ky + n * kz)];
                        if c.norm() > cutoff {
                            let phase = -PI * (mx + my + mz) as f64 / n as f64;
                            modes.push(([mx, my, mz], c * Complex::from_polar(1.0, phase)));
                        }
                    }
                }
            }
            points
                .iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for (m, c) in &modes {
                        let arg = 2.0
                            * PI
                            * (m[0] as f64 * p[0] + m[1] as f64 * p[1] + m[2] as f64 * p[2]);
                        acc += c.re * arg.cos() - c.im * arg.sin();
                    }
                    acc
                })
                .collect()
        }
    }
}

/// Writes a field as flat binary: u64 LE header `n`, then n^3 f64 LE values
/// in x-fastest order.
pub fn write_binary(field: &PeriodicField, w: &mut impl std::io::Write) -> Result<()> {
    w.write_all(&(field.n() as u64).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a field written by [`write_binary`].
pub fn read_binary(r: &mut impl std::io::Read) -> Result<PeriodicField> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    let n = u64::from_le_bytes(header) as usize;
    if n == 0 || n > 4096 {
        return Err(Error::Inconsistency(format!("implausible field resolution {n}")));
    }
    let mut values = vec![0.0f64; n * n * n];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    PeriodicField::from_values(n, values)
}

/// Writes the z = const slice at grid index `k` as CSV (`x,y,value` rows).
pub fn write_csv_slice(
    field: &PeriodicField,
    k: usize,
    w: &mut impl std::io::Write,
) -> Result<()> {
    let n = field.n();
    writeln!(w, "x,y,value")?;
    for j in 0..n {
        for i in 0..n {
            let c = field.cell_center(i, j, k);
            writeln!(w, "{},{},{}", c[0], c[1], field.values()[field.idx(i, j, k)])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_single_mode() {
        // rho = cos(2 pi x) has the exact solution v = cos(2 pi x) / (4 pi^2).
        let rho = PeriodicField::from_fn(32, |x, _, _| (2.0 * PI * x).cos());
        let v = poisson_solve(&rho).unwrap();
        let expect = PeriodicField::from_fn(32, |x, _, _| (2.0 * PI * x).cos() / (4.0 * PI * PI));
        for (a, b) in v.values().iter().zip(expect.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn poisson_constant_is_zero() {
        let rho = PeriodicField::from_fn(16, |_, _, _| 3.25);
        let v = poisson_solve(&rho).unwrap();
        assert!(v.max_abs() < 1e-13);
    }

    #[test]
    fn poisson_rejects_coarse_grid() {
        let rho = PeriodicField::zeros(2);
        assert!(matches!(poisson_solve(&rho), Err(Error::Config(_))));
    }

    #[test]
    fn poisson_spectral_round_trip() {
        // Band-limited random field: re-applying the forward Laplacian must
        // reproduce rho - mean(rho) to spectral accuracy.
        let n = 64;
        let rho = PeriodicField::from_fn(n, |x, y, z| {
            (2.0 * PI * x).cos() * (4.0 * PI * y).sin()
                + 0.3 * (6.0 * PI * (x + z)).cos()
                + 0.1 * (2.0 * PI * (3.0 * x - 2.0 * y + z)).sin()
                + 0.7
        });
        let v = poisson_solve(&rho).unwrap();
        assert!(v.mean().abs() < 1e-13);
        let back = neg_laplacian_spectral(&v);
        let mean = rho.mean();
        let mut err = 0.0f64;
        for (b, r) in back.values().iter().zip(rho.values()) {
            err = err.max((b - (r - mean)).abs());
        }
        assert!(err < 1e-10, "round-trip residual {err}");
    }

    #[test]
    fn nonlocal_energy_single_mode() {
        let u = PeriodicField::from_fn(32, |x, _, _| (2.0 * PI * x).cos());
        let e = nonlocal_energy(&u, 0.0).unwrap();
        assert_relative_eq!(e, 1.0 / (8.0 * PI * PI), epsilon = 1e-12);
    }

    #[test]
    fn nonlocal_energy_constant_vanishes() {
        let u = PeriodicField::from_fn(16, |_, _, _| -1.0);
        let e = nonlocal_energy(&u, -1.0).unwrap();
        assert!(e.abs() < 1e-14);
    }

    #[test]
    fn nonlocal_energy_rejects_wrong_mean() {
        let u = PeriodicField::from_fn(16, |x, _, _| x);
        assert!(matches!(
            nonlocal_energy(&u, 7.0),
            Err(Error::Inconsistency(_))
        ));
    }

    #[test]
    fn nonlocal_energy_nonnegative_and_parseval() {
        let n = 32;
        let u = PeriodicField::from_fn(n, |x, y, z| {
            ((2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.5 * (4.0 * PI * z).cos()).tanh()
        });
        let m = u.mean();
        let phys = nonlocal_energy(&u, m).unwrap();
        let four = nonlocal_energy_fourier(&u);
        assert!(phys >= 0.0);
        assert_relative_eq!(phys, four, max_relative = 1e-10);
    }

    #[test]
    fn nonlocal_energy_translation_invariant() {
        let n = 32;
        let u = PeriodicField::from_fn(n, |x, y, _| {
            if (2.0 * PI * x).cos() + 0.3 * (2.0 * PI * y).sin() > 0.2 {
                1.0
            } else {
                -1.0
            }
        });
        // lattice-commensurate shift by 5 cells in x, 11 in y
        let mut shifted = PeriodicField::zeros(n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = u.at(i as i64 + 5, j as i64 + 11, k as i64);
                    let idx = shifted.idx(i, j, k);
                    shifted.values_mut()[idx] = v;
                }
            }
        }
        let e0 = nonlocal_energy(&u, u.mean()).unwrap();
        let e1 = nonlocal_energy(&shifted, shifted.mean()).unwrap();
        assert_relative_eq!(e0, e1, max_relative = 1e-10);
    }

    #[test]
    fn lamella_square_wave_matches_1d_series_oracle() {
        // u is the indicator square wave of the half-slab {x < 1/2}. An
        // independent 1-d direct DFT computes the same spectral energy.
        let n = 64;
        let u = PeriodicField::from_fn(n, |x, _, _| if x < 0.5 { 1.0 } else { -1.0 });
        let grid = nonlocal_energy(&u, 0.0).unwrap();

        // independent oracle: direct O(n^2) DFT of the 1-d sample sequence
        let samples: Vec<f64> = (0..n)
            .map(|j| if (j as f64 + 0.5) / (n as f64) < 0.5 { 1.0 } else { -1.0 })
            .collect();
        let mut oracle = 0.0;
        for kappa in 1..n {
            let m = SpectralField::wave(n, kappa);
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, s) in samples.iter().enumerate() {
                let arg = -2.0 * PI * (j as f64) * (kappa as f64) / n as f64;
                re += s * arg.cos();
                im += s * arg.sin();
            }
            re /= n as f64;
            im /= n as f64;
            oracle += (re * re + im * im) / (4.0 * PI * PI * (m * m) as f64);
        }
        assert_relative_eq!(grid, oracle, max_relative = 1e-10);

        // the analytic discrete coefficients 2/(n sin(pi m / n)) give the
        // same sum, and the continuum series limit is 1/48
        let mut analytic = 0.0;
        for kappa in 1..n {
            let m = SpectralField::wave(n, kappa);
            if m.rem_euclid(2) == 0 {
                continue;
            }
            let amp = 2.0 / (n as f64 * (PI * m as f64 / n as f64).sin());
            analytic += amp * amp / (4.0 * PI * PI * (m * m) as f64);
        }
        assert_relative_eq!(grid, analytic, max_relative = 1e-12);
        assert_relative_eq!(grid, 1.0 / 48.0, max_relative = 2e-3);
    }

    #[test]
    fn trilinear_exact_at_nodes_and_constants() {
        let n = 16;
        let u = PeriodicField::from_fn(n, |x, y, z| x * 7.0 + y - z * z);
        for (i, j, k) in [(0, 0, 0), (5, 11, 3), (15, 15, 15)] {
            let p = u.cell_center(i, j, k);
            let got = u.sample_trilinear(p);
            assert_relative_eq!(got, u.values()[u.idx(i, j, k)], epsilon = 1e-13);
        }
        let c = PeriodicField::from_fn(8, |_, _, _| 4.2);
        assert_relative_eq!(c.sample_trilinear([0.123, 0.456, 0.789]), 4.2, epsilon = 1e-13);
    }

    #[test]
    fn spectral_sampling_hits_band_limited_values() {
        let n = 32;
        let u = PeriodicField::from_fn(n, |x, _, _| (2.0 * PI * x).cos());
        let vals = sample_at(&u, &[[0.0, 0.0, 0.0], [0.25, 0.9, 0.1]], SampleMode::Spectral);
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let u = PeriodicField::from_fn(8, |x, y, z| x + 2.0 * y + 3.0 * z);
        let mut buf = Vec::new();
        write_binary(&u, &mut buf).unwrap();
        let back = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back.n(), 8);
        assert_eq!(back.values(), u.values());
    }
}
