//! Finite trigonometric forcing terms: periodic external forces given as
//! cosine/sine series with integer wave vectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PeriodicField;

/// One series term `amp * cos(2 pi k.x)` or `amp * sin(2 pi k.x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForcingMode {
    pub wave: [i64; 3],
    pub amp: f64,
    pub is_sin: bool,
}

/// External force `f` as a finite cosine/sine series with integer wave
/// vectors (period 1 in each axis).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForcingSpec {
    modes: Vec<ForcingMode>,
}

impl ForcingSpec {
    /// The `f = 0` case.
    pub fn zero() -> Self {
        Self { modes: Vec::new() }
    }

    pub fn from_modes(modes: Vec<ForcingMode>) -> Self {
        Self { modes }
    }

    /// `cos(2 pi x1) + cos(2 pi x2) + cos(2 pi x3)`, the fully cubic-symmetric
    /// single-frequency force.
    pub fn cubic() -> Self {
        Self {
            modes: vec![
                ForcingMode { wave: [1, 0, 0], amp: 1.0, is_sin: false },
                ForcingMode { wave: [0, 1, 0], amp: 1.0, is_sin: false },
                ForcingMode { wave: [0, 0, 1], amp: 1.0, is_sin: false },
            ],
        }
    }

    pub fn modes(&self) -> &[ForcingMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.amp == 0.0)
    }

    /// Largest wave-vector component in absolute value.
    pub fn band_limit(&self) -> i64 {
        self.modes
            .iter()
            .flat_map(|m| m.wave.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Bound on `|grad f|`: sum of `|amp| * 2 pi |k|`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k2 = (m.wave[0] * m.wave[0] + m.wave[1] * m.wave[1] + m.wave[2] * m.wave[2])
                    as f64;
                m.amp.abs() * 2.0 * PI * k2.sqrt()
            })
            .sum()
    }

    /// Coefficient of the constant (`k = 0` cosine) part.
    pub fn constant_part(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.wave == [0, 0, 0] && !m.is_sin)
            .map(|m| m.amp)
            .sum()
    }

    /// Exact series evaluation at a torus point.
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.eval_translated(p, [0.0; 3])
    }

    /// Exact evaluation of the translated force `f(p + xi)`. Translations are
    /// pushed into the series phases, so they are exact for any offset.
    pub fn eval_translated(&self, p: [f64; 3], xi: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        for m in &self.modes {
            let arg = 2.0
                * PI
                * (m.wave[0] as f64 * (p[0] + xi[0])
                    + m.wave[1] as f64 * (p[1] + xi[1])
                    + m.wave[2] as f64 * (p[2] + xi[2]));
            acc += m.amp * if m.is_sin { arg.sin() } else { arg.cos() };
        }
        acc
    }

    /// A vector field `F` with `div F = f(. + xi) - constant_part`, used to
    /// turn bulk integrals of `f` over an enclosed region into exact surface
    /// flux integrals. Each nonconstant mode `amp cos(2 pi k.x)` contributes
    /// `amp sin(2 pi k.x) k / (2 pi |k|^2)`.
    pub fn antiderivative_flux(&self, p: [f64; 3], xi: [f64; 3]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for m in &self.modes {
            let k2 = (m.wave[0] * m.wave[0] + m.wave[1] * m.wave[1] + m.wave[2] * m.wave[2]) as f64;
            if k2 == 0.0 {
                continue;
            }
            let arg = 2.0
                * PI
                * (m.wave[0] as f64 * (p[0] + xi[0])
                    + m.wave[1] as f64 * (p[1] + xi[1])
                    + m.wave[2] as f64 * (p[2] + xi[2]));
            // antiderivative of cos is sin; of sin is -cos
            let s = if m.is_sin { -arg.cos() } else { arg.sin() };
            let scale = m.amp * s / (2.0 * PI * k2);
            for a in 0..3 {
                acc[a] += scale * m.wave[a] as f64;
            }
        }
        acc
    }

    /// Samples the series on an n^3 grid. Rejects aliased series.
    pub fn forcing_field(&self, n: usize) -> Result<PeriodicField> {
        if self.band_limit() >= n as i64 / 2 {
            return Err(Error::Config(format!(
                "forcing band limit {} is not resolved by grid n = {n} (need < n/2)",
                self.band_limit()
            )));
        }
        Ok(PeriodicField::from_fn(n, |x, y, z| self.eval([x, y, z])))
    }

    /// Parses the config syntax: terms joined by `+`, each
    /// `cos(kx,ky,kz)*amp` or `sin(kx,ky,kz)*amp`; `0` denotes no force.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text == "0" {
            return Ok(Self::zero());
        }
        if text == "cubic" {
            return Ok(Self::cubic());
        }
        let mut modes = Vec::new();
        for raw in text.split('+') {
            let term = raw.trim();
            if term.is_empty() {
                continue;
            }
            let is_sin = if term.starts_with("cos") {
                false
            } else if term.starts_with("sin") {
                true
            } else {
                return Err(Error::Config(format!(
                    "forcing term '{term}' must start with cos or sin"
                )));
            };
            let rest = &term[3..];
            let open = rest.find('(').ok_or_else(|| {
                Error::Config(format!("forcing term '{term}' is missing '('"))
            })?;
            let close = rest.find(')').ok_or_else(|| {
                Error::Config(format!("forcing term '{term}' is missing ')'"))
            })?;
            let waves: Vec<&str> = rest[open + 1..close].split(',').collect();
            if waves.len() != 3 {
                return Err(Error::Config(format!(
                    "forcing term '{term}' needs 3 integer wave components"
                )));
            }
            let mut wave = [0i64; 3];
            for (a, w) in waves.iter().enumerate() {
                wave[a] = w.trim().parse::<i64>().map_err(|_| {
                    Error::Config(format!("bad wave component '{w}' in '{term}'"))
                })?;
            }
            let tail = rest[close + 1..].trim();
            let amp = if tail.is_empty() {
                1.0
            } else if let Some(a) = tail.strip_prefix('*') {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad amplitude in '{term}'")))?
            } else {
                return Err(Error::Config(format!(
                    "forcing term '{term}': expected '*amp' after ')'"
                )));
            };
            modes.push(ForcingMode { wave, amp, is_sin });
        }
        Ok(Self { modes })
    }

    /// Config-syntax rendering, inverse of [`ForcingSpec::parse`].
    pub fn render(&self) -> String {
        if self.modes.is_empty() {
            return "0".to_string();
        }
        self.modes
            .iter()
            .map(|m| {
                format!(
                    "{}({},{},{})*{}",
                    if m.is_sin { "sin" } else { "cos" },
                    m.wave[0],
                    m.wave[1],
                    m.wave[2],
                    m.amp
                )
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_at, SampleMode};
    use approx::assert_relative_eq;

    #[test]
    fn parse_and_render_round_trip() {
        let spec = ForcingSpec::parse("cos(1,0,0)*1.0 + sin(2,-1,3)*-0.25").unwrap();
        assert_eq!(spec.modes().len(), 2);
        assert_eq!(spec.modes()[1].wave, [2, -1, 3]);
        let again = ForcingSpec::parse(&spec.render()).unwrap();
        assert_relative_eq!(
            spec.eval([0.13, 0.27, 0.81]),
            again.eval([0.13, 0.27, 0.81]),
            epsilon = 1e-15
        );
        assert!(ForcingSpec::parse("0").unwrap().is_zero());
        assert!(ForcingSpec::parse("").unwrap().is_zero());
        assert!(ForcingSpec::parse("tan(1,0,0)").is_err());
    }

    #[test]
    fn grid_samples_match_band_limited_interpolant() {
        let spec = ForcingSpec::parse("cos(1,0,0) + cos(0,1,0) + cos(0,0,1)").unwrap();
        let field = spec.forcing_field(16).unwrap();
        let pts = [[0.0, 0.0, 0.0], [0.37, 0.11, 0.92], [0.5, 0.5, 0.5]];
        let spectral = sample_at(&field, &pts, SampleMode::Spectral);
        for (p, got) in pts.iter().zip(spectral) {
            assert_relative_eq!(got, spec.eval(*p), epsilon = 1e-12);
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let spec = ForcingSpec::parse("cos(9,0,0)").unwrap();
        assert!(spec.forcing_field(16).is_err());
        assert!(spec.forcing_field(32).is_ok());
    }

    #[test]
    fn cubic_symmetry_of_builtin_force() {
        let spec = ForcingSpec::cubic();
        let p = [0.21, 0.43, 0.77];
        let perm = [p[2], p[0], p[1]];
        assert_relative_eq!(spec.eval(p), spec.eval(perm), epsilon = 1e-15);
    }

    #[test]
    fn translated_evaluation_is_exact() {
        let spec = ForcingSpec::parse("cos(2,1,0)*0.7 + sin(0,0,1)*0.3").unwrap();
        let p = [0.1, 0.2, 0.3];
        let xi = [0.456, 0.789, 0.012];
        let direct = spec.eval([p[0] + xi[0], p[1] + xi[1], p[2] + xi[2]]);
        assert_relative_eq!(spec.eval_translated(p, xi), direct, epsilon = 1e-15);
    }

    #[test]
    fn flux_field_divergence_matches_series() {
        // centered finite differences of the antiderivative field reproduce f
        let spec = ForcingSpec::parse("cos(1,0,0)*0.5 + sin(1,2,0)*0.25").unwrap();
        let p = [0.31, 0.57, 0.13];
        let h = 1e-6;
        let mut div = 0.0;
        for a in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            div += (spec.antiderivative_flux(pp, [0.0; 3])[a]
                - spec.antiderivative_flux(pm, [0.0; 3])[a])
                / (2.0 * h);
        }
        assert_relative_eq!(div, spec.eval(p), epsilon = 1e-7);
    }
}
