//! Stochastic wind and wave input signals per load case, and the Weibull
//! wind-speed density used to weight per-case metrics.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::timeseries::{Channel, TimeSeries, INPUT_CHANNELS};

const WIND_COMPONENTS: usize = 200;
const WAVE_COMPONENTS: usize = 100;
/// Turbulence integral length scale [m].
const KAIMAL_LENGTH: f64 = 340.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadCaseSpec {
    pub w_bar: f64,
    pub turbulence_intensity: f64,
    /// Significant wave height [m].
    pub hs: f64,
    /// Peak wave period [s].
    pub tp: f64,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for LoadCaseSpec {
    fn default() -> Self {
        Self {
            w_bar: 14.0,
            turbulence_intensity: 0.1,
            hs: 2.0,
            tp: 8.0,
            duration: 700.0,
            dt: 0.01,
            seed: 1,
        }
    }
}

impl LoadCaseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.w_bar > 0.0) {
            return bad(format!("w_bar must be positive, got {}", self.w_bar));
        }
        if !(0.0..1.0).contains(&self.turbulence_intensity) {
            return bad(format!(
                "turbulence intensity {} outside [0, 1)",
                self.turbulence_intensity
            ));
        }
        if !(self.hs >= 0.0) || !(self.tp > 0.0) {
            return bad(format!("wave parameters Hs = {}, Tp = {}", self.hs, self.tp));
        }
        if !(self.dt > 0.0) || !(self.duration > self.dt) {
            return bad(format!("duration {} with dt {}", self.duration, self.dt));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return bad(format!(
                "duration {} is not an integral number of steps of {}",
                self.duration, self.dt
            ));
        }
        Ok(())
    }

    /// Samples including both end points.
    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }
}

/// Load-case seed of the 1-based seed index `index` under `root`; shared
/// by data generation and the DOE so both see the same environments.
pub fn case_seed(root: u64, index: u64) -> u64 {
    rng::substream_seed(root, "case", index)
}

/// Sum of cosines with random phases; amplitudes are rescaled so the
/// component variances add up to `variance` exactly.
fn cosine_sum(
    spec: &LoadCaseSpec,
    freqs: &[f64],
    density: impl Fn(f64) -> f64,
    variance: f64,
    mean: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = spec.n_samples();
    let phases: Vec<f64> = freqs.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let raw: Vec<f64> = freqs.iter().map(|&f| density(f)).collect();
    let total: f64 = raw.iter().sum();
    if variance <= 0.0 || total <= 0.0 {
        return vec![mean; n];
    }
    let amps: Vec<f64> = raw
        .iter()
        .map(|s| (2.0 * variance * s / total).sqrt())
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 * spec.dt;
            mean + freqs
                .iter()
                .zip(&amps)
                .zip(&phases)
                .map(|((f, a), p)| a * (2.0 * PI * f * t + p).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Wind speed series with a Kaimal-shaped spectrum.
pub fn generate_wind(spec: &LoadCaseSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let sigma = spec.turbulence_intensity * spec.w_bar;
    let df = 1.0 / spec.duration;
    let freqs: Vec<f64> = (1..=WIND_COMPONENTS).map(|k| k as f64 * df).collect();
    let scale = KAIMAL_LENGTH / spec.w_bar;
    let kaimal = |f: f64| scale / (1.0 + 6.0 * f * scale).powf(5.0 / 3.0);
    let mut rng = rng::substream(spec.seed, "wind", spec.w_bar.to_bits());
    let values = cosine_sum(spec, &freqs, kaimal, sigma * sigma, spec.w_bar, &mut rng);
    let ch = &INPUT_CHANNELS[0];
    TimeSeries::new(0.0, spec.dt, vec![Channel::new(ch.name, ch.unit, values)])
}

/// Wave elevation series with a Pierson–Moskowitz spectrum.
pub fn generate_wave(spec: &LoadCaseSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let fp = 1.0 / spec.tp;
    // Grid from 0.04 fp to 4 fp; component 24 sits exactly on the peak.
    let freqs: Vec<f64> = (1..=WAVE_COMPONENTS).map(|k| fp * k as f64 / 25.0).collect();
    let pm = |f: f64| f.powi(-5) * (-1.25 * (fp / f).powi(4)).exp();
    let sigma = spec.hs / 4.0;
    let mut rng = rng::substream(spec.seed, "wave", spec.w_bar.to_bits());
    let values = cosine_sum(spec, &freqs, pm, sigma * sigma, 0.0, &mut rng);
    let ch = &INPUT_CHANNELS[3];
    TimeSeries::new(0.0, spec.dt, vec![Channel::new(ch.name, ch.unit, values)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullSpec {
    /// Shape `k`.
    pub shape: f64,
    /// Scale `λ_w` [m/s].
    pub scale: f64,
}

impl Default for WeibullSpec {
    fn default() -> Self {
        Self {
            shape: 2.0,
            scale: 10.0,
        }
    }
}

impl WeibullSpec {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Weibull shape {shape} and scale {scale} must be positive"
            )));
        }
        Ok(Self { shape, scale })
    }
}

pub fn weibull_pdf(spec: &WeibullSpec, w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative wind speed {w}")));
    }
    let k = spec.shape;
    let x = w / spec.scale;
    if x == 0.0 {
        return Ok(match k {
            k if k < 1.0 => f64::INFINITY,
            k if k == 1.0 => 1.0 / spec.scale,
            _ => 0.0,
        });
    }
    Ok(k / spec.scale * x.powf(k - 1.0) * (-x.powf(k)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn zero_turbulence_is_constant() {
        let spec = LoadCaseSpec {
            turbulence_intensity: 0.0,
            ..Default::default()
        };
        let w = generate_wind(&spec).unwrap();
        assert!(w.channels[0].values.iter().all(|&v| v == 14.0));
    }

    #[test]
    fn wind_is_deterministic_and_seed_dependent() {
        let spec = LoadCaseSpec::default();
        let a = generate_wind(&spec).unwrap();
        assert_eq!(a, generate_wind(&spec).unwrap());
        let b = generate_wind(&LoadCaseSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.channels[0].values, b.channels[0].values);
    }

    #[test]
    fn wind_statistics() {
        for seed in 1..4 {
            let spec = LoadCaseSpec {
                seed,
                ..Default::default()
            };
            let w = generate_wind(&spec).unwrap();
            assert_eq!(w.len(), 70_001);
            let (mean, sd) = stats(&w.channels[0].values);
            assert!((13.72..=14.28).contains(&mean), "mean {mean}");
            assert!((sd - 1.4).abs() <= 0.14, "sd {sd}");
        }
    }

    #[test]
    fn wave_statistics() {
        let spec = LoadCaseSpec::default();
        let eta = generate_wave(&spec).unwrap();
        let (mean, sd) = stats(&eta.channels[0].values);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((1.8..=2.2).contains(&(4.0 * sd)), "4σ {}", 4.0 * sd);
        assert_eq!(eta, generate_wave(&spec).unwrap());

        let calm = generate_wave(&LoadCaseSpec { hs: 0.0, ..spec }).unwrap();
        assert!(calm.channels[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wave_peak_frequency() {
        let spec = LoadCaseSpec::default();
        let eta = generate_wave(&spec).unwrap();
        let cfg = crate::metrics::WelchConfig {
            segment_len: 1 << 16,
            overlap: 0.5,
        };
        let (f, p) = crate::metrics::psd_with(&eta.channels[0].values, spec.dt, &cfg).unwrap();
        let peak = f[p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0];
        assert!((peak * spec.tp - 1.0).abs() <= 0.05, "peak {peak}");
    }

    #[test]
    fn length_matches_duration() {
        let spec = LoadCaseSpec {
            duration: 12.5,
            dt: 0.05,
            ..Default::default()
        };
        assert_eq!(generate_wind(&spec).unwrap().len(), 251);
        assert!(LoadCaseSpec {
            duration: 10.003,
            ..spec.clone()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn weibull_values() {
        let exp = WeibullSpec::new(1.0, 1.0).unwrap();
        assert!((weibull_pdf(&exp, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let w = WeibullSpec::new(2.0, 10.0).unwrap();
        assert!((weibull_pdf(&w, 10.0).unwrap() - 0.073_575_888_234_288_46).abs() < 1e-12);
        assert_eq!(weibull_pdf(&w, 0.0).unwrap(), 0.0);
        assert!(weibull_pdf(&w, -1.0).is_err());
    }

    #[test]
    fn weibull_unit_mass() {
        for k in [1.5, 2.0, 2.5, 3.0] {
            for lam in [8.0, 10.0, 12.0] {
                let spec = WeibullSpec::new(k, lam).unwrap();
                // composite Simpson on [0, 60]
                let n = 6000;
                let h = 60.0 / n as f64;
                let mut s = 0.0;
                for i in 0..=n {
                    let wgt = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += wgt * weibull_pdf(&spec, i as f64 * h).unwrap();
                }
                let mass = s * h / 3.0;
                assert!((mass - 1.0).abs() < 1e-3, "k={k} λ={lam}: {mass}");
            }
        }
    }
}
