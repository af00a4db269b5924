//! Piecewise-cubic interpolation of sampled state trajectories with exact
//! polynomial derivatives, used to build the state-derivative database.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{
    Channel, SimulationRecord, TimeSeries, OUTPUT_CHANNELS, STATE_CHANNELS,
    STATE_DERIVATIVE_CHANNELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Zero second derivative at both ends.
    Natural,
    /// Continuous third derivative at the second and penultimate knots;
    /// reproduces cubic polynomials exactly.
    #[default]
    NotAKnot,
}

/// Interpolating cubic spline; interval `i` holds `[a, b, c, d]` of
/// `a + b·s + c·s² + d·s³` with `s = t − knots[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineChannel {
    knots: Vec<f64>,
    coefficients: Vec<[f64; 4]>,
    boundary_rule: BoundaryRule,
}

pub fn fit_spline(t: &[f64], x: &[f64]) -> Result<SplineChannel> {
    fit_spline_with(t, x, BoundaryRule::default())
}

pub fn fit_spline_with(t: &[f64], x: &[f64], rule: BoundaryRule) -> Result<SplineChannel> {
    if t.len() != x.len() {
        return Err(Error::LengthMismatch {
            name: "x".into(),
            expected: t.len(),
            found: x.len(),
        });
    }
    let n = t.len();
    if n < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: n });
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::DuplicateKnot(i + 1));
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<f64> = x.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / h).collect();

    // Tridiagonal system for the interior second derivatives M[1..n-1].
    let m = n - 2;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        sub[k] = h[i - 1];
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        sup[k] = h[i];
        rhs[k] = 6.0 * (slope[i] - slope[i - 1]);
    }
    if rule == BoundaryRule::NotAKnot {
        // M0 = ((h0 + h1) M1 − h0 M2) / h1, and symmetrically at the far end.
        let (h0, h1) = (h[0], h[1]);
        diag[0] += h0 * (h0 + h1) / h1;
        sup[0] -= h0 * h0 / h1;
        let (ha, hb) = (h[n - 3], h[n - 2]);
        diag[m - 1] += hb * (ha + hb) / ha;
        sub[m - 1] -= hb * hb / ha;
    }
    let interior = solve_tridiagonal(&sub, &diag, &sup, &rhs);

    let mut second = vec![0.0; n];
    second[1..n - 1].copy_from_slice(&interior);
    if rule == BoundaryRule::NotAKnot {
        second[0] = ((h[0] + h[1]) * second[1] - h[0] * second[2]) / h[1];
        let (ha, hb) = (h[n - 3], h[n - 2]);
        second[n - 1] = ((ha + hb) * second[n - 2] - hb * second[n - 3]) / ha;
    }

    let coefficients = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            [
                x[i],
                slope[i] - hi * (2.0 * second[i] + second[i + 1]) / 6.0,
                second[i] / 2.0,
                (second[i + 1] - second[i]) / (6.0 * hi),
            ]
        })
        .collect();
    Ok(SplineChannel {
        knots: t.to_vec(),
        coefficients,
        boundary_rule: rule,
    })
}

/// Thomas algorithm; the systems built here are diagonally dominant.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}

impl SplineChannel {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coefficients
    }

    pub fn boundary_rule(&self) -> BoundaryRule {
        self.boundary_rule
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutsideSpan { t, lo, hi });
        }
        let i = self
            .knots
            .partition_point(|&k| k <= t)
            .saturating_sub(1)
            .min(self.coefficients.len() - 1);
        Ok((i, t - self.knots[i]))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [a, b, c, d] = self.coefficients[i];
        Ok(a + s * (b + s * (c + s * d)))
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [_, b, c, d] = self.coefficients[i];
        Ok(b + s * (2.0 * c + 3.0 * d * s))
    }

    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        let (i, s) = self.locate(t)?;
        let [_, _, c, d] = self.coefficients[i];
        Ok(2.0 * c + 6.0 * d * s)
    }

    /// First derivative at every knot, without searching.
    pub fn knot_derivatives(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.coefficients.iter().map(|c| c[1]).collect();
        let [_, b, c, d] = *self.coefficients.last().unwrap();
        let h = self.knots[self.knots.len() - 1] - self.knots[self.knots.len() - 2];
        out.push(b + h * (2.0 * c + 3.0 * d * h));
        out
    }

    /// Second derivative at every knot.
    pub fn knot_second_derivatives(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.coefficients.iter().map(|c| 2.0 * c[2]).collect();
        let [_, _, c, d] = *self.coefficients.last().unwrap();
        let h = self.knots[self.knots.len() - 1] - self.knots[self.knots.len() - 2];
        out.push(2.0 * c + 6.0 * d * h);
        out
    }
}

pub fn spline_derivative(s: &SplineChannel, t_query: &[f64]) -> Result<Vec<f64>> {
    t_query.iter().map(|&t| s.derivative(t)).collect()
}

/// Append the six states and six state derivatives derived from the platform
/// pitch, tower-top deflection and generator speed outputs.
pub fn attach_states(mut record: SimulationRecord) -> Result<SimulationRecord> {
    let t = record.outputs.times();
    let bases = [0usize, 1, 2].map(|k| record.outputs.require(&OUTPUT_CHANNELS[k]));
    let mut states: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let mut derivs: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for (k, base) in bases.into_iter().enumerate() {
        let x = base?;
        let spline = fit_spline(&t, x)?;
        let first = spline.knot_derivatives();
        let second = spline.knot_second_derivatives();
        states[k] = x.to_vec();
        states[k + 3] = first.clone();
        derivs[k] = first;
        derivs[k + 3] = second;
    }
    let channels = STATE_CHANNELS
        .iter()
        .zip(states)
        .chain(STATE_DERIVATIVE_CHANNELS.iter().zip(derivs))
        .map(|(spec, values)| Channel::new(spec.name, spec.unit, values))
        .collect();
    record.states = Some(TimeSeries::new(record.t0(), record.dt(), channels)?);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn constant_and_linear() {
        let t = grid(20, 0.3);
        let c = fit_spline(&t, &vec![2.5; 20]).unwrap();
        for q in [0.0, 0.7, 3.1, 5.7] {
            assert!((c.value(q).unwrap() - 2.5).abs() < 1e-14);
            assert!(c.derivative(q).unwrap().abs() < 1e-13);
        }
        for rule in [BoundaryRule::Natural, BoundaryRule::NotAKnot] {
            let l = fit_spline_with(&t, &t, rule).unwrap();
            for q in [0.0, 0.05, 2.2, 5.7] {
                assert!((l.derivative(q).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_derivative() {
        let t = grid(11, 1.0);
        let x: Vec<f64> = t.iter().map(|v| v * v).collect();
        let s = fit_spline(&t, &x).unwrap();
        assert!((s.derivative(3.0).unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn sine_derivative_bound() {
        let t = grid(1001, 0.01);
        let x: Vec<f64> = t.iter().map(|v| v.sin()).collect();
        let s = fit_spline(&t, &x).unwrap();
        let err = t[100..901]
            .iter()
            .map(|&q| (s.derivative(q).unwrap() - q.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn derivative_query_errors() {
        let t = grid(5, 1.0);
        let s = fit_spline(&t, &t).unwrap();
        assert!(matches!(
            spline_derivative(&s, &[4.5, 5.0]),
            Err(Error::OutsideSpan { .. })
        ));
        assert!(matches!(
            fit_spline(&[0.0, 1.0, 2.0], &[0.0; 3]),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_spline(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4]),
            Err(Error::DuplicateKnot(2))
        ));
    }

    #[test]
    fn constant_record_has_zero_derivatives() {
        let mut rec = crate::timeseries::tests::ramp_record(50, 0.1, 3.0);
        for ch in rec.outputs.channels.iter_mut() {
            ch.values.iter_mut().for_each(|v| *v = 3.0);
        }
        let rec = attach_states(rec).unwrap();
        let states = rec.states.unwrap();
        for spec in &STATE_DERIVATIVE_CHANNELS {
            assert!(states.values(spec.name).unwrap().iter().all(|v| v.abs() < 1e-12));
        }
        assert!(attach_states(crate::timeseries::tests::ramp_record(3, 0.1, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn cubics_reproduced_on_any_grid(
            steps in proptest::collection::vec(0.05f64..1.0, 3..30),
            coef in proptest::array::uniform4(-3.0f64..3.0),
        ) {
            let mut t = vec![0.0];
            for h in &steps { t.push(t.last().unwrap() + h); }
            let p = |s: f64| coef[0] + s * (coef[1] + s * (coef[2] + s * coef[3]));
            let dp = |s: f64| coef[1] + s * (2.0 * coef[2] + 3.0 * s * coef[3]);
            let x: Vec<f64> = t.iter().map(|&v| p(v)).collect();
            let s = fit_spline(&t, &x).unwrap();
            let scale = 1.0 + t.last().unwrap().powi(3);
            for w in t.windows(2) {
                for q in [w[0], 0.5 * (w[0] + w[1]), w[1]] {
                    prop_assert!((s.derivative(q).unwrap() - dp(q)).abs() <= 1e-9 * scale);
                }
            }
            for (i, &q) in t.iter().enumerate() {
                prop_assert!((s.value(q).unwrap() - x[i]).abs() <= 1e-12 * x[i].abs().max(1.0));
            }
        }

        #[test]
        fn c1_at_interior_knots(xs in proptest::collection::vec(-5.0f64..5.0, 6..40)) {
            let t: Vec<f64> = (0..xs.len()).map(|i| i as f64 * 0.1 + (i as f64).sqrt() * 0.01).collect();
            let s = fit_spline(&t, &xs).unwrap();
            let c = s.coefficients();
            for i in 1..t.len() - 1 {
                let h = t[i] - t[i - 1];
                let [_, b, cc, d] = c[i - 1];
                let left = b + h * (2.0 * cc + 3.0 * d * h);
                let right = c[i][1];
                prop_assert!((left - right).abs() <= 1e-9 * (1.0 + right.abs()));
                let left2 = 2.0 * cc + 6.0 * d * h;
                prop_assert!((left2 - 2.0 * c[i][2]).abs() <= 1e-9 * (1.0 + left2.abs()) / h);
            }
        }
    }
}
