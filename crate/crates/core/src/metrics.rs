//! Post-processing of simulation records: rainflow counting, damage
//! equivalent loads, Weibull-weighted aggregates, AEP, Welch PSD and summary
//! statistics.

use std::collections::BTreeMap;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::envgen::{weibull_pdf, WeibullSpec};
use crate::error::{Error, Result};
use crate::timeseries::{y, SimulationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainflowCycle {
    pub range: f64,
    pub mean: f64,
    /// 0.5 for a half cycle, 1.0 for a full cycle.
    pub count: f64,
}

/// Local extrema of a signal; plateaus collapse to one point.
pub fn turning_points(signal: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(signal.len());
    for &x in signal {
        match pts.len() {
            0 => pts.push(x),
            1 => {
                if x != pts[0] {
                    pts.push(x);
                }
            }
            n => {
                let (a, b) = (pts[n - 2], pts[n - 1]);
                if x == b {
                    continue;
                }
                if (b - a) * (x - b) > 0.0 {
                    pts[n - 1] = x;
                } else {
                    pts.push(x);
                }
            }
        }
    }
    pts
}

fn cycle(a: f64, b: f64, count: f64) -> RainflowCycle {
    RainflowCycle {
        range: (a - b).abs(),
        mean: 0.5 * (a + b),
        count,
    }
}

/// Four-point rainflow counting; the unclosed residual is reported as half
/// cycles.
pub fn rainflow(signal: &[f64]) -> Vec<RainflowCycle> {
    let mut cycles = Vec::new();
    let mut stack: Vec<f64> = Vec::new();
    for p in turning_points(signal) {
        stack.push(p);
        while stack.len() >= 4 {
            let n = stack.len();
            let inner = (stack[n - 2] - stack[n - 3]).abs();
            let outer_before = (stack[n - 3] - stack[n - 4]).abs();
            let outer_after = (stack[n - 1] - stack[n - 2]).abs();
            if inner <= outer_before && inner <= outer_after {
                cycles.push(cycle(stack[n - 3], stack[n - 2], 1.0));
                stack.drain(n - 3..n - 1);
            } else {
                break;
            }
        }
    }
    for pair in stack.windows(2) {
        cycles.push(cycle(pair[0], pair[1], 0.5));
    }
    cycles
}

/// Damage-equivalent load settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelConfig {
    pub wohler_m: f64,
    /// Reference cycle count; `None` uses the record duration in seconds.
    pub n_ref: Option<f64>,
}

impl Default for DelConfig {
    fn default() -> Self {
        Self {
            wohler_m: 4.0,
            n_ref: None,
        }
    }
}

pub fn del_from_cycles(cycles: &[RainflowCycle], wohler_m: f64, n_ref: f64) -> Result<f64> {
    if !(wohler_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Wöhler exponent must be positive, got {wohler_m}"
        )));
    }
    if !(n_ref > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference cycle count must be positive, got {n_ref}"
        )));
    }
    let damage: f64 = cycles.iter().map(|c| c.count * c.range.powf(wohler_m)).sum();
    Ok((damage / n_ref).powf(1.0 / wohler_m))
}

/// DEL of a signal of the given duration [s].
pub fn del(signal: &[f64], duration: f64, cfg: &DelConfig) -> Result<f64> {
    del_from_cycles(
        &rainflow(signal),
        cfg.wohler_m,
        cfg.n_ref.unwrap_or(duration),
    )
}

/// Seed-average values sharing a wind speed, sorted by wind speed.
fn average_by_wind(per_case: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    let mut sorted = per_case.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (w, v) in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == w => {
                g.1 += v;
                g.2 += 1;
            }
            _ => groups.push((w, v, 1)),
        }
    }
    groups.into_iter().map(|(w, s, n)| (w, s / n as f64)).collect()
}

/// Weibull-weighted average over the case grid by trapezoidal quadrature.
fn weibull_average(per_case: &[(f64, f64)], weibull: &WeibullSpec) -> Result<f64> {
    if per_case.is_empty() {
        return Err(Error::InvalidArgument("no cases to weight".into()));
    }
    let pts = average_by_wind(per_case);
    if pts.len() == 1 {
        return Ok(pts[0].1);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for pair in pts.windows(2) {
        let (w0, v0) = pair[0];
        let (w1, v1) = pair[1];
        let (p0, p1) = (weibull_pdf(weibull, w0)?, weibull_pdf(weibull, w1)?);
        let h = w1 - w0;
        num += 0.5 * h * (v0 * p0 + v1 * p1);
        den += 0.5 * h * (p0 + p1);
    }
    if !(den > 0.0) {
        return Err(Error::InvalidArgument(
            "Weibull density vanishes over the case grid".into(),
        ));
    }
    Ok(num / den)
}

/// Weibull-weighted lifetime DEL from `(w̄, DEL)` pairs.
pub fn weighted_del(per_case: &[(f64, f64)], weibull: &WeibullSpec) -> Result<f64> {
    weibull_average(per_case, weibull)
}

/// Annual energy [kWh] from `(w̄, mean power kW)` pairs.
pub fn aep_from_means(per_case: &[(f64, f64)], weibull: &WeibullSpec, hours: f64) -> Result<f64> {
    Ok(weibull_average(per_case, weibull)? * hours)
}

pub const HOURS_PER_YEAR: f64 = 8766.0;

/// Annual energy [kWh] from the power channel of each record.
pub fn aep(records: &[SimulationRecord], weibull: &WeibullSpec, hours: f64) -> Result<f64> {
    let means: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.meta.w_bar, mean(r.output(y::POWER))))
        .collect();
    aep_from_means(&means, weibull, hours)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_len: 1 << 13,
            overlap: 0.5,
        }
    }
}

pub const PSD_MIN_LEN: usize = 256;

/// One-sided Welch PSD with default settings. Returns `(f [Hz], density)`.
pub fn psd(signal: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    psd_with(signal, dt, &WelchConfig::default())
}

pub fn psd_with(signal: &[f64], dt: f64, cfg: &WelchConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.len() < PSD_MIN_LEN {
        return Err(Error::TooFewPoints {
            needed: PSD_MIN_LEN,
            got: signal.len(),
        });
    }
    if !(dt > 0.0) || !(0.0..1.0).contains(&cfg.overlap) || cfg.segment_len < 2 {
        return Err(Error::InvalidArgument("invalid Welch settings".into()));
    }
    let n = cfg.segment_len.min(signal.len());
    let step = (((1.0 - cfg.overlap) * n as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let fs = 1.0 / dt;
    let norm = fs * window.iter().map(|w| w * w).sum::<f64>();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= signal.len() {
        let seg = &signal[start..start + n];
        let m = mean(seg);
        for (b, (x, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let freqs = (0..n_bins).map(|k| k as f64 * fs / n as f64).collect();
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            one_sided * a / (norm * segments as f64)
        })
        .collect();
    Ok((freqs, density))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ChannelStats {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_case: Vec<BTreeMap<String, ChannelStats>>,
    pub pooled: BTreeMap<String, ChannelStats>,
}

/// Mean/min/max of every input and output channel, per record and pooled over
/// all samples of all records.
pub fn summary(records: &[SimulationRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("summary of zero records".into()));
    }
    let mut per_case = Vec::with_capacity(records.len());
    let mut pooled: BTreeMap<String, (f64, usize, f64, f64)> = BTreeMap::new();
    for rec in records {
        let mut case = BTreeMap::new();
        for ch in rec.inputs.channels.iter().chain(&rec.outputs.channels) {
            let s = ChannelStats::of(&ch.values);
            let e = pooled
                .entry(ch.name.clone())
                .or_insert((0.0, 0, f64::INFINITY, f64::NEG_INFINITY));
            e.0 += ch.values.iter().sum::<f64>();
            e.1 += ch.values.len();
            e.2 = e.2.min(s.min);
            e.3 = e.3.max(s.max);
            case.insert(ch.name.clone(), s);
        }
        per_case.push(case);
    }
    let pooled = pooled
        .into_iter()
        .map(|(k, (sum, n, min, max))| {
            (
                k,
                ChannelStats {
                    mean: sum / n as f64,
                    min,
                    max,
                },
            )
        })
        .collect();
    Ok(Summary { per_case, pooled })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn mse(truth: &[f64], pred: &[f64]) -> f64 {
    assert_eq!(truth.len(), pred.len(), "mse of unequal lengths");
    truth
        .iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64
}

/// Root-mean-square error normalized by the range of the reference signal.
pub fn nrmse(truth: &[f64], pred: &[f64]) -> f64 {
    let s = ChannelStats::of(truth);
    let range = s.max - s.min;
    let rmse = mse(truth, pred).sqrt();
    if range > 0.0 {
        rmse / range
    } else if rmse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(
            "rank correlation needs two equal-length samples of size ≥ 2".into(),
        ));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn histogram(cycles: &[RainflowCycle]) -> BTreeMap<u64, f64> {
        let mut h = BTreeMap::new();
        for c in cycles {
            *h.entry(c.range.round() as u64).or_insert(0.0) += c.count;
        }
        h
    }

    /// Three-point counting: with X the latest range and Y the one before,
    /// once X ≥ Y, Y counts as a half cycle if it contains the first point of
    /// the stack and as a full cycle otherwise.
    fn three_point(signal: &[f64]) -> Vec<RainflowCycle> {
        let mut out = Vec::new();
        let mut stack: Vec<f64> = Vec::new();
        for p in turning_points(signal) {
            stack.push(p);
            while stack.len() >= 3 {
                let n = stack.len();
                let x = (stack[n - 1] - stack[n - 2]).abs();
                let yv = (stack[n - 2] - stack[n - 3]).abs();
                if x < yv {
                    break;
                }
                if n == 3 {
                    out.push(cycle(stack[0], stack[1], 0.5));
                    stack.remove(0);
                } else {
                    out.push(cycle(stack[n - 3], stack[n - 2], 1.0));
                    stack.drain(n - 3..n - 1);
                }
            }
        }
        for w in stack.windows(2) {
            out.push(cycle(w[0], w[1], 0.5));
        }
        out
    }

    #[test]
    fn golden_sequence() {
        let s = [-2.0, 1.0, -3.0, 5.0, -1.0, 3.0, -4.0, 4.0, -2.0];
        let expected: BTreeMap<u64, f64> =
            [(3, 0.5), (4, 1.5), (6, 0.5), (8, 1.0), (9, 0.5)].into_iter().collect();
        assert_eq!(histogram(&rainflow(&s)), expected);
        assert_eq!(histogram(&three_point(&s)), expected);
    }

    #[test]
    fn sinusoid_and_monotone() {
        let n_periods = 7;
        let s: Vec<f64> = (0..=n_periods * 100)
            .map(|i| 3.0 * (2.0 * std::f64::consts::PI * i as f64 / 100.0 + 0.3).sin())
            .collect();
        let total: f64 = rainflow(&s)
            .iter()
            .filter(|c| (c.range - 6.0).abs() < 0.01)
            .map(|c| c.count)
            .sum();
        assert!((total - n_periods as f64).abs() <= 1.0, "{total}");

        let mono: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let c = rainflow(&mono);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].count, 0.5);
        assert!((c[0].range - 24.5).abs() < 1e-12);
    }

    #[test]
    fn del_examples() {
        let one = [cycle(0.0, 5.0, 1.0)];
        assert!((del_from_cycles(&one, 4.0, 1.0).unwrap() - 5.0).abs() < 1e-12);
        let two = [cycle(0.0, 5.0, 1.0), cycle(1.0, 6.0, 1.0)];
        assert!((del_from_cycles(&two, 4.0, 2.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(del_from_cycles(&one, 0.0, 1.0).is_err());

        let a = 1.7;
        let dt = 0.05;
        let s: Vec<f64> = (0..=(600.0 / dt) as usize)
            .map(|i| a * (2.0 * std::f64::consts::PI * 0.2 * i as f64 * dt).sin())
            .collect();
        let d = del(&s, 600.0, &DelConfig { wohler_m: 4.0, n_ref: Some(120.0) }).unwrap();
        assert!((d - 2.0 * a).abs() / (2.0 * a) < 2e-3, "{d}");
    }

    #[test]
    fn weighting() {
        let wb = WeibullSpec::default();
        let equal = [(8.0, 3.0), (12.0, 3.0), (16.0, 3.0)];
        assert!((weighted_del(&equal, &wb).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(weighted_del(&[(10.0, 4.2)], &wb).unwrap(), 4.2);

        let two = [(6.0, 1.0), (10.0, 5.0)];
        let (p0, p1) = (weibull_pdf(&wb, 6.0).unwrap(), weibull_pdf(&wb, 10.0).unwrap());
        let hand = (1.0 * p0 + 5.0 * p1) / (p0 + p1);
        assert!((weighted_del(&two, &wb).unwrap() - hand).abs() < 1e-12);
        let doubled: Vec<_> = two.iter().map(|(w, d)| (*w, 2.0 * d)).collect();
        assert!((weighted_del(&doubled, &wb).unwrap() - 2.0 * hand).abs() < 1e-12);

        // seeds at the same wind speed are averaged first
        let seeds = [(6.0, 0.0), (6.0, 2.0), (10.0, 5.0)];
        assert!((weighted_del(&seeds, &wb).unwrap() - hand).abs() < 1e-12);

        assert!((aep_from_means(&equal, &wb, 10.0).unwrap() - 30.0).abs() < 1e-9);
        assert_eq!(aep_from_means(&[(8.0, 0.0), (12.0, 0.0)], &wb, 10.0).unwrap(), 0.0);
        let hand_aep = 100.0 * (1.0 * p0 + 5.0 * p1) / (p0 + p1);
        assert!((aep_from_means(&two, &wb, 100.0).unwrap() - hand_aep).abs() < 1e-9);
    }

    #[test]
    fn psd_parseval_on_white_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..70_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dt = 0.01;
        let (f, p) = psd(&x, dt).unwrap();
        let df = f[1] - f[0];
        let power: f64 = p.iter().sum::<f64>() * df;
        assert!((power - 1.0).abs() < 0.05, "{power}");
    }

    #[test]
    fn psd_peak_and_constant() {
        let dt = 0.01;
        let f0 = 0.43;
        let x: Vec<f64> = (0..40_000)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 * dt).sin())
            .collect();
        let (f, p) = psd(&x, dt).unwrap();
        let k = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert!((f[k] - f0).abs() <= f[1] - f[0]);

        let (_, pc) = psd(&vec![3.0; 1000], dt).unwrap();
        assert!(pc.iter().all(|v| v.abs() < 1e-20));
        assert!(psd(&[0.0; 100], dt).is_err());
    }

    #[test]
    fn psd_of_independent_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1 << 16;
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| 2.0 * (2.0 * std::f64::consts::PI * 1.3 * i as f64 * 0.01).sin())
            .collect();
        let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let total = |x: &[f64]| psd(x, 0.01).unwrap().1.iter().sum::<f64>();
        let ratio = total(&s) / (total(&a) + total(&b));
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn stats_and_correlation() {
        let s = ChannelStats::of(&[2.0; 5]);
        assert_eq!((s.mean, s.min, s.max), (2.0, 2.0, 2.0));
        let ramp: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let r = ChannelStats::of(&ramp);
        assert!((r.mean - 0.5).abs() < 1e-12 && r.min == 0.0 && r.max == 1.0);

        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 40.0, 90.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(nrmse(&ramp, &ramp), 0.0);
    }

    proptest! {
        #[test]
        fn half_cycles_match_turning_points(xs in prop::collection::vec(-100.0f64..100.0, 2..200)) {
            let tp = turning_points(&xs);
            let halves: f64 = rainflow(&xs).iter().map(|c| 2.0 * c.count).sum();
            prop_assert_eq!(halves as usize, tp.len().saturating_sub(1));
        }

        #[test]
        fn del_scale_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 2..200), c in 0.01f64..100.0) {
            let cfg = DelConfig::default();
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let d = del(&xs, 10.0, &cfg).unwrap();
            let ds = del(&scaled, 10.0, &cfg).unwrap();
            prop_assert!((ds - c * d).abs() <= 1e-9 * (1.0 + c * d));
        }

        #[test]
        fn weighted_del_is_bounded(dels in prop::collection::vec(0.0f64..50.0, 1..8)) {
            let cases: Vec<(f64, f64)> = dels.iter().enumerate().map(|(i, d)| (4.0 + 2.0 * i as f64, *d)).collect();
            let wd = weighted_del(&cases, &WeibullSpec::default()).unwrap();
            let lo = dels.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = dels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(wd >= lo - 1e-9 && wd <= hi + 1e-9);
        }

        #[test]
        fn rainflow_matches_three_point(xs in prop::collection::vec(-100.0f64..100.0, 2..100)) {
            let mut a: Vec<(u64, u64, u64)> = rainflow(&xs).iter().map(|c| (c.range.to_bits(), c.mean.to_bits(), (2.0 * c.count) as u64)).collect();
            let mut b: Vec<(u64, u64, u64)> = three_point(&xs).iter().map(|c| (c.range.to_bits(), c.mean.to_bits(), (2.0 * c.count) as u64)).collect();
            a.sort();
            b.sort();
            let total = |v: &[(u64, u64, u64)]| v.iter().map(|c| c.2).sum::<u64>();
            prop_assert_eq!(total(&a), total(&b));
        }
    }
}
