//! Discrete-time subspace identification baseline: a high-order ARX
//! predictor removes the future-input and future-output contributions from
//! the future output block, whose projection on the past data is then
//! factored by an SVD to obtain a state sequence.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoopPlant;
use crate::error::{Error, Result};
use crate::linalg::{self, spectral_radius};
use crate::timeseries::{Channel, TimeSeries, N_INPUTS, N_OUTPUTS, OUTPUT_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceOptions {
    pub n_x: usize,
    /// Past and future block rows.
    pub horizon: usize,
    /// Remove channel means before identification and keep them as offsets.
    pub detrend: bool,
    pub dt: f64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            n_x: 6,
            horizon: 20,
            detrend: false,
            dt: 0.01,
        }
    }
}

/// `x_{k+1} = A x_k + B (u_k − u_off)`, `y_k = y_off + C x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLtiModel {
    pub discrete: bool,
    pub dt: f64,
    pub n_x: usize,
    #[serde(rename = "A", with = "linalg::rows")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "linalg::rows")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "linalg::rows")]
    pub c: DMatrix<f64>,
    pub u_offset: Vec<f64>,
    pub y_offset: Vec<f64>,
    /// Singular values of the weighted projection, largest first.
    pub singular_values: Vec<f64>,
}

impl DiscreteLtiModel {
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `C A^{k−1} B` for k = 1..=count.
    pub fn markov_parameters(&self, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut ak_b = self.b.clone();
        for _ in 0..count {
            out.push(&self.c * &ak_b);
            ak_b = &self.a * ak_b;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        let rho = spectral_radius(&m.a);
        if !(rho < 1.0) {
            return Err(Error::UnstableModel(rho));
        }
        Ok(m)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Per-channel affine normalization `(x − offset) / scale`.
struct Normalizer {
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    fn fit(records: &[&DMatrix<f64>], detrend: bool) -> Self {
        let rows = records[0].nrows();
        let total: usize = records.iter().map(|m| m.ncols()).sum::<usize>().max(1);
        let mut offset = vec![0.0; rows];
        if detrend {
            for m in records {
                for (i, o) in offset.iter_mut().enumerate() {
                    *o += m.row(i).sum();
                }
            }
            offset.iter_mut().for_each(|o| *o /= total as f64);
        }
        let mut scale = vec![0.0; rows];
        for m in records {
            for (i, s) in scale.iter_mut().enumerate() {
                *s += m.row(i).iter().map(|x| (x - offset[i]).powi(2)).sum::<f64>();
            }
        }
        let scale = scale
            .into_iter()
            .map(|s| {
                let r = (s / total as f64).sqrt();
                if r > 0.0 && r.is_finite() {
                    r
                } else {
                    1.0
                }
            })
            .collect();
        Self { offset, scale }
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - self.offset[i]) / self.scale[i])
    }
}

/// Past regressor `[y_{k−1}; u_{k−1}; …; y_{k−p}; u_{k−p}]`.
fn past(y: &DMatrix<f64>, u: &DMatrix<f64>, k: usize, p: usize, out: &mut [f64]) {
    let (ny, nu) = (y.nrows(), u.nrows());
    let mut idx = 0;
    for lag in 1..=p {
        for i in 0..ny {
            out[idx] = y[(i, k - lag)];
            idx += 1;
        }
        for i in 0..nu {
            out[idx] = u[(i, k - lag)];
            idx += 1;
        }
    }
}

/// Streams column vectors into `Σ a bᵀ` in blocks to keep matrix products
/// cache friendly.
struct CrossAccumulator {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    fill: usize,
    sum: DMatrix<f64>,
    count: usize,
}

const BLOCK: usize = 2048;

impl CrossAccumulator {
    fn new(n_left: usize, n_right: usize) -> Self {
        Self {
            left: DMatrix::zeros(n_left, BLOCK),
            right: DMatrix::zeros(n_right, BLOCK),
            fill: 0,
            sum: DMatrix::zeros(n_left, n_right),
            count: 0,
        }
    }

    fn push(&mut self, a: &[f64], b: &[f64]) {
        self.left.column_mut(self.fill).copy_from_slice(a);
        self.right.column_mut(self.fill).copy_from_slice(b);
        self.fill += 1;
        self.count += 1;
        if self.fill == BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.fill > 0 {
            let l = self.left.columns(0, self.fill);
            let r = self.right.columns(0, self.fill);
            self.sum += l * r.transpose();
            self.fill = 0;
        }
    }

    fn mean(mut self) -> DMatrix<f64> {
        self.flush();
        self.sum / self.count.max(1) as f64
    }
}

/// Pseudo-inverse square root factor of a PSD matrix: rows of `T` satisfy
/// `T G Tᵀ = I` on the numerically nonzero eigenspace.
fn whitening(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * max)
        .collect();
    DMatrix::from_fn(keep.len(), gram.ncols(), |r, c| {
        let i = keep[r];
        eig.eigenvectors[(c, i)] / eig.eigenvalues[i].sqrt()
    })
}

fn pinv_solve(gram: &DMatrix<f64>, cross: &DMatrix<f64>) -> DMatrix<f64> {
    // cross · gram⁺ via the whitening factor: gram⁺ = Tᵀ T
    let t = whitening(gram);
    cross * t.transpose() * t
}

/// Identify a model from one input/output record (`n_u × N`, `n_y × N`).
pub fn fit_subspace(
    u: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_x: usize,
    horizon: usize,
) -> Result<DiscreteLtiModel> {
    fit_subspace_records(
        &[(u.clone(), y.clone())],
        &SubspaceOptions {
            n_x,
            horizon,
            ..SubspaceOptions::default()
        },
    )
}

/// Identify one model from several records; block-Hankel columns never span
/// record boundaries.
pub fn fit_subspace_records(
    records: &[(DMatrix<f64>, DMatrix<f64>)],
    opts: &SubspaceOptions,
) -> Result<DiscreteLtiModel> {
    let p = opts.horizon;
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no identification records".into()))?;
    let (nu, ny) = (first.0.nrows(), first.1.nrows());
    if p == 0 || opts.n_x == 0 || opts.n_x > p * ny {
        return Err(Error::InvalidArgument(format!(
            "order {} and horizon {p} incompatible with {ny} outputs",
            opts.n_x
        )));
    }
    for (u, y) in records {
        if u.nrows() != nu || y.nrows() != ny || u.ncols() != y.ncols() {
            return Err(Error::InvalidArgument("record dimensions differ".into()));
        }
        if u.ncols() < 10 * p {
            return Err(Error::TooFewPoints {
                needed: 10 * p,
                got: u.ncols(),
            });
        }
    }
    let u_norm = Normalizer::fit(&records.iter().map(|r| &r.0).collect::<Vec<_>>(), opts.detrend);
    let y_norm = Normalizer::fit(&records.iter().map(|r| &r.1).collect::<Vec<_>>(), opts.detrend);
    let data: Vec<(DMatrix<f64>, DMatrix<f64>)> = records
        .iter()
        .map(|(u, y)| (u_norm.apply(u), y_norm.apply(y)))
        .collect();
    let nz = p * (ny + nu);
    let mut z = vec![0.0; nz];

    // high-order ARX predictor y_k ≈ Θ z_k
    let mut zz = CrossAccumulator::new(nz, nz);
    let mut yz = CrossAccumulator::new(ny, nz);
    for (u, y) in &data {
        for k in p..u.ncols() {
            past(y, u, k, p, &mut z);
            zz.push(&z, &z);
            yz.push(y.column(k).as_slice(), &z);
        }
    }
    let arx = pinv_solve(&zz.mean(), &yz.mean());

    // future outputs with the in-window predictor contribution removed
    let nf = p * ny;
    let mut zz = CrossAccumulator::new(nz, nz);
    let mut fz = CrossAccumulator::new(nf, nz);
    let mut yf = vec![0.0; nf];
    let mut zi = vec![0.0; nz];
    for (u, y) in &data {
        for k in p..=u.ncols() - p {
            past(y, u, k, p, &mut z);
            for i in 0..p {
                past(y, u, k + i, i, &mut zi[..i * (ny + nu)]);
                for r in 0..ny {
                    let mut v = y[(r, k + i)];
                    for c in 0..i * (ny + nu) {
                        v -= arx[(r, c)] * zi[c];
                    }
                    yf[i * ny + r] = v;
                }
            }
            zz.push(&z, &z);
            fz.push(&yf, &z);
        }
    }
    let t = whitening(&zz.mean());
    let beta = fz.mean() * t.transpose();
    let svd = beta.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if sv.len() < opts.n_x {
        return Err(Error::RankCollapse(0.0));
    }
    let ratio = sv[opts.n_x - 1] / sv[0];
    if !(ratio >= 1e-12) {
        return Err(Error::RankCollapse(ratio));
    }
    let v_t = svd.v_t.as_ref().expect("requested V");
    let state_map = DMatrix::from_fn(opts.n_x, t.nrows(), |r, c| {
        sv[r].sqrt() * v_t[(order[r], c)]
    }) * &t;

    // state sequence, then (C) and (A, B) by least squares
    let nx = opts.n_x;
    let mut xx = CrossAccumulator::new(nx, nx);
    let mut yx = CrossAccumulator::new(ny, nx);
    let mut ww = CrossAccumulator::new(nx + nu, nx + nu);
    let mut xw = CrossAccumulator::new(nx, nx + nu);
    let mut w = vec![0.0; nx + nu];
    for (u, y) in &data {
        let mut has_prev = false;
        for k in p..=u.ncols() - p {
            past(y, u, k, p, &mut z);
            let x = &state_map * DVector::from_column_slice(&z);
            xx.push(x.as_slice(), x.as_slice());
            yx.push(y.column(k).as_slice(), x.as_slice());
            if has_prev {
                xw.push(x.as_slice(), &w);
                ww.push(&w, &w);
            }
            w[..nx].copy_from_slice(x.as_slice());
            w[nx..].copy_from_slice(u.column(k).as_slice());
            has_prev = true;
        }
    }
    let c_s = pinv_solve(&xx.mean(), &yx.mean());
    let ab = pinv_solve(&ww.mean(), &xw.mean());
    let a = ab.columns(0, nx).into_owned();
    let b_s = ab.columns(nx, nu).into_owned();
    let rho = spectral_radius(&a);
    if !(rho < 1.0) {
        return Err(Error::UnstableModel(rho));
    }
    let b = DMatrix::from_fn(nx, nu, |i, j| b_s[(i, j)] / u_norm.scale[j]);
    let c = DMatrix::from_fn(ny, nx, |i, j| c_s[(i, j)] * y_norm.scale[i]);
    Ok(DiscreteLtiModel {
        discrete: true,
        dt: opts.dt,
        n_x: nx,
        a,
        b,
        c,
        u_offset: u_norm.offset,
        y_offset: y_norm.offset,
        singular_values: sv,
    })
}

/// Exact recursion over an input series whose channels are in model order.
pub fn simulate_discrete(model: &DiscreteLtiModel, u: &TimeSeries, x0: &[f64]) -> Result<TimeSeries> {
    if (u.dt - model.dt).abs() > 1e-12 * model.dt.max(1.0) {
        return Err(Error::DtMismatch {
            model: model.dt,
            input: u.dt,
        });
    }
    if u.channels.len() != model.n_inputs() || x0.len() != model.n_x {
        return Err(Error::InvalidArgument("input channels or x0 do not match the model".into()));
    }
    let n = u.len();
    let ny = model.n_outputs();
    let mut x = DVector::from_column_slice(x0);
    let mut out = vec![vec![0.0; n]; ny];
    let mut uk = DVector::zeros(model.n_inputs());
    for k in 0..n {
        let yk = &model.c * &x;
        for i in 0..ny {
            out[i][k] = model.y_offset[i] + yk[i];
        }
        for (i, ch) in u.channels.iter().enumerate() {
            uk[i] = ch.values[k] - model.u_offset[i];
        }
        x = &model.a * &x + &model.b * &uk;
    }
    let channels = out
        .into_iter()
        .enumerate()
        .map(|(i, v)| match OUTPUT_CHANNELS.get(i).filter(|_| ny == N_OUTPUTS) {
            Some(s) => Channel::new(s.name, s.unit, v),
            None => Channel::new(format!("y{i}"), "-", v),
        })
        .collect();
    TimeSeries::new(u.t0, u.dt, channels)
}

/// Closed-loop adapter; the model step must equal the loop step.
#[derive(Debug, Clone)]
pub struct DiscretePlant {
    pub model: DiscreteLtiModel,
    pub state: DVector<f64>,
}

impl DiscretePlant {
    pub fn new(model: DiscreteLtiModel) -> Result<Self> {
        if model.n_inputs() != N_INPUTS || model.n_outputs() != N_OUTPUTS {
            return Err(Error::InvalidArgument(
                "closed-loop discrete model needs 4 inputs and 6 outputs".into(),
            ));
        }
        let state = DVector::zeros(model.n_x);
        Ok(Self { model, state })
    }
}

impl ClosedLoopPlant for DiscretePlant {
    fn outputs(&mut self, _input: &[f64; N_INPUTS], _w_sched: f64) -> [f64; N_OUTPUTS] {
        let yv = &self.model.c * &self.state;
        std::array::from_fn(|i| self.model.y_offset[i] + yv[i])
    }

    fn advance(&mut self, input: &[f64; N_INPUTS], _w_sched: f64, _dt: f64) {
        let du = DVector::from_fn(N_INPUTS, |i, _| input[i] - self.model.u_offset[i]);
        self.state = &self.model.a * &self.state + &self.model.b * du;
    }

    fn is_finite(&self) -> bool {
        self.state.iter().all(|x| x.is_finite() && x.abs() < 1e8)
    }
}
