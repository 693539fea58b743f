//! Multilayer perceptron trained with mini-batch Adam.
//!
//! Architecture: input -> hidden(200) -> hidden(100) -> 1, where each hidden
//! layer applies linear transform, batch normalization, ReLU, then dropout.
//! Inputs and target are z-score standardized with training statistics that
//! are stored in the model; batch-norm running statistics and dropout are
//! frozen at inference, so prediction is a pure function of (model, input).
//!
//! All math is sequential f64 so a fixed seed reproduces training bit for
//! bit; the analytic gradients are checked against finite differences.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    holdout_split, int_param, real_param, reject_unknown_keys, SublearnerError, SublearnerKind,
    SublearnerSpec,
};
use crate::features::{FeatureMatrix, TargetVector};

const BN_EPS: f64 = 1e-5;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const RUNNING_MOMENTUM: f64 = 0.1;
const MIN_VALIDATION_ROWS: usize = 5;

#[derive(Debug, Clone, Copy)]
struct MlpParams {
    hidden1: usize,
    hidden2: usize,
    batch_size: usize,
    epochs: usize,
    learning_rate: f64,
    dropout: f64,
    patience: usize,
}

impl MlpParams {
    fn from_spec(spec: &SublearnerSpec) -> Result<Self, SublearnerError> {
        if spec.kind != SublearnerKind::Mlp {
            return Err(SublearnerError::WrongKind {
                expected: "mlp",
                got: spec.kind.name().to_string(),
            });
        }
        let h = &spec.hyperparameters;
        reject_unknown_keys(
            h,
            &[
                "hidden1",
                "hidden2",
                "batch_size",
                "epochs",
                "learning_rate",
                "dropout",
                "patience",
            ],
            spec.kind,
        )?;
        Ok(MlpParams {
            hidden1: int_param(h, "hidden1", 200, 1, 4096)?,
            hidden2: int_param(h, "hidden2", 100, 1, 4096)?,
            batch_size: int_param(h, "batch_size", 256, 2, 65_536)?,
            epochs: int_param(h, "epochs", 50, 1, 10_000)?,
            learning_rate: real_param(h, "learning_rate", 1e-3, 1e-9, 100.0)?,
            dropout: real_param(h, "dropout", 0.1, 0.0, 0.95)?,
            patience: int_param(h, "patience", 10, 0, 10_000)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    /// Shape (out, in).
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub linear: LinearLayer,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl HiddenLayer {
    fn width(&self) -> usize {
        self.linear.weight.nrows()
    }
}

/// The network itself, operating in standardized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub hidden: Vec<HiddenLayer>,
    pub output: LinearLayer,
}

/// Per-layer cache from the training-mode forward pass.
struct LayerCache {
    a_prev: Array2<f64>,
    xhat: Array2<f64>,
    sd: Array1<f64>,
    gate: Array2<f64>,
}

impl MlpNet {
    /// Kaiming-normal initialization; biases zero, batch norm identity.
    pub fn new(input_dim: usize, hidden_dims: &[usize], rng: &mut ChaCha20Rng) -> Self {
        let mut draw = |fan_out: usize, fan_in: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("finite std");
            let data: Vec<f64> = (0..fan_out * fan_in).map(|_| dist.sample(rng)).collect();
            Array2::from_shape_vec((fan_out, fan_in), data).expect("shape")
        };
        let mut hidden = Vec::with_capacity(hidden_dims.len());
        let mut fan_in = input_dim;
        for &width in hidden_dims {
            let weight = draw(width, fan_in, (2.0 / fan_in as f64).sqrt());
            hidden.push(HiddenLayer {
                linear: LinearLayer {
                    weight,
                    bias: Array1::zeros(width),
                },
                gamma: Array1::ones(width),
                beta: Array1::zeros(width),
                running_mean: Array1::zeros(width),
                running_var: Array1::ones(width),
            });
            fan_in = width;
        }
        let output = LinearLayer {
            weight: draw(1, fan_in, (1.0 / fan_in as f64).sqrt()),
            bias: Array1::zeros(1),
        };
        MlpNet { hidden, output }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map(|l| l.linear.weight.ncols())
            .unwrap_or_else(|| self.output.weight.ncols())
    }

    /// Inference-mode forward: running batch-norm statistics, no dropout.
    pub fn forward_inference(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        for layer in &self.hidden {
            let z = a.dot(&layer.linear.weight.t()) + &layer.linear.bias;
            let sd = layer.running_var.mapv(|v| (v + BN_EPS).sqrt());
            let bn = (z - &layer.running_mean) / &sd * &layer.gamma + &layer.beta;
            a = bn.mapv(|v| v.max(0.0));
        }
        let out = a.dot(&self.output.weight.t()) + &self.output.bias;
        out.column(0).to_owned()
    }

    /// All trainable parameters, flattened in a fixed order (per hidden
    /// layer: weight row-major, bias, gamma, beta; then the output layer).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for layer in &self.hidden {
            v.extend(layer.linear.weight.iter());
            v.extend(layer.linear.bias.iter());
            v.extend(layer.gamma.iter());
            v.extend(layer.beta.iter());
        }
        v.extend(self.output.weight.iter());
        v.extend(self.output.bias.iter());
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut cur = 0usize;
        let mut take = |n: usize| {
            let s = &flat[cur..cur + n];
            cur += n;
            s.to_vec()
        };
        for layer in &mut self.hidden {
            let (o, i) = layer.linear.weight.dim();
            layer.linear.weight =
                Array2::from_shape_vec((o, i), take(o * i)).expect("shape");
            layer.linear.bias = Array1::from_vec(take(o));
            layer.gamma = Array1::from_vec(take(o));
            layer.beta = Array1::from_vec(take(o));
        }
        let (o, i) = self.output.weight.dim();
        self.output.weight = Array2::from_shape_vec((o, i), take(o * i)).expect("shape");
        self.output.bias = Array1::from_vec(take(o));
        assert_eq!(cur, flat.len(), "flat parameter length mismatch");
    }

    /// Training-mode squared-error loss (batch statistics, no dropout).
    pub fn batch_loss(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        self.forward_backward(x, y, None).0
    }

    /// Training-mode loss and analytic gradients in [`Self::params_flat`]
    /// order (batch statistics, no dropout).
    pub fn batch_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> (f64, Vec<f64>) {
        let (loss, grads, _) = self.forward_backward(x, y, None);
        (loss, grads)
    }

    /// Forward and backward in training mode. `masks`, when given, holds
    /// one inverted-dropout multiplier matrix per hidden layer. Returns
    /// (loss, flat gradients, per-layer batch mean/var for running stats).
    fn forward_backward(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        masks: Option<&[Array2<f64>]>,
    ) -> (f64, Vec<f64>, Vec<(Array1<f64>, Array1<f64>)>) {
        let n = x.nrows();
        assert!(n > 0, "empty batch");
        let nf = n as f64;

        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.hidden.len());
        let mut stats = Vec::with_capacity(self.hidden.len());
        let mut a = x.to_owned();
        for (k, layer) in self.hidden.iter().enumerate() {
            let z = a.dot(&layer.linear.weight.t()) + &layer.linear.bias;
            let mu = z.mean_axis(Axis(0)).expect("nonempty batch");
            let centered = z - &mu;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty");
            let sd = var.mapv(|v| (v + BN_EPS).sqrt());
            let xhat = &centered / &sd;
            let bn = &xhat * &layer.gamma + &layer.beta;
            let gate = bn.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let mut out = bn.mapv(|v| v.max(0.0));
            if let Some(ms) = masks {
                out = out * &ms[k];
            }
            caches.push(LayerCache {
                a_prev: a,
                xhat,
                sd,
                gate,
            });
            stats.push((mu, var));
            a = out;
        }

        let pred = a.dot(&self.output.weight.t()) + &self.output.bias; // (n, 1)
        let diff: Array1<f64> = &pred.column(0) - &y;
        let loss = diff.mapv(|v| v * v).sum() / nf;

        // Backward.
        let dpred = diff.mapv(|v| 2.0 * v / nf).insert_axis(Axis(1)); // (n, 1)
        let dw_out = dpred.t().dot(&a);
        let db_out = dpred.sum_axis(Axis(0));
        let mut da = dpred.dot(&self.output.weight); // (n, h_last)

        let mut rev: Vec<(Array2<f64>, Array1<f64>, Array1<f64>, Array1<f64>)> =
            Vec::with_capacity(self.hidden.len());
        for (k, layer) in self.hidden.iter().enumerate().rev() {
            let c = &caches[k];
            if let Some(ms) = masks {
                da = da * &ms[k];
            }
            let dbn = da * &c.gate;
            let dgamma = (&dbn * &c.xhat).sum_axis(Axis(0));
            let dbeta = dbn.sum_axis(Axis(0));
            let dxhat = dbn * &layer.gamma;
            let s1 = dxhat.sum_axis(Axis(0)) / nf;
            let s2 = (&dxhat * &c.xhat).sum_axis(Axis(0)) / nf;
            let dz = (dxhat - &s1 - &c.xhat * &s2) / &c.sd;
            let dw = dz.t().dot(&c.a_prev);
            let db = dz.sum_axis(Axis(0));
            da = dz.dot(&layer.linear.weight);
            rev.push((dw, db, dgamma, dbeta));
        }

        let mut grads = Vec::new();
        for (dw, db, dgamma, dbeta) in rev.into_iter().rev() {
            grads.extend(dw.iter());
            grads.extend(db.iter());
            grads.extend(dgamma.iter());
            grads.extend(dbeta.iter());
        }
        grads.extend(dw_out.iter());
        grads.extend(db_out.iter());

        (loss, grads, stats)
    }
}

/// Fitted MLP: standardization statistics plus the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub net: MlpNet,
}

impl MlpModel {
    pub fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        assert_eq!(rows.ncols(), self.input_mean.len(), "input width mismatch");
        if rows.nrows() == 0 {
            return Vec::new();
        }
        let mut xs = rows.to_owned();
        for (j, mut col) in xs.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.input_mean[j], self.input_std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        self.net
            .forward_inference(xs.view())
            .iter()
            .map(|v| v * self.target_std + self.target_mean)
            .collect()
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.input_mean.len() != n_features || self.input_std.len() != n_features {
            return Err(format!(
                "standardization widths {}/{} do not match {n_features} features",
                self.input_mean.len(),
                self.input_std.len()
            ));
        }
        if self.input_mean.iter().any(|v| !v.is_finite()) {
            return Err("input means not finite".to_string());
        }
        if self.input_std.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err("input stds must be finite and positive".to_string());
        }
        if !self.target_mean.is_finite() || !self.target_std.is_finite() || self.target_std <= 0.0
        {
            return Err("target statistics must be finite with positive std".to_string());
        }
        let mut fan_in = n_features;
        for (k, layer) in self.net.hidden.iter().enumerate() {
            let (o, i) = layer.linear.weight.dim();
            if i != fan_in {
                return Err(format!("hidden layer {k} expects {i} inputs, chain has {fan_in}"));
            }
            let widths_ok = layer.linear.bias.len() == o
                && layer.gamma.len() == o
                && layer.beta.len() == o
                && layer.running_mean.len() == o
                && layer.running_var.len() == o;
            if !widths_ok {
                return Err(format!("hidden layer {k} has inconsistent widths"));
            }
            let finite = layer.linear.weight.iter().all(|v| v.is_finite())
                && layer.linear.bias.iter().all(|v| v.is_finite())
                && layer.gamma.iter().all(|v| v.is_finite())
                && layer.beta.iter().all(|v| v.is_finite())
                && layer.running_mean.iter().all(|v| v.is_finite())
                && layer.running_var.iter().all(|v| v.is_finite() && *v >= 0.0);
            if !finite {
                return Err(format!("hidden layer {k} has non-finite parameters"));
            }
            fan_in = layer.width();
        }
        let (o, i) = self.net.output.weight.dim();
        if o != 1 || i != fan_in || self.net.output.bias.len() != 1 {
            return Err("output layer shape invalid".to_string());
        }
        if self.net.output.weight.iter().any(|v| !v.is_finite())
            || !self.net.output.bias[0].is_finite()
        {
            return Err("output layer has non-finite parameters".to_string());
        }
        Ok(())
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

fn shuffle(rng: &mut ChaCha20Rng, v: &mut [usize]) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

fn mse(pred: &Array1<f64>, truth: ArrayView1<'_, f64>) -> f64 {
    let diff = pred - &truth;
    diff.mapv(|v| v * v).sum() / pred.len() as f64
}

pub(crate) fn train(
    x: &FeatureMatrix,
    y: &TargetVector,
    spec: &SublearnerSpec,
) -> Result<MlpModel, SublearnerError> {
    let params = MlpParams::from_spec(spec)?;
    let n = x.n_rows();
    if n < 10 {
        return Err(SublearnerError::TooFewRows { needed: 10, got: n });
    }
    let d = x.n_cols();
    let (n_fit, n_val) = holdout_split(n, params.patience, MIN_VALIDATION_ROWS);

    // Standardization statistics from the fitted subset only.
    let fit_rows = x.rows().slice_move(ndarray::s![..n_fit, ..]);
    let mut input_mean = vec![0.0; d];
    let mut input_std = vec![0.0; d];
    for j in 0..d {
        let col = fit_rows.column(j);
        let m = col.sum() / n_fit as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_fit as f64;
        input_mean[j] = m;
        // Constant columns standardize to zero instead of dividing by zero.
        input_std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let y_fit = &y.values[..n_fit];
    let target_mean = y_fit.iter().sum::<f64>() / n_fit as f64;
    let y_var = y_fit
        .iter()
        .map(|v| (v - target_mean) * (v - target_mean))
        .sum::<f64>()
        / n_fit as f64;
    let target_std = if y_var.sqrt() > 1e-12 { y_var.sqrt() } else { 1.0 };

    let mut xs = x.rows().to_owned();
    for (j, mut col) in xs.columns_mut().into_iter().enumerate() {
        let (m, s) = (input_mean[j], input_std[j]);
        col.mapv_inplace(|v| (v - m) / s);
    }
    let ys: Array1<f64> = y.values.iter().map(|v| (v - target_mean) / target_std).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut net = MlpNet::new(d, &[params.hidden1, params.hidden2], &mut rng);
    let mut adam = Adam::new(params.learning_rate, net.params_flat().len());

    let keep = 1.0 - params.dropout;
    let widths = [params.hidden1, params.hidden2];
    let mut order: Vec<usize> = (0..n_fit).collect();
    let mut best: Option<(f64, MlpNet)> = None;
    let mut stale = 0usize;

    'epochs: for epoch in 0..params.epochs {
        shuffle(&mut rng, &mut order);
        for chunk in order.chunks(params.batch_size) {
            // A single row makes batch statistics meaningless.
            if chunk.len() < 2 {
                continue;
            }
            let xb = xs.select(Axis(0), chunk);
            let yb: Array1<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let masks: Option<Vec<Array2<f64>>> = if params.dropout > 0.0 {
                Some(
                    widths
                        .iter()
                        .map(|&w| {
                            let data: Vec<f64> = (0..chunk.len() * w)
                                .map(|_| {
                                    if rng.random::<f64>() < keep {
                                        1.0 / keep
                                    } else {
                                        0.0
                                    }
                                })
                                .collect();
                            Array2::from_shape_vec((chunk.len(), w), data).expect("shape")
                        })
                        .collect(),
                )
            } else {
                None
            };
            let (loss, grads, stats) = net.forward_backward(xb.view(), yb.view(), masks.as_deref());
            if !loss.is_finite() {
                return Err(SublearnerError::NonfiniteLoss { epoch });
            }
            let mut flat = net.params_flat();
            adam.step(&mut flat, &grads);
            net.set_params_flat(&flat);
            for (layer, (mu, var)) in net.hidden.iter_mut().zip(stats) {
                layer.running_mean = &layer.running_mean * (1.0 - RUNNING_MOMENTUM)
                    + &(mu * RUNNING_MOMENTUM);
                layer.running_var =
                    &layer.running_var * (1.0 - RUNNING_MOMENTUM) + &(var * RUNNING_MOMENTUM);
            }
        }

        if n_val > 0 {
            let xv = xs.slice(ndarray::s![n_fit.., ..]);
            let pred = net.forward_inference(xv);
            let val_loss = mse(&pred, ys.slice(ndarray::s![n_fit..]));
            if !val_loss.is_finite() {
                return Err(SublearnerError::NonfiniteLoss { epoch });
            }
            let improved = best.as_ref().map_or(true, |(b, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, net.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= params.patience {
                    break 'epochs;
                }
            }
        }
    }

    if let Some((_, snapshot)) = best {
        net = snapshot;
    }
    Ok(MlpModel {
        input_mean,
        input_std,
        target_mean,
        target_std,
        net,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::day1_examples;
    use super::*;
    use std::collections::BTreeMap;

    fn matrix_from(rows: Array2<f64>) -> FeatureMatrix {
        let d = rows.ncols();
        let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        let groups: BTreeMap<String, String> =
            names.iter().map(|n| (n.clone(), n.clone())).collect();
        FeatureMatrix::new(names, groups, rows).unwrap()
    }

    fn targets(values: Vec<f64>) -> TargetVector {
        TargetVector {
            values,
            target_hour: 0,
            target_day: 1,
        }
    }

    fn zero_net(d: usize, widths: &[usize]) -> MlpNet {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut net = MlpNet::new(d, widths, &mut rng);
        let zeros = vec![0.0; net.params_flat().len()];
        net.set_params_flat(&zeros);
        for layer in &mut net.hidden {
            layer.gamma.fill(1.0); // batch-norm scale back to identity
        }
        net
    }

    #[test]
    fn zero_weights_predict_zero() {
        let net = zero_net(4, &[3, 2]);
        let model = MlpModel {
            input_mean: vec![0.0; 4],
            input_std: vec![1.0; 4],
            target_mean: 0.0,
            target_std: 1.0,
            net,
        };
        let rows = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64);
        assert!(model.predict_rows(rows.view()).iter().all(|&p| p == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [3u64, 17] {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let net0 = MlpNet::new(5, &[4, 3], &mut rng);
            let x = Array2::from_shape_fn((8, 5), |_| rng.random_range(-1.0..1.0));
            let y = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));

            let (_, analytic) = net0.batch_gradients(x.view(), y.view());
            let base = net0.params_flat();
            let eps = 1e-5;
            for p in 0..base.len() {
                let mut plus = base.clone();
                plus[p] += eps;
                let mut minus = base.clone();
                minus[p] -= eps;
                let mut net = net0.clone();
                net.set_params_flat(&plus);
                let lp = net.batch_loss(x.view(), y.view());
                net.set_params_flat(&minus);
                let lm = net.batch_loss(x.view(), y.view());
                let numeric = (lp - lm) / (2.0 * eps);
                // Zero gradients (e.g. pre-batch-norm biases, whose shift
                // cancels against the batch mean) compare absolutely; the
                // finite-difference noise floor is ~1e-11.
                if (analytic[p] - numeric).abs() < 1e-9 {
                    continue;
                }
                let denom = analytic[p].abs().max(numeric.abs()).max(1e-8);
                let rel = (analytic[p] - numeric).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "seed {seed} param {p}: analytic {} vs numeric {numeric} (rel {rel})",
                    analytic[p]
                );
            }
        }
    }

    #[test]
    fn linear_target_is_learned() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 2000;
        let rows = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y_vals: Vec<f64> = rows.rows().into_iter().map(|r| 3.0 * r[0] + 1.0).collect();
        let test_rows = Array2::from_shape_fn((500, 3), |_| rng.random_range(-1.0..1.0));
        let test_y: Vec<f64> = test_rows
            .rows()
            .into_iter()
            .map(|r| 3.0 * r[0] + 1.0)
            .collect();

        let x = matrix_from(rows);
        let y = targets(y_vals.clone());
        let spec = SublearnerSpec::new(SublearnerKind::Mlp, 1);
        let model = train(&x, &y, &spec).unwrap();
        let pred = model.predict_rows(test_rows.view());
        let mse = pred
            .iter()
            .zip(&test_y)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 500.0;
        let mean = y_vals.iter().sum::<f64>() / n as f64;
        let var = y_vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mse < 0.05 * var, "test mse {mse}, var {var}");
    }

    #[test]
    fn inference_is_repeatable_after_dropout_training() {
        let (x, y) = day1_examples(24 * 40, 9);
        let spec = SublearnerSpec::new(SublearnerKind::Mlp, 2)
            .with_hyperparameter("epochs", 3.0)
            .with_hyperparameter("hidden1", 16.0)
            .with_hyperparameter("hidden2", 8.0)
            .with_hyperparameter("dropout", 0.5);
        let model = train(&x, &y, &spec).unwrap();
        let a = model.predict_rows(x.rows());
        let b = model.predict_rows(x.rows());
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_columns_and_targets_are_safe() {
        let mut rows = Array2::from_shape_fn((60, 3), |(i, _)| i as f64);
        rows.column_mut(1).fill(7.0); // constant feature
        let x = matrix_from(rows);
        let y = targets(vec![5.0; 60]); // constant target
        let spec = SublearnerSpec::new(SublearnerKind::Mlp, 3)
            .with_hyperparameter("epochs", 50.0)
            .with_hyperparameter("hidden1", 4.0)
            .with_hyperparameter("hidden2", 3.0);
        let model = train(&x, &y, &spec).unwrap();
        assert_eq!(model.input_std[1], 1.0);
        assert_eq!(model.target_std, 1.0);
        let pred = model.predict_rows(x.rows());
        assert!(pred.iter().all(|v| v.is_finite()));
        // Constant target: predictions should sit very close to it.
        assert!(pred.iter().all(|v| (v - 5.0).abs() < 1.0), "{pred:?}");
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let rows = Array2::from_shape_fn((9, 2), |(i, j)| (i + j) as f64);
        let x = matrix_from(rows);
        let y = targets((0..9).map(|i| i as f64).collect());
        assert!(matches!(
            train(&x, &y, &SublearnerSpec::new(SublearnerKind::Mlp, 0)),
            Err(SublearnerError::TooFewRows { .. })
        ));
    }

    #[test]
    fn validate_rejects_broken_models() {
        let (x, y) = day1_examples(24 * 30, 0);
        let spec = SublearnerSpec::new(SublearnerKind::Mlp, 4)
            .with_hyperparameter("epochs", 1.0)
            .with_hyperparameter("hidden1", 4.0)
            .with_hyperparameter("hidden2", 3.0);
        let model = train(&x, &y, &spec).unwrap();
        assert!(model.validate(x.n_cols()).is_ok());

        let mut bad = model.clone();
        bad.input_std[0] = 0.0;
        assert!(bad.validate(x.n_cols()).is_err());

        let mut bad = model.clone();
        bad.net.hidden[0].running_var[0] = -1.0;
        assert!(bad.validate(x.n_cols()).is_err());

        let mut bad = model.clone();
        bad.net.output.weight[(0, 0)] = f64::NAN;
        assert!(bad.validate(x.n_cols()).is_err());

        assert!(model.validate(x.n_cols() + 1).is_err());
    }

    #[test]
    fn bad_hyperparameters_rejected() {
        let spec = SublearnerSpec::new(SublearnerKind::Mlp, 0).with_hyperparameter("dropout", 0.99);
        assert!(matches!(
            MlpParams::from_spec(&spec),
            Err(SublearnerError::BadHyperparameter { .. })
        ));
        let spec =
            SublearnerSpec::new(SublearnerKind::Mlp, 0).with_hyperparameter("batch_size", 1.0);
        assert!(matches!(
            MlpParams::from_spec(&spec),
            Err(SublearnerError::BadHyperparameter { .. })
        ));
    }
}
