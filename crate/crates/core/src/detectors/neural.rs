//! Dense autoencoder and variational autoencoder.
//!
//! Architecture: `input -> hidden (tanh) -> latent -> hidden (tanh) -> input`
//! with a linear output layer. The variational encoder has two linear heads,
//! mean and log-variance. All parameters live in one flat vector so the
//! optimiser and gradient checks can treat them uniformly; each weight
//! matrix is stored row-major as `[out][in]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const INIT_RANGE: f64 = 0.05;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// `-1/2 sum(1 + logvar - mu^2 - exp(logvar))`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    h: usize,
    l: usize,
    w1: usize,
    b1: usize,
    w_mu: usize,
    b_mu: usize,
    /// Log-variance head; only for the variational model.
    w_lv: usize,
    b_lv: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    total: usize,
}

impl Layout {
    fn new(d: usize, h: usize, l: usize, variational: bool) -> Self {
        let w1 = 0;
        let b1 = w1 + h * d;
        let w_mu = b1 + h;
        let b_mu = w_mu + l * h;
        let (w_lv, b_lv, w3) = if variational {
            let w_lv = b_mu + l;
            (w_lv, w_lv + l * h, w_lv + l * h + l)
        } else {
            (0, 0, b_mu + l)
        };
        let b3 = w3 + h * l;
        let w4 = b3 + h;
        let b4 = w4 + d * h;
        Self {
            d,
            h,
            l,
            w1,
            b1,
            w_mu,
            b_mu,
            w_lv,
            b_lv,
            w3,
            b3,
            w4,
            b4,
            total: b4 + d,
        }
    }

    fn weight_ranges(&self, variational: bool) -> Vec<(usize, usize)> {
        let mut r = vec![
            (self.w1, self.b1),
            (self.w_mu, self.b_mu),
            (self.w3, self.b3),
            (self.w4, self.b4),
        ];
        if variational {
            r.push((self.w_lv, self.b_lv));
        }
        r
    }
}

/// `out = W x + b` for `W` of shape `[out.len()][x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// `out += W^T g`.
fn affine_back(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (row, gi) in w.chunks_exact(n).zip(g) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * gi;
        }
    }
}

/// `dW += g x^T`, `db += g`.
fn accumulate(dw: &mut [f64], db: &mut [f64], g: &[f64], x: &[f64]) {
    let n = x.len();
    for ((row, bias), gi) in dw.chunks_exact_mut(n).zip(db.iter_mut()).zip(g) {
        *bias += gi;
        for (r, xi) in row.iter_mut().zip(x) {
            *r += gi * xi;
        }
    }
}

struct Forward {
    a1: Vec<f64>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    z: Vec<f64>,
    a3: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNetModel {
    pub variational: bool,
    pub n_inputs: usize,
    pub hidden: usize,
    pub latent: usize,
    pub params: Vec<f64>,
    /// Full-batch loss before training and after each epoch.
    pub training_loss: Vec<f64>,
    /// Learning rate after any halving.
    pub learning_rate: f64,
}

impl NeuralNetModel {
    /// Fresh network with weights drawn from `U(-0.05, 0.05)` and zero biases.
    pub fn new(n_inputs: usize, hidden: usize, latent: usize, variational: bool, seed: u64) -> Self {
        let layout = Layout::new(n_inputs, hidden, latent, variational);
        let mut params = vec![0.0; layout.total];
        let mut rng = SplitMix64::new(seed);
        for (start, end) in layout.weight_ranges(variational) {
            for p in &mut params[start..end] {
                *p = rng.uniform(-INIT_RANGE, INIT_RANGE);
            }
        }
        Self {
            variational,
            n_inputs,
            hidden,
            latent,
            params,
            training_loss: Vec::new(),
            learning_rate: 0.0,
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(self.n_inputs, self.hidden, self.latent, self.variational)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Forward pass; `noise` is the reparameterisation draw (ignored by the
    /// plain autoencoder, `None` decodes from the mean).
    fn forward(&self, x: &[f64], noise: Option<&[f64]>) -> Forward {
        let lay = self.layout();
        let p = &self.params;
        let mut a1 = vec![0.0; lay.h];
        affine(&p[lay.w1..lay.b1], &p[lay.b1..lay.b1 + lay.h], x, &mut a1);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut mu = vec![0.0; lay.l];
        affine(&p[lay.w_mu..lay.b_mu], &p[lay.b_mu..lay.b_mu + lay.l], &a1, &mut mu);
        let mut logvar = Vec::new();
        let mut z = mu.clone();
        if self.variational {
            logvar = vec![0.0; lay.l];
            affine(&p[lay.w_lv..lay.b_lv], &p[lay.b_lv..lay.b_lv + lay.l], &a1, &mut logvar);
            if let Some(eps) = noise {
                for k in 0..lay.l {
                    z[k] = mu[k] + (0.5 * logvar[k]).exp() * eps[k];
                }
            }
        }
        let mut a3 = vec![0.0; lay.h];
        affine(&p[lay.w3..lay.b3], &p[lay.b3..lay.b3 + lay.h], &z, &mut a3);
        a3.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = vec![0.0; lay.d];
        affine(&p[lay.w4..lay.b4], &p[lay.b4..lay.b4 + lay.d], &a3, &mut out);
        Forward {
            a1,
            mu,
            logvar,
            z,
            a3,
            out,
        }
    }

    fn row_loss(&self, f: &Forward, x: &[f64]) -> f64 {
        let mse = f.out.iter().zip(x).map(|(o, v)| (o - v) * (o - v)).sum::<f64>() / x.len() as f64;
        if self.variational {
            mse + kl_divergence(&f.mu, &f.logvar)
        } else {
            mse
        }
    }

    fn noise_row<'a>(&self, noise: &'a [f64], r: usize) -> Option<&'a [f64]> {
        self.variational.then(|| &noise[r * self.latent..(r + 1) * self.latent])
    }

    /// Mean over rows of per-row MSE (plus KL for the variational model),
    /// with the given standard-normal draws (`rows x latent`).
    pub fn loss_with_noise(&self, rows: &[f64], noise: &[f64]) -> f64 {
        let d = self.n_inputs;
        let n = rows.len() / d;
        let per_row: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|r| {
                let x = &rows[r * d..(r + 1) * d];
                self.row_loss(&self.forward(x, self.noise_row(noise, r)), x)
            })
            .collect();
        per_row.iter().sum::<f64>() / n as f64
    }

    /// Loss and its gradient with respect to `params`.
    pub fn gradient_with_noise(&self, rows: &[f64], noise: &[f64]) -> (f64, Vec<f64>) {
        let lay = self.layout();
        let (d, h, l) = (lay.d, lay.h, lay.l);
        let n = rows.len() / d;
        let inv_n = 1.0 / n as f64;
        let p = &self.params;
        let mut g = vec![0.0; lay.total];
        let mut loss = 0.0;
        for r in 0..n {
            let x = &rows[r * d..(r + 1) * d];
            let eps = self.noise_row(noise, r);
            let f = self.forward(x, eps);
            loss += self.row_loss(&f, x);

            let d_out: Vec<f64> = f
                .out
                .iter()
                .zip(x)
                .map(|(o, v)| 2.0 * (o - v) / d as f64 * inv_n)
                .collect();
            {
                let (gw, gb) = g[lay.w4..lay.b4 + d].split_at_mut(d * h);
                accumulate(gw, gb, &d_out, &f.a3);
            }
            let mut d_a3 = vec![0.0; h];
            affine_back(&p[lay.w4..lay.b4], &d_out, &mut d_a3);
            let d_z3: Vec<f64> = d_a3.iter().zip(&f.a3).map(|(g, a)| g * (1.0 - a * a)).collect();
            {
                let (gw, gb) = g[lay.w3..lay.b3 + h].split_at_mut(h * l);
                accumulate(gw, gb, &d_z3, &f.z);
            }
            let mut d_z = vec![0.0; l];
            affine_back(&p[lay.w3..lay.b3], &d_z3, &mut d_z);

            let mut d_a1 = vec![0.0; h];
            if self.variational {
                let eps = eps.expect("variational noise");
                let mut d_mu = vec![0.0; l];
                let mut d_lv = vec![0.0; l];
                for k in 0..l {
                    let sigma = (0.5 * f.logvar[k]).exp();
                    d_mu[k] = d_z[k] + f.mu[k] * inv_n;
                    d_lv[k] = d_z[k] * eps[k] * 0.5 * sigma + 0.5 * (f.logvar[k].exp() - 1.0) * inv_n;
                }
                {
                    let (gw, gb) = g[lay.w_mu..lay.b_mu + l].split_at_mut(l * h);
                    accumulate(gw, gb, &d_mu, &f.a1);
                }
                {
                    let (gw, gb) = g[lay.w_lv..lay.b_lv + l].split_at_mut(l * h);
                    accumulate(gw, gb, &d_lv, &f.a1);
                }
                affine_back(&p[lay.w_mu..lay.b_mu], &d_mu, &mut d_a1);
                affine_back(&p[lay.w_lv..lay.b_lv], &d_lv, &mut d_a1);
            } else {
                {
                    let (gw, gb) = g[lay.w_mu..lay.b_mu + l].split_at_mut(l * h);
                    accumulate(gw, gb, &d_z, &f.a1);
                }
                affine_back(&p[lay.w_mu..lay.b_mu], &d_z, &mut d_a1);
            }
            let d_z1: Vec<f64> = d_a1.iter().zip(&f.a1).map(|(g, a)| g * (1.0 - a * a)).collect();
            let (gw, gb) = g[lay.w1..lay.b1 + h].split_at_mut(h * d);
            accumulate(gw, gb, &d_z1, x);
        }
        (loss * inv_n, g)
    }

    /// Per-row mean squared reconstruction error; the variational model
    /// decodes from the latent mean.
    pub fn reconstruction_error(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_inputs {
            return Err(Error::InvalidArgument(format!(
                "expected {} columns, got {}",
                self.n_inputs,
                x.n_cols()
            )));
        }
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(rows
            .par_iter()
            .map(|r| {
                let f = self.forward(r, None);
                f.out.iter().zip(r.iter()).map(|(o, v)| (o - v) * (o - v)).sum::<f64>() / r.len() as f64
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralParams {
    pub variational: bool,
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

fn gaussian_block(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian()).collect()
}

/// Mini-batch Adam training. After each epoch the full-batch loss (fixed
/// noise) is compared with the previous epoch's; on an increase the epoch is
/// undone and the learning rate halved, so recorded losses never increase.
pub fn neural_fit(x: &FeatureMatrix, params: &NeuralParams) -> Result<NeuralNetModel> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("autoencoder needs a non-empty matrix".into()));
    }
    if params.batch_size == 0 || params.hidden == 0 || params.latent == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::Config("invalid autoencoder parameters".into()));
    }
    let mut model = NeuralNetModel::new(d, params.hidden, params.latent, params.variational, params.seed);
    let l = params.latent;
    let data = x.values();
    let mut order_rng = SplitMix64::new(SplitMix64::derive_seed(params.seed, 1));
    let mut noise_rng = SplitMix64::new(SplitMix64::derive_seed(params.seed, 2));
    let eval_noise = if params.variational {
        gaussian_block(&mut SplitMix64::new(SplitMix64::derive_seed(params.seed, 3)), n * l)
    } else {
        Vec::new()
    };

    let mut lr = params.learning_rate;
    let mut m = vec![0.0; model.params.len()];
    let mut v = vec![0.0; model.params.len()];
    let mut step = 0i32;
    let mut prev = model.loss_with_noise(data, &eval_noise);
    if !prev.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            loss: prev,
            learning_rate: lr,
        });
    }
    let mut history = vec![prev];
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = Vec::with_capacity(params.batch_size * d);

    for epoch in 1..=params.epochs {
        let snapshot = (model.params.clone(), m.clone(), v.clone(), step);
        order_rng.shuffle(&mut order);
        for chunk in order.chunks(params.batch_size) {
            batch.clear();
            for &r in chunk {
                batch.extend_from_slice(&data[r * d..(r + 1) * d]);
            }
            let noise = if params.variational {
                gaussian_block(&mut noise_rng, chunk.len() * l)
            } else {
                Vec::new()
            };
            let (loss, grad) = model.gradient_with_noise(&batch, &noise);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss,
                    learning_rate: lr,
                });
            }
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..grad.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * grad[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                model.params[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        let loss = model.loss_with_noise(data, &eval_noise);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss,
                learning_rate: lr,
            });
        }
        if loss > prev {
            model.params = snapshot.0;
            m = snapshot.1;
            v = snapshot.2;
            step = snapshot.3;
            lr /= 2.0;
        } else {
            prev = loss;
        }
        history.push(prev);
    }
    model.training_loss = history;
    model.learning_rate = lr;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_identities() {
        assert_eq!(kl_divergence(&[0.0], &[0.0]), 0.0);
        assert!((kl_divergence(&[1.0], &[0.0]) - 0.5).abs() < 1e-12);
        assert!((kl_divergence(&[1.0, 1.0, 0.0], &[0.0; 3]) - 1.0).abs() < 1e-12);
    }

    fn check_gradient(variational: bool) {
        let mut rng = SplitMix64::new(11);
        let mut model = NeuralNetModel::new(6, 4, 2, variational, 5);
        // larger weights than the init range exercise the nonlinearity
        for p in &mut model.params {
            *p = rng.uniform(-0.8, 0.8);
        }
        let rows: Vec<f64> = (0..60).map(|_| rng.next_f64()).collect();
        let noise: Vec<f64> = (0..20).map(|_| rng.gaussian()).collect();
        let (_, grad) = model.gradient_with_noise(&rows, &noise);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..model.n_params() {
            let orig = model.params[k];
            model.params[k] = orig + h;
            let up = model.loss_with_noise(&rows, &noise);
            model.params[k] = orig - h;
            let down = model.loss_with_noise(&rows, &noise);
            model.params[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn autoencoder_gradient_matches_finite_differences() {
        check_gradient(false);
    }

    #[test]
    fn vae_gradient_matches_finite_differences() {
        check_gradient(true);
    }

    #[test]
    fn training_loss_never_increases() {
        let mut rng = SplitMix64::new(3);
        let v: Vec<f64> = (0..400 * 5).map(|_| rng.next_f64()).collect();
        let x = FeatureMatrix::new((0..5).map(|i| format!("f{i}")).collect(), 400, v).unwrap();
        for variational in [false, true] {
            let m = neural_fit(
                &x,
                &NeuralParams {
                    variational,
                    hidden: 16,
                    latent: 2,
                    epochs: 15,
                    batch_size: 32,
                    learning_rate: 0.01,
                    seed: 4,
                },
            )
            .unwrap();
            assert_eq!(m.training_loss.len(), 16);
            assert!(m.training_loss.windows(2).all(|w| w[1] <= w[0]));
            assert!(m.training_loss.last() < m.training_loss.first());
            assert!(m.params.iter().all(|p| p.is_finite()));
        }
    }
}
