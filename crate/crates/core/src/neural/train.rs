//! Mini-batch Adam on the L1 loss with a step learning-rate schedule.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SimRng;
use crate::error::{Error, Result};

use super::mlp::{Gradients, Layer, Mlp, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_samples: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_drop: f64,
    /// Epochs between learning-rate drops.
    pub lr_period: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Share of samples held out for monitoring. Never affects the schedule.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_samples: 200_000,
            batch: 1000,
            epochs: 100,
            lr0: 1e-3,
            lr_drop: 0.5,
            lr_period: 10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            holdout_fraction: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Reduced recipe for M = N = 8 models that trains in minutes on a CPU.
    /// The smaller batch keeps the number of Adam steps near the full recipe's.
    pub fn desk() -> Self {
        Self {
            num_samples: 50_000,
            batch: 100,
            epochs: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.num_samples > 0
            && self.batch > 0
            && self.epochs > 0
            && self.lr_period > 0
            && self.lr0 > 0.0
            && self.lr_drop > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && (0.0..1.0).contains(&self.holdout_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("training configuration {self:?}")))
        }
    }

    /// Learning rate of 0-indexed `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_drop.powi((epoch / self.lr_period) as i32)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Loss on the held-out samples after each epoch, when any were held out.
    pub holdout_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub steps: usize,
}

struct Moments<F> {
    m: Gradients<F>,
    v: Gradients<F>,
}

/// Adam optimizer state.
pub struct Adam<F> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    moments: Moments<F>,
}

fn zeros_like<F: Real>(net: &Mlp<F>) -> Gradients<F> {
    net.layers
        .iter()
        .map(|l| Layer::zeros(l.inputs(), l.outputs()))
        .collect()
}

impl<F: Real> Adam<F> {
    pub fn new(net: &Mlp<F>, tc: &TrainConfig) -> Self {
        Self {
            beta1: tc.beta1,
            beta2: tc.beta2,
            eps: tc.adam_eps,
            step: 0,
            moments: Moments {
                m: zeros_like(net),
                v: zeros_like(net),
            },
        }
    }

    pub fn update(&mut self, net: &mut Mlp<F>, grads: &Gradients<F>, lr: f64) {
        self.step += 1;
        let c = |x: f64| F::from_f64(x).expect("representable");
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let (one_b1, one_b2) = (c(1.0 - self.beta1), c(1.0 - self.beta2));
        let step_size = c(lr / (1.0 - self.beta1.powi(self.step)));
        let bias2 = c(1.0 / (1.0 - self.beta2.powi(self.step)));
        let eps = c(self.eps);
        let apply = |p: &mut F, g: &F, m: &mut F, v: &mut F| {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            *p = *p - step_size * *m / ((*v * bias2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.moments.m)
            .zip(&mut self.moments.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(apply);
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(apply);
        }
    }
}

/// Samples per gradient shard. Fixed so results do not depend on the thread count.
const SHARD: usize = 250;

/// Batch loss and gradients, with the batch split into shards evaluated in parallel
/// and summed in shard order.
fn batch_gradients<F: Real>(net: &Mlp<F>, x: ArrayView2<F>, t: ArrayView2<F>) -> (f64, Gradients<F>) {
    let rows = x.nrows();
    let bounds: Vec<(usize, usize)> = (0..rows)
        .step_by(SHARD)
        .map(|a| (a, (a + SHARD).min(rows)))
        .collect();
    let parts: Vec<(f64, Gradients<F>)> = bounds
        .par_iter()
        .map(|&(a, b)| {
            let (loss, grads) = net.l1_loss_and_grad(x.slice(s![a..b, ..]), t.slice(s![a..b, ..]));
            // shard losses and gradients are means; reweight to the full batch
            let w = (b - a) as f64 / rows as f64;
            let wf = F::from_f64(w).expect("representable");
            let grads = grads
                .into_iter()
                .map(|l| Layer {
                    weights: l.weights * wf,
                    bias: l.bias * wf,
                })
                .collect::<Vec<_>>();
            (loss * w, grads)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (acc, part) in total.iter_mut().zip(g) {
            acc.weights += &part.weights;
            acc.bias += &part.bias;
        }
    }
    (loss, total)
}

/// Batch-mean L1 loss without gradients.
pub fn l1_loss<F: Real>(net: &Mlp<F>, x: ArrayView2<F>, t: ArrayView2<F>) -> f64 {
    let mut total = 0.0;
    for a in (0..x.nrows()).step_by(4096) {
        let b = (a + 4096).min(x.nrows());
        let out = net.forward_batch(x.slice(s![a..b, ..]));
        total += (&out - &t.slice(s![a..b, ..]))
            .iter()
            .map(|d| d.abs().to_f64().unwrap_or(f64::NAN))
            .sum::<f64>();
    }
    total / x.nrows() as f64
}

fn gather<F: Real>(src: &ArrayView2<F>, rows: &[usize]) -> Array2<F> {
    src.select(Axis(0), rows)
}

/// Trains `net` in place on `inputs -> targets` (one sample per row).
///
/// The first `holdout_fraction` share of a seeded permutation is held out and
/// only reported. Aborts with [`Error::Diverged`] on a non-finite batch loss.
pub fn train<F: Real>(
    net: &mut Mlp<F>,
    inputs: ArrayView2<F>,
    targets: ArrayView2<F>,
    tc: &TrainConfig,
) -> Result<TrainReport> {
    tc.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if targets.nrows() != n || inputs.ncols() != net.input_dim() || targets.ncols() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} x {} inputs, {n} x {} targets", net.input_dim(), net.output_dim()),
            found: format!(
                "{} x {} inputs, {} x {} targets",
                inputs.nrows(),
                inputs.ncols(),
                targets.nrows(),
                targets.ncols()
            ),
        });
    }

    let mut rng = SimRng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = ((n as f64) * tc.holdout_fraction).floor() as usize;
    let n_hold = if n - n_hold == 0 { 0 } else { n_hold };
    let (hold, mut train_idx) = (order[..n_hold].to_vec(), order[n_hold..].to_vec());
    let hold_x = gather(&inputs, &hold);
    let hold_t = gather(&targets, &hold);

    let mut adam = Adam::new(net, tc);
    let mut report = TrainReport::default();
    for epoch in 0..tc.epochs {
        let lr = tc.learning_rate(epoch);
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, rows) in train_idx.chunks(tc.batch).enumerate() {
            let x = gather(&inputs, rows);
            let t = gather(&targets, rows);
            let (loss, grads) = batch_gradients(net, x.view(), t.view());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.update(net, &grads, lr);
            loss_sum += loss * rows.len() as f64;
            report.steps += 1;
        }
        let epoch_loss = loss_sum / train_idx.len() as f64;
        report.epoch_loss.push(epoch_loss);
        report.learning_rate.push(lr);
        if n_hold > 0 {
            report.holdout_loss.push(l1_loss(net, hold_x.view(), hold_t.view()));
        }
        log::info!(
            "epoch {epoch}: lr {lr:.3e}, train L1 {epoch_loss:.5}{}",
            report
                .holdout_loss
                .last()
                .map(|h| format!(", holdout L1 {h:.5}"))
                .unwrap_or_default()
        );
    }
    if !net.all_finite() {
        return Err(Error::Diverged {
            epoch: tc.epochs,
            batch: 0,
            loss: f64::NAN,
        });
    }
    Ok(report)
}
