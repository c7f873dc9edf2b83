//! Fully connected ReLU networks with a linear output layer.

use std::fmt::Debug;
use std::ops::AddAssign;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Element type of a network.
pub trait Real:
    Float + FromPrimitive + LinalgScalar + ScalarOperand + AddAssign + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<F> {
    /// `out x in`.
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Layer<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// `X Wᵀ + b` for a batch `X` with one sample per row.
    fn affine(&self, x: &ArrayView2<F>) -> Array2<F> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }
}

/// ReLU on every hidden layer, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Layer<F>>,
}

/// Gradients with the same layout as the network parameters.
pub type Gradients<F> = Vec<Layer<F>>;

fn relu<F: Real>(z: &mut Array2<F>) {
    z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

impl<F: Real> Mlp<F> {
    /// Network with all parameters zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("layer dimensions {dims:?}")));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Uniform fan-in initialization: `±sqrt(6/fan_in)` for hidden layers,
    /// `±sqrt(3/fan_in)` for the linear output. Biases start at zero.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == last { 3.0 } else { 6.0 };
            let bound = (gain / layer.inputs() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer
                .weights
                .mapv_inplace(|_| F::from_f64(dist.sample(rng)).expect("representable"));
        }
        Ok(net)
    }

    /// Sets first-layer biases so every hidden unit's ReLU hinge passes through
    /// a uniform random point of the input box `[lo, hi]`. Zero biases would put
    /// all hinges through the origin, a corner of the box.
    pub fn spread_hinges<R: Rng + ?Sized>(&mut self, lo: &[f64], hi: &[f64], rng: &mut R) -> Result<()> {
        let first = &mut self.layers[0];
        if lo.len() != first.inputs() || hi.len() != first.inputs() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidConfig(format!("input box {lo:?} to {hi:?}")));
        }
        for j in 0..first.outputs() {
            let mut b = 0.0;
            for (k, (&a, &z)) in lo.iter().zip(hi).enumerate() {
                let x0 = a + (z - a) * rng.random::<f64>();
                b -= first.weights[(j, k)].to_f64().expect("finite weight") * x0;
            }
            first.bias[j] = F::from_f64(b).expect("representable");
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs()];
        dims.extend(self.layers.iter().map(Layer::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// Forward pass over a batch with one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<F>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut a = self.layers[0].affine(&x);
        if last > 0 {
            relu(&mut a);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            a = layer.affine(&a.view());
            if i < last {
                relu(&mut a);
            }
        }
        a
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        self.forward_batch(view).into_raw_vec_and_offset().0
    }

    /// Batch-mean L1 loss `mean_b Σ_j |out_bj - t_bj|` and its parameter gradients.
    pub fn l1_loss_and_grad(&self, x: ArrayView2<F>, targets: ArrayView2<F>) -> (f64, Gradients<F>) {
        let batch = x.nrows();
        let last = self.layers.len() - 1;
        // activations[i] is the input of layer i
        let mut activations: Vec<Array2<F>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&a.view());
            if i < last {
                relu(&mut z);
            }
            activations.push(a);
            a = z;
        }

        let scale = F::one() / F::from_usize(batch).expect("batch size");
        let diff = &a - &targets;
        let loss = diff.iter().map(|d| d.abs().to_f64().unwrap_or(f64::NAN)).sum::<f64>() / batch as f64;
        let mut delta = diff.mapv(|d| {
            if d > F::zero() {
                scale
            } else if d < F::zero() {
                -scale
            } else {
                F::zero()
            }
        });

        let mut grads: Vec<Layer<F>> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                // hidden activations are post-ReLU, so a zero marks an inactive unit
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|b, &h| {
                        if h <= F::zero() {
                            *b = F::zero();
                        }
                    });
                delta = back;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        (loss, grads)
    }
}

/// Gradients below this are exactly zero in the L1 loss (balanced signs or
/// inactive units); their central differences only carry rounding noise.
const ZERO_GRADIENT: f64 = 1e-7;

/// Largest relative deviation between analytic L1-loss gradients and central
/// differences with step `h`, over every weight and bias with a nonzero gradient.
pub fn max_gradient_error(net: &Mlp<f64>, x: ArrayView2<f64>, targets: ArrayView2<f64>, h: f64) -> f64 {
    let (_, grads) = net.l1_loss_and_grad(x, targets);
    let mut probe = net.clone();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for (li, grad) in grads.iter().enumerate() {
        let slots = grad.weights.len() + grad.bias.len();
        for slot in 0..slots {
            let (g, param): (f64, &mut f64) = if slot < grad.weights.len() {
                let ij = (slot / grad.weights.ncols(), slot % grad.weights.ncols());
                (grad.weights[ij], &mut probe.layers[li].weights[ij])
            } else {
                let b = slot - grad.weights.len();
                (grad.bias[b], &mut probe.layers[li].bias[b])
            };
            let orig = *param;
            *param = orig + h;
            let up = probe.l1_loss_and_grad(x, targets).0;
            set_param(&mut probe, li, slot, orig - h);
            let down = probe.l1_loss_and_grad(x, targets).0;
            set_param(&mut probe, li, slot, orig);
            let fd = (up - down) / (2.0 * h);
            // both sides zero up to rounding of the loss: exact sign cancellation
            if g.abs().max(fd.abs()) < ZERO_GRADIENT {
                continue;
            }
            worst = worst.max(rel(g, fd));
        }
    }
    worst
}

fn set_param(net: &mut Mlp<f64>, layer: usize, slot: usize, value: f64) {
    let l = &mut net.layers[layer];
    if slot < l.weights.len() {
        let cols = l.weights.ncols();
        l.weights[(slot / cols, slot % cols)] = value;
    } else {
        l.bias[slot - l.weights.len()] = value;
    }
}
