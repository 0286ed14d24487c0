use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{
    bn_backward, bn_forward_infer, bn_forward_train, conv_backward, conv_forward, cross_entropy, maxpool_backward,
    maxpool_forward, relu, softmax, BnBatch,
};
use super::{CnnConfig, CnnError, CnnFloat, N_OUTPUTS};

/// One conv -> ReLU -> batch-norm -> max-pool block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    /// `(filters, in_channels * 9)`, row layout `(channel, ky, kx)`.
    pub conv_w: Array2<T>,
    pub conv_b: Array1<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel<T> {
    pub config: CnnConfig,
    pub blocks: Vec<Block<T>>,
    /// `(2, flatten_dim)`; row 0 is NonPathological, row 1 Pathological.
    pub head_w: Array2<T>,
    pub head_b: Array1<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Parameter gradients, laid out like the trainable tensors of [`CnnModel`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub blocks: Vec<BlockGrad<T>>,
    pub head_w: Array2<T>,
    pub head_b: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct BlockGrad<T> {
    pub conv_w: Array2<T>,
    pub conv_b: Array1<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

struct BlockCache<T> {
    input: Array4<T>,
    conv_out: Array4<T>,
    bn: BnBatch<T>,
    pool_arg: Vec<u8>,
}

/// Everything a train-mode forward pass needs to keep for the backward pass.
pub struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    flat: Array2<T>,
    pub logits: Array2<T>,
}

impl<T> ForwardCache<T> {
    /// Per-block batch mean and biased variance, for running-statistics updates.
    pub fn batch_stats(&self) -> Vec<(&[f64], &[f64])> {
        self.blocks.iter().map(|b| (b.bn.mean.as_slice(), b.bn.var.as_slice())).collect()
    }

    /// Per-block normalized activations before scale and shift.
    pub fn normalized(&self) -> Vec<&Array4<T>> {
        self.blocks.iter().map(|b| &b.bn.xhat).collect()
    }
}

fn he_uniform<T: CnnFloat>(rng: &mut ChaCha8Rng, shape: (usize, usize), fan_in: usize) -> Array2<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn(shape, |_| T::from_f64(rng.random_range(-bound..bound)).unwrap())
}

impl<T: CnnFloat> CnnModel<T> {
    /// He-uniform weights, zero biases, unit batch-norm scale, unit running variance.
    pub fn new(config: &CnnConfig) -> Result<Self, CnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::new();
        let mut in_ch = 1;
        for &f in &config.filters {
            blocks.push(Block {
                conv_w: he_uniform(&mut rng, (f, in_ch * 9), in_ch * 9),
                conv_b: Array1::zeros(f),
                gamma: Array1::ones(f),
                beta: Array1::zeros(f),
                running_mean: Array1::zeros(f),
                running_var: Array1::ones(f),
            });
            in_ch = f;
        }
        let d = config.flatten_dim();
        Ok(CnnModel {
            config: config.clone(),
            blocks,
            head_w: he_uniform(&mut rng, (N_OUTPUTS, d), d),
            head_b: Array1::zeros(N_OUTPUTS),
        })
    }

    fn check_input(&self, x: &Array4<T>) -> Result<(), CnnError> {
        let (h, w) = self.config.input_shape;
        let (n, c, xh, xw) = x.dim();
        if n == 0 || c != 1 || xh != h || xw != w {
            return Err(CnnError::ShapeMismatch {
                expected: vec![n.max(1), 1, h, w],
                found: vec![n, c, xh, xw],
            });
        }
        Ok(())
    }

    /// Logits of a batch `(B, 1, H, W)`.
    pub fn logits(&self, x: &Array4<T>, mode: Mode) -> Result<Array2<T>, CnnError> {
        match mode {
            Mode::Train => Ok(self.forward_train(x)?.logits),
            Mode::Infer => {
                self.check_input(x)?;
                let mut a = x.clone();
                for b in &self.blocks {
                    let z = relu(&conv_forward(&a, &b.conv_w, &b.conv_b));
                    let y = bn_forward_infer(&z, &b.gamma, &b.beta, &b.running_mean, &b.running_var);
                    a = maxpool_forward(&y).0;
                }
                Ok(self.head(&a))
            }
        }
    }

    /// Softmax probabilities `(B, 2)` in the order (NonPathological, Pathological).
    pub fn forward(&self, x: &Array4<T>, mode: Mode) -> Result<Array2<T>, CnnError> {
        Ok(softmax(&self.logits(x, mode)?))
    }

    fn head(&self, a: &Array4<T>) -> Array2<T> {
        let n = a.dim().0;
        let flat = ArrayView2::from_shape((n, self.config.flatten_dim()), a.as_slice().unwrap()).unwrap();
        let mut logits = Array2::zeros((n, N_OUTPUTS));
        for mut row in logits.outer_iter_mut() {
            row.assign(&self.head_b);
        }
        general_mat_mul(T::one(), &flat, &self.head_w.t(), T::one(), &mut logits);
        logits
    }

    /// Train-mode forward pass that keeps the activations for [`Self::backward`].
    /// Running statistics are not touched.
    pub fn forward_train(&self, x: &Array4<T>) -> Result<ForwardCache<T>, CnnError> {
        self.check_input(x)?;
        let mut a = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let conv_out = conv_forward(&a, &b.conv_w, &b.conv_b);
            let (y, bn) = bn_forward_train(&relu(&conv_out), &b.gamma, &b.beta);
            let (pooled, pool_arg) = maxpool_forward(&y);
            caches.push(BlockCache {
                input: std::mem::replace(&mut a, pooled),
                conv_out,
                bn,
                pool_arg,
            });
        }
        let logits = self.head(&a);
        let n = a.dim().0;
        let flat = a.into_shape_with_order((n, self.config.flatten_dim())).unwrap();
        Ok(ForwardCache { blocks: caches, flat, logits })
    }

    /// Mean cross-entropy gradients for the batch that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Gradients<T> {
        let n = labels.len();
        let mut dlogits = softmax(&cache.logits);
        let inv_n = T::from_f64(1.0 / n as f64).unwrap();
        for (mut row, &y) in dlogits.outer_iter_mut().zip(labels) {
            row[y] = row[y] - T::one();
            row.mapv_inplace(|v| v * inv_n);
        }
        let mut head_w = Array2::zeros(self.head_w.dim());
        general_mat_mul(T::one(), &dlogits.t(), &cache.flat, T::zero(), &mut head_w);
        let head_b = dlogits.sum_axis(ndarray::Axis(0));
        let dflat = dlogits.dot(&self.head_w);

        let last = cache.blocks.last().unwrap();
        let (_, c, h, w) = last.conv_out.dim();
        let mut grad = dflat.into_shape_with_order((n, c, h / 2, w / 2)).unwrap();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, (b, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let (_, _, h, w) = bc.conv_out.dim();
            let dy = maxpool_backward(&grad, &bc.pool_arg, h, w);
            let (mut dz, gamma, beta) = bn_backward(&dy, &bc.bn, &b.gamma);
            ndarray::Zip::from(&mut dz).and(&bc.conv_out).for_each(|d, &z| {
                if z <= T::zero() {
                    *d = T::zero();
                }
            });
            let (dx, conv_w, conv_b) = conv_backward(&bc.input, &b.conv_w, &dz, i > 0);
            blocks.push(BlockGrad { conv_w, conv_b, gamma, beta });
            if let Some(dx) = dx {
                grad = dx;
            }
        }
        blocks.reverse();
        Gradients { blocks, head_w, head_b }
    }

    /// Batch loss in the given mode.
    pub fn loss(&self, x: &Array4<T>, labels: &[usize], mode: Mode) -> Result<f64, CnnError> {
        Ok(cross_entropy(&self.logits(x, mode)?, labels))
    }

    /// Exponential moving average of batch statistics into the running ones;
    /// the variance enters unbiased.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>, batch: usize) {
        let m = self.config.bn_momentum;
        for (b, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            let (_, _, bh, bw) = bc.conv_out.dim();
            let count = (batch * bh * bw) as f64;
            let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for ci in 0..b.gamma.len() {
                let rm = b.running_mean[ci].to_f64().unwrap();
                let rv = b.running_var[ci].to_f64().unwrap();
                b.running_mean[ci] = T::from_f64((1.0 - m) * rm + m * bc.bn.mean[ci]).unwrap();
                b.running_var[ci] = T::from_f64((1.0 - m) * rv + m * bc.bn.var[ci] * correction).unwrap();
            }
        }
    }

    /// Trainable tensors as mutable flat slices, in a fixed order matching
    /// [`Gradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(b.conv_w.as_slice_mut().unwrap());
            out.push(b.conv_b.as_slice_mut().unwrap());
            out.push(b.gamma.as_slice_mut().unwrap());
            out.push(b.beta.as_slice_mut().unwrap());
        }
        out.push(self.head_w.as_slice_mut().unwrap());
        out.push(self.head_b.as_slice_mut().unwrap());
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// All learned tensors (including running statistics) as
    /// `(name, shape, values)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv_w"), b.conv_w.shape().to_vec(), b.conv_w.as_slice().unwrap()));
            out.push((format!("block{i}.conv_b"), vec![b.conv_b.len()], b.conv_b.as_slice().unwrap()));
            out.push((format!("block{i}.gamma"), vec![b.gamma.len()], b.gamma.as_slice().unwrap()));
            out.push((format!("block{i}.beta"), vec![b.beta.len()], b.beta.as_slice().unwrap()));
            out.push((format!("block{i}.running_mean"), vec![b.running_mean.len()], b.running_mean.as_slice().unwrap()));
            out.push((format!("block{i}.running_var"), vec![b.running_var.len()], b.running_var.as_slice().unwrap()));
        }
        out.push(("head.w".into(), self.head_w.shape().to_vec(), self.head_w.as_slice().unwrap()));
        out.push(("head.b".into(), vec![self.head_b.len()], self.head_b.as_slice().unwrap()));
        out
    }

    /// Rebuilds a model from tensors in the order produced by [`Self::tensors`].
    pub fn from_tensors(config: &CnnConfig, tensors: Vec<(String, Vec<usize>, Vec<T>)>) -> Result<Self, CnnError> {
        let mut model = CnnModel::<T>::new(config)?;
        let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != tensors.len() {
            return Err(CnnError::Corrupt(format!("expected {} tensors, found {}", expected.len(), tensors.len())));
        }
        let mut values = Vec::with_capacity(tensors.len());
        for ((name, shape), (found_name, found_shape, data)) in expected.iter().zip(tensors) {
            if *name != found_name || *shape != found_shape || data.len() != shape.iter().product::<usize>() {
                return Err(CnnError::Corrupt(format!("tensor {found_name} does not match {name} {shape:?}")));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(CnnError::Corrupt(format!("tensor {name} has non-finite values")));
            }
            values.push(data);
        }
        let mut it = values.into_iter();
        let mut fill = |dst: &mut [T]| dst.copy_from_slice(&it.next().unwrap());
        for b in &mut model.blocks {
            fill(b.conv_w.as_slice_mut().unwrap());
            fill(b.conv_b.as_slice_mut().unwrap());
            fill(b.gamma.as_slice_mut().unwrap());
            fill(b.beta.as_slice_mut().unwrap());
            fill(b.running_mean.as_slice_mut().unwrap());
            fill(b.running_var.as_slice_mut().unwrap());
        }
        fill(model.head_w.as_slice_mut().unwrap());
        fill(model.head_b.as_slice_mut().unwrap());
        if model.blocks.iter().any(|b| b.running_var.iter().any(|v| *v < T::zero())) {
            return Err(CnnError::Corrupt("negative running variance".into()));
        }
        Ok(model)
    }

    /// Same model in another float width.
    pub fn cast<U: CnnFloat>(&self) -> CnnModel<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        CnnModel {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    conv_w: c2(&b.conv_w),
                    conv_b: c1(&b.conv_b),
                    gamma: c1(&b.gamma),
                    beta: c1(&b.beta),
                    running_mean: c1(&b.running_mean),
                    running_var: c1(&b.running_var),
                })
                .collect(),
            head_w: c2(&self.head_w),
            head_b: c1(&self.head_b),
        }
    }
}

impl<T: CnnFloat> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(b.conv_w.as_slice().unwrap());
            out.push(b.conv_b.as_slice().unwrap());
            out.push(b.gamma.as_slice().unwrap());
            out.push(b.beta.as_slice().unwrap());
        }
        out.push(self.head_w.as_slice().unwrap());
        out.push(self.head_b.as_slice().unwrap());
        out
    }
}
