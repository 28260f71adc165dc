use super::init::glorot_init;
use super::layers::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, conv2d_backward_input,
    conv2d_backward_params, conv2d_forward, dense_forward, dense_softmax_xent, maxpool_backward,
    maxpool_forward, pool_out_len, relu_backward, relu_forward, softmax_rows, BnCache,
    BN_MOMENTUM, KERNEL,
};
use super::tensor::{Param, Real, Tensor4};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Kernel counts of the five convolutional blocks.
pub const DEFAULT_KERNELS: [usize; 5] = [8, 8, 16, 32, 32];
pub const DEFAULT_INPUT_HEIGHT: usize = 500;
pub const DEFAULT_INPUT_WIDTH: usize = 400;

/// Largest batch pushed through the network at once during inference.
const PREDICT_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// conv 3x3 -> batch norm -> ReLU -> max pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
}

/// Deliberate backward-pass defects, used as negative controls for the
/// gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// Negate the conv weight gradient of this block.
    FlipConvWeightGrad { block: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerModel<T> {
    input_height: usize,
    input_width: usize,
    n_speakers: usize,
    pub blocks: Vec<ConvBlock<T>>,
    pub dense_weight: Param<T>,
    pub dense_bias: Param<T>,
    mode: Mode,
}

/// Output of one training-mode forward/backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// Softmax outputs, `batch x n_speakers`.
    pub probs: Vec<f64>,
    /// One entry per trainable parameter, in [`SpeakerModel::params`] order.
    pub grads: Vec<Param<T>>,
    /// Per-block batch mean and (biased) variance.
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub speaker: usize,
    pub probabilities: Vec<f64>,
}

struct BlockCache<T> {
    input: Tensor4<T>,
    bn: BnCache<T>,
    bn_out: Tensor4<T>,
    act_dims: [usize; 4],
    argmax: Vec<u32>,
}

/// Spatial size after every block, or `None` if some block's pool would
/// see fewer than 3 rows or columns.
pub fn feature_spatial_dims(height: usize, width: usize, n_blocks: usize) -> Option<(usize, usize)> {
    (0..n_blocks).try_fold((height, width), |(h, w), _| {
        Some((pool_out_len(h)?, pool_out_len(w)?))
    })
}

impl<T: Real> SpeakerModel<T> {
    /// Glorot-initialized weights, zero biases, unit gamma, zero beta,
    /// running statistics (0, 1). Starts in train mode.
    pub fn new(
        input_height: usize,
        input_width: usize,
        kernels: &[usize],
        n_speakers: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_speakers < 2 {
            return Err(Error::InvalidParam(format!(
                "need at least 2 speakers, got {n_speakers}"
            )));
        }
        if kernels.is_empty() || kernels.contains(&0) {
            return Err(Error::InvalidParam(format!("bad kernel list {kernels:?}")));
        }
        let (fh, fw) = feature_spatial_dims(input_height, input_width, kernels.len()).ok_or_else(|| {
            Error::InvalidParam(format!(
                "{input_height}x{input_width} input is too small for {} pooling stages",
                kernels.len()
            ))
        })?;
        let mut rng = seed::rng(seed::derive(seed, &["init"]));
        let mut blocks = Vec::with_capacity(kernels.len());
        let mut in_ch = 1;
        for &out in kernels {
            let k2 = KERNEL * KERNEL;
            blocks.push(ConvBlock {
                weight: glorot_init(in_ch * k2, out * k2, &[out, in_ch, KERNEL, KERNEL], &mut rng)?,
                bias: Param::zeros(&[out]),
                gamma: Param::filled(&[out], T::one()),
                beta: Param::zeros(&[out]),
                running_mean: Param::zeros(&[out]),
                running_var: Param::filled(&[out], T::one()),
            });
            in_ch = out;
        }
        let n_features = in_ch * fh * fw;
        Ok(Self {
            input_height,
            input_width,
            n_speakers,
            blocks,
            dense_weight: glorot_init(n_features, n_speakers, &[n_speakers, n_features], &mut rng)?,
            dense_bias: Param::zeros(&[n_speakers]),
            mode: Mode::Train,
        })
    }

    /// The five-block architecture on a 500x400 input.
    pub fn full_size(n_speakers: usize, seed: u64) -> Result<Self> {
        Self::new(DEFAULT_INPUT_HEIGHT, DEFAULT_INPUT_WIDTH, &DEFAULT_KERNELS, n_speakers, seed)
    }

    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(
        input_height: usize,
        input_width: usize,
        n_speakers: usize,
        blocks: Vec<ConvBlock<T>>,
        dense_weight: Param<T>,
        dense_bias: Param<T>,
    ) -> Result<Self> {
        let kernels: Vec<usize> = blocks.iter().map(|b| b.bias.len()).collect();
        let template = Self::new(input_height, input_width, &kernels, n_speakers, 0)?;
        let bad = |what: &str| Error::Shape(format!("{what} does not match the architecture"));
        for (i, (b, t)) in blocks.iter().zip(&template.blocks).enumerate() {
            let pairs = [
                (&b.weight, &t.weight),
                (&b.bias, &t.bias),
                (&b.gamma, &t.gamma),
                (&b.beta, &t.beta),
                (&b.running_mean, &t.running_mean),
                (&b.running_var, &t.running_var),
            ];
            if pairs.iter().any(|(x, y)| !x.same_shape(y) || x.len() != y.len()) {
                return Err(bad(&format!("block {i}")));
            }
        }
        if !dense_weight.same_shape(&template.dense_weight) || dense_weight.len() != template.dense_weight.len() {
            return Err(bad("dense weight"));
        }
        if !dense_bias.same_shape(&template.dense_bias) || dense_bias.len() != n_speakers {
            return Err(bad("dense bias"));
        }
        Ok(Self {
            blocks,
            dense_weight,
            dense_bias,
            mode: Mode::Infer,
            ..template
        })
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.input_height, self.input_width)
    }

    pub fn n_speakers(&self) -> usize {
        self.n_speakers
    }

    pub fn kernels(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.bias.len()).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// `[channels, height, width]` of the activations fed to the dense layer.
    pub fn feature_dims(&self) -> [usize; 3] {
        let (h, w) = feature_spatial_dims(self.input_height, self.input_width, self.blocks.len())
            .expect("validated at construction");
        [self.blocks.last().map_or(1, |b| b.bias.len()), h, w]
    }

    /// Trainable parameters: per block weight, bias, gamma, beta; then the
    /// dense weight and bias.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.weight, &b.bias, &b.gamma, &b.beta]);
        }
        out.extend([&self.dense_weight, &self.dense_bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.extend([&mut b.weight, &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        out.extend([&mut self.dense_weight, &mut self.dense_bias]);
        out
    }

    /// Human-readable names matching [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for p in ["weight", "bias", "gamma", "beta"] {
                out.push(format!("conv{}.{p}", i + 1));
            }
        }
        out.extend(["dense.weight".to_string(), "dense.bias".to_string()]);
        out
    }

    /// Which parameters receive L2 decay: conv and dense weights and biases,
    /// not the batch-norm affine terms.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for _ in &self.blocks {
            out.extend([true, true, false, false]);
        }
        out.extend([true, true]);
        out
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.dims;
        if c != 1 || h != self.input_height || w != self.input_width {
            return Err(Error::Shape(format!(
                "input {:?}, model expects [_, 1, {}, {}]",
                x.dims, self.input_height, self.input_width
            )));
        }
        Ok(())
    }

    fn forward_train(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<BlockCache<T>>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let conv = conv2d_forward(&h, &block.weight, &block.bias)?;
            let (bn_out, bn) = batchnorm_forward_train(&conv, &block.gamma, &block.beta)?;
            drop(conv);
            let act = relu_forward(&bn_out);
            let (pooled, argmax) = maxpool_forward(&act)?;
            caches.push(BlockCache {
                input: std::mem::replace(&mut h, pooled),
                bn,
                bn_out,
                act_dims: act.dims,
                argmax,
            });
        }
        Ok((h, caches))
    }

    /// Pre-dense activations using running batch-norm statistics.
    pub fn features(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            let conv = conv2d_forward(&h, &block.weight, &block.bias)?;
            let bn = batchnorm_forward_infer(
                &conv,
                &block.gamma,
                &block.beta,
                &block.running_mean,
                &block.running_var,
            )?;
            h = maxpool_forward(&relu_forward(&bn))?.0;
        }
        debug_assert!(h.all_finite());
        Ok(h)
    }

    /// Inference-mode logits, `batch x n_speakers`.
    pub fn logits(&self, x: &Tensor4<T>) -> Result<Vec<T>> {
        let f = self.features(x)?;
        dense_forward(&f.data, f.batch(), &self.dense_weight, &self.dense_bias)
    }

    /// Training-mode forward and backward pass (batch statistics). Does not
    /// touch the model; running statistics are returned for the caller.
    pub fn loss_and_grads(
        &self,
        x: &Tensor4<T>,
        labels: &[usize],
        fault: Option<BackwardFault>,
    ) -> Result<Gradients<T>> {
        let (feat, caches) = self.forward_train(x)?;
        debug_assert!(feat.all_finite());
        let out = dense_softmax_xent(
            &feat.data,
            feat.batch(),
            &self.dense_weight,
            &self.dense_bias,
            labels,
        )?;
        let mut g = Tensor4 {
            dims: feat.dims,
            data: out.grad_features,
        };
        let nb = self.blocks.len();
        let mut block_grads: Vec<[Param<T>; 4]> = Vec::with_capacity(nb);
        let mut batch_stats = Vec::with_capacity(nb);
        for (i, (block, cache)) in self.blocks.iter().zip(caches).enumerate().rev() {
            let g_act = maxpool_backward(&g, &cache.argmax, cache.act_dims);
            let g_bn = relu_backward(&g_act, &cache.bn_out);
            let bn = batchnorm_backward(&g_bn, &cache.bn, &block.gamma)?;
            let (mut gw, gb) = conv2d_backward_params(&bn.grad_x, &cache.input, &block.weight)?;
            if i > 0 {
                g = conv2d_backward_input(&bn.grad_x, &block.weight, cache.input.dims)?;
            }
            if fault == Some(BackwardFault::FlipConvWeightGrad { block: i }) {
                gw.data.iter_mut().for_each(|v| *v = -*v);
            }
            block_grads.push([gw, gb, bn.grad_gamma, bn.grad_beta]);
            batch_stats.push((cache.bn.mean, cache.bn.var));
        }
        block_grads.reverse();
        batch_stats.reverse();
        let mut grads: Vec<Param<T>> = block_grads.into_iter().flatten().collect();
        grads.push(out.grad_w);
        grads.push(out.grad_b);
        Ok(Gradients {
            loss: out.loss,
            probs: out.probs,
            grads,
            batch_stats,
        })
    }

    /// Exponential moving average of the batch statistics.
    pub fn update_running_stats(&mut self, batch_stats: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        if batch_stats.len() != self.blocks.len() {
            return Err(Error::Shape("batch statistics per block".into()));
        }
        for (block, (mean, var)) in self.blocks.iter_mut().zip(batch_stats) {
            if mean.len() != block.running_mean.len() || var.len() != block.running_var.len() {
                return Err(Error::Shape("batch statistics per channel".into()));
            }
            for (r, &m) in block.running_mean.data.iter_mut().zip(mean) {
                *r = T::from_f64(BN_MOMENTUM * r.to_f64() + (1.0 - BN_MOMENTUM) * m);
            }
            for (r, &v) in block.running_var.data.iter_mut().zip(var) {
                *r = T::from_f64(BN_MOMENTUM * r.to_f64() + (1.0 - BN_MOMENTUM) * v);
            }
        }
        Ok(())
    }

    /// Training-mode loss together with a signature of which side of every
    /// ReLU and pool decision each activation falls on. Two inputs with equal
    /// signatures lie in the same linear region of the network.
    pub(crate) fn loss_with_signature(&self, x: &Tensor4<T>, labels: &[usize]) -> Result<(f64, Vec<u32>)> {
        let (feat, caches) = self.forward_train(x)?;
        let out = dense_softmax_xent(
            &feat.data,
            feat.batch(),
            &self.dense_weight,
            &self.dense_bias,
            labels,
        )?;
        let mut sig = Vec::new();
        for c in caches {
            sig.extend(c.bn_out.data.iter().map(|&v| u32::from(v > T::zero())));
            sig.extend(c.argmax);
        }
        Ok((out.loss, sig))
    }

    pub fn predict(&self, image: &Matrix) -> Result<Prediction> {
        Ok(self.predict_batch(&[image])?.remove(0))
    }

    pub fn predict_batch(&self, images: &[&Matrix]) -> Result<Vec<Prediction>> {
        if self.mode != Mode::Infer {
            return Err(Error::InvalidParam("model is in train mode; switch to infer before predicting".into()));
        }
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(PREDICT_CHUNK) {
            let x = images_to_tensor(chunk)?;
            let logits = self.logits(&x)?;
            let probs = softmax_rows(&logits, self.n_speakers);
            for row in probs.chunks(self.n_speakers) {
                out.push(Prediction {
                    speaker: argmax(row),
                    probabilities: row.to_vec(),
                });
            }
        }
        Ok(out)
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Stacks equally sized images into a `[n, 1, rows, cols]` tensor.
pub fn images_to_tensor<T: Real>(images: &[&Matrix]) -> Result<Tensor4<T>> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let (r, c) = (first.rows(), first.cols());
    let mut data = Vec::with_capacity(images.len() * r * c);
    for m in images {
        if m.rows() != r || m.cols() != c {
            return Err(Error::Shape(format!(
                "image {}x{} in a batch of {r}x{c}",
                m.rows(),
                m.cols()
            )));
        }
        data.extend(m.as_slice().iter().map(|&v| T::from_f64(v)));
    }
    Tensor4::from_vec([images.len(), 1, r, c], data)
}
