use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    batch_norm_backward, channel_moments, col2im, im2col, leaky_relu_backward, leaky_relu_inplace,
    masked_softmax, normalize, scale_shift,
};
use super::{NnError, Scalar, Tensor};
use crate::board::{Board, CELLS, PLANES, SIDE};

/// Kernel size of the input and residual convolutions.
pub const BODY_KERNEL: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub input_planes: usize,
    pub board_side: usize,
    pub filters: usize,
    pub residual_blocks: usize,
    pub value_hidden: usize,
    pub policy_out: usize,
    pub leaky_slope: f64,
    pub bn_epsilon: f64,
    /// Weight kept by the running statistics on each update.
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::desk()
    }
}

impl NetworkConfig {
    pub fn with_size(filters: usize, residual_blocks: usize) -> Self {
        NetworkConfig {
            input_planes: PLANES,
            board_side: SIDE,
            filters,
            residual_blocks,
            value_hidden: 20,
            policy_out: CELLS,
            leaky_slope: 0.01,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }

    /// 32 filters, 3 residual blocks.
    pub fn desk() -> Self {
        Self::with_size(32, 3)
    }

    /// 75 filters, 5 residual blocks.
    pub fn full() -> Self {
        Self::with_size(75, 5)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.input_planes != PLANES {
            return bad(format!("input_planes must be {PLANES}"));
        }
        if self.board_side != SIDE {
            return bad(format!("board_side must be {SIDE}"));
        }
        if self.policy_out != self.board_side * self.board_side {
            return bad("policy_out must equal board_side squared".into());
        }
        if self.filters == 0 || self.residual_blocks == 0 || self.value_hidden == 0 {
            return bad("filters, residual_blocks and value_hidden must be at least 1".into());
        }
        if !self.leaky_slope.is_finite()
            || !(self.bn_epsilon > 0.0)
            || !(0.0..1.0).contains(&self.bn_momentum)
        {
            return bad(
                "leaky_slope must be finite, bn_epsilon positive, bn_momentum in [0, 1)".into(),
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBnParams<T> {
    /// `[k, k, in, out]`.
    pub weight: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams<T> {
    /// `[in, out]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Trainable parameters. The same shape also carries gradients and
/// optimizer velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub input: ConvBnParams<T>,
    pub blocks: Vec<[ConvBnParams<T>; 2]>,
    pub value_conv: ConvBnParams<T>,
    pub value_fc1: DenseParams<T>,
    pub value_fc2: DenseParams<T>,
    pub policy_conv: ConvBnParams<T>,
    pub policy_fc: DenseParams<T>,
}

/// Running batch-norm statistics of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

fn he_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| T::of(rng.random_range(-limit..limit)))
            .collect(),
    )
    .unwrap()
}

impl<T: Scalar> ConvBnParams<T> {
    fn init<R: Rng>(k: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        ConvBnParams {
            weight: he_uniform(&[k, k, cin, cout], k * k * cin, rng),
            gamma: Tensor::filled(&[cout], T::one()),
            beta: Tensor::zeros(&[cout]),
        }
    }

    fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    fn cin(&self) -> usize {
        self.weight.shape()[2]
    }

    fn cout(&self) -> usize {
        self.weight.shape()[3]
    }
}

impl<T: Scalar> DenseParams<T> {
    fn init<R: Rng>(fan_in: usize, out: usize, rng: &mut R) -> Self {
        DenseParams {
            weight: he_uniform(&[fan_in, out], fan_in, rng),
            bias: Tensor::zeros(&[out]),
        }
    }
}

impl<T: Scalar> BnStats<T> {
    fn fresh(ch: usize) -> Self {
        BnStats {
            mean: Tensor::zeros(&[ch]),
            var: Tensor::filled(&[ch], T::one()),
        }
    }
}

/// Layer name prefixes: `(conv, bn)` for every convolution in order.
fn conv_names(blocks: usize) -> Vec<(String, String)> {
    let mut names = vec![("input.conv".to_string(), "input.bn".to_string())];
    for i in 0..blocks {
        names.push((format!("res{i}.conv1"), format!("res{i}.bn1")));
        names.push((format!("res{i}.conv2"), format!("res{i}.bn2")));
    }
    names.push(("value.conv".into(), "value.bn".into()));
    names.push(("policy.conv".into(), "policy.bn".into()));
    names
}

impl<T: Scalar> Params<T> {
    fn init<R: Rng>(cfg: &NetworkConfig, rng: &mut R) -> Self {
        let f = cfg.filters;
        let k = BODY_KERNEL;
        let input = ConvBnParams::init(k, cfg.input_planes, f, rng);
        let blocks = (0..cfg.residual_blocks)
            .map(|_| {
                [
                    ConvBnParams::init(k, f, f, rng),
                    ConvBnParams::init(k, f, f, rng),
                ]
            })
            .collect();
        let value_conv = ConvBnParams::init(1, f, 1, rng);
        let value_fc1 = DenseParams::init(CELLS, cfg.value_hidden, rng);
        let value_fc2 = DenseParams::init(cfg.value_hidden, 1, rng);
        let policy_conv = ConvBnParams::init(1, f, 2, rng);
        let policy_fc = DenseParams::init(2 * CELLS, cfg.policy_out, rng);
        Params {
            input,
            blocks,
            value_conv,
            value_fc1,
            value_fc2,
            policy_conv,
            policy_fc,
        }
    }

    fn convs(&self) -> Vec<&ConvBnParams<T>> {
        let mut v = vec![&self.input];
        for b in &self.blocks {
            v.extend(b.iter());
        }
        v.push(&self.value_conv);
        v.push(&self.policy_conv);
        v
    }

    /// Tensors under their stable layer names, in checkpoint order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        let names = conv_names(self.blocks.len());
        for (p, (conv, bn)) in self.convs().into_iter().zip(&names) {
            out.push((format!("{conv}.weight"), &p.weight));
            out.push((format!("{bn}.gamma"), &p.gamma));
            out.push((format!("{bn}.beta"), &p.beta));
        }
        for (name, d) in [
            ("value.fc1", &self.value_fc1),
            ("value.fc2", &self.value_fc2),
            ("policy.fc", &self.policy_fc),
        ] {
            out.push((format!("{name}.weight"), &d.weight));
            out.push((format!("{name}.bias"), &d.bias));
        }
        out
    }

    /// Mutable tensors in the same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let Params {
            input,
            blocks,
            value_conv,
            value_fc1,
            value_fc2,
            policy_conv,
            policy_fc,
        } = self;
        let mut convs = vec![input];
        for b in blocks.iter_mut() {
            convs.extend(b.iter_mut());
        }
        convs.push(value_conv);
        convs.push(policy_conv);
        let mut out = Vec::new();
        for ConvBnParams {
            weight,
            gamma,
            beta,
        } in convs
        {
            out.extend([weight, gamma, beta]);
        }
        for DenseParams { weight, bias } in [value_fc1, value_fc2, policy_fc] {
            out.extend([weight, bias]);
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape()))
    }

    fn map<U: Scalar>(&self, f: impl Fn(&Tensor<T>) -> Tensor<U>) -> Params<U> {
        let conv = |p: &ConvBnParams<T>| ConvBnParams {
            weight: f(&p.weight),
            gamma: f(&p.gamma),
            beta: f(&p.beta),
        };
        let dense = |p: &DenseParams<T>| DenseParams {
            weight: f(&p.weight),
            bias: f(&p.bias),
        };
        Params {
            input: conv(&self.input),
            blocks: self
                .blocks
                .iter()
                .map(|[a, b]| [conv(a), conv(b)])
                .collect(),
            value_conv: conv(&self.value_conv),
            value_fc1: dense(&self.value_fc1),
            value_fc2: dense(&self.value_fc2),
            policy_conv: conv(&self.policy_conv),
            policy_fc: dense(&self.policy_fc),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        self.map(|t| t.cast())
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Sum of squared convolution and dense kernels (biases and batch-norm
    /// scale/shift are not regularized).
    pub fn kernel_sum_squares(&self) -> T {
        self.named()
            .iter()
            .filter(|(n, _)| is_kernel(n))
            .map(|(_, t)| t.sum_squares())
            .sum()
    }

    pub(crate) fn check_same_shape<U: Scalar>(&self, other: &Params<U>) -> Result<(), NnError> {
        let a = self.named();
        let b = other.named();
        if a.len() != b.len()
            || a.iter()
                .zip(&b)
                .any(|((_, x), (_, y))| x.shape() != y.shape())
        {
            return Err(NnError::ShapeMismatch("parameter trees differ".into()));
        }
        Ok(())
    }
}

pub(crate) fn is_kernel(name: &str) -> bool {
    name.ends_with(".weight")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Batch-norm uses the statistics of the current batch.
    Train,
    /// Batch-norm uses the running statistics.
    #[default]
    Eval,
}

/// Raw network outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput<T> {
    /// `[batch, 49]` policy logits.
    pub logits: Vec<T>,
    /// `[batch]` values in `[-1, 1]`.
    pub values: Vec<T>,
}

impl<T: Scalar> NetOutput<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn logits(&self, i: usize) -> &[T] {
        &self.logits[i * CELLS..(i + 1) * CELLS]
    }

    /// Policy of example `i` renormalized over the `legal` squares.
    pub fn policy(&self, i: usize, legal: u64) -> Vec<T> {
        masked_softmax(self.logits(i), legal)
    }
}

/// Training examples in network input form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch<T> {
    /// `[n, 3, 7, 7]` planes, plane-major per example.
    pub planes: Vec<T>,
    /// `[n, 49]` target move distributions.
    pub pi: Vec<T>,
    /// `[n]` outcomes from the mover's perspective.
    pub z: Vec<T>,
    /// Legal-move masks.
    pub legal: Vec<u64>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn push(&mut self, planes: &[f32], pi: &[f32], z: f32, legal: u64) {
        self.planes.extend(planes.iter().map(|&v| T::of(v as f64)));
        self.pi.extend(pi.iter().map(|&v| T::of(v as f64)));
        self.z.push(T::of(z as f64));
        self.legal.push(legal);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub value: f64,
    pub policy: f64,
    pub l2: f64,
    pub total: f64,
}

struct ConvBnCache<T> {
    cols: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

struct BlockCache<T> {
    first: ConvBnCache<T>,
    pre1: Vec<T>,
    second: ConvBnCache<T>,
    pre2: Vec<T>,
}

/// Intermediate values of a Train-mode forward pass, consumed by
/// [`Network::backward`].
pub struct ForwardCache<T> {
    batch: usize,
    input: ConvBnCache<T>,
    input_pre: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    value_conv: ConvBnCache<T>,
    value_pre: Vec<T>,
    value_flat: Vec<T>,
    value_hidden_pre: Vec<T>,
    value_hidden: Vec<T>,
    policy_conv: ConvBnCache<T>,
    policy_pre: Vec<T>,
    policy_flat: Vec<T>,
    output: NetOutput<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &NetOutput<T> {
        &self.output
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Params<T>,
    stats: Vec<BnStats<T>>,
    mode: Mode,
}

fn dense_forward<T: Scalar>(x: &[T], rows: usize, p: &DenseParams<T>) -> Vec<T> {
    let (fan_in, out) = (p.weight.shape()[0], p.weight.shape()[1]);
    let mut y: Vec<T> = p
        .bias
        .data()
        .iter()
        .copied()
        .cycle()
        .take(rows * out)
        .collect();
    T::gemm(
        rows,
        fan_in,
        out,
        x,
        false,
        p.weight.data(),
        false,
        &mut y,
        true,
    );
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
fn dense_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    rows: usize,
    p: &DenseParams<T>,
    g: &mut DenseParams<T>,
) -> Vec<T> {
    let (fan_in, out) = (p.weight.shape()[0], p.weight.shape()[1]);
    T::gemm(
        fan_in,
        rows,
        out,
        x,
        true,
        dy,
        false,
        g.weight.data_mut(),
        true,
    );
    for row in dy.chunks_exact(out) {
        for (b, &d) in g.bias.data_mut().iter_mut().zip(row) {
            *b += d;
        }
    }
    let mut dx = vec![T::zero(); rows * fan_in];
    T::gemm(
        rows,
        out,
        fan_in,
        dy,
        false,
        p.weight.data(),
        true,
        &mut dx,
        false,
    );
    dx
}

impl<T: Scalar> Network<T> {
    pub fn new<R: Rng>(config: NetworkConfig, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        let params = Params::init(&config, rng);
        let stats = params
            .convs()
            .iter()
            .map(|p| BnStats::fresh(p.cout()))
            .collect();
        Ok(Network {
            config,
            params,
            stats,
            mode: Mode::Eval,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Running statistics with their `<bn>.running_mean`/`running_var` names.
    pub fn named_stats(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for ((_, bn), s) in conv_names(self.config.residual_blocks)
            .into_iter()
            .zip(&self.stats)
        {
            out.push((format!("{bn}.running_mean"), &s.mean));
            out.push((format!("{bn}.running_var"), &s.var));
        }
        out
    }

    pub fn stats(&self) -> &[BnStats<T>] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [BnStats<T>] {
        &mut self.stats
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.cast(),
            stats: self
                .stats
                .iter()
                .map(|s| BnStats {
                    mean: s.mean.cast(),
                    var: s.var.cast(),
                })
                .collect(),
            mode: self.mode,
        }
    }

    fn slope(&self) -> T {
        T::of(self.config.leaky_slope)
    }

    /// Plane-major `[n, 3, 7, 7]` input to `[n*49, 3]` rows.
    fn to_rows(&self, planes: &[T], batch: usize) -> Result<Vec<T>, NnError> {
        let per = PLANES * CELLS;
        if planes.len() != batch * per {
            return Err(NnError::ShapeMismatch(format!(
                "{} plane values for a batch of {batch}",
                planes.len()
            )));
        }
        let mut rows = vec![T::zero(); batch * CELLS * PLANES];
        for b in 0..batch {
            for c in 0..PLANES {
                for s in 0..CELLS {
                    rows[(b * CELLS + s) * PLANES + c] = planes[b * per + c * CELLS + s];
                }
            }
        }
        Ok(rows)
    }

    fn conv_bn(
        &self,
        p: &ConvBnParams<T>,
        stats: &BnStats<T>,
        x: &[T],
        batch: usize,
        train: bool,
    ) -> (Vec<T>, ConvBnCache<T>) {
        let (k, cin, cout) = (p.kernel(), p.cin(), p.cout());
        let cols = if k == 1 {
            x.to_vec()
        } else {
            im2col(x, batch, cin, k)
        };
        let rows = batch * CELLS;
        let mut xhat = vec![T::zero(); rows * cout];
        T::gemm(
            rows,
            k * k * cin,
            cout,
            &cols,
            false,
            p.weight.data(),
            false,
            &mut xhat,
            false,
        );
        let (mean, var) = if train {
            channel_moments(&xhat, cout)
        } else {
            (stats.mean.data().to_vec(), stats.var.data().to_vec())
        };
        let inv_std = normalize(&mut xhat, &mean, &var, T::of(self.config.bn_epsilon));
        let y = scale_shift(&xhat, p.gamma.data(), p.beta.data());
        (
            y,
            ConvBnCache {
                cols,
                xhat,
                inv_std,
                mean,
                var,
            },
        )
    }

    fn conv_bn_backward(
        &self,
        p: &ConvBnParams<T>,
        cache: &ConvBnCache<T>,
        dy: &[T],
        batch: usize,
        g: &mut ConvBnParams<T>,
        need_dx: bool,
    ) -> Vec<T> {
        let (k, cin, cout) = (p.kernel(), p.cin(), p.cout());
        let rows = batch * CELLS;
        let dz = batch_norm_backward(
            dy,
            &cache.xhat,
            &cache.inv_std,
            p.gamma.data(),
            g.gamma.data_mut(),
            g.beta.data_mut(),
        );
        T::gemm(
            k * k * cin,
            rows,
            cout,
            &cache.cols,
            true,
            &dz,
            false,
            g.weight.data_mut(),
            true,
        );
        if !need_dx {
            return Vec::new();
        }
        let mut dcols = vec![T::zero(); rows * k * k * cin];
        T::gemm(
            rows,
            cout,
            k * k * cin,
            &dz,
            false,
            p.weight.data(),
            true,
            &mut dcols,
            false,
        );
        if k == 1 {
            dcols
        } else {
            col2im(&dcols, batch, cin, k)
        }
    }

    fn run(&self, planes: &[T], batch: usize, train: bool) -> Result<ForwardCache<T>, NnError> {
        let slope = self.slope();
        let x = self.to_rows(planes, batch)?;
        let p = &self.params;
        let mut stats = self.stats.iter();

        let (input_pre, input) = self.conv_bn(&p.input, stats.next().unwrap(), &x, batch, train);
        let mut a = input_pre.clone();
        leaky_relu_inplace(&mut a, slope);

        let mut blocks = Vec::with_capacity(p.blocks.len());
        for [c1, c2] in &p.blocks {
            let (pre1, first) = self.conv_bn(c1, stats.next().unwrap(), &a, batch, train);
            let mut h = pre1.clone();
            leaky_relu_inplace(&mut h, slope);
            let (mut pre2, second) = self.conv_bn(c2, stats.next().unwrap(), &h, batch, train);
            for (s, &skip) in pre2.iter_mut().zip(&a) {
                *s += skip;
            }
            a = pre2.clone();
            leaky_relu_inplace(&mut a, slope);
            blocks.push(BlockCache {
                first,
                pre1,
                second,
                pre2,
            });
        }

        let (value_pre, value_conv) =
            self.conv_bn(&p.value_conv, stats.next().unwrap(), &a, batch, train);
        let mut value_flat = value_pre.clone();
        leaky_relu_inplace(&mut value_flat, slope);
        let value_hidden_pre = dense_forward(&value_flat, batch, &p.value_fc1);
        let mut value_hidden = value_hidden_pre.clone();
        leaky_relu_inplace(&mut value_hidden, slope);
        let values: Vec<T> = dense_forward(&value_hidden, batch, &p.value_fc2)
            .into_iter()
            .map(T::tanh)
            .collect();

        let (policy_pre, policy_conv) =
            self.conv_bn(&p.policy_conv, stats.next().unwrap(), &a, batch, train);
        let mut policy_flat = policy_pre.clone();
        leaky_relu_inplace(&mut policy_flat, slope);
        let logits = dense_forward(&policy_flat, batch, &p.policy_fc);

        Ok(ForwardCache {
            batch,
            input,
            input_pre,
            blocks,
            value_conv,
            value_pre,
            value_flat,
            value_hidden_pre,
            value_hidden,
            policy_conv,
            policy_pre,
            policy_flat,
            output: NetOutput { logits, values },
        })
    }

    /// Forward pass over `batch` plane-major inputs. Read-only; in Train
    /// mode batch-norm uses this batch's statistics without recording them.
    pub fn forward(&self, planes: &[T], batch: usize) -> Result<NetOutput<T>, NnError> {
        Ok(self.run(planes, batch, self.mode == Mode::Train)?.output)
    }

    /// Train-mode forward pass keeping what [`Network::backward`] needs.
    pub fn forward_train(&self, planes: &[T], batch: usize) -> Result<ForwardCache<T>, NnError> {
        self.run(planes, batch, true)
    }

    /// Masked policies and values for a set of boards.
    pub fn evaluate_boards(&self, boards: &[Board]) -> Result<Vec<(Vec<T>, T)>, NnError> {
        let planes: Vec<T> = boards
            .iter()
            .flat_map(|b| b.to_planes())
            .map(|v| T::of(v as f64))
            .collect();
        let out = self.forward(&planes, boards.len())?;
        Ok(boards
            .iter()
            .enumerate()
            .map(|(i, b)| (out.policy(i, b.legal_bits()), out.values[i]))
            .collect())
    }

    /// Gradients of a scalar objective given its derivatives with respect to
    /// the logits and the values of `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_logits: &[T], d_values: &[T]) -> Params<T> {
        let slope = self.slope();
        let p = &self.params;
        let batch = cache.batch;
        let mut g = p.zeros_like();

        let mut d = dense_backward(
            &cache.policy_flat,
            d_logits,
            batch,
            &p.policy_fc,
            &mut g.policy_fc,
        );
        leaky_relu_backward(&cache.policy_pre, &mut d, slope);
        let mut da = self.conv_bn_backward(
            &p.policy_conv,
            &cache.policy_conv,
            &d,
            batch,
            &mut g.policy_conv,
            true,
        );

        let dz2: Vec<T> = d_values
            .iter()
            .zip(&cache.output.values)
            .map(|(&dv, &v)| dv * (T::one() - v * v))
            .collect();
        let mut d = dense_backward(
            &cache.value_hidden,
            &dz2,
            batch,
            &p.value_fc2,
            &mut g.value_fc2,
        );
        leaky_relu_backward(&cache.value_hidden_pre, &mut d, slope);
        let mut d = dense_backward(&cache.value_flat, &d, batch, &p.value_fc1, &mut g.value_fc1);
        leaky_relu_backward(&cache.value_pre, &mut d, slope);
        let dv = self.conv_bn_backward(
            &p.value_conv,
            &cache.value_conv,
            &d,
            batch,
            &mut g.value_conv,
            true,
        );
        for (a, b) in da.iter_mut().zip(dv) {
            *a += b;
        }

        for ((params, grads), c) in p
            .blocks
            .iter()
            .zip(g.blocks.iter_mut())
            .zip(&cache.blocks)
            .rev()
        {
            leaky_relu_backward(&c.pre2, &mut da, slope);
            let [g1, g2] = grads;
            let mut dh = self.conv_bn_backward(&params[1], &c.second, &da, batch, g2, true);
            leaky_relu_backward(&c.pre1, &mut dh, slope);
            let dx = self.conv_bn_backward(&params[0], &c.first, &dh, batch, g1, true);
            for (a, b) in da.iter_mut().zip(dx) {
                *a += b;
            }
        }

        leaky_relu_backward(&cache.input_pre, &mut da, slope);
        self.conv_bn_backward(&p.input, &cache.input, &da, batch, &mut g.input, false);
        g
    }
}

/// Mean squared value error, mean masked cross-entropy, and their
/// derivatives with respect to the logits and the values.
pub(crate) fn objective<T: Scalar>(
    out: &NetOutput<T>,
    batch: &Batch<T>,
) -> (f64, f64, Vec<T>, Vec<T>) {
    let n = batch.len();
    let inv_n = T::one() / T::of(n as f64);
    let mut value_loss = T::zero();
    let mut policy_loss = T::zero();
    let mut d_logits = vec![T::zero(); n * CELLS];
    let mut d_values = vec![T::zero(); n];
    for i in 0..n {
        let err = batch.z[i] - out.values[i];
        value_loss += err * err;
        d_values[i] = T::of(-2.0) * err * inv_n;
        let legal = batch.legal[i];
        let p = out.policy(i, legal);
        let pi = &batch.pi[i * CELLS..(i + 1) * CELLS];
        let mass: T = (0..CELLS)
            .filter(|&j| legal >> j & 1 == 1)
            .map(|j| pi[j])
            .sum();
        for j in 0..CELLS {
            if legal >> j & 1 == 1 {
                if pi[j] > T::zero() {
                    policy_loss -= pi[j] * p[j].ln();
                }
                d_logits[i * CELLS + j] = (p[j] * mass - pi[j]) * inv_n;
            }
        }
    }
    let to = |v: T| v.to_f64().unwrap() / n as f64;
    (to(value_loss), to(policy_loss), d_logits, d_values)
}

impl<T: Scalar> Network<T> {
    /// Training loss on `batch` with Train-mode batch-norm, without gradients.
    pub fn loss(&self, batch: &Batch<T>, l2: f64) -> Result<LossBreakdown, NnError> {
        let cache = self.forward_train(&batch.planes, batch.len())?;
        let (value, policy, _, _) = objective(&cache.output, batch);
        let l2_term = l2 * self.params.kernel_sum_squares().to_f64().unwrap();
        Ok(LossBreakdown {
            value,
            policy,
            l2: l2_term,
            total: value + policy + l2_term,
        })
    }

    /// Loss, parameter gradients, and the forward cache (for running-stat
    /// updates).
    pub fn loss_and_gradients(
        &self,
        batch: &Batch<T>,
        l2: f64,
    ) -> Result<(LossBreakdown, Params<T>, ForwardCache<T>), NnError> {
        if batch.is_empty() {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        if batch.pi.len() != batch.len() * CELLS || batch.legal.len() != batch.len() {
            return Err(NnError::ShapeMismatch(
                "batch targets disagree with batch size".into(),
            ));
        }
        let cache = self.forward_train(&batch.planes, batch.len())?;
        let (value, policy, d_logits, d_values) = objective(&cache.output, batch);
        let mut grads = self.backward(&cache, &d_logits, &d_values);
        let c = T::of(2.0 * l2);
        for ((name, w), g) in self.params.named().into_iter().zip(grads.tensors_mut()) {
            if is_kernel(&name) {
                for (gv, &wv) in g.data_mut().iter_mut().zip(w.data()) {
                    *gv += c * wv;
                }
            }
        }
        let l2_term = l2 * self.params.kernel_sum_squares().to_f64().unwrap();
        Ok((
            LossBreakdown {
                value,
                policy,
                l2: l2_term,
                total: value + policy + l2_term,
            },
            grads,
            cache,
        ))
    }

    /// Folds the batch statistics of a Train-mode pass into the running
    /// statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        let m = T::of(self.config.bn_momentum);
        let mut layers = vec![&cache.input];
        for b in &cache.blocks {
            layers.push(&b.first);
            layers.push(&b.second);
        }
        layers.push(&cache.value_conv);
        layers.push(&cache.policy_conv);
        for (s, c) in self.stats.iter_mut().zip(layers) {
            for (r, &b) in s.mean.data_mut().iter_mut().zip(&c.mean) {
                *r = m * *r + (T::one() - m) * b;
            }
            for (r, &b) in s.var.data_mut().iter_mut().zip(&c.var) {
                *r = m * *r + (T::one() - m) * b;
            }
        }
    }
}
