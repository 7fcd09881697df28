use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aba::{Abaf, AtomId};
use crate::depgraph::{FeatureMatrix, NodeKind, Relation};

use super::config::{AttentionScore, Kernel, ModelConfig};
use super::input::GraphInput;
use super::layers::{
    gat_backward, gat_forward, gcn_backward, gcn_forward, layer_norm_backward, layer_norm_forward, AttentionCache,
    AttentionParams, AttentionShape, NormCache,
};
use super::{NnError, Scalar};

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum KernelParams<T> {
    /// One `hidden x hidden` matrix per relation.
    Gcn([Array2<T>; 3]),
    Gat([AttentionParams<T>; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub kernel: KernelParams<T>,
    pub norm_gain: Array2<T>,
    pub norm_bias: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array2<T>,
}

/// All trainable tensors. Gradients use the same structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `max_nodes x embed_dim`, row `i` feeds the node at canonical position `i`.
    pub embedding: Array2<T>,
    pub input: Linear<T>,
    pub blocks: Vec<BlockParams<T>>,
    /// One `hidden -> 1` classifier per node kind.
    pub heads: [Linear<T>; 3],
}

fn relation_name(i: usize) -> &'static str {
    match i {
        0 => "support",
        1 => "derive",
        _ => "attack",
    }
}

fn kind_name(i: usize) -> &'static str {
    match i {
        0 => "assumption",
        1 => "claim",
        _ => "rule",
    }
}

impl<T: Scalar> Params<T> {
    /// Tensors with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Array2<T>)> {
        let mut v = vec![
            ("embedding".to_string(), &self.embedding),
            ("input.weight".to_string(), &self.input.weight),
            ("input.bias".to_string(), &self.input.bias),
        ];
        for (m, b) in self.blocks.iter().enumerate() {
            match &b.kernel {
                KernelParams::Gcn(ws) => {
                    for (r, w) in ws.iter().enumerate() {
                        v.push((format!("block{m}.{}.weight", relation_name(r)), w));
                    }
                }
                KernelParams::Gat(ps) => {
                    for (r, p) in ps.iter().enumerate() {
                        let rel = relation_name(r);
                        v.push((format!("block{m}.{rel}.w_src"), &p.w_src));
                        v.push((format!("block{m}.{rel}.w_dst"), &p.w_dst));
                        v.push((format!("block{m}.{rel}.att"), &p.att));
                    }
                }
            }
            v.push((format!("block{m}.norm.gain"), &b.norm_gain));
            v.push((format!("block{m}.norm.bias"), &b.norm_bias));
        }
        for (k, h) in self.heads.iter().enumerate() {
            v.push((format!("head.{}.weight", kind_name(k)), &h.weight));
            v.push((format!("head.{}.bias", kind_name(k)), &h.bias));
        }
        v
    }

    /// Same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut v = vec![&mut self.embedding, &mut self.input.weight, &mut self.input.bias];
        for b in self.blocks.iter_mut() {
            match &mut b.kernel {
                KernelParams::Gcn(ws) => v.extend(ws.iter_mut()),
                KernelParams::Gat(ps) => {
                    for p in ps.iter_mut() {
                        v.push(&mut p.w_src);
                        v.push(&mut p.w_dst);
                        v.push(&mut p.att);
                    }
                }
            }
            v.push(&mut b.norm_gain);
            v.push(&mut b.norm_bias);
        }
        for h in self.heads.iter_mut() {
            v.push(&mut h.weight);
            v.push(&mut h.bias);
        }
        v
    }

    pub fn tensors(&self) -> Vec<&Array2<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn zeros_like(&self) -> Params<T> {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-limit..=limit)))
}

/// Recorded intermediates of one block.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    pub input: Array2<T>,
    pub attention: Vec<AttentionCache<T>>,
    pub norm: NormCache<T>,
    /// Post-normalisation, pre-activation values.
    pub normed: Array2<T>,
    /// Inverted-dropout multipliers (0 or `1 / (1 - dropout)`); `None` when inactive.
    pub mask: Option<Array2<T>>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub x0: Array2<T>,
    pub blocks: Vec<BlockTrace<T>>,
    pub output: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// One logit per node in canonical order.
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    pub trace: ForwardTrace<T>,
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn assumption_probs(&self, num_assumptions: usize) -> &[T] {
        &self.probs[..num_assumptions]
    }

    /// Dropout multipliers of every block, for replaying the same forward pass.
    pub fn masks(&self) -> Vec<Option<Array2<T>>> {
        self.trace.blocks.iter().map(|b| b.mask.clone()).collect()
    }
}

/// Source of dropout masks for a forward pass.
pub enum Dropout<'a, T> {
    Off,
    Sample(&'a mut ChaCha8Rng),
    Replay(&'a [Option<Array2<T>>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub assumptions: Vec<AtomId>,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Heterogeneous graph network over dependency graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, de) = (config.hidden_dim, config.embed_dim);
        let embedding = glorot(&mut rng, config.max_nodes, de);
        let input = Linear {
            weight: glorot(&mut rng, FeatureMatrix::WIDTH + de, h),
            bias: Array2::zeros((1, h)),
        };
        let mut blocks = Vec::with_capacity(config.blocks);
        for m in 0..config.blocks {
            let last = m + 1 == config.blocks;
            let kernel = match config.kernel {
                Kernel::Gcn => KernelParams::Gcn(std::array::from_fn(|_| glorot(&mut rng, h, h))),
                Kernel::Gat => {
                    let hd = config.head_dim(last);
                    let kh = config.heads * hd;
                    KernelParams::Gat(std::array::from_fn(|_| {
                        let w_src = glorot(&mut rng, h, kh);
                        let (w_dst, att_width) = match config.attention {
                            AttentionScore::V2 => (glorot(&mut rng, h, kh), hd),
                            AttentionScore::V1 => (Array2::zeros((0, 0)), 2 * hd),
                        };
                        let att = glorot(&mut rng, config.heads, att_width);
                        AttentionParams { w_src, w_dst, att }
                    }))
                }
            };
            blocks.push(BlockParams {
                kernel,
                norm_gain: Array2::ones((1, h)),
                norm_bias: Array2::zeros((1, h)),
            });
        }
        let heads = std::array::from_fn(|_| Linear {
            weight: glorot(&mut rng, h, 1),
            bias: Array2::zeros((1, 1)),
        });
        Ok(Model {
            config,
            params: Params {
                embedding,
                input,
                blocks,
                heads,
            },
        })
    }

    fn shape(&self, m: usize) -> AttentionShape {
        let last = m + 1 == self.config.blocks;
        AttentionShape {
            heads: self.config.heads,
            head_dim: self.config.head_dim(last),
            concat: !last,
            score: self.config.attention,
        }
    }

    pub fn forward(&self, input: &GraphInput<T>, dropout: Dropout<'_, T>) -> Result<ForwardOutput<T>, NnError> {
        let n = input.num_nodes();
        if n > self.config.max_nodes {
            return Err(NnError::TooManyNodes {
                nodes: n,
                max: self.config.max_nodes,
            });
        }
        if input.features.ncols() != FeatureMatrix::WIDTH || input.features.nrows() != n {
            return Err(NnError::ShapeMismatch(format!(
                "features {:?} for {n} nodes",
                input.features.dim()
            )));
        }
        let p = &self.params;
        let emb = p.embedding.slice(s![0..n, ..]);
        let x0 = ndarray::concatenate(Axis(1), &[input.features.view(), emb]).expect("same rows");
        let mut h = x0.dot(&p.input.weight) + &p.input.bias;
        let keep = 1.0 - self.config.dropout;
        let scale = T::of(1.0 / keep);
        let mut dropout = dropout;
        let mut blocks = Vec::with_capacity(p.blocks.len());
        for (m, block) in p.blocks.iter().enumerate() {
            let (z, attention) = self.kernel_forward(m, block, &h, input);
            let (normed, norm) = layer_norm_forward(&z, &block.norm_gain, &block.norm_bias);
            let mut out = normed.mapv(|x| if x > T::zero() { x } else { T::zero() });
            let mask = match &mut dropout {
                Dropout::Off => None,
                Dropout::Sample(_) if self.config.dropout == 0.0 => None,
                Dropout::Sample(rng) => Some(Array2::from_shape_simple_fn(out.raw_dim(), || {
                    if rng.gen::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                })),
                Dropout::Replay(masks) => masks.get(m).cloned().flatten(),
            };
            if let Some(mask) = &mask {
                if mask.dim() != out.dim() {
                    return Err(NnError::ShapeMismatch("replayed dropout mask".into()));
                }
                out *= mask;
            }
            out += &h;
            if out.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite(format!("output of block {m}")));
            }
            blocks.push(BlockTrace {
                input: std::mem::replace(&mut h, out),
                attention,
                norm,
                normed,
                mask,
            });
        }
        let mut logits = vec![T::zero(); n];
        for (i, (logit, kind)) in logits.iter_mut().zip(&input.kinds).enumerate() {
            let head = &p.heads[kind.index()];
            *logit = h.row(i).dot(&head.weight.column(0)) + head.bias[[0, 0]];
        }
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(ForwardOutput {
            logits,
            probs,
            trace: ForwardTrace { x0, blocks, output: h },
        })
    }

    fn kernel_forward(
        &self,
        m: usize,
        block: &BlockParams<T>,
        h: &Array2<T>,
        input: &GraphInput<T>,
    ) -> (Array2<T>, Vec<AttentionCache<T>>) {
        match &block.kernel {
            KernelParams::Gcn(ws) => (gcn_forward(h, &input.relations, ws), Vec::new()),
            KernelParams::Gat(ps) => {
                let shape = self.shape(m);
                let mut z = Array2::zeros((h.nrows(), self.config.hidden_dim));
                let mut caches = Vec::with_capacity(3);
                for (rel, p) in input.relations.iter().zip(ps) {
                    let (out, cache) = gat_forward(h, rel, p, &shape);
                    z += &out;
                    caches.push(cache);
                }
                (z, caches)
            }
        }
    }

    /// Reverse pass. `upstream[i]` is the derivative of the loss with respect
    /// to the logit of node `i`.
    pub fn backward(&self, input: &GraphInput<T>, trace: &ForwardTrace<T>, upstream: &[T]) -> Params<T> {
        let p = &self.params;
        let mut grads = p.zeros_like();
        let n = input.num_nodes();
        let hidden = self.config.hidden_dim;
        let mut dh = Array2::<T>::zeros((n, hidden));
        for (i, (&g, kind)) in upstream.iter().zip(&input.kinds).enumerate() {
            if g == T::zero() {
                continue;
            }
            let k = kind.index();
            let head = &p.heads[k];
            let gh = &mut grads.heads[k];
            gh.bias[[0, 0]] += g;
            let row = trace.output.row(i);
            gh.weight.column_mut(0).scaled_add(g, &row);
            dh.row_mut(i).scaled_add(g, &head.weight.column(0));
        }
        for (m, (block, bt)) in p.blocks.iter().zip(&trace.blocks).enumerate().rev() {
            let gb = &mut grads.blocks[m];
            // residual branch
            let mut d_branch = dh.clone();
            if let Some(mask) = &bt.mask {
                d_branch *= mask;
            }
            d_branch.zip_mut_with(&bt.normed, |d, &y| {
                if y <= T::zero() {
                    *d = T::zero();
                }
            });
            let (dz, dgain, dbias) = layer_norm_backward(&bt.norm, &block.norm_gain, &d_branch);
            gb.norm_gain += &dgain;
            gb.norm_bias += &dbias;
            match (&block.kernel, &mut gb.kernel) {
                (KernelParams::Gcn(ws), KernelParams::Gcn(gws)) => {
                    let (dx, dws) = gcn_backward(&bt.input, &input.relations, ws, &dz);
                    for (g, d) in gws.iter_mut().zip(dws) {
                        *g += &d;
                    }
                    dh += &dx;
                }
                (KernelParams::Gat(ps), KernelParams::Gat(gps)) => {
                    let shape = self.shape(m);
                    for (r, (pr, gr)) in ps.iter().zip(gps.iter_mut()).enumerate() {
                        let (dx, d) = gat_backward(&bt.input, &input.relations[r], pr, &shape, &bt.attention[r], &dz);
                        gr.w_src += &d.w_src;
                        gr.w_dst += &d.w_dst;
                        gr.att += &d.att;
                        dh += &dx;
                    }
                }
                _ => unreachable!("gradient structure mirrors parameters"),
            }
        }
        grads.input.weight += &trace.x0.t().dot(&dh);
        grads.input.bias += &dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx0 = dh.dot(&p.input.weight.t());
        let demb = dx0.slice(s![.., FeatureMatrix::WIDTH..]);
        let mut rows = grads.embedding.slice_mut(s![0..n, ..]);
        rows += &demb;
        grads
    }

    /// Scores and thresholded labels for the assumptions of `abaf`.
    pub fn predict(&self, abaf: &Abaf) -> Result<Prediction, NnError> {
        let input = GraphInput::<T>::from_abaf(abaf);
        let out = self.forward(&input, Dropout::Off)?;
        let a = input.num_assumptions();
        let scores: Vec<f64> = out.probs[..a].iter().map(|p| p.f64()).collect();
        let labels = scores.iter().map(|&s| s >= self.config.threshold).collect();
        // Graph positions follow ascending atom ids, as do `abaf.assumptions()`.
        debug_assert_eq!(input.assumptions, abaf.assumptions());
        Ok(Prediction {
            assumptions: input.assumptions,
            scores,
            labels,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.count()
    }

    /// Kinds whose logits are produced; all three, though only assumption logits are trained.
    pub fn head_kinds() -> [NodeKind; 3] {
        [NodeKind::Assumption, NodeKind::Claim, NodeKind::Rule]
    }

    pub fn relations() -> [Relation; 3] {
        Relation::ALL
    }
}
