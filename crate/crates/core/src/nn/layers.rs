//! Relation-specific message passing kernels and layer normalisation, each
//! with a hand-written reverse pass.

use ndarray::{Array2, Axis};

use super::config::AttentionScore;
use super::input::RelationEdges;
use super::{NnError, Scalar};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn leaky<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::of(LEAKY_SLOPE)
    }
}

fn leaky_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::of(LEAKY_SLOPE)
    }
}

/// `sum_rel  D_in^-1/2 A_rel D_out^-1/2 H W_rel`, aggregating along edge direction.
pub fn gcn_forward<T: Scalar>(h: &Array2<T>, relations: &[RelationEdges<T>], weights: &[Array2<T>]) -> Array2<T> {
    let n = h.nrows();
    let width = weights[0].ncols();
    let mut out = Array2::<T>::zeros((n, width));
    for (rel, w) in relations.iter().zip(weights) {
        let hw = h.dot(w);
        let hw = hw.as_slice().expect("standard layout");
        let o = out.as_slice_mut().expect("standard layout");
        for (&(s, d), &coef) in rel.edges.iter().zip(&rel.gcn_coef) {
            let src = &hw[s * width..(s + 1) * width];
            let dst = &mut o[d * width..(d + 1) * width];
            for (y, &x) in dst.iter_mut().zip(src) {
                *y += coef * x;
            }
        }
    }
    out
}

/// Returns the gradient with respect to `h` and one per weight matrix.
pub fn gcn_backward<T: Scalar>(
    h: &Array2<T>,
    relations: &[RelationEdges<T>],
    weights: &[Array2<T>],
    upstream: &Array2<T>,
) -> (Array2<T>, Vec<Array2<T>>) {
    let n = h.nrows();
    let width = weights[0].ncols();
    let mut dh = Array2::<T>::zeros(h.raw_dim());
    let g = upstream.as_slice().expect("standard layout");
    let mut dws = Vec::with_capacity(weights.len());
    for (rel, w) in relations.iter().zip(weights) {
        let mut dhw = Array2::<T>::zeros((n, width));
        let buf = dhw.as_slice_mut().expect("standard layout");
        for (&(s, d), &coef) in rel.edges.iter().zip(&rel.gcn_coef) {
            let src = &g[d * width..(d + 1) * width];
            let dst = &mut buf[s * width..(s + 1) * width];
            for (y, &x) in dst.iter_mut().zip(src) {
                *y += coef * x;
            }
        }
        dws.push(h.t().dot(&dhw));
        dh += &dhw.dot(&w.t());
    }
    (dh, dws)
}

/// Parameters of one relation's attention kernel with `K` heads of width `hd`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    /// `in x K*hd`, transforms messages (and both endpoints for v1 scores).
    pub w_src: Array2<T>,
    /// `in x K*hd`, transforms the receiving node in v2 scores; empty for v1.
    pub w_dst: Array2<T>,
    /// `K x hd` for v2, `K x 2hd` (receiver half first) for v1.
    pub att: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub hs: Array2<T>,
    pub hd: Array2<T>,
    /// `E x K` attention coefficients, edges in destination order.
    pub alpha: Array2<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionShape {
    pub heads: usize,
    pub head_dim: usize,
    /// Concatenate heads (intermediate blocks) or average them (last block).
    pub concat: bool,
    pub score: AttentionScore,
}

impl AttentionShape {
    pub fn out_dim(&self) -> usize {
        if self.concat {
            self.heads * self.head_dim
        } else {
            self.head_dim
        }
    }
}

fn score<T: Scalar>(shape: &AttentionShape, att: &[T], hs: &[T], hd: &[T], i: usize, j: usize, k: usize) -> T {
    let (kh, hdim) = (shape.heads * shape.head_dim, shape.head_dim);
    let xs_j = &hs[j * kh + k * hdim..j * kh + (k + 1) * hdim];
    match shape.score {
        AttentionScore::V2 => {
            let a = &att[k * hdim..(k + 1) * hdim];
            let xd_i = &hd[i * kh + k * hdim..i * kh + (k + 1) * hdim];
            let mut s = T::zero();
            for c in 0..hdim {
                s += a[c] * leaky(xd_i[c] + xs_j[c]);
            }
            s
        }
        AttentionScore::V1 => {
            let a = &att[k * 2 * hdim..(k + 1) * 2 * hdim];
            let xs_i = &hs[i * kh + k * hdim..i * kh + (k + 1) * hdim];
            let mut t = T::zero();
            for c in 0..hdim {
                t += a[c] * xs_i[c] + a[hdim + c] * xs_j[c];
            }
            leaky(t)
        }
    }
}

/// One relation of the attention kernel. Nodes without in-neighbours in the
/// relation receive zeros.
pub fn gat_forward<T: Scalar>(
    h: &Array2<T>,
    rel: &RelationEdges<T>,
    p: &AttentionParams<T>,
    shape: &AttentionShape,
) -> (Array2<T>, AttentionCache<T>) {
    let n = h.nrows();
    let (heads, hdim) = (shape.heads, shape.head_dim);
    let kh = heads * hdim;
    let hs = h.dot(&p.w_src);
    let hd = match shape.score {
        AttentionScore::V2 => h.dot(&p.w_dst),
        AttentionScore::V1 => Array2::zeros((0, 0)),
    };
    let att = p.att.as_slice().expect("standard layout");
    let hs_s = hs.as_slice().expect("standard layout");
    let hd_s = hd.as_slice().unwrap_or(&[]);
    let out_dim = shape.out_dim();
    let mut out = Array2::<T>::zeros((n, out_dim));
    let mut alpha = Array2::<T>::zeros((rel.edges.len(), heads));
    let o = out.as_slice_mut().expect("standard layout");
    let al = alpha.as_slice_mut().expect("standard layout");
    let mean = T::one() / T::of(heads as f64);
    for i in 0..n {
        let range = rel.incoming(i);
        if range.is_empty() {
            continue;
        }
        for k in 0..heads {
            let mut max = T::neg_infinity();
            for e in range.clone() {
                let s = score(shape, att, hs_s, hd_s, i, rel.edges[e].0, k);
                al[e * heads + k] = s;
                if s > max {
                    max = s;
                }
            }
            let mut total = T::zero();
            for e in range.clone() {
                let v = (al[e * heads + k] - max).exp();
                al[e * heads + k] = v;
                total += v;
            }
            for e in range.clone() {
                let a = al[e * heads + k] / total;
                al[e * heads + k] = a;
                let j = rel.edges[e].0;
                let xs_j = &hs_s[j * kh + k * hdim..j * kh + (k + 1) * hdim];
                let (off, scale) = if shape.concat { (k * hdim, a) } else { (0, a * mean) };
                let row = &mut o[i * out_dim + off..i * out_dim + off + hdim];
                for (y, &x) in row.iter_mut().zip(xs_j) {
                    *y += scale * x;
                }
            }
        }
    }
    (out, AttentionCache { hs, hd, alpha })
}

/// Gradients `(dH, dW_src, dW_dst, d_att)` of one attention relation.
pub fn gat_backward<T: Scalar>(
    h: &Array2<T>,
    rel: &RelationEdges<T>,
    p: &AttentionParams<T>,
    shape: &AttentionShape,
    cache: &AttentionCache<T>,
    upstream: &Array2<T>,
) -> (Array2<T>, AttentionParams<T>) {
    let n = h.nrows();
    let (heads, hdim) = (shape.heads, shape.head_dim);
    let kh = heads * hdim;
    let out_dim = shape.out_dim();
    let att = p.att.as_slice().expect("standard layout");
    let hs = cache.hs.as_slice().expect("standard layout");
    let hd = cache.hd.as_slice().unwrap_or(&[]);
    let al = cache.alpha.as_slice().expect("standard layout");
    let g = upstream.as_slice().expect("standard layout");
    let mut d_hs = vec![T::zero(); n * kh];
    let mut d_hd = vec![T::zero(); hd.len()];
    let mut d_att = vec![T::zero(); att.len()];
    let mean = T::one() / T::of(heads as f64);
    let mut d_alpha: Vec<T> = Vec::new();
    let mut g_k = vec![T::zero(); hdim];
    for i in 0..n {
        let range = rel.incoming(i);
        if range.is_empty() {
            continue;
        }
        for k in 0..heads {
            for c in 0..hdim {
                g_k[c] = if shape.concat {
                    g[i * out_dim + k * hdim + c]
                } else {
                    g[i * out_dim + c] * mean
                };
            }
            d_alpha.clear();
            let mut weighted = T::zero();
            for e in range.clone() {
                let j = rel.edges[e].0;
                let a = al[e * heads + k];
                let base = j * kh + k * hdim;
                let mut da = T::zero();
                for c in 0..hdim {
                    da += g_k[c] * hs[base + c];
                    d_hs[base + c] += a * g_k[c];
                }
                d_alpha.push(da);
                weighted += a * da;
            }
            for (idx, e) in range.clone().enumerate() {
                let j = rel.edges[e].0;
                let ds = al[e * heads + k] * (d_alpha[idx] - weighted);
                match shape.score {
                    AttentionScore::V2 => {
                        let a_off = k * hdim;
                        let (bi, bj) = (i * kh + k * hdim, j * kh + k * hdim);
                        for c in 0..hdim {
                            let u = hd[bi + c] + hs[bj + c];
                            d_att[a_off + c] += ds * leaky(u);
                            let du = ds * att[a_off + c] * leaky_grad(u);
                            d_hd[bi + c] += du;
                            d_hs[bj + c] += du;
                        }
                    }
                    AttentionScore::V1 => {
                        let a_off = k * 2 * hdim;
                        let (bi, bj) = (i * kh + k * hdim, j * kh + k * hdim);
                        let mut t = T::zero();
                        for c in 0..hdim {
                            t += att[a_off + c] * hs[bi + c] + att[a_off + hdim + c] * hs[bj + c];
                        }
                        let dt = ds * leaky_grad(t);
                        for c in 0..hdim {
                            d_att[a_off + c] += dt * hs[bi + c];
                            d_att[a_off + hdim + c] += dt * hs[bj + c];
                            d_hs[bi + c] += dt * att[a_off + c];
                            d_hs[bj + c] += dt * att[a_off + hdim + c];
                        }
                    }
                }
            }
        }
    }
    let d_hs = Array2::from_shape_vec((n, kh), d_hs).expect("shape");
    let mut dh = d_hs.dot(&p.w_src.t());
    let w_src = h.t().dot(&d_hs);
    let w_dst = match shape.score {
        AttentionScore::V2 => {
            let d_hd = Array2::from_shape_vec((n, kh), d_hd).expect("shape");
            dh += &d_hd.dot(&p.w_dst.t());
            h.t().dot(&d_hd)
        }
        AttentionScore::V1 => Array2::zeros(p.w_dst.raw_dim()),
    };
    let att = Array2::from_shape_vec(p.att.raw_dim(), d_att).expect("shape");
    (dh, AttentionParams { w_src, w_dst, att })
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Vec<T>,
}

/// Per-row normalisation over the feature axis followed by gain and bias.
pub fn layer_norm_forward<T: Scalar>(z: &Array2<T>, gain: &Array2<T>, bias: &Array2<T>) -> (Array2<T>, NormCache<T>) {
    let width = T::of(z.ncols() as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut xhat = z.clone();
    let mut inv_std = Vec::with_capacity(z.nrows());
    for mut row in xhat.axis_iter_mut(Axis(0)) {
        let mean = row.iter().fold(T::zero(), |a, &x| a + x) / width;
        let var = row.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean)) / width;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|x| (x - mean) * inv);
        inv_std.push(inv);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Returns `(dz, dgain, dbias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gain: &Array2<T>,
    upstream: &Array2<T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let width = T::of(upstream.ncols() as f64);
    let dgain = (upstream * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbias = upstream.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dz = upstream * gain;
    for ((mut row, xhat), &inv) in dz
        .axis_iter_mut(Axis(0))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(&cache.inv_std)
    {
        let mean_d = row.iter().fold(T::zero(), |a, &x| a + x) / width;
        let mean_dx = row.iter().zip(xhat.iter()).fold(T::zero(), |a, (&d, &x)| a + d * x) / width;
        for (d, &x) in row.iter_mut().zip(xhat.iter()) {
            *d = inv * (*d - mean_d - x * mean_dx);
        }
    }
    (dz, dgain, dbias)
}

fn check_relations<T: Scalar>(h: &Array2<T>, relations: &[RelationEdges<T>], count: usize) -> Result<(), NnError> {
    if relations.len() != count {
        return Err(NnError::ShapeMismatch(format!(
            "{} relations for {count} parameter sets",
            relations.len()
        )));
    }
    for rel in relations {
        if rel.offsets.len() != h.nrows() + 1 {
            return Err(NnError::ShapeMismatch(format!(
                "adjacency over {} nodes, features have {} rows",
                rel.offsets.len().saturating_sub(1),
                h.nrows()
            )));
        }
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(NnError::NonFinite("layer input".into()));
    }
    Ok(())
}

/// Checked [`gcn_forward`].
pub fn gcn_layer<T: Scalar>(
    h: &Array2<T>,
    relations: &[RelationEdges<T>],
    weights: &[Array2<T>],
) -> Result<Array2<T>, NnError> {
    check_relations(h, relations, weights.len())?;
    let width = weights.first().map_or(0, |w| w.ncols());
    if weights.iter().any(|w| w.nrows() != h.ncols() || w.ncols() != width) {
        return Err(NnError::ShapeMismatch("weight matrices do not fit the input".into()));
    }
    Ok(gcn_forward(h, relations, weights))
}

/// Checked attention kernel summed over relations.
pub fn gat_layer<T: Scalar>(
    h: &Array2<T>,
    relations: &[RelationEdges<T>],
    params: &[AttentionParams<T>],
    shape: &AttentionShape,
) -> Result<Array2<T>, NnError> {
    check_relations(h, relations, params.len())?;
    let kh = shape.heads * shape.head_dim;
    let att_width = match shape.score {
        AttentionScore::V2 => shape.head_dim,
        AttentionScore::V1 => 2 * shape.head_dim,
    };
    for p in params {
        let dst_ok = match shape.score {
            AttentionScore::V2 => p.w_dst.dim() == (h.ncols(), kh),
            AttentionScore::V1 => true,
        };
        if p.w_src.dim() != (h.ncols(), kh) || !dst_ok || p.att.dim() != (shape.heads, att_width) {
            return Err(NnError::ShapeMismatch(
                "attention parameters do not fit the input".into(),
            ));
        }
    }
    let mut out = Array2::zeros((h.nrows(), shape.out_dim()));
    for (rel, p) in relations.iter().zip(params) {
        out += &gat_forward(h, rel, p, shape).0;
    }
    Ok(out)
}
