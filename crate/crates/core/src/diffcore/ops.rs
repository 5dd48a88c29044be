use rand::Rng;

use super::{Scalar, Tensor, TensorError};

fn expect_rank<F: Scalar>(t: &Tensor<F>, rank: usize, op: &'static str) -> Result<(), TensorError> {
    if t.shape().len() == rank {
        Ok(())
    } else {
        Err(TensorError::Invalid {
            op,
            message: format!("expected rank {rank}, got shape {:?}", t.shape()),
        })
    }
}

fn mismatch<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn check_conv_shapes<F: Scalar>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    valid_len: usize,
) -> Result<(usize, usize, usize, usize), TensorError> {
    expect_rank(input, 2, "conv1d_same")?;
    expect_rank(filters, 3, "conv1d_same")?;
    let (len, d_in) = (input.shape()[0], input.shape()[1]);
    let (width, fd, n_f) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    if fd != d_in {
        return Err(mismatch("conv1d_same", input, filters));
    }
    if valid_len > len {
        return Err(TensorError::Invalid {
            op: "conv1d_same",
            message: format!("valid length {valid_len} exceeds input length {len}"),
        });
    }
    Ok((len, d_in, width, n_f))
}

/// Left zero padding for a filter of `width` taps. Width 4 pads 1 left and
/// 2 right.
fn left_pad(width: usize) -> usize {
    (width - 1) / 2
}

/// Same-length 1-d convolution.
///
/// `input` is `[L × d_in]`, `filters` is `[w × d_in × n_f]`, `bias` is
/// `[n_f]`; the result is `[L × n_f]` with
/// `out[i] = bias + Σ_k input[i + k - left] · filters[k]`, reading zeros
/// outside the input.
pub fn conv1d_same<F: Scalar>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    let len = input.shape().first().copied().unwrap_or(0);
    conv1d_same_masked(input, filters, bias, len)
}

/// [`conv1d_same`] where input rows at or beyond `valid_len` are read as
/// zeros.
pub fn conv1d_same_masked<F: Scalar>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    bias: &Tensor<F>,
    valid_len: usize,
) -> Result<Tensor<F>, TensorError> {
    let (len, d_in, width, n_f) = check_conv_shapes(input, filters, valid_len)?;
    if bias.shape() != [n_f] {
        return Err(mismatch("conv1d_same", bias, filters));
    }
    let left = left_pad(width);
    let x = input.data();
    let wdata = filters.data();
    let mut out = Vec::with_capacity(len * n_f);
    for _ in 0..len {
        out.extend_from_slice(bias.data());
    }

    for j in 0..valid_len {
        let xrow = &x[j * d_in..(j + 1) * d_in];
        for k in 0..width {
            let Some(i) = (j + left).checked_sub(k).filter(|&i| i < len) else {
                continue;
            };
            let orow = &mut out[i * n_f..(i + 1) * n_f];
            let wk = &wdata[k * d_in * n_f..(k + 1) * d_in * n_f];
            for (c, &xv) in xrow.iter().enumerate() {
                if xv == F::zero() {
                    continue;
                }
                let wrow = &wk[c * n_f..(c + 1) * n_f];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![len, n_f], out)
}

pub struct Conv1dGrads<F> {
    pub input: Tensor<F>,
    pub filters: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Gradients of [`conv1d_same_masked`]. Input rows at or beyond `valid_len`
/// get zero gradient.
pub fn conv1d_same_backward<F: Scalar>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    grad_out: &Tensor<F>,
    valid_len: usize,
) -> Result<Conv1dGrads<F>, TensorError> {
    let (len, d_in, width, n_f) = check_conv_shapes(input, filters, valid_len)?;
    if grad_out.shape() != [len, n_f] {
        return Err(mismatch("conv1d_same_backward", grad_out, input));
    }
    let left = left_pad(width);
    let x = input.data();
    let wdata = filters.data();
    let g = grad_out.data();

    let mut d_bias = vec![F::zero(); n_f];
    let mut live_rows = vec![false; len];
    for (i, grow) in g.chunks_exact(n_f).enumerate() {
        for (b, &v) in d_bias.iter_mut().zip(grow) {
            *b += v;
        }
        live_rows[i] = grow.iter().any(|&v| v != F::zero());
    }

    let mut d_input = vec![F::zero(); len * d_in];
    let mut d_filters = vec![F::zero(); width * d_in * n_f];
    for j in 0..valid_len {
        let xrow = &x[j * d_in..(j + 1) * d_in];
        for k in 0..width {
            let Some(i) = (j + left).checked_sub(k).filter(|&i| i < len) else {
                continue;
            };
            if !live_rows[i] {
                continue;
            }
            let grow = &g[i * n_f..(i + 1) * n_f];
            let base = k * d_in * n_f;
            for c in 0..d_in {
                let wrow = &wdata[base + c * n_f..base + (c + 1) * n_f];
                let dwrow = &mut d_filters[base + c * n_f..base + (c + 1) * n_f];
                let xv = xrow[c];
                let mut acc = F::zero();
                for f in 0..n_f {
                    acc += wrow[f] * grow[f];
                    dwrow[f] += xv * grow[f];
                }
                d_input[j * d_in + c] += acc;
            }
        }
    }

    Ok(Conv1dGrads {
        input: Tensor::new(vec![len, d_in], d_input)?,
        filters: Tensor::new(vec![width, d_in, n_f], d_filters)?,
        bias: Tensor::new(vec![n_f], d_bias)?,
    })
}

/// Selected rows of a piecewise max pooling, needed to route gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolArgmax {
    rows: usize,
    n_filters: usize,
    /// Row chosen for output slot `f * 3 + s`, `None` for an empty segment.
    argmax: Vec<Option<usize>>,
}

impl PoolArgmax {
    pub fn selected(&self) -> &[Option<usize>] {
        &self.argmax
    }
}

/// Max pooling over the three segments cut by two entity positions.
///
/// With `a = min(p1, p2)` and `b = max(p1, p2)` the segments are rows
/// `0..=a`, `a+1..=b` and `b+1..real_length`. Output slot `f * 3 + s` holds
/// the maximum of filter `f` over segment `s`; an empty segment yields 0.
/// Rows at or beyond `real_length` never take part. Ties go to the first row.
pub fn piecewise_max_pool<F: Scalar>(
    features: &Tensor<F>,
    p1: usize,
    p2: usize,
    real_length: usize,
) -> Result<(Tensor<F>, PoolArgmax), TensorError> {
    expect_rank(features, 2, "piecewise_max_pool")?;
    let (rows, n_f) = (features.shape()[0], features.shape()[1]);
    let invalid = |message: String| TensorError::Invalid {
        op: "piecewise_max_pool",
        message,
    };
    if p1 == p2 {
        return Err(invalid(format!("entity positions coincide ({p1})")));
    }
    if real_length > rows {
        return Err(invalid(format!(
            "real length {real_length} exceeds {rows} rows"
        )));
    }
    let (a, b) = (p1.min(p2), p1.max(p2));
    if b >= real_length {
        return Err(invalid(format!(
            "position {b} is outside the real length {real_length}"
        )));
    }

    let segments = [0..a + 1, a + 1..b + 1, b + 1..real_length];
    let data = features.data();
    let mut out = vec![F::zero(); 3 * n_f];
    let mut argmax = vec![None; 3 * n_f];
    for f in 0..n_f {
        for (s, seg) in segments.iter().enumerate() {
            let mut best: Option<(usize, F)> = None;
            for r in seg.clone() {
                let v = data[r * n_f + f];
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((r, v));
                }
            }
            if let Some((r, v)) = best {
                out[f * 3 + s] = v;
                argmax[f * 3 + s] = Some(r);
            }
        }
    }
    Ok((
        Tensor::new(vec![3 * n_f], out)?,
        PoolArgmax {
            rows,
            n_filters: n_f,
            argmax,
        },
    ))
}

/// Routes each pooled gradient to the row that produced the maximum.
pub fn piecewise_max_pool_backward<F: Scalar>(
    argmax: &PoolArgmax,
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    if grad_out.len() != argmax.argmax.len() {
        return Err(TensorError::Invalid {
            op: "piecewise_max_pool_backward",
            message: format!(
                "expected {} gradients, got {}",
                argmax.argmax.len(),
                grad_out.len()
            ),
        });
    }
    let mut d = vec![F::zero(); argmax.rows * argmax.n_filters];
    for (slot, (&row, &g)) in argmax.argmax.iter().zip(grad_out.data()).enumerate() {
        if let Some(r) = row {
            d[r * argmax.n_filters + slot / 3] += g;
        }
    }
    Tensor::new(vec![argmax.rows, argmax.n_filters], d)
}

/// Concatenates along `axis`; all other dimensions must agree.
pub fn concat<F: Scalar>(tensors: &[&Tensor<F>], axis: usize) -> Result<Tensor<F>, TensorError> {
    let first = tensors.first().ok_or(TensorError::Invalid {
        op: "concat",
        message: "nothing to concatenate".into(),
    })?;
    let rank = first.shape().len();
    if axis >= rank {
        return Err(TensorError::Invalid {
            op: "concat",
            message: format!("axis {axis} out of range for rank {rank}"),
        });
    }
    for t in &tensors[1..] {
        let same = t.shape().len() == rank
            && t.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !same {
            return Err(mismatch("concat", first, t));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inners: Vec<usize> = tensors
        .iter()
        .map(|t| t.shape()[axis..].iter().product())
        .collect();
    let mut data = Vec::with_capacity(tensors.iter().map(|t| t.len()).sum());
    for o in 0..outer {
        for (t, &inner) in tensors.iter().zip(&inners) {
            data.extend_from_slice(&t.data()[o * inner..(o + 1) * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = tensors.iter().map(|t| t.shape()[axis]).sum();
    Tensor::new(shape, data)
}

/// Splits an upstream gradient back into the concatenated parts.
pub fn concat_backward<F: Scalar>(
    shapes: &[Vec<usize>],
    axis: usize,
    grad: &Tensor<F>,
) -> Result<Vec<Tensor<F>>, TensorError> {
    let outer: usize = grad.shape()[..axis].iter().product();
    let inners: Vec<usize> = shapes.iter().map(|s| s[axis..].iter().product()).collect();
    if outer * inners.iter().sum::<usize>() != grad.len() {
        return Err(TensorError::Invalid {
            op: "concat_backward",
            message: format!("parts {shapes:?} do not tile gradient {:?}", grad.shape()),
        });
    }
    let mut parts: Vec<Vec<F>> = inners
        .iter()
        .map(|&i| Vec::with_capacity(outer * i))
        .collect();
    let g = grad.data();
    let mut pos = 0;
    for _ in 0..outer {
        for (part, &inner) in parts.iter_mut().zip(&inners) {
            part.extend_from_slice(&g[pos..pos + inner]);
            pos += inner;
        }
    }
    parts
        .into_iter()
        .zip(shapes)
        .map(|(data, shape)| Tensor::new(shape.clone(), data))
        .collect()
}

/// `input · weight + bias` for a vector input.
pub fn affine<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    expect_rank(input, 1, "affine")?;
    expect_rank(weight, 2, "affine")?;
    let (d, k) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != d {
        return Err(mismatch("affine", input, weight));
    }
    if bias.shape() != [k] {
        return Err(mismatch("affine", bias, weight));
    }
    let mut out = bias.data().to_vec();
    for (i, &x) in input.data().iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(weight.row(i)) {
            *o += x * w;
        }
    }
    Tensor::new(vec![k], out)
}

pub struct AffineGrads<F> {
    pub input: Tensor<F>,
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

pub fn affine_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<AffineGrads<F>, TensorError> {
    let (d, k) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != d || grad_out.len() != k {
        return Err(mismatch("affine_backward", grad_out, weight));
    }
    let g = grad_out.data();
    let mut d_input = Vec::with_capacity(d);
    let mut d_weight = Vec::with_capacity(d * k);
    for (i, &x) in input.data().iter().enumerate() {
        d_input.push(weight.row(i).iter().zip(g).map(|(&w, &gv)| w * gv).sum());
        d_weight.extend(g.iter().map(|&gv| x * gv));
    }
    Ok(AffineGrads {
        input: Tensor::new(vec![d], d_input)?,
        weight: Tensor::new(vec![d, k], d_weight)?,
        bias: Tensor::new(vec![k], g.to_vec())?,
    })
}

pub fn tanh_activation<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    Tensor::new(
        x.shape().to_vec(),
        x.data().iter().map(|v| v.tanh()).collect(),
    )
    .expect("same shape")
}

/// Backward of tanh given its output `y`.
pub fn tanh_backward<F: Scalar>(
    y: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    if y.shape() != grad_out.shape() {
        return Err(mismatch("tanh_backward", y, grad_out));
    }
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&yv, &g)| g * (F::one() - yv * yv))
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-entry multipliers of an inverted-dropout pass; `None` means identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<F> {
    scale: Option<Vec<F>>,
}

/// Inverted dropout: in training each entry is kept with probability
/// `keep_prob` and scaled by `1 / keep_prob`; inference is the identity.
pub fn dropout<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    keep_prob: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<F>, DropoutMask<F>), TensorError> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(TensorError::Invalid {
            op: "dropout",
            message: format!("keep probability must lie in (0, 1], got {keep_prob}"),
        });
    }
    if mode == Mode::Infer || keep_prob == 1.0 {
        return Ok((x.clone(), DropoutMask { scale: None }));
    }
    let kept = F::from_f64_lossy(1.0 / keep_prob);
    let scale: Vec<F> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < keep_prob {
                kept
            } else {
                F::zero()
            }
        })
        .collect();
    let data = x.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
    Ok((
        Tensor::new(x.shape().to_vec(), data)?,
        DropoutMask { scale: Some(scale) },
    ))
}

pub fn dropout_backward<F: Scalar>(
    mask: &DropoutMask<F>,
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    match &mask.scale {
        None => Ok(grad_out.clone()),
        Some(scale) if scale.len() == grad_out.len() => Tensor::new(
            grad_out.shape().to_vec(),
            grad_out
                .data()
                .iter()
                .zip(scale)
                .map(|(&g, &s)| g * s)
                .collect(),
        ),
        Some(scale) => Err(TensorError::Invalid {
            op: "dropout_backward",
            message: format!(
                "mask has {} entries, gradient {}",
                scale.len(),
                grad_out.len()
            ),
        }),
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    label: usize,
) -> Result<(F, Tensor<F>), TensorError> {
    expect_rank(logits, 1, "softmax_cross_entropy")?;
    let z = logits.data();
    if label >= z.len() {
        return Err(TensorError::Invalid {
            op: "softmax_cross_entropy",
            message: format!("label {label} out of range for {} classes", z.len()),
        });
    }
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let sum_exp: F = z.iter().map(|&v| (v - max).exp()).sum();
    let log_norm = max + sum_exp.ln();
    let loss = log_norm - z[label];
    if !loss.is_finite() {
        return Err(TensorError::NonFinite {
            op: "softmax_cross_entropy",
        });
    }
    let mut grad = softmax(z);
    grad[label] -= F::one();
    Ok((loss, Tensor::new(vec![z.len()], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut plus = x.clone();
                plus.data_mut()[i] += h;
                let mut minus = x.clone();
                minus.data_mut()[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let err = (a - n).abs() / n.abs().max(1.0);
            assert!(err < tol, "entry {i}: analytic {a} numeric {n}");
        }
    }

    /// Weighted sum used as a scalar objective: Σ w_i * t_i.
    fn project(t: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
        t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (l, d) = (x.shape()[0], x.shape()[1]);
        let (k, _, nf) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let left = (k - 1) / 2;
        let mut out = vec![0.0; l * nf];
        for i in 0..l {
            for f in 0..nf {
                let mut acc = b.data()[f];
                for t in 0..k {
                    let src = i as isize + t as isize - left as isize;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    for c in 0..d {
                        acc += x.data()[src as usize * d + c] * w.data()[(t * d + c) * nf + f];
                    }
                }
                out[i * nf + f] = acc;
            }
        }
        out
    }

    #[test]
    fn conv_keeps_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for width in [3, 4, 5] {
            let x = random(&[10, 3], &mut rng);
            let w = random(&[width, 3, 2], &mut rng);
            let b = random(&[2], &mut rng);
            assert_eq!(conv1d_same(&x, &w, &b).unwrap().shape(), &[10, 2]);
        }
    }

    #[test]
    fn conv_zero_filters_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[7, 3], &mut rng);
        let w = Tensor::zeros(&[3, 3, 2]);
        let b = Tensor::vector(vec![0.5, -2.0]);
        let out = conv1d_same(&x, &w, &b).unwrap();
        for row in out.data().chunks(2) {
            assert_eq!(row, &[0.5, -2.0]);
        }
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[6, 2], &mut rng);
        let w = random(&[3, 2, 1], &mut rng);
        let b = random(&[1], &mut rng);
        let out = conv1d_same(&x, &w, &b).unwrap();
        for (a, o) in out.data().iter().zip(conv_oracle(&x, &w, &b)) {
            assert!((a - o).abs() < 1e-6);
        }
        for width in [4, 5] {
            let x = random(&[9, 3], &mut rng);
            let w = random(&[width, 3, 4], &mut rng);
            let b = random(&[4], &mut rng);
            let out = conv1d_same(&x, &w, &b).unwrap();
            for (a, o) in out.data().iter().zip(conv_oracle(&x, &w, &b)) {
                assert!((a - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_four_pads_one_left_two_right() {
        let x = Tensor::new(vec![3, 1], vec![1.0, 10.0, 100.0]).unwrap();
        let w = Tensor::new(vec![4, 1, 1], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let out = conv1d_same(&x, &w, &b).unwrap();
        // row 0 sees [pad, x0, x1, x2]; row 2 sees [x1, x2, pad, pad]
        assert_eq!(out.data(), &[111.0, 111.0, 110.0]);
    }

    #[test]
    fn conv_shift_equivariance_inside_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let core = random(&[4, 2], &mut rng);
        let w = random(&[3, 2, 2], &mut rng);
        let b = random(&[2], &mut rng);
        // core placed at rows 2..6 and 3..7 of a zero-padded length-9 input
        let place = |at: usize| {
            let mut t = Tensor::<f64>::zeros(&[9, 2]);
            t.data_mut()[at * 2..at * 2 + 8].copy_from_slice(core.data());
            t
        };
        let y0 = conv1d_same(&place(2), &w, &b).unwrap();
        let y1 = conv1d_same(&place(3), &w, &b).unwrap();
        for i in 1..7 {
            assert_eq!(y0.row(i), y1.row(i + 1));
        }
    }

    #[test]
    fn conv_shape_errors_name_both_shapes() {
        let x = Tensor::<f64>::zeros(&[5, 3]);
        let w = Tensor::<f64>::zeros(&[3, 4, 2]);
        let err = conv1d_same(&x, &w, &Tensor::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[5, 3]") && msg.contains("[3, 4, 2]"), "{msg}");
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (width, valid) in [(3, 6), (4, 4), (5, 6)] {
            let x = random(&[6, 3], &mut rng);
            let w = random(&[width, 3, 2], &mut rng);
            let b = random(&[2], &mut rng);
            let probe = random(&[6, 2], &mut rng);
            let out = conv1d_same_masked(&x, &w, &b, valid).unwrap();
            let _ = out;
            let grads = conv1d_same_backward(&x, &w, &probe, valid).unwrap();
            let fx = numeric_grad(&x, |x| {
                project(&conv1d_same_masked(x, &w, &b, valid).unwrap(), &probe)
            });
            let fw = numeric_grad(&w, |w| {
                project(&conv1d_same_masked(&x, w, &b, valid).unwrap(), &probe)
            });
            let fb = numeric_grad(&b, |b| {
                project(&conv1d_same_masked(&x, &w, b, valid).unwrap(), &probe)
            });
            assert_grad_close(grads.input.data(), &fx, 1e-4);
            assert_grad_close(grads.filters.data(), &fw, 1e-4);
            assert_grad_close(grads.bias.data(), &fb, 1e-4);
        }
    }

    #[test]
    fn pooling_example() {
        let f = Tensor::new(vec![7, 1], vec![1.0, 3.0, 2.0, 5.0, 0.0, 4.0, 1.0]).unwrap();
        let (out, _) = piecewise_max_pool(&f, 2, 4, 7).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0, 4.0]);
        let (swapped, _) = piecewise_max_pool(&f, 4, 2, 7).unwrap();
        assert_eq!(swapped.data(), out.data());
    }

    #[test]
    fn pooling_segment_edges() {
        let f = Tensor::new(vec![5, 1], vec![-1.0, -2.0, -3.0, -4.0, 9.0]).unwrap();
        // second entity is the last real row: third segment empty -> 0
        let (out, arg) = piecewise_max_pool(&f, 1, 3, 4).unwrap();
        assert_eq!(out.data(), &[-1.0, -3.0, 0.0]);
        assert_eq!(arg.selected()[2], None);
        // adjacent entities: the middle segment is the second entity row alone
        let (out, _) = piecewise_max_pool(&f, 1, 2, 4).unwrap();
        assert_eq!(out.data(), &[-1.0, -3.0, -4.0]);
    }

    #[test]
    fn pooling_errors() {
        let f = Tensor::<f64>::zeros(&[5, 2]);
        assert!(piecewise_max_pool(&f, 2, 2, 5).is_err());
        assert!(piecewise_max_pool(&f, 1, 4, 4).is_err());
        assert!(piecewise_max_pool(&f, 1, 3, 6).is_err());
    }

    #[test]
    fn pooling_ties_pick_first_row() {
        let f = Tensor::new(vec![4, 1], vec![2.0, 2.0, 1.0, 1.0]).unwrap();
        let (_, arg) = piecewise_max_pool(&f, 1, 2, 4).unwrap();
        assert_eq!(arg.selected(), &[Some(0), Some(2), Some(3)]);
    }

    #[test]
    fn pooling_ignores_padding_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random(&[10, 3], &mut rng);
        let mut g = f.clone();
        for v in &mut g.data_mut()[6 * 3..] {
            *v = 100.0;
        }
        assert_eq!(
            piecewise_max_pool(&f, 1, 4, 6).unwrap().0,
            piecewise_max_pool(&g, 1, 4, 6).unwrap().0
        );
    }

    #[test]
    fn pooling_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random(&[8, 3], &mut rng);
        let probe = random(&[9], &mut rng);
        let (_, arg) = piecewise_max_pool(&f, 2, 5, 8).unwrap();
        let analytic = piecewise_max_pool_backward(&arg, &probe).unwrap();
        let numeric = numeric_grad(&f, |f| {
            project(&piecewise_max_pool(f, 2, 5, 8).unwrap().0, &probe)
        });
        assert_grad_close(analytic.data(), &numeric, 1e-4);
    }

    #[test]
    fn concat_shapes_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pooled = random(&[12], &mut rng);
        let dir = random(&[5], &mut rng);
        let out = concat(&[&pooled, &dir], 0).unwrap();
        assert_eq!(out.shape(), &[17]);
        assert_eq!(concat(&[&pooled], 0).unwrap(), pooled);

        let a = random(&[3, 2], &mut rng);
        let b = random(&[3, 4], &mut rng);
        let probe = random(&[3, 6], &mut rng);
        let parts = concat_backward(&[vec![3, 2], vec![3, 4]], 1, &probe).unwrap();
        let na = numeric_grad(&a, |a| project(&concat(&[a, &b], 1).unwrap(), &probe));
        let nb = numeric_grad(&b, |b| project(&concat(&[&a, b], 1).unwrap(), &probe));
        assert_grad_close(parts[0].data(), &na, 1e-4);
        assert_grad_close(parts[1].data(), &nb, 1e-4);

        let c = random(&[3, 3], &mut rng);
        assert!(concat(&[&a, &c], 0).is_err());
    }

    #[test]
    fn affine_identity_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[3], &mut rng);
        let eye = Tensor::from_fn(&[3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        assert_eq!(
            affine(&x, &eye, &Tensor::zeros(&[3])).unwrap().data(),
            x.data()
        );

        let x = random(&[4], &mut rng);
        let w = random(&[4, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let out = affine(&x, &w, &b).unwrap();
        for j in 0..3 {
            let mut acc = b.data()[j];
            for i in 0..4 {
                acc += x.data()[i] * w.data()[i * 3 + j];
            }
            assert!((out.data()[j] - acc).abs() < 1e-6);
        }

        let probe = random(&[3], &mut rng);
        let grads = affine_backward(&x, &w, &probe).unwrap();
        assert_grad_close(
            grads.input.data(),
            &numeric_grad(&x, |x| project(&affine(x, &w, &b).unwrap(), &probe)),
            1e-4,
        );
        assert_grad_close(
            grads.weight.data(),
            &numeric_grad(&w, |w| project(&affine(&x, w, &b).unwrap(), &probe)),
            1e-4,
        );
        assert_grad_close(
            grads.bias.data(),
            &numeric_grad(&b, |b| project(&affine(&x, &w, b).unwrap(), &probe)),
            1e-4,
        );
    }

    #[test]
    fn tanh_values_and_gradient() {
        let zero = Tensor::vector(vec![0.0f64]);
        let y = tanh_activation(&zero);
        assert_eq!(y.data(), &[0.0]);
        assert_eq!(
            tanh_backward(&y, &Tensor::vector(vec![1.0]))
                .unwrap()
                .data(),
            &[1.0]
        );

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(&[6], &mut rng);
        let probe = random(&[6], &mut rng);
        let analytic = tanh_backward(&tanh_activation(&x), &probe).unwrap();
        let numeric = numeric_grad(&x, |x| project(&tanh_activation(x), &probe));
        assert_grad_close(analytic.data(), &numeric, 1e-4);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[20], &mut rng);
        for mode in [Mode::Train, Mode::Infer] {
            assert_eq!(dropout(&x, 1.0, mode, &mut rng).unwrap().0, x);
        }
        assert_eq!(dropout(&x, 0.3, Mode::Infer, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 0.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.5, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, 1.5, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ones = Tensor::<f64>::filled(&[16], 1.0);
        let copies = 10_000;
        let mut total = 0.0;
        for _ in 0..copies {
            total += dropout(&ones, 0.5, Mode::Train, &mut rng)
                .unwrap()
                .0
                .data()
                .iter()
                .sum::<f64>();
        }
        let mean = total / (copies * 16) as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn dropout_gradient_uses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(&[30], &mut rng);
        let (y, mask) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let ones = Tensor::filled(&[30], 1.0);
        let g = dropout_backward(&mask, &ones).unwrap();
        for ((xv, yv), gv) in x.data().iter().zip(y.data()).zip(g.data()) {
            assert!((yv - xv * gv).abs() < 1e-15);
            assert!(*gv == 0.0 || *gv == 2.0);
        }
    }

    #[test]
    fn cross_entropy_values() {
        let (loss, grad) = softmax_cross_entropy(&Tensor::<f64>::filled(&[6], 0.3), 2).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        assert!((loss - 1.791759).abs() < 1e-6);
        assert!(grad.data().iter().sum::<f64>().abs() < 1e-12);

        let (loss, grad) = softmax_cross_entropy(&Tensor::vector(vec![1000.0f64, 0.0]), 0).unwrap();
        assert!(loss.abs() < 1e-12 && loss >= 0.0);
        assert!(grad.data().iter().all(|g| g.is_finite()));
        let (loss32, _) = softmax_cross_entropy(&Tensor::vector(vec![1000.0f32, 0.0]), 0).unwrap();
        assert!(loss32.is_finite());

        assert!(softmax_cross_entropy(&Tensor::vector(vec![0.0f64, 1.0]), 2).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for label in 0..6 {
            let z = random(&[6], &mut rng);
            let (_, grad) = softmax_cross_entropy(&z, label).unwrap();
            let numeric = numeric_grad(&z, |z| softmax_cross_entropy(z, label).unwrap().0);
            assert_grad_close(grad.data(), &numeric, 1e-4);
            assert!(grad.data().iter().sum::<f64>().abs() < 1e-10);
        }
    }
}
