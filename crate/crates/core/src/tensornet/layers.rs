//! Layer kernels. Each forward has a matching backward that takes the
//! gradient of the loss with respect to the layer output.

use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Unrolls every `k×k` input patch into a column: row `(ci, ky, kx)` of the
/// result holds the input values that tap meets at each output position.
fn im2col<T: Scalar>(x: &[T], ci_n: usize, ih: usize, iw: usize, k: usize) -> Vec<T> {
    let (oh, ow) = (ih - k + 1, iw - k + 1);
    let n = oh * ow;
    let mut col = vec![T::zero(); ci_n * k * k * n];
    for ci in 0..ci_n {
        let plane = &x[ci * ih * iw..(ci + 1) * ih * iw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..oh {
                    row[oy * ow..(oy + 1) * ow].copy_from_slice(&plane[(oy + ky) * iw + kx..][..ow]);
                }
            }
        }
    }
    col
}

/// `dst += Σ w[j] * rows[j]` over four rows at a time.
#[inline]
fn axpy_rows<T: Scalar>(dst: &mut [T], w: &[T], rows: &[T], n: usize) {
    let mut chunks = w.chunks_exact(4);
    let mut r = 0;
    for wc in &mut chunks {
        let (a, b, c, d) =
            (&rows[r * n..][..n], &rows[(r + 1) * n..][..n], &rows[(r + 2) * n..][..n], &rows[(r + 3) * n..][..n]);
        for i in 0..n {
            dst[i] = dst[i] + ((wc[0] * a[i] + wc[1] * b[i]) + (wc[2] * c[i] + wc[3] * d[i]));
        }
        r += 4;
    }
    for &wv in chunks.remainder() {
        axpy(dst, wv, &rows[r * n..][..n]);
        r += 1;
    }
}

/// Valid (unpadded) stride-1 correlation. `w` is `(out, in, k, k)`, `b` is
/// `(out)`.
pub fn conv_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ci_n, ih, iw) = x.dims3()?;
    let (co_n, k) = match w.shape()[..] {
        [o, i, k1, k2] if i == ci_n && k1 == k2 => (o, k1),
        _ => return Err(Error::shape(format!("conv weights {:?} do not fit input {:?}", w.shape(), x.shape()))),
    };
    if b.shape() != [co_n] {
        return Err(Error::shape(format!("conv bias {:?} for {co_n} output channels", b.shape())));
    }
    if ih < k || iw < k {
        return Err(Error::shape(format!("{ih}x{iw} input is smaller than a {k}x{k} kernel")));
    }
    let (oh, ow) = (ih - k + 1, iw - k + 1);
    let n = oh * ow;
    let kk = ci_n * k * k;
    let col = im2col(x.data(), ci_n, ih, iw, k);
    let mut y = Tensor::zeros(&[co_n, oh, ow]);
    for (co, out) in y.data_mut().chunks_exact_mut(n).enumerate() {
        out.fill(b.data()[co]);
        axpy_rows(out, &w.data()[co * kk..(co + 1) * kk], &col, n);
    }
    Ok(y)
}

/// Accumulates parameter gradients into `gw`/`gb` and, when requested,
/// writes the input gradient into `gx`.
pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    gw: &mut [T],
    gb: &mut [T],
    gx: Option<&mut Tensor<T>>,
) -> Result<()> {
    let (ci_n, ih, iw) = x.dims3()?;
    let (co_n, oh, ow) = gy.dims3()?;
    if oh > ih || ow > iw || ih - oh != iw - ow {
        return Err(Error::shape("conv backward shapes disagree"));
    }
    let k = ih - oh + 1;
    if w.shape() != [co_n, ci_n, k, k] || gw.len() != w.len() || gb.len() != co_n {
        return Err(Error::shape("conv backward shapes disagree"));
    }
    let n = oh * ow;
    let kk = ci_n * k * k;
    let col = im2col(x.data(), ci_n, ih, iw, k);
    let (wd, gyd) = (w.data(), gy.data());
    for co in 0..co_n {
        let g = &gyd[co * n..(co + 1) * n];
        gb[co] = gb[co] + g.iter().copied().sum::<T>();
        for (r, gwv) in gw[co * kk..(co + 1) * kk].iter_mut().enumerate() {
            *gwv = *gwv + dot(g, &col[r * n..(r + 1) * n]);
        }
    }
    if let Some(gx) = gx {
        if gx.shape() != x.shape() {
            return Err(Error::shape("conv input gradient has the wrong shape"));
        }
        // column gradient, then fold the columns back onto the input
        let mut gcol = vec![T::zero(); kk * n];
        let mut wt = vec![T::zero(); co_n];
        for r in 0..kk {
            for (co, v) in wt.iter_mut().enumerate() {
                *v = wd[co * kk + r];
            }
            axpy_rows(&mut gcol[r * n..(r + 1) * n], &wt, gyd, n);
        }
        gx.fill_zero();
        let gxd = gx.data_mut();
        for ci in 0..ci_n {
            let plane = &mut gxd[ci * ih * iw..(ci + 1) * ih * iw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &gcol[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let dst = &mut plane[(oy + ky) * iw + kx..][..ow];
                        for (d, &s) in dst.iter_mut().zip(&row[oy * ow..(oy + 1) * ow]) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// `y = x` for `x > 0`, `a·x` otherwise.
pub fn leaky_relu<T: Scalar>(x: &mut [T], slope: T) {
    for v in x {
        if *v <= T::zero() {
            *v = *v * slope;
        }
    }
}

/// Backward through leaky ReLU given its output. The slope `a` is used at 0,
/// which is also where the output is 0.
pub fn leaky_relu_backward<T: Scalar>(y: &[T], g: &mut [T], slope: T) {
    for (gv, &yv) in g.iter_mut().zip(y) {
        if yv <= T::zero() {
            *gv = *gv * slope;
        }
    }
}

/// Inverted dropout mask: 0 with probability `p`, `1/(1-p)` otherwise.
pub fn dropout_mask<T: Scalar>(len: usize, p: f64, rng: &mut Stream) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.unit() < p { T::zero() } else { keep }).collect()
}

/// Multiplies by the mask; used for both directions.
pub fn apply_mask<T: Scalar>(x: &mut [T], mask: &[T]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v = *v * m;
    }
}

/// Max over one 2×2 window whose top-left corner is `(r, c)`. Ties go to
/// the first element in scan order.
#[inline]
fn window_max<T: Scalar>(plane: &[T], width: usize, r: usize, c: usize) -> (T, u32) {
    let mut best_idx = r * width + c;
    let mut best = plane[best_idx];
    for idx in [r * width + c + 1, (r + 1) * width + c, (r + 1) * width + c + 1] {
        if plane[idx] > best {
            best = plane[idx];
            best_idx = idx;
        }
    }
    (best, best_idx as u32)
}

/// 2×2 max pooling over the given window starts. Returns the output and,
/// for every output element, the flat input index that won.
pub fn pool_forward<T: Scalar>(x: &Tensor<T>, rows: &[usize], cols: &[usize]) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c_n, h, w) = x.dims3()?;
    if rows.iter().any(|&r| r + 1 >= h) || cols.iter().any(|&c| c + 1 >= w) {
        return Err(Error::shape(format!("pooling windows exceed the {h}x{w} input")));
    }
    let (oh, ow) = (rows.len(), cols.len());
    let mut y = Tensor::zeros(&[c_n, oh, ow]);
    let mut argmax = vec![0u32; c_n * oh * ow];
    for ch in 0..c_n {
        let plane = &x.data()[ch * h * w..(ch + 1) * h * w];
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                let (v, idx) = window_max(plane, w, r, c);
                let o = (ch * oh + i) * ow + j;
                y.data_mut()[o] = v;
                argmax[o] = (ch * h * w) as u32 + idx;
            }
        }
    }
    Ok((y, argmax))
}

/// Routes output gradients to the winning inputs; overlapping windows add up.
pub fn pool_backward<T: Scalar>(gy: &[T], argmax: &[u32], gx: &mut Tensor<T>) {
    gx.fill_zero();
    let gxd = gx.data_mut();
    for (&g, &idx) in gy.iter().zip(argmax) {
        gxd[idx as usize] = gxd[idx as usize] + g;
    }
}

/// Disjoint stride-2 window starts for an even extent.
pub fn mp2_starts(n: usize) -> Result<Vec<usize>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::shape(format!("2x2 max pooling needs an even extent, got {n}")));
    }
    Ok((0..n / 2).map(|i| 2 * i).collect())
}

pub fn mp2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (_, h, w) = x.dims3()?;
    pool_forward(x, &mp2_starts(h)?, &mp2_starts(w)?)
}

/// `logits = w·x + b` with `w` shaped `(outputs, inputs)`.
pub fn linear_forward<T: Scalar>(x: &[T], w: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<T>> {
    let (outs, ins) = match w.shape()[..] {
        [o, i] if i == x.len() && b.shape() == [o] => (o, i),
        _ => return Err(Error::shape(format!("linear weights {:?} for {} inputs", w.shape(), x.len()))),
    };
    Ok((0..outs).map(|o| dot(&w.data()[o * ins..(o + 1) * ins], x) + b.data()[o]).collect())
}

pub fn linear_backward<T: Scalar>(x: &[T], w: &Tensor<T>, gy: &[T], gw: &mut [T], gb: &mut [T], gx: Option<&mut [T]>) {
    let ins = x.len();
    for (o, &g) in gy.iter().enumerate() {
        gb[o] = gb[o] + g;
        axpy(&mut gw[o * ins..(o + 1) * ins], g, x);
    }
    if let Some(gx) = gx {
        gx.fill(T::zero());
        for (o, &g) in gy.iter().enumerate() {
            axpy(gx, g, &w.data()[o * ins..(o + 1) * ins]);
        }
    }
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`. Returns the loss, the
/// probabilities and the gradient with respect to the logits.
pub fn softmax_xent<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!("label {label} out of range for {} classes", logits.len())));
    }
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    let loss = log_total - (logits[label] - max);
    let mut grad = probs.clone();
    grad[label] = grad[label] - T::one();
    Ok((loss, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;

    fn t3(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    #[test]
    fn conv_of_ones_sums() {
        let x = t3(1, 3, 3, vec![1.0; 9]);
        let w = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t3(1, 3, 3, (1..=9).map(f64::from).collect());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = Tensor::new(vec![1, 1, 3, 3], k).unwrap();
        let y = conv_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_shape_errors() {
        let x = t3(2, 3, 3, vec![0.0; 18]);
        let w = Tensor::new(vec![1, 1, 3, 3], vec![0.0; 9]).unwrap();
        assert!(conv_forward(&x, &w, &Tensor::zeros(&[1])).is_err());
        let small = t3(1, 2, 2, vec![0.0; 4]);
        assert!(conv_forward(&small, &w, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn leaky_values() {
        let mut v = vec![2.0f64, -3.0, 0.0];
        leaky_relu(&mut v, 0.333);
        assert_eq!(v[0], 2.0);
        assert!((v[1] + 0.999).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
        let mut g = vec![1.0; 3];
        leaky_relu_backward(&v, &mut g, 0.333);
        assert_eq!(g, vec![1.0, 0.333, 0.333]);
    }

    #[test]
    fn dropout_zero_rate_is_identity_and_mean_preserved() {
        let mut rng = Stream::new(1, Domain::Test, &[]);
        let m: Vec<f64> = dropout_mask(100, 0.0, &mut rng);
        assert!(m.iter().all(|&v| v == 1.0));
        let copies = 10_000;
        let mut total = 0.0;
        for _ in 0..copies {
            let mut x = vec![1.0f64; 16];
            apply_mask(&mut x, &dropout_mask(16, 0.4, &mut rng));
            total += x.iter().sum::<f64>() / 16.0;
        }
        assert!((total / copies as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn mp2_maxima_and_ties() {
        let pattern = [1.0, 2.0, 3.0, 4.0];
        let mut data = vec![0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                data[r * 4 + c] = pattern[(r % 2) * 2 + c % 2] + (r / 2 * 2 + c / 2) as f64 * 10.0;
            }
        }
        let (y, _) = mp2_forward(&t3(1, 4, 4, data)).unwrap();
        assert_eq!(y.data(), &[4.0, 14.0, 24.0, 34.0]);

        let x = t3(1, 4, 4, vec![5.0; 16]);
        let (_, argmax) = mp2_forward(&x).unwrap();
        let mut gx = Tensor::zeros(&[1, 4, 4]);
        pool_backward(&[1.0; 4], &argmax, &mut gx);
        let hits: Vec<usize> = gx.data().iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
        assert_eq!(hits, vec![0, 2, 8, 10]);
    }

    #[test]
    fn mp2_rejects_odd() {
        assert!(mp2_forward(&t3(1, 5, 4, vec![0.0; 20])).is_err());
    }

    #[test]
    fn softmax_equal_logits() {
        let (loss, p, _) = softmax_xent(&[0.7f64, 0.7], 0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3f64, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.25).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(softmax_xent(&z, 4).is_err());
    }
}
