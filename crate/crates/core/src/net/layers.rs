//! Layer kernels with hand-written gradients.
//!
//! Feature maps are single samples laid out height x width x channels.
//! Convolutions are 3x3, stride 1, zero "same" padding; their weights are a
//! (9 * cin) x cout matrix whose rows run over (ky, kx, cin).

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Spatial layout of one feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Dims { h, w, c }
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn of<T: Scalar>(t: &Tensor<T>) -> Result<Dims> {
        match *t.shape() {
            [h, w, c] => Ok(Dims { h, w, c }),
            [1, h, w, c] => Ok(Dims { h, w, c }),
            ref s => Err(Error::Shape(format!("expected a height x width x channels map, got {s:?}"))),
        }
    }
}

/// Unfolds 3x3 neighbourhoods into rows of a (h * w) x (9 * c) matrix.
pub fn im2col<T: Scalar>(x: &[T], d: Dims) -> Vec<T> {
    let k = 9 * d.c;
    let mut cols = vec![T::zero(); d.h * d.w * k];
    for y in 0..d.h {
        for xx in 0..d.w {
            let row = &mut cols[(y * d.w + xx) * k..(y * d.w + xx + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= d.w as isize {
                        continue;
                    }
                    let src = (sy as usize * d.w + sx as usize) * d.c;
                    let dst = (ky * 3 + kx) * d.c;
                    row[dst..dst + d.c].copy_from_slice(&x[src..src + d.c]);
                }
            }
        }
    }
    cols
}

/// Folds column gradients back onto the input map (adjoint of [`im2col`]).
fn col2im<T: Scalar>(cols: &[T], d: Dims) -> Vec<T> {
    let k = 9 * d.c;
    let mut x = vec![T::zero(); d.len()];
    for y in 0..d.h {
        for xx in 0..d.w {
            let row = &cols[(y * d.w + xx) * k..(y * d.w + xx + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= d.w as isize {
                        continue;
                    }
                    let dst = (sy as usize * d.w + sx as usize) * d.c;
                    let src = (ky * 3 + kx) * d.c;
                    for (a, &b) in x[dst..dst + d.c].iter_mut().zip(&row[src..src + d.c]) {
                        *a = *a + b;
                    }
                }
            }
        }
    }
    x
}

pub fn conv3x3_forward<T: Scalar>(x: &[T], d: Dims, weight: &[T], bias: &[T], cout: usize) -> Vec<T> {
    let hw = d.h * d.w;
    let k = 9 * d.c;
    debug_assert_eq!(weight.len(), k * cout);
    let mut out = Vec::with_capacity(hw * cout);
    for _ in 0..hw {
        out.extend_from_slice(bias);
    }
    let cols = im2col(x, d);
    T::gemm(hw, k, cout, &cols, (k as isize, 1), weight, (cout as isize, 1), T::one(), &mut out);
    out
}

/// Gradients of one convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

/// Backward pass; `dw`/`db` are accumulated into the provided buffers.
pub fn conv3x3_backward_into<T: Scalar>(
    x: &[T],
    d: Dims,
    weight: &[T],
    cout: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let hw = d.h * d.w;
    let k = 9 * d.c;
    let cols = im2col(x, d);
    // dw += cols^T dy
    T::gemm(k, hw, cout, &cols, (1, k as isize), dy, (cout as isize, 1), T::one(), dw);
    for row in dy.chunks_exact(cout) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    if !need_dx {
        return None;
    }
    // dcols = dy w^T
    let mut dcols = cols;
    T::gemm(hw, cout, k, dy, (cout as isize, 1), weight, (1, cout as isize), T::zero(), &mut dcols);
    Some(col2im(&dcols, d))
}

fn conv_dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(Dims, usize)> {
    let d = Dims::of(x)?;
    let cout = match *w.shape() {
        [3, 3, cin, cout] if cin == d.c => cout,
        ref s => {
            return Err(Error::Shape(format!("kernel {s:?} does not fit a 3x3x{}xN convolution", d.c)));
        }
    };
    if b.shape() != [cout] {
        return Err(Error::Shape(format!("bias {:?} for {cout} output channels", b.shape())));
    }
    Ok((d, cout))
}

/// 3x3 same-padded convolution of an h x w x cin map with a 3x3xcinxcout kernel.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, cout) = conv_dims(x, w, b)?;
    Tensor::from_vec(&[d.h, d.w, cout], conv3x3_forward(x.data(), d, w.data(), b.data(), cout))
}

/// Returns (dloss/dx, dloss/dw, dloss/db) given dloss/dy.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (d, cout) = conv_dims(x, w, b)?;
    if dy.len() != d.h * d.w * cout {
        return Err(Error::Shape(format!("upstream gradient {:?}", dy.shape())));
    }
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); cout];
    let dx = conv3x3_backward_into(x.data(), d, w.data(), cout, dy.data(), &mut dw, &mut db, true)
        .expect("dx requested");
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(w.shape(), dw)?,
        Tensor::from_vec(b.shape(), db)?,
    ))
}

/// In-place Leaky-ReLU.
#[inline]
pub fn leaky_relu_inplace<T: Scalar>(x: &mut [T], slope: T) {
    for v in x {
        if *v < T::zero() {
            *v = *v * slope;
        }
    }
}

/// Multiplies `dy` by the Leaky-ReLU derivative, read off the activation's
/// output (its sign matches the input's because the slope is positive).
#[inline]
pub fn leaky_relu_backward_inplace<T: Scalar>(out: &[T], dy: &mut [T], slope: T) {
    for (g, &o) in dy.iter_mut().zip(out) {
        if o < T::zero() {
            *g = *g * slope;
        }
    }
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    let mut y = x.clone();
    leaky_relu_inplace(y.data_mut(), slope);
    y
}

pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, slope: T) -> Tensor<T> {
    let mut dx = dy.clone();
    leaky_relu_backward_inplace(x.data(), dx.data_mut(), slope);
    dx
}

/// 2x2 max pooling; returns the pooled map and, per output element, which of
/// the four window cells (row-major) held the maximum. Ties keep the first.
pub fn maxpool2_raw<T: Scalar>(x: &[T], d: Dims) -> (Vec<T>, Vec<u8>) {
    let (oh, ow) = (d.h / 2, d.w / 2);
    let mut out = Vec::with_capacity(oh * ow * d.c);
    let mut arg = Vec::with_capacity(oh * ow * d.c);
    for y in 0..oh {
        for xx in 0..ow {
            for ch in 0..d.c {
                let at = |dy: usize, dx: usize| x[((2 * y + dy) * d.w + 2 * xx + dx) * d.c + ch];
                let mut best = at(0, 0);
                let mut k = 0u8;
                for (idx, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = at(dy, dx);
                    if v > best {
                        best = v;
                        k = idx as u8 + 1;
                    }
                }
                out.push(best);
                arg.push(k);
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward_raw<T: Scalar>(dy: &[T], arg: &[u8], d: Dims) -> Vec<T> {
    let (oh, ow) = (d.h / 2, d.w / 2);
    let mut dx = vec![T::zero(); d.len()];
    for y in 0..oh {
        for xx in 0..ow {
            for ch in 0..d.c {
                let o = (y * ow + xx) * d.c + ch;
                let k = arg[o] as usize;
                let (ky, kx) = (k / 2, k % 2);
                dx[((2 * y + ky) * d.w + 2 * xx + kx) * d.c + ch] = dy[o];
            }
        }
    }
    dx
}

pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let d = Dims::of(x)?;
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::Shape(format!("cannot 2x2-pool odd spatial dims {}x{}", d.h, d.w)));
    }
    let (y, arg) = maxpool2_raw(x.data(), d);
    Ok((Tensor::from_vec(&[d.h / 2, d.w / 2, d.c], y)?, arg))
}

pub fn maxpool2_backward<T: Scalar>(x_shape: &[usize], arg: &[u8], dy: &Tensor<T>) -> Result<Tensor<T>> {
    let d = match *x_shape {
        [h, w, c] => Dims { h, w, c },
        _ => return Err(Error::Shape(format!("{x_shape:?}"))),
    };
    if dy.len() != d.len() / 4 || arg.len() != dy.len() {
        return Err(Error::Shape("pooling gradient does not match its input".into()));
    }
    Tensor::from_vec(x_shape, maxpool2_backward_raw(dy.data(), arg, d))
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_raw<T: Scalar>(x: &[T], d: Dims) -> Vec<T> {
    let (oh, ow) = (d.h * 2, d.w * 2);
    let mut out = vec![T::zero(); oh * ow * d.c];
    for y in 0..oh {
        for xx in 0..ow {
            let src = ((y / 2) * d.w + xx / 2) * d.c;
            let dst = (y * ow + xx) * d.c;
            out[dst..dst + d.c].copy_from_slice(&x[src..src + d.c]);
        }
    }
    out
}

/// Adjoint of [`upsample2_raw`]: sums each 2x2 block. `d` is the small map.
pub fn upsample2_backward_raw<T: Scalar>(dy: &[T], d: Dims) -> Vec<T> {
    let ow = d.w * 2;
    let mut dx = vec![T::zero(); d.len()];
    for y in 0..d.h * 2 {
        for xx in 0..ow {
            let src = (y * ow + xx) * d.c;
            let dst = ((y / 2) * d.w + xx / 2) * d.c;
            for (a, &b) in dx[dst..dst + d.c].iter_mut().zip(&dy[src..src + d.c]) {
                *a = *a + b;
            }
        }
    }
    dx
}

pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let d = Dims::of(x)?;
    Tensor::from_vec(&[d.h * 2, d.w * 2, d.c], upsample2_raw(x.data(), d))
}

pub fn upsample2_backward<T: Scalar>(x_shape: &[usize], dy: &Tensor<T>) -> Result<Tensor<T>> {
    let d = match *x_shape {
        [h, w, c] => Dims { h, w, c },
        _ => return Err(Error::Shape(format!("{x_shape:?}"))),
    };
    if dy.len() != d.len() * 4 {
        return Err(Error::Shape("upsampling gradient does not match its input".into()));
    }
    Tensor::from_vec(x_shape, upsample2_backward_raw(dy.data(), d))
}

/// `w` is out x in, row-major.
pub fn dense_raw<T: Scalar>(v: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let n_in = v.len();
    let mut y = b.to_vec();
    T::gemm(b.len(), n_in, 1, w, (n_in as isize, 1), v, (1, 1), T::one(), &mut y);
    y
}

/// Accumulates dW and db; returns dv when asked.
pub fn dense_backward_into<T: Scalar>(v: &[T], w: &[T], dy: &[T], dw: &mut [T], db: &mut [T], need_dv: bool) -> Option<Vec<T>> {
    let n_in = v.len();
    for (o, &g) in dy.iter().enumerate() {
        db[o] = db[o] + g;
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (a, &x) in row.iter_mut().zip(v) {
            *a = *a + g * x;
        }
    }
    if !need_dv {
        return None;
    }
    let mut dv = vec![T::zero(); n_in];
    T::gemm(n_in, dy.len(), 1, w, (1, n_in as isize), dy, (1, 1), T::zero(), &mut dv);
    Some(dv)
}

fn dense_dims<T: Scalar>(v: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<usize> {
    match *w.shape() {
        [out, n_in] if n_in == v.len() && b.shape() == [out] => Ok(out),
        ref s => Err(Error::Shape(format!("dense weight {s:?} vs input {} / bias {:?}", v.len(), b.shape()))),
    }
}

pub fn dense<T: Scalar>(v: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let out = dense_dims(v, w, b)?;
    Tensor::from_vec(&[out], dense_raw(v.data(), w.data(), b.data()))
}

/// Returns (dv, dW, db).
pub fn dense_backward<T: Scalar>(
    v: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let out = dense_dims(v, w, b)?;
    if dy.len() != out {
        return Err(Error::Shape("dense upstream gradient".into()));
    }
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); out];
    let dv = dense_backward_into(v.data(), w.data(), dy.data(), &mut dw, &mut db, true).expect("dv requested");
    Ok((Tensor::from_vec(v.shape(), dv)?, Tensor::from_vec(w.shape(), dw)?, Tensor::from_vec(b.shape(), db)?))
}

/// Channel-axis concatenation of two maps with equal spatial dims.
pub fn concat_channels<T: Scalar>(a: &[T], ca: usize, b: &[T], cb: usize) -> Vec<T> {
    let n = a.len() / ca;
    debug_assert_eq!(n, b.len() / cb);
    let mut out = Vec::with_capacity(n * (ca + cb));
    for p in 0..n {
        out.extend_from_slice(&a[p * ca..(p + 1) * ca]);
        out.extend_from_slice(&b[p * cb..(p + 1) * cb]);
    }
    out
}

pub fn split_channels<T: Scalar>(x: &[T], ca: usize, cb: usize) -> (Vec<T>, Vec<T>) {
    let n = x.len() / (ca + cb);
    let mut a = Vec::with_capacity(n * ca);
    let mut b = Vec::with_capacity(n * cb);
    for px in x.chunks_exact(ca + cb) {
        a.extend_from_slice(&px[..ca]);
        b.extend_from_slice(&px[ca..]);
    }
    (a, b)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Relative error with a floor on the denominator for near-zero gradients.
    pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    /// Central differences of `f` with respect to every element of `x`.
    pub(crate) fn fd_grad(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    /// Projects an output onto a fixed random direction, giving a scalar loss.
    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64]) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            assert!(rel_err(*a, *n) < 1e-4, "element {i}: analytic {a} numeric {n}");
        }
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[5, 4, 2], &mut rng);
        let mut w = Tensor::<f64>::zeros(&[3, 3, 2, 2]);
        // centre tap, channel c -> c
        w.data_mut()[(4 * 2) * 2] = 1.0;
        w.data_mut()[(4 * 2 + 1) * 2 + 1] = 1.0;
        let y = conv2d(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_padding() {
        let x = Tensor::<f64>::from_vec(&[5, 5, 1], vec![1.0; 25]).unwrap();
        let w = Tensor::from_vec(&[3, 3, 1, 1], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data()[2 * 5 + 2], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[24], 4.0);
        assert_eq!(y.data()[2], 6.0);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[4, 4, 3]);
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 2, 1]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 3, 2]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[5, 5, 3, 2]), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[6, 5, 3], &mut rng);
        let w = random(&[3, 3, 3, 4], &mut rng);
        let b = random(&[4], &mut rng);
        let proj = random(&[6, 5, 4], &mut rng);
        let (dx, dw, db) = conv2d_backward(&x, &w, &b, &proj).unwrap();
        assert_close(dx.data(), &fd_grad(&x, |x| dot(&conv2d(x, &w, &b).unwrap(), &proj)));
        assert_close(dw.data(), &fd_grad(&w, |w| dot(&conv2d(&x, w, &b).unwrap(), &proj)));
        assert_close(db.data(), &fd_grad(&b, |b| dot(&conv2d(&x, &w, b).unwrap(), &proj)));
    }

    #[test]
    fn pool_and_upsample() {
        let x = Tensor::<f64>::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (p, arg) = maxpool2(&x).unwrap();
        assert_eq!(p.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
        let u = upsample2(&Tensor::<f64>::from_vec(&[1, 1, 1], vec![2.5]).unwrap()).unwrap();
        assert_eq!(u.data(), &[2.5; 4]);
        assert!(maxpool2(&Tensor::<f64>::zeros(&[3, 2, 1])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 6, 3], &mut rng);
        assert_eq!(maxpool2(&upsample2(&x).unwrap()).unwrap().0, x);

        let tie = Tensor::<f64>::from_vec(&[2, 2, 1], vec![1.0; 4]).unwrap();
        let (_, arg) = maxpool2(&tie).unwrap();
        let g = maxpool2_backward(&[2, 2, 1], &arg, &Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_and_upsample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[8, 8, 2], &mut rng);
        let proj = random(&[4, 4, 2], &mut rng);
        let (_, arg) = maxpool2(&x).unwrap();
        let g = maxpool2_backward(x.shape(), &arg, &proj).unwrap();
        assert_close(g.data(), &fd_grad(&x, |x| dot(&maxpool2(x).unwrap().0, &proj)));

        let s = random(&[4, 3, 2], &mut rng);
        let proj = random(&[8, 6, 2], &mut rng);
        let g = upsample2_backward(s.shape(), &proj).unwrap();
        assert_close(g.data(), &fd_grad(&s, |s| dot(&upsample2(s).unwrap(), &proj)));
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        let x = Tensor::<f64>::from_vec(&[3], vec![2.0, -2.0, 0.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).data(), &[2.0, -0.4, 0.0]);
        let g = leaky_relu_backward(&leaky_relu(&x, 0.2), &Tensor::from_vec(&[3], vec![1.0; 3]).unwrap(), 0.2);
        assert_eq!(g.data(), &[1.0, 0.2, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[8, 8, 2], &mut rng);
        let proj = random(&[8, 8, 2], &mut rng);
        let g = leaky_relu_backward(&leaky_relu(&x, 0.2), &proj, 0.2);
        assert_close(g.data(), &fd_grad(&x, |x| dot(&leaky_relu(x, 0.2), &proj)));
    }

    #[test]
    fn dense_cases() {
        let v = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        assert_eq!(dense(&v, &Tensor::zeros(&[2, 3]), &b).unwrap().data(), b.data());
        let mut eye = Tensor::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(dense(&v, &eye, &Tensor::zeros(&[3])).unwrap(), v);
        assert!(dense(&v, &Tensor::zeros(&[2, 4]), &b).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random(&[12], &mut rng);
        let w = random(&[20, 12], &mut rng);
        let b = random(&[20], &mut rng);
        let proj = random(&[20], &mut rng);
        let (dv, dw, db) = dense_backward(&v, &w, &b, &proj).unwrap();
        assert_close(dv.data(), &fd_grad(&v, |v| dot(&dense(v, &w, &b).unwrap(), &proj)));
        assert_close(dw.data(), &fd_grad(&w, |w| dot(&dense(&v, w, &b).unwrap(), &proj)));
        assert_close(db.data(), &fd_grad(&b, |b| dot(&dense(&v, &w, b).unwrap(), &proj)));
    }

    #[test]
    fn concat_split_round_trip() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let b: Vec<f64> = (0..9).map(|v| -(v as f64)).collect();
        let c = concat_channels(&a, 2, &b, 3);
        assert_eq!(&c[..5], &[0.0, 1.0, -0.0, -1.0, -2.0]);
        assert_eq!(split_channels(&c, 2, 3), (a, b));
    }
}
