//! Elementwise maps, affine layers and shape plumbing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::exp;
use crate::tensor::Tensor;

/// `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + exp(-v))
    } else {
        let e = exp(v);
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Takes the sigmoid *output* `y`.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
        *gv *= yv * (1.0 - yv);
    }
    g
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    Ok(out)
}

/// `[N, in] -> [N, out]` (or `[in] -> [out]`) for weight `[out, in]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (rows, inp, batched) = match x.shape() {
        [i] => (1, *i, false),
        [n, i] => (*n, *i, true),
        s => {
            return Err(Error::invalid(
                "linear",
                alloc::format!("input must be rank 1 or 2, got {s:?}"),
            ))
        }
    };
    let [out_dim, w_in] = w.shape() else {
        return Err(Error::invalid("linear", "weight must be rank 2"));
    };
    let out_dim = *out_dim;
    if *w_in != inp {
        return Err(Error::shape("linear", &[out_dim, inp], w.shape()));
    }
    if let Some(b) = b {
        if b.shape() != [out_dim] {
            return Err(Error::shape("linear bias", &[out_dim], b.shape()));
        }
    }
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; rows * out_dim];
    for r in 0..rows {
        let xr = &xd[r * inp..(r + 1) * inp];
        for o in 0..out_dim {
            let wr = &wd[o * inp..(o + 1) * inp];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            out[r * out_dim + o] = dot + b.map_or(0.0, |b| b.data()[o]);
        }
    }
    let shape: &[usize] = if batched {
        &[rows, out_dim]
    } else {
        &[out_dim]
    };
    Tensor::new(shape, out)
}

/// Gradients of [`linear`]: `(input, weight, bias)`.
pub fn linear_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let inp = w.shape()[1];
    let out_dim = w.shape()[0];
    let rows = x.numel() / inp;
    let (xd, wd, gd) = (x.data(), w.data(), grad_out.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; out_dim];
    for r in 0..rows {
        let xr = &xd[r * inp..(r + 1) * inp];
        let gxr = &mut gx[r * inp..(r + 1) * inp];
        for o in 0..out_dim {
            let g = gd[r * out_dim + o];
            gb[o] += g;
            let wr = &wd[o * inp..(o + 1) * inp];
            let gwr = &mut gw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                gxr[i] += g * wr[i];
                gwr[i] += g * xr[i];
            }
        }
    }
    (
        Tensor::new(x.shape(), gx).expect("input shape"),
        Tensor::new(w.shape(), gw).expect("weight shape"),
        Tensor::from_vec(gb),
    )
}

/// `(outer, axis extent, inner)` around `axis`.
fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Joins tensors along `axis`, preserving operand order.
pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("concat", "no operands"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::invalid(
            "concat",
            alloc::format!("axis {axis} out of range for rank {rank}"),
        ));
    }
    for x in &xs[1..] {
        let ok = x.rank() == rank
            && x.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::shape("concat", first.shape(), x.shape()));
        }
    }
    let total: usize = xs.iter().map(|x| x.shape()[axis]).sum();
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    let (outer, _, inner) = axis_layout(&shape, axis);
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for x in xs {
            let chunk = x.shape()[axis] * inner;
            out.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Tensor::new(&shape, out)
}

/// Inverse of [`concat`]: splits `x` along `axis` into pieces of `sizes`.
pub fn split(x: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
    if axis >= x.rank() || sizes.iter().sum::<usize>() != x.shape()[axis] || sizes.contains(&0) {
        return Err(Error::invalid("split", "sizes must partition the axis"));
    }
    let (outer, extent, inner) = axis_layout(x.shape(), axis);
    let mut parts: Vec<Vec<f64>> = sizes
        .iter()
        .map(|s| Vec::with_capacity(outer * s * inner))
        .collect();
    for o in 0..outer {
        let mut start = o * extent * inner;
        for (p, &s) in parts.iter_mut().zip(sizes) {
            p.extend_from_slice(&x.data()[start..start + s * inner]);
            start += s * inner;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(p, &s)| {
            let mut shape = x.shape().to_vec();
            shape[axis] = s;
            Tensor::new(&shape, p)
        })
        .collect()
}

/// Rows and trailing length of a `[C, T]` or `[N, C, T]` tensor viewed as
/// `(N, C, T)`.
pub(crate) fn sequence_layout(
    op: &'static str,
    shape: &[usize],
) -> Result<(usize, usize, usize, bool)> {
    match shape {
        [c, t] => Ok((1, *c, *t, false)),
        [n, c, t] => Ok((*n, *c, *t, true)),
        s => Err(Error::invalid(
            op,
            alloc::format!("expected [C, T] or [N, C, T], got {s:?}"),
        )),
    }
}

/// Mean over the trailing (time) axis: `[N, C, T] -> [N, C]`.
pub fn mean_time(x: &Tensor) -> Result<Tensor> {
    let (n, c, t, batched) = sequence_layout("mean_time", x.shape())?;
    let out: Vec<f64> = x
        .data()
        .chunks_exact(t)
        .map(|r| r.iter().sum::<f64>() / t as f64)
        .collect();
    let shape: &[usize] = if batched { &[n, c] } else { &[c] };
    Tensor::new(shape, out)
}

pub fn mean_time_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let t = *x.shape().last().expect("rank checked in forward");
    let mut g = Vec::with_capacity(x.numel());
    for &go in grad_out.data() {
        g.extend(core::iter::repeat_n(go / t as f64, t));
    }
    Tensor::new(x.shape(), g).expect("shape")
}

/// `out[n, c, t] = x[n, c, t] * s[n, c]`.
pub fn scale_channels(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let (n, c, t, batched) = sequence_layout("scale_channels", x.shape())?;
    let want: &[usize] = if batched { &[n, c] } else { &[c] };
    if s.shape() != want {
        return Err(Error::shape("scale_channels", want, s.shape()));
    }
    let mut out = x.clone();
    for (row, &sv) in out.data_mut().chunks_exact_mut(t).zip(s.data()) {
        for v in row {
            *v *= sv;
        }
    }
    Ok(out)
}

/// Gradients of [`scale_channels`]: `(input, scale)`.
pub fn scale_channels_backward(x: &Tensor, s: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor) {
    let t = *x.shape().last().expect("rank checked in forward");
    let mut gx = grad_out.clone();
    let mut gs = vec![0.0; s.numel()];
    for (((gxr, xr), gr), (gsv, &sv)) in gx
        .data_mut()
        .chunks_exact_mut(t)
        .zip(x.data().chunks_exact(t))
        .zip(grad_out.data().chunks_exact(t))
        .zip(gs.iter_mut().zip(s.data()))
    {
        *gsv = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for v in gxr {
            *v *= sv;
        }
    }
    (gx, Tensor::new(s.shape(), gs).expect("shape"))
}
