//! Grouped, strided, dilated cross-correlation over `[N, C, H, W]` layouts.
//!
//! One-dimensional convolution is the `H == 1` case: a `[N, C, T]` input is
//! viewed as `[N, C, 1, T]` and a `[O, I, K]` kernel as `[O, I, 1, K]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-axis geometry of a convolution. Axis 0 is frequency (height), axis 1
/// is time (width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub dilation: [usize; 2],
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            stride: [1, 1],
            padding: [0, 0],
            dilation: [1, 1],
            groups: 1,
        }
    }
}

impl ConvSpec {
    /// Geometry for a 1-D convolution along time.
    pub fn temporal(stride: usize, padding: usize, dilation: usize) -> Self {
        Self {
            stride: [1, stride],
            padding: [0, padding],
            dilation: [1, dilation],
            groups: 1,
        }
    }

    /// 1-D geometry whose output has the same length as the input.
    pub fn same_length(kernel: usize, dilation: usize) -> Result<Self> {
        Ok(Self::temporal(1, same_padding(kernel, dilation)?, dilation))
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// Padding `dilation * (k - 1) / 2` that preserves length at stride 1.
pub fn same_padding(kernel: usize, dilation: usize) -> Result<usize> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid(
            "conv",
            alloc::format!("same-length padding needs an odd kernel, got {kernel}"),
        ));
    }
    Ok(dilation * (kernel - 1) / 2)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    spec: ConvSpec,
}

impl Geometry {
    fn in_per_group(&self) -> usize {
        self.cin / self.spec.groups
    }

    fn out_per_group(&self) -> usize {
        self.cout / self.spec.groups
    }

    /// Iterates every (input row, output row, column run) touched by tap
    /// `(ky, kx)`; `f(iy, oy, ox_lo, ox_hi, col_offset)`.
    #[inline]
    fn for_each_run(
        &self,
        ky: usize,
        kx: usize,
        mut f: impl FnMut(usize, usize, usize, usize, isize),
    ) {
        let [sh, sw] = self.spec.stride;
        let [ph, pw] = self.spec.padding;
        let [dh, dw] = self.spec.dilation;
        let off = (kx * dw) as isize - pw as isize;
        let ox_lo = if off >= 0 {
            0
        } else {
            ((-off) as usize).div_ceil(sw)
        };
        let last = self.w as isize - 1 - off;
        if last < 0 {
            return;
        }
        let ox_hi = (last as usize / sw + 1).min(self.ow);
        if ox_lo >= ox_hi {
            return;
        }
        let row_off = (ky * dh) as isize - ph as isize;
        for oy in 0..self.oh {
            let iy = (oy * sh) as isize + row_off;
            if iy < 0 || iy >= self.h as isize {
                continue;
            }
            f(iy as usize, oy, ox_lo, ox_hi, off);
        }
    }
}

/// Column layout of a convolution that reduces to dense matrix products:
/// one group, no striding or padding along the first spatial axis, and
/// either a pointwise kernel over the flattened plane or a 1-D kernel.
#[derive(Debug, Clone, Copy)]
struct Dense {
    /// Columns per channel in the input and output planes.
    in_cols: usize,
    out_cols: usize,
    /// Kernel taps along the column axis.
    taps: usize,
}

impl Geometry {
    fn dense(&self) -> Option<Dense> {
        let s = &self.spec;
        if s.groups != 1 || self.kh != 1 || s.stride != [1, 1] || s.padding[0] != 0 {
            return None;
        }
        if self.kw == 1 && s.padding[1] == 0 {
            return Some(Dense {
                in_cols: self.h * self.w,
                out_cols: self.oh * self.ow,
                taps: 1,
            });
        }
        (self.h == 1).then_some(Dense {
            in_cols: self.w,
            out_cols: self.ow,
            taps: self.kw,
        })
    }

    /// Output columns `lo..hi` read by tap `kx`, and the input column of `lo`.
    fn tap_range(&self, d: &Dense, kx: usize) -> Option<(usize, usize, usize)> {
        if d.taps == 1 {
            return Some((0, d.out_cols, 0));
        }
        let off = (kx * self.spec.dilation[1]) as isize - self.spec.padding[1] as isize;
        let lo = (-off).max(0) as usize;
        let hi = (d.in_cols as isize - off).min(d.out_cols as isize);
        (hi > lo as isize).then(|| (lo, hi as usize, (lo as isize + off) as usize))
    }
}

/// `C[m×n] += A[m×k] · B[k×n]` over strided views. The only unsafe code in
/// the crate.
#[allow(clippy::too_many_arguments, unsafe_code)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, cols: usize| (r - 1) * rs + (cols - 1) * cs;
    assert!(
        last(rsa, csa, m, k) < a.len()
            && last(rsb, csb, k, n) < b.len()
            && last(rsc, csc, m, n) < c.len()
    );
    // SAFETY: the assertion above keeps every strided access in bounds, and
    // `c` is a unique borrow disjoint from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn dense_forward(geo: &Geometry, d: &Dense, xd: &[f64], wd: &[f64], out: &mut [f64]) {
    let (cin, cout, kw) = (geo.cin, geo.cout, geo.kw);
    for n in 0..geo.n {
        let x = &xd[n * cin * d.in_cols..][..cin * d.in_cols];
        let y = &mut out[n * cout * d.out_cols..][..cout * d.out_cols];
        for kx in 0..d.taps {
            let Some((lo, hi, start)) = geo.tap_range(d, kx) else {
                continue;
            };
            gemm_acc(
                cout,
                cin,
                hi - lo,
                &wd[kx..],
                (cin * kw, kw),
                &x[start..],
                (d.in_cols, 1),
                &mut y[lo..],
                (d.out_cols, 1),
            );
        }
    }
}

fn dense_backward(
    geo: &Geometry,
    d: &Dense,
    xd: &[f64],
    wd: &[f64],
    gd: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
) {
    let (cin, cout, kw) = (geo.cin, geo.cout, geo.kw);
    for n in 0..geo.n {
        let x = &xd[n * cin * d.in_cols..][..cin * d.in_cols];
        let gxn = &mut gx[n * cin * d.in_cols..][..cin * d.in_cols];
        let g = &gd[n * cout * d.out_cols..][..cout * d.out_cols];
        for kx in 0..d.taps {
            let Some((lo, hi, start)) = geo.tap_range(d, kx) else {
                continue;
            };
            let len = hi - lo;
            gemm_acc(
                cin,
                cout,
                len,
                &wd[kx..],
                (kw, cin * kw),
                &g[lo..],
                (d.out_cols, 1),
                &mut gxn[start..],
                (d.in_cols, 1),
            );
            gemm_acc(
                cout,
                len,
                cin,
                &g[lo..],
                (d.out_cols, 1),
                &x[start..],
                (1, d.in_cols),
                &mut gw[kx..],
                (cin * kw, kw),
            );
        }
    }
}

fn out_extent(size: usize, kernel: usize, stride: usize, pad: usize, dil: usize) -> Option<usize> {
    let span = dil * (kernel - 1) + 1;
    let padded = size + 2 * pad;
    (padded >= span && stride > 0).then(|| (padded - span) / stride + 1)
}

fn geometry(xdims: [usize; 4], wdims: [usize; 4], spec: &ConvSpec) -> Result<Geometry> {
    let [n, cin, h, w] = xdims;
    let [cout, ipg, kh, kw] = wdims;
    let g = spec.groups;
    if g == 0 || cin % g != 0 || cout % g != 0 {
        return Err(Error::invalid(
            "conv",
            alloc::format!("groups {g} must divide in {cin} and out {cout} channels"),
        ));
    }
    if spec.stride.contains(&0) || spec.dilation.contains(&0) {
        return Err(Error::invalid(
            "conv",
            "stride and dilation must be positive",
        ));
    }
    if ipg * g != cin {
        return Err(Error::shape("conv", &[cout, cin / g, kh, kw], &wdims));
    }
    let oh = out_extent(h, kh, spec.stride[0], spec.padding[0], spec.dilation[0]);
    let ow = out_extent(w, kw, spec.stride[1], spec.padding[1], spec.dilation[1]);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(Error::invalid("conv", "kernel larger than padded input"));
    };
    Ok(Geometry {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
        spec: *spec,
    })
}

/// Normalised 4-D view of a convolution call and the shape to restore.
struct Call {
    geo: Geometry,
    out_shape: Vec<usize>,
}

fn plan(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Call> {
    let xs = x.shape();
    let ws = w.shape();
    let (xdims, wdims, batched, two_d) = match (ws.len(), xs.len()) {
        (3, 2) => ([1, xs[0], 1, xs[1]], [ws[0], ws[1], 1, ws[2]], false, false),
        (3, 3) => (
            [xs[0], xs[1], 1, xs[2]],
            [ws[0], ws[1], 1, ws[2]],
            true,
            false,
        ),
        (4, 3) => (
            [1, xs[0], xs[1], xs[2]],
            [ws[0], ws[1], ws[2], ws[3]],
            false,
            true,
        ),
        (4, 4) => (
            [xs[0], xs[1], xs[2], xs[3]],
            [ws[0], ws[1], ws[2], ws[3]],
            true,
            true,
        ),
        _ => {
            return Err(Error::invalid(
                "conv",
                alloc::format!("unsupported ranks: input {xs:?}, weight {ws:?}"),
            ))
        }
    };
    let mut spec = *spec;
    if !two_d {
        spec.stride[0] = 1;
        spec.padding[0] = 0;
        spec.dilation[0] = 1;
    }
    let geo = geometry(xdims, wdims, &spec)?;
    if let Some(b) = bias {
        if b.shape() != [geo.cout] {
            return Err(Error::shape("conv bias", &[geo.cout], b.shape()));
        }
    }
    let mut out_shape = Vec::with_capacity(4);
    if batched {
        out_shape.push(geo.n);
    }
    out_shape.push(geo.cout);
    if two_d {
        out_shape.push(geo.oh);
    }
    out_shape.push(geo.ow);
    Ok(Call { geo, out_shape })
}

/// Forward convolution. Accepts `[C, T]`/`[N, C, T]` inputs with `[O, I/g, K]`
/// kernels, or `[C, F, T]`/`[N, C, F, T]` inputs with `[O, I/g, KF, KT]` kernels.
pub fn conv(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let Call { geo, out_shape } = plan(x, w, bias, spec)?;
    let mut out = vec![0.0; geo.n * geo.cout * geo.oh * geo.ow];
    let (xd, wd) = (x.data(), w.data());
    let in_plane = geo.h * geo.w;
    let out_plane = geo.oh * geo.ow;
    let ipg = geo.in_per_group();
    let opg = geo.out_per_group();
    let sw = geo.spec.stride[1];
    let k_area = geo.kh * geo.kw;

    if let Some(d) = geo.dense() {
        if let Some(b) = bias {
            for (plane, &bv) in out.chunks_exact_mut(out_plane).zip(b.data().iter().cycle()) {
                plane.fill(bv);
            }
        }
        dense_forward(&geo, &d, xd, wd, &mut out);
        return Tensor::new(&out_shape, out);
    }

    for n in 0..geo.n {
        for oc in 0..geo.cout {
            let g = oc / opg;
            let base = (n * geo.cout + oc) * out_plane;
            let plane = &mut out[base..base + out_plane];
            if let Some(b) = bias {
                plane.fill(b.data()[oc]);
            }
            for icl in 0..ipg {
                let ic = g * ipg + icl;
                let xin = &xd[(n * geo.cin + ic) * in_plane..][..in_plane];
                let wk = &wd[(oc * ipg + icl) * k_area..][..k_area];
                for ky in 0..geo.kh {
                    for kx in 0..geo.kw {
                        let wv = wk[ky * geo.kw + kx];
                        geo.for_each_run(ky, kx, |iy, oy, lo, hi, off| {
                            let orow = &mut plane[oy * geo.ow + lo..oy * geo.ow + hi];
                            let start = (iy * geo.w) as isize + (lo * sw) as isize + off;
                            let start = start as usize;
                            if sw == 1 {
                                let irow = &xin[start..start + orow.len()];
                                for (o, &i) in orow.iter_mut().zip(irow) {
                                    *o += wv * i;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * xin[start + j * sw];
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    Tensor::new(&out_shape, out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Gradients of [`conv`] with respect to input, weight and (optionally) bias.
pub fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    with_bias: bool,
    spec: &ConvSpec,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let Call { geo, out_shape } = plan(x, w, None, spec)?;
    if grad_out.shape() != out_shape.as_slice() {
        return Err(Error::shape("conv backward", &out_shape, grad_out.shape()));
    }
    let (xd, wd, gd) = (x.data(), w.data(), grad_out.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = with_bias.then(|| vec![0.0; geo.cout]);
    let in_plane = geo.h * geo.w;
    let out_plane = geo.oh * geo.ow;
    let ipg = geo.in_per_group();
    let opg = geo.out_per_group();
    let sw = geo.spec.stride[1];
    let k_area = geo.kh * geo.kw;

    if let Some(d) = geo.dense() {
        if let Some(gb) = gb.as_mut() {
            for (i, plane) in gd.chunks_exact(out_plane).enumerate() {
                gb[i % geo.cout] += plane.iter().sum::<f64>();
            }
        }
        dense_backward(&geo, &d, xd, wd, gd, &mut gx, &mut gw);
        return Ok(ConvGrads {
            input: Tensor::new(x.shape(), gx)?,
            weight: Tensor::new(w.shape(), gw)?,
            bias: gb.map(Tensor::from_vec),
        });
    }

    for n in 0..geo.n {
        for oc in 0..geo.cout {
            let g = oc / opg;
            let gplane = &gd[(n * geo.cout + oc) * out_plane..][..out_plane];
            if let Some(gb) = gb.as_mut() {
                gb[oc] += gplane.iter().sum::<f64>();
            }
            for icl in 0..ipg {
                let ic = g * ipg + icl;
                let xoff = (n * geo.cin + ic) * in_plane;
                let xin = &xd[xoff..xoff + in_plane];
                let gxin = &mut gx[xoff..xoff + in_plane];
                let wbase = (oc * ipg + icl) * k_area;
                for ky in 0..geo.kh {
                    for kx in 0..geo.kw {
                        let wv = wd[wbase + ky * geo.kw + kx];
                        let mut acc = 0.0;
                        geo.for_each_run(ky, kx, |iy, oy, lo, hi, off| {
                            let grow = &gplane[oy * geo.ow + lo..oy * geo.ow + hi];
                            let start = ((iy * geo.w) as isize + (lo * sw) as isize + off) as usize;
                            if sw == 1 {
                                let irow = &xin[start..start + grow.len()];
                                let girow = &mut gxin[start..start + grow.len()];
                                for ((gi, &i), &go) in girow.iter_mut().zip(irow).zip(grow) {
                                    acc += go * i;
                                    *gi += wv * go;
                                }
                            } else {
                                for (j, &go) in grow.iter().enumerate() {
                                    let idx = start + j * sw;
                                    acc += go * xin[idx];
                                    gxin[idx] += wv * go;
                                }
                            }
                        });
                        gw[wbase + ky * geo.kw + kx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(x.shape(), gx)?,
        weight: Tensor::new(w.shape(), gw)?,
        bias: gb.map(Tensor::from_vec),
    })
}
