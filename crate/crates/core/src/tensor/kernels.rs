//! Raw loops behind the graph ops. All buffers are row-major.

use super::Scalar;

/// Geometry of one convolution: an image of `channels x height x width`
/// scanned by a `kernel x kernel` window producing `out_h x out_w` positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// For column `o` on kernel row `ky`, the image row (if inside the image).
    #[inline]
    fn src_row(&self, oy: usize, ky: usize) -> Option<usize> {
        (oy * self.stride + ky)
            .checked_sub(self.padding)
            .filter(|&y| y < self.height)
    }

    /// Output columns `lo..hi` whose kernel column `kx` lands inside the
    /// image, and the image column hit by `lo`.
    #[inline]
    fn col_span(&self, kx: usize) -> (usize, usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > kx { (p - kx).div_ceil(s) } else { 0 };
        let hi = if self.width + p > kx {
            ((self.width - 1 + p - kx) / s + 1).min(self.out_w)
        } else {
            0
        };
        if lo >= hi {
            return (0, 0, 0);
        }
        (lo, hi, lo * s + kx - p)
    }
}

/// Unfolds `image` into `col` (`col_rows x col_cols`), zero padded.
pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, image: &[T], col: &mut [T]) {
    debug_assert_eq!(image.len(), g.image_len());
    debug_assert_eq!(col.len(), g.col_rows() * g.col_cols());
    let k = g.kernel;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * ncols..(row + 1) * ncols];
                let (lo, hi, x0) = g.col_span(kx);
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match g.src_row(oy, ky) {
                        None => line.fill(T::zero()),
                        Some(y) => {
                            let src = &plane[y * g.width..(y + 1) * g.width];
                            line[..lo].fill(T::zero());
                            line[hi..].fill(T::zero());
                            for (v, &x) in line[lo..hi]
                                .iter_mut()
                                .zip(src[x0..].iter().step_by(g.stride))
                            {
                                *v = x;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back onto `image`, accumulating.
pub(crate) fn col2im_add<T: Scalar>(g: &ConvGeom, col: &[T], image: &mut [T]) {
    debug_assert_eq!(image.len(), g.image_len());
    debug_assert_eq!(col.len(), g.col_rows() * g.col_cols());
    let k = g.kernel;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * ncols..(row + 1) * ncols];
                let (lo, hi, x0) = g.col_span(kx);
                for oy in 0..g.out_h {
                    let Some(y) = g.src_row(oy, ky) else { continue };
                    let line = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    let dst = &mut plane[y * g.width..(y + 1) * g.width];
                    for (d, &v) in dst[x0..].iter_mut().step_by(g.stride).zip(line) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Adds `bias[c]` to every element of plane `c`.
pub(crate) fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_exact_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

/// `bias_grad[c] += sum(grad plane c)`.
pub(crate) fn accumulate_channel_sums<T: Scalar>(grad: &[T], bias_grad: &mut [T], plane: usize) {
    for (chunk, b) in grad.chunks_exact(plane).zip(bias_grad.iter_mut()) {
        let mut s = T::zero();
        for &v in chunk {
            s += v;
        }
        *b += s;
    }
}

pub(crate) fn avg_pool_forward<T: Scalar>(
    input: &[T],
    output: &mut [T],
    planes: usize,
    h: usize,
    w: usize,
    f: usize,
) {
    let (oh, ow) = (h / f, w / f);
    let scale = T::one() / T::from_usize(f * f).unwrap();
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut output[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = T::zero();
                for dy in 0..f {
                    let row = &src[(oy * f + dy) * w + ox * f..(oy * f + dy) * w + ox * f + f];
                    for &v in row {
                        s += v;
                    }
                }
                dst[oy * ow + ox] = s * scale;
            }
        }
    }
}

pub(crate) fn avg_pool_backward<T: Scalar>(
    grad_out: &[T],
    grad_in: &mut [T],
    planes: usize,
    h: usize,
    w: usize,
    f: usize,
) {
    let (oh, ow) = (h / f, w / f);
    let scale = T::one() / T::from_usize(f * f).unwrap();
    for p in 0..planes {
        let src = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut grad_in[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] += src[(y / f) * ow + x / f] * scale;
            }
        }
    }
}
