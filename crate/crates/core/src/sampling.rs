//! Sparse bilinear resampling operators.
//!
//! Every geometric stage in the pipeline (resize, crop, perspective warp,
//! flip, decoder upsampling, encoder input resampling) is a linear map from
//! source pixels to destination pixels in which each destination pixel reads
//! at most four source pixels. A [`SampleMap`] stores those taps once so the
//! same operator can be applied forward and transposed for backpropagation.

/// One source read: flat pixel index and bilinear weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tap {
    pub index: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMap {
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
    taps: Vec<[Tap; 4]>,
}

impl SampleMap {
    /// Builds a map where destination pixel `(y, x)` samples the source at
    /// the continuous coordinate `coord(y, x) = (sy, sx)` (pixel centers at
    /// integers), with edge-clamp padding outside the source.
    pub fn from_coords(
        src_h: usize,
        src_w: usize,
        dst_h: usize,
        dst_w: usize,
        mut coord: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut taps = Vec::with_capacity(dst_h * dst_w);
        for y in 0..dst_h {
            for x in 0..dst_w {
                let (sy, sx) = coord(y, x);
                taps.push(bilinear_taps(src_h, src_w, sy, sx));
            }
        }
        Self {
            src_h,
            src_w,
            dst_h,
            dst_w,
            taps,
        }
    }

    /// Half-pixel-center bilinear resize.
    pub fn resize(src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Self {
        Self::resize_window(src_h, src_w, dst_h, dst_w, 0, 0, dst_h, dst_w)
    }

    /// Resize to `resized_h × resized_w`, then keep the `h × w` window whose
    /// top-left corner is at `(top, left)` in the resized frame. Equivalent to
    /// `crop(resize(..))` without materializing the resized image.
    #[allow(clippy::too_many_arguments)]
    pub fn resize_window(
        src_h: usize,
        src_w: usize,
        resized_h: usize,
        resized_w: usize,
        top: usize,
        left: usize,
        h: usize,
        w: usize,
    ) -> Self {
        let sy = src_h as f64 / resized_h as f64;
        let sx = src_w as f64 / resized_w as f64;
        Self::from_coords(src_h, src_w, h, w, |y, x| {
            (
                ((y + top) as f64 + 0.5) * sy - 0.5,
                ((x + left) as f64 + 0.5) * sx - 0.5,
            )
        })
    }

    pub fn flip_horizontal(h: usize, w: usize) -> Self {
        Self::from_coords(h, w, h, w, |y, x| (y as f64, (w - 1 - x) as f64))
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.src_h, self.src_w)
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        (self.dst_h, self.dst_w)
    }

    /// Applies the map to an interleaved 3-channel buffer.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        debug_assert_eq!(src.len(), self.src_h * self.src_w * 3);
        let mut out = Vec::with_capacity(self.taps.len() * 3);
        for taps in &self.taps {
            let mut acc = [0.0; 3];
            for tap in taps {
                let base = tap.index as usize * 3;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += tap.weight * src[base + c];
                }
            }
            out.extend_from_slice(&acc);
        }
        out
    }

    /// Transposed application: scatters destination gradients back onto the
    /// source grid.
    pub fn adjoint(&self, grad_dst: &[f64]) -> Vec<f64> {
        debug_assert_eq!(grad_dst.len(), self.dst_h * self.dst_w * 3);
        let mut out = vec![0.0; self.src_h * self.src_w * 3];
        for (taps, g) in self.taps.iter().zip(grad_dst.chunks_exact(3)) {
            for tap in taps {
                if tap.weight == 0.0 {
                    continue;
                }
                let base = tap.index as usize * 3;
                for c in 0..3 {
                    out[base + c] += tap.weight * g[c];
                }
            }
        }
        out
    }
}

fn bilinear_taps(h: usize, w: usize, sy: f64, sx: f64) -> [Tap; 4] {
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = sy - y0 as f64;
    let fx = sx - x0 as f64;
    let idx = |y: usize, x: usize| (y * w + x) as u32;
    [
        Tap {
            index: idx(y0, x0),
            weight: (1.0 - fy) * (1.0 - fx),
        },
        Tap {
            index: idx(y0, x1),
            weight: (1.0 - fy) * fx,
        },
        Tap {
            index: idx(y1, x0),
            weight: fy * (1.0 - fx),
        },
        Tap {
            index: idx(y1, x1),
            weight: fy * fx,
        },
    ]
}
