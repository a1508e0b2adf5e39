//! Perceptual distance used by the reconstruction objective.
//!
//! The objective only needs something that is zero on identical images,
//! grows with structural differences and is differentiable, so the term sits
//! behind the [`Perceptual`] trait. [`StructuralProxy`] is the default and
//! needs no learned weights; a network-backed metric can be swapped in
//! without touching the optimizers.

use super::filter::{avg_pool2, avg_pool2_adjoint, sobel_valid, sobel_valid_adjoint};
use super::ssim::{ssim_plane, WINDOW};
use super::LossValue;
use crate::error::{Error, Result};
use crate::image::Image;

pub trait Perceptual: Send + Sync {
    fn name(&self) -> &str;

    /// Distance and its gradient w.r.t. `img`.
    fn evaluate(&self, img: &Image, gt: &Image) -> Result<LossValue>;
}

/// Multi-scale structural distance: per pyramid level, D-SSIM plus the mean
/// (smoothed) absolute difference of Sobel gradient magnitudes; levels are
/// averaged.
#[derive(Clone, Debug)]
pub struct StructuralProxy {
    pub levels: usize,
    /// Smoothing of |d| as `sqrt(d^2 + eps^2) - eps`.
    pub diff_eps: f64,
    /// Floor inside the gradient magnitude `sqrt(gx^2 + gy^2 + eps^2)`.
    pub magnitude_eps: f64,
}

impl Default for StructuralProxy {
    fn default() -> Self {
        Self {
            levels: 3,
            diff_eps: 0.02,
            magnitude_eps: 0.02,
        }
    }
}

struct Level {
    w: usize,
    h: usize,
    img: [Vec<f64>; 3],
    gt: [Vec<f64>; 3],
}

impl StructuralProxy {
    fn level_terms(&self, lv: &Level) -> (f64, [Vec<f64>; 3]) {
        let (w, h) = (lv.w, lv.h);
        let mut value = 0.0;
        let mut grads: [Vec<f64>; 3] = Default::default();
        let with_ssim = w >= WINDOW && h >= WINDOW;
        for c in 0..3 {
            let mut g = vec![0.0; w * h];
            if with_ssim {
                let (s, sg) = ssim_plane(&lv.img[c], &lv.gt[c], w, h, true);
                value += (1.0 - s) / 6.0;
                for (gi, si) in g.iter_mut().zip(sg.unwrap()) {
                    *gi -= si / 6.0;
                }
            }
            let (ax, ay) = sobel_valid(&lv.img[c], w, h);
            let (bx, by) = sobel_valid(&lv.gt[c], w, h);
            let n = ax.len();
            let scale = 1.0 / (3.0 * n as f64);
            let e2 = self.magnitude_eps * self.magnitude_eps;
            let mut dgx = vec![0.0; n];
            let mut dgy = vec![0.0; n];
            for i in 0..n {
                let ma = (ax[i] * ax[i] + ay[i] * ay[i] + e2).sqrt();
                let mb = (bx[i] * bx[i] + by[i] * by[i] + e2).sqrt();
                let d = ma - mb;
                let r = (d * d + self.diff_eps * self.diff_eps).sqrt();
                value += (r - self.diff_eps) * scale;
                let dm = d / r * scale;
                dgx[i] = dm * ax[i] / ma;
                dgy[i] = dm * ay[i] / ma;
            }
            for (gi, si) in g.iter_mut().zip(sobel_valid_adjoint(&dgx, &dgy, w, h)) {
                *gi += si;
            }
            grads[c] = g;
        }
        (value, grads)
    }
}

impl Perceptual for StructuralProxy {
    fn name(&self) -> &str {
        "structural-proxy"
    }

    fn evaluate(&self, img: &Image, gt: &Image) -> Result<LossValue> {
        img.ensure_same_dims(gt)?;
        let (w, h) = img.dims();
        if w < WINDOW || h < WINDOW {
            return Err(Error::ImageTooSmall {
                width: w,
                height: h,
                window: WINDOW,
            });
        }
        let mut levels = vec![Level {
            w,
            h,
            img: [img.channel(0), img.channel(1), img.channel(2)],
            gt: [gt.channel(0), gt.channel(1), gt.channel(2)],
        }];
        while levels.len() < self.levels.max(1) {
            let last = levels.last().unwrap();
            if last.w / 2 < 3 || last.h / 2 < 3 {
                break;
            }
            let pool = |p: &[f64]| avg_pool2(p, last.w, last.h).0;
            let next = Level {
                w: last.w / 2,
                h: last.h / 2,
                img: [pool(&last.img[0]), pool(&last.img[1]), pool(&last.img[2])],
                gt: [pool(&last.gt[0]), pool(&last.gt[1]), pool(&last.gt[2])],
            };
            levels.push(next);
        }

        let inv_levels = 1.0 / levels.len() as f64;
        let mut value = 0.0;
        // walk coarse to fine so each level's gradient can be pulled through the pooling
        let mut carry: Option<[Vec<f64>; 3]> = None;
        for (li, lv) in levels.iter().enumerate().rev() {
            let (v, mut g) = self.level_terms(lv);
            value += v * inv_levels;
            for plane in g.iter_mut() {
                plane.iter_mut().for_each(|x| *x *= inv_levels);
            }
            if let Some(c) = carry.take() {
                for (plane, cp) in g.iter_mut().zip(c) {
                    plane.iter_mut().zip(cp).for_each(|(a, b)| *a += b);
                }
            }
            if li > 0 {
                let parent = &levels[li - 1];
                carry = Some(g.map(|p| avg_pool2_adjoint(&p, parent.w, parent.h)));
            } else {
                carry = Some(g);
            }
        }
        let g = carry.expect("at least one level");
        Ok(LossValue {
            value,
            grad: Image::from_channels(w, h, [&g[0], &g[1], &g[2]]),
        })
    }
}
