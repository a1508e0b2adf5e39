//! Windowed SSIM with an analytic input gradient.
//!
//! Local statistics use an 11x11 Gaussian window (sigma 1.5) evaluated only
//! where the window fits inside the image, with the usual stabilizers for a
//! unit dynamic range.

use super::filter::{gaussian_taps, separable_valid, separable_valid_adjoint};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

pub(crate) fn window_taps() -> &'static [f64] {
    static TAPS: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    TAPS.get_or_init(|| gaussian_taps(WINDOW, SIGMA))
}

/// Mean SSIM of one channel and, optionally, its gradient w.r.t. `x`.
pub(crate) fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize, with_grad: bool) -> (f64, Option<Vec<f64>>) {
    debug_assert!(w >= WINDOW && h >= WINDOW);
    let taps = window_taps();
    let blur = |v: &[f64]| separable_valid(v, w, h, taps);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = blur(x);
    let mu_y = blur(y);
    let e_xx = blur(&xx);
    let e_yy = blur(&yy);
    let e_xy = blur(&xy);

    let n = mu_x.len();
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let (mut g_mu, mut g_xx, mut g_xy) = if with_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * sxy + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = sxx + syy + C2;
        let num = a1 * a2;
        let den = b1 * b2;
        total += num / den;

        if with_grad {
            // dS = (dN * D - N * dD) / D^2 with mu_x, E[x^2], E[xy] as the free inputs
            let inv_d2 = 1.0 / (den * den);
            let dn_mu = 2.0 * my * a2 - 2.0 * my * a1;
            let dd_mu = 2.0 * mx * b2 - 2.0 * mx * b1;
            g_mu[i] = (dn_mu * den - num * dd_mu) * inv_d2 * inv_n;
            g_xx[i] = -num * b1 * inv_d2 * inv_n;
            g_xy[i] = 2.0 * a1 * den * inv_d2 * inv_n;
        }
    }

    let mean = total * inv_n;
    if !with_grad {
        return (mean, None);
    }
    let back = |g: &[f64]| separable_valid_adjoint(g, w, h, taps);
    let b_mu = back(&g_mu);
    let b_xx = back(&g_xx);
    let b_xy = back(&g_xy);
    let grad = (0..w * h)
        .map(|i| b_mu[i] + 2.0 * x[i] * b_xx[i] + y[i] * b_xy[i])
        .collect();
    (mean, Some(grad))
}
