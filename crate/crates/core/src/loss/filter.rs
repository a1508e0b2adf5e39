//! Separable "valid" filters on row-major planes, with adjoints for backprop.

/// Normalized 1D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Correlates with `taps` along x then y, keeping only fully covered outputs.
/// Returns the `(w - k + 1) x (h - k + 1)` result.
pub fn separable_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w + 1 - k;
    let oh = h + 1 - k;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &v) in taps.iter().zip(&row[x..x + k]) {
                acc += t * v;
            }
            *o = acc;
        }
    }
    let mut dst = vec![0.0; ow * oh];
    for y in 0..oh {
        let out = &mut dst[y * ow..(y + 1) * ow];
        for (j, &t) in taps.iter().enumerate() {
            let row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            for (o, &v) in out.iter_mut().zip(row) {
                *o += t * v;
            }
        }
    }
    dst
}

/// Adjoint of [`separable_valid`]: scatters an output-sized gradient back to
/// the `w x h` input.
pub fn separable_valid_adjoint(grad: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w + 1 - k;
    let oh = h + 1 - k;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        let g = &grad[y * ow..(y + 1) * ow];
        for (j, &t) in taps.iter().enumerate() {
            let row = &mut tmp[(y + j) * ow..(y + j + 1) * ow];
            for (o, &v) in row.iter_mut().zip(g) {
                *o += t * v;
            }
        }
    }
    let mut dst = vec![0.0; w * h];
    for y in 0..h {
        let g = &tmp[y * ow..(y + 1) * ow];
        let row = &mut dst[y * w..(y + 1) * w];
        for (x, &v) in g.iter().enumerate() {
            for (t, o) in taps.iter().zip(&mut row[x..x + k]) {
                *o += t * v;
            }
        }
    }
    dst
}

/// 3x3 Sobel responses over the valid region, `(w-2) x (h-2)` each.
pub fn sobel_valid(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let ow = w - 2;
    let oh = h - 2;
    let mut gx = vec![0.0; ow * oh];
    let mut gy = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let p = |dx: usize, dy: usize| src[(y + dy) * w + x + dx];
            let i = y * ow + x;
            gx[i] = (p(2, 0) + 2.0 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2.0 * p(0, 1) + p(0, 2));
            gy[i] = (p(0, 2) + 2.0 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2.0 * p(1, 0) + p(2, 0));
        }
    }
    (gx, gy)
}

pub fn sobel_valid_adjoint(dgx: &[f64], dgy: &[f64], w: usize, h: usize) -> Vec<f64> {
    const WX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const WY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let ow = w - 2;
    let oh = h - 2;
    let mut dst = vec![0.0; w * h];
    for y in 0..oh {
        for x in 0..ow {
            let i = y * ow + x;
            let (a, b) = (dgx[i], dgy[i]);
            for dy in 0..3 {
                for dx in 0..3 {
                    dst[(y + dy) * w + x + dx] += WX[dy][dx] * a + WY[dy][dx] * b;
                }
            }
        }
    }
    dst
}

/// 2x2 mean pooling; odd trailing rows/columns are dropped.
pub fn avg_pool2(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut dst = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let s = src[2 * y * w + 2 * x]
                + src[2 * y * w + 2 * x + 1]
                + src[(2 * y + 1) * w + 2 * x]
                + src[(2 * y + 1) * w + 2 * x + 1];
            dst[y * ow + x] = 0.25 * s;
        }
    }
    (dst, ow, oh)
}

pub fn avg_pool2_adjoint(grad: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut dst = vec![0.0; w * h];
    for y in 0..oh {
        for x in 0..ow {
            let g = 0.25 * grad[y * ow + x];
            dst[2 * y * w + 2 * x] += g;
            dst[2 * y * w + 2 * x + 1] += g;
            dst[(2 * y + 1) * w + 2 * x] += g;
            dst[(2 * y + 1) * w + 2 * x + 1] += g;
        }
    }
    dst
}
