//! SSIM with an 11x11 Gaussian window (sigma 1.5) and its analytic gradient
//! with respect to the first (rendered) image.
//!
//! Statistics are only evaluated where the window lies fully inside the
//! image; the mean is taken over that valid region.

use crate::error::{Error, Result};
use crate::image2d::{ColorMap, ScalarMap};

pub const WINDOW_SIZE: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const C1: f64 = K1 * K1;
const C2: f64 = K2 * K2;

fn gaussian_kernel() -> [f64; WINDOW_SIZE] {
    let c = (WINDOW_SIZE / 2) as f64;
    let mut k = [0.0; WINDOW_SIZE];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable correlation; output defined only where the window fits,
/// zero elsewhere.
fn correlate_valid(img: &ScalarMap, kernel: &[f64; WINDOW_SIZE]) -> ScalarMap {
    let (w, h) = (img.width(), img.height());
    let c = WINDOW_SIZE / 2;
    let mut horiz = ScalarMap::zeros(w, h);
    if w < WINDOW_SIZE || h < WINDOW_SIZE {
        return horiz;
    }
    for y in 0..h {
        for x in c..w - c {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * img.get(x + k - c, y);
            }
            horiz.set(x, y, acc);
        }
    }
    let mut out = ScalarMap::zeros(w, h);
    for y in c..h - c {
        for x in c..w - c {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * horiz.get(x, y + k - c);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Adjoint of `correlate_valid` for a symmetric kernel: spread a gradient
/// that is zero outside the valid region back over all pixels.
fn correlate_spread(grad: &ScalarMap, kernel: &[f64; WINDOW_SIZE]) -> ScalarMap {
    let (w, h) = (grad.width(), grad.height());
    let ci = (WINDOW_SIZE / 2) as isize;
    let mut vert = ScalarMap::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = y + k as isize - ci;
                if yy >= 0 && yy < h as isize {
                    acc += kv * grad.get(x as usize, yy as usize);
                }
            }
            vert.set(x as usize, y as usize, acc);
        }
    }
    let mut out = ScalarMap::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = x + k as isize - ci;
                if xx >= 0 && xx < w as isize {
                    acc += kv * vert.get(xx as usize, y as usize);
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

pub struct SsimPlane {
    pub mean: f64,
    /// d(mean SSIM)/d(x) for the first argument.
    pub grad: ScalarMap,
}

/// SSIM of two scalar planes plus the gradient w.r.t. the first plane.
pub fn ssim_plane(x: &ScalarMap, y: &ScalarMap) -> Result<SsimPlane> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch("ssim inputs".into()));
    }
    let (w, h) = (x.width(), x.height());
    let kernel = gaussian_kernel();
    let c = WINDOW_SIZE / 2;
    if w < WINDOW_SIZE || h < WINDOW_SIZE {
        // no window fits; treat as perfect similarity with zero gradient
        return Ok(SsimPlane {
            mean: 1.0,
            grad: ScalarMap::zeros(w, h),
        });
    }
    let xx = ScalarMap::from_vec(w, h, x.data().iter().map(|v| v * v).collect());
    let yy = ScalarMap::from_vec(w, h, y.data().iter().map(|v| v * v).collect());
    let xy = ScalarMap::from_vec(
        w,
        h,
        x.data().iter().zip(y.data()).map(|(a, b)| a * b).collect(),
    );
    let ux = correlate_valid(x, &kernel);
    let uy = correlate_valid(y, &kernel);
    let uxx = correlate_valid(&xx, &kernel);
    let uyy = correlate_valid(&yy, &kernel);
    let uxy = correlate_valid(&xy, &kernel);

    let n_valid = ((w - 2 * c) * (h - 2 * c)) as f64;
    let mut mean = 0.0;
    let mut g_ux = ScalarMap::zeros(w, h);
    let mut g_uxx = ScalarMap::zeros(w, h);
    let mut g_uxy = ScalarMap::zeros(w, h);
    for py in c..h - c {
        for px in c..w - c {
            let (mx, my) = (*ux.get(px, py), *uy.get(px, py));
            let vx = uxx.get(px, py) - mx * mx;
            let vy = uyy.get(px, py) - my * my;
            let vxy = uxy.get(px, py) - mx * my;
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * vxy + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = vx + vy + C2;
            let s = (a1 * a2) / (b1 * b2);
            mean += s;

            // d(mean)/d(stat) for this pixel, folded with 1/n_valid
            let scale = 1.0 / n_valid;
            let ds_dmx = (2.0 * my * a2) / (b1 * b2) - s * 2.0 * mx / b1;
            let ds_dvx = -s / b2;
            let ds_dvxy = 2.0 * a1 / (b1 * b2);
            // vx = uxx - ux^2, vxy = uxy - ux*uy
            g_ux.set(px, py, scale * (ds_dmx + ds_dvx * (-2.0 * mx) + ds_dvxy * (-my)));
            g_uxx.set(px, py, scale * ds_dvx);
            g_uxy.set(px, py, scale * ds_dvxy);
        }
    }
    mean /= n_valid;

    let s_ux = correlate_spread(&g_ux, &kernel);
    let s_uxx = correlate_spread(&g_uxx, &kernel);
    let s_uxy = correlate_spread(&g_uxy, &kernel);
    let mut grad = ScalarMap::zeros(w, h);
    for py in 0..h {
        for px in 0..w {
            let v = s_ux.get(px, py)
                + 2.0 * x.get(px, py) * s_uxx.get(px, py)
                + y.get(px, py) * s_uxy.get(px, py);
            grad.set(px, py, v);
        }
    }
    Ok(SsimPlane { mean, grad })
}

pub struct SsimResult {
    pub mean: f64,
    /// d(mean SSIM)/d(rendered), averaged over channels.
    pub grad: ColorMap,
}

/// Channel-averaged SSIM of two RGB images.
pub fn ssim(rendered: &ColorMap, target: &ColorMap) -> Result<SsimResult> {
    if !rendered.same_shape(target) {
        return Err(Error::ShapeMismatch("ssim images".into()));
    }
    let (w, h) = (rendered.width(), rendered.height());
    let mut mean = 0.0;
    let mut grad = ColorMap::black(w, h);
    for ch in 0..3 {
        let x = rendered.map(|p| p[ch]);
        let y = target.map(|p| p[ch]);
        let plane = ssim_plane(&x, &y)?;
        mean += plane.mean / 3.0;
        for py in 0..h {
            for px in 0..w {
                grad.get_mut(px, py)[ch] = plane.grad.get(px, py) / 3.0;
            }
        }
    }
    Ok(SsimResult { mean, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> ScalarMap {
        ScalarMap::from_vec(w, h, (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect())
    }

    /// Direct windowed SSIM, independent of the filtering implementation.
    fn ssim_reference(x: &ScalarMap, y: &ScalarMap) -> f64 {
        let (w, h) = (x.width(), x.height());
        let kernel = gaussian_kernel();
        let c = WINDOW_SIZE / 2;
        let mut total = 0.0;
        let mut count = 0usize;
        for py in c..h - c {
            for px in c..w - c {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                for ky in 0..WINDOW_SIZE {
                    for kx in 0..WINDOW_SIZE {
                        let wgt = kernel[kx] * kernel[ky];
                        let a = *x.get(px + kx - c, py + ky - c);
                        let b = *y.get(px + kx - c, py + ky - c);
                        mx += wgt * a;
                        my += wgt * b;
                        mxx += wgt * a * a;
                        myy += wgt * b * b;
                        mxy += wgt * a * b;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let vxy = mxy - mx * my;
                total += ((2.0 * mx * my + C1) * (2.0 * vxy + C2))
                    / ((mx * mx + my * my + C1) * (vx + vy + C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_planes_have_ssim_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_plane(&mut rng, 20, 18);
        let r = ssim_plane(&x, &x).unwrap();
        assert_abs_diff_eq!(r.mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_direct_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let x = random_plane(&mut rng, 24, 20);
            let y = random_plane(&mut rng, 24, 20);
            let fast = ssim_plane(&x, &y).unwrap().mean;
            let slow = ssim_reference(&x, &y);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-10);
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_plane(&mut rng, 16, 16);
        let y = random_plane(&mut rng, 16, 16);
        let a = ssim_plane(&x, &y).unwrap().mean;
        let b = ssim_plane(&y, &x).unwrap().mean;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_plane(&mut rng, 16, 16);
        let y = random_plane(&mut rng, 16, 16);
        let r = ssim_plane(&x, &y).unwrap();
        let h = 1e-6;
        for &(px, py) in &[(0usize, 0usize), (3, 8), (8, 8), (15, 15), (5, 2)] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.set(px, py, x.get(px, py) + h);
            xm.set(px, py, x.get(px, py) - h);
            let fd = (ssim_plane(&xp, &y).unwrap().mean - ssim_plane(&xm, &y).unwrap().mean)
                / (2.0 * h);
            assert_abs_diff_eq!(*r.grad.get(px, py), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn tiny_images_fall_back_to_perfect() {
        let x = ScalarMap::zeros(4, 4);
        let r = ssim_plane(&x, &x).unwrap();
        assert_eq!(r.mean, 1.0);
    }
}
