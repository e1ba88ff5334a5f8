use image::RgbImage;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::ELASTIC_REFERENCE_EDGE;

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn map_channels(img: &RgbImage, mut f: impl FnMut(f64) -> f64) -> RgbImage {
    let raw = img.as_raw().iter().map(|&p| to_byte(f(f64::from(p) / 255.0))).collect();
    RgbImage::from_raw(img.width(), img.height(), raw).expect("same buffer length")
}

pub(super) fn gaussian_noise<R: Rng>(img: &RgbImage, std: f64, rng: &mut R) -> RgbImage {
    let noise = Normal::new(0.0, std).expect("ladder std is positive");
    map_channels(img, |x| x + noise.sample(rng))
}

pub(super) fn shot_noise<R: Rng>(img: &RgbImage, scale: f64, rng: &mut R) -> RgbImage {
    map_channels(img, |x| {
        let lambda = x * scale;
        if lambda <= 0.0 {
            return 0.0;
        }
        let count: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
        count / scale
    })
}

/// Salt-and-pepper on individual channel values.
pub(super) fn impulse_noise<R: Rng>(img: &RgbImage, fraction: f64, rng: &mut R) -> RgbImage {
    map_channels(img, |x| {
        if rng.random::<f64>() < fraction {
            if rng.random::<bool>() {
                1.0
            } else {
                0.0
            }
        } else {
            x
        }
    })
}

pub(super) fn brightness(img: &RgbImage, offset: f64) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let [r, g, b] = px.0.map(|c| f64::from(c) / 255.0);
        let (h, s, v) = rgb_to_hsv(r, g, b);
        let (r, g, b) = hsv_to_rgb(h, s, (v + offset).clamp(0.0, 1.0));
        px.0 = [to_byte(r), to_byte(g), to_byte(b)];
    }
    out
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h / 6.0, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = h6.floor();
    let frac = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * frac);
    let t = v * (1.0 - s * (1.0 - frac));
    match sector as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn channel_means(img: &RgbImage) -> [f64; 3] {
    let mut sums = [0.0; 3];
    for px in img.pixels() {
        for c in 0..3 {
            sums[c] += f64::from(px.0[c]) / 255.0;
        }
    }
    let n = f64::from(img.width()) * f64::from(img.height());
    sums.map(|s| s / n)
}

pub(super) fn contrast(img: &RgbImage, factor: f64) -> RgbImage {
    let means = channel_means(img);
    let mut out = img.clone();
    for px in out.pixels_mut() {
        for c in 0..3 {
            let x = f64::from(px.0[c]) / 255.0;
            px.0[c] = to_byte((x - means[c]) * factor + means[c]);
        }
    }
    out
}

/// Diamond-square height map on a `size x size` torus (`size` a power of
/// two), rescaled to [0, 1].
pub(super) fn plasma_fractal<R: Rng>(size: usize, roughness_decay: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!(size.is_power_of_two());
    let mut map = vec![0.0; size * size];
    let at = |y: usize, x: usize| (y % size) * size + (x % size);
    let mut step = size;
    let mut wibble = 100.0;
    while step >= 2 {
        let half = step / 2;
        // Square step: centers from the four corners.
        for y in (0..size).step_by(step) {
            for x in (0..size).step_by(step) {
                let avg = (map[at(y, x)]
                    + map[at(y, x + step)]
                    + map[at(y + step, x)]
                    + map[at(y + step, x + step)])
                    / 4.0;
                map[at(y + half, x + half)] = avg + rng.random_range(-wibble..=wibble);
            }
        }
        // Diamond step: edge midpoints from their four neighbors.
        for y in (0..size).step_by(half) {
            let x0 = if (y / half) % 2 == 0 { half } else { 0 };
            for x in (x0..size).step_by(step) {
                let avg = (map[at(y + size - half, x)]
                    + map[at(y + half, x)]
                    + map[at(y, x + size - half)]
                    + map[at(y, x + half)])
                    / 4.0;
                map[at(y, x)] = avg + rng.random_range(-wibble..=wibble);
            }
        }
        step = half;
        wibble *= roughness_decay;
    }
    let (lo, hi) = map
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span > 0.0 {
        map.iter_mut().for_each(|v| *v = (*v - lo) / span);
    }
    map
}

/// Add a plasma haze weighted by `intensity`, then rescale so the brightest
/// input value maps back to itself.
pub(super) fn fog<R: Rng>(img: &RgbImage, intensity: f64, decay: f64, rng: &mut R) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let size = w.max(h).next_power_of_two().max(2);
    let haze = plasma_fractal(size, decay, rng);
    let max_val = img.as_raw().iter().copied().max().map_or(0.0, |m| f64::from(m) / 255.0);
    let mut out = img.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let add = intensity * haze[y as usize * size + x as usize];
        for c in 0..3 {
            let v = f64::from(px.0[c]) / 255.0 + add;
            px.0[c] = to_byte(v * max_val / (max_val + intensity));
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with edge clamping.
fn blur(field: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * field[y * w + clampi(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clampi(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn smooth_unit_field<R: Rng>(w: usize, h: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut field = blur(&raw, w, h, sigma);
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        field.iter_mut().for_each(|v| *v /= peak);
    }
    field
}

/// Resample through a smooth random displacement field whose largest vector
/// component equals `displacement_px`, both lengths scaled from the 224-px
/// reference edge to the image's longer edge.
pub(super) fn elastic<R: Rng>(
    img: &RgbImage,
    displacement_px: f64,
    sigma_px: f64,
    rng: &mut R,
) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = w.max(h) as f64 / ELASTIC_REFERENCE_EDGE;
    let sigma = (sigma_px * scale).max(0.5);
    let amp = displacement_px * scale;
    let dx = smooth_unit_field(w, h, sigma, rng);
    let dy = smooth_unit_field(w, h, sigma, rng);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let sx = (x as f64 + amp * dx[y * w + x]).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + amp * dy[y * w + x]).clamp(0.0, (h - 1) as f64);
            out.get_pixel_mut(x as u32, y as u32).0 = bilinear(img, sx, sy);
        }
    }
    out
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = x - f64::from(x0);
    let fy = y - f64::from(y0);
    let p = |xx, yy, c: usize| f64::from(img.get_pixel(xx, yy).0[c]);
    std::array::from_fn(|c| {
        let top = p(x0, y0, c) * (1.0 - fx) + p(x1, y0, c) * fx;
        let bot = p(x0, y1, c) * (1.0 - fx) + p(x1, y1, c) * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.4, 0.6), (1.0, 0.0, 0.0), (0.5, 0.5, 0.5), (0.9, 0.8, 0.1)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn plasma_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let map = plasma_fractal(32, 0.6, &mut rng);
        let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn blur_preserves_constants() {
        let field = vec![0.7; 12 * 9];
        assert!(blur(&field, 12, 9, 2.0).iter().all(|v| (v - 0.7).abs() < 1e-12));
    }
}
