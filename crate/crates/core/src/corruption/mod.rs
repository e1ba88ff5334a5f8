//! Image corruption operators on 8-bit RGB rasters, their severity ladder,
//! and the training-pair generator.

mod mixture;
mod ops;

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::{DynamicImage, ImageFormat, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RacError, Result};
use crate::severity::Level;

pub use mixture::{
    derive_seed, make_training_pair, sample_operator, sample_severity, MixtureConfig, PairBranch,
    TrainingPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    Fog,
    Brightness,
    Contrast,
    ElasticTransform,
    JpegCompression,
}

impl Operator {
    pub const ALL: [Operator; 8] = [
        Operator::GaussianNoise,
        Operator::ShotNoise,
        Operator::ImpulseNoise,
        Operator::Fog,
        Operator::Brightness,
        Operator::Contrast,
        Operator::ElasticTransform,
        Operator::JpegCompression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::GaussianNoise => "gaussian_noise",
            Operator::ShotNoise => "shot_noise",
            Operator::ImpulseNoise => "impulse_noise",
            Operator::Fog => "fog",
            Operator::Brightness => "brightness",
            Operator::Contrast => "contrast",
            Operator::ElasticTransform => "elastic_transform",
            Operator::JpegCompression => "jpeg_compression",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = RacError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Operator::ALL
            .into_iter()
            .find(|op| op.name() == key)
            .ok_or_else(|| RacError::validation(format!("unknown corruption operator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub operator: Operator,
    pub level: Level,
    pub seed: u64,
}

/// Concrete operator parameters at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeverityParams {
    Identity,
    /// Additive noise std as a fraction of 255.
    GaussianStd(f64),
    /// Photon count at full intensity; lower is noisier.
    PhotonScale(f64),
    /// Fraction of channel values replaced by 0 or 255.
    ImpulseFraction(f64),
    Fog { intensity: f64, roughness_decay: f64 },
    /// Offset added to the HSV value channel.
    BrightnessOffset(f64),
    /// Blend factor toward the per-channel mean; 1 leaves the image unchanged.
    ContrastFactor(f64),
    /// Pixel magnitudes at the 224-px reference edge.
    Elastic { displacement_px: f64, sigma_px: f64 },
    JpegQuality(u8),
}

pub const ELASTIC_REFERENCE_EDGE: f64 = 224.0;
pub const ELASTIC_SIGMA_PX: f64 = 8.0;
pub const FOG_ROUGHNESS_DECAY: f64 = 0.6;

const GAUSSIAN_STD: [f64; 5] = [0.08, 0.155, 0.23, 0.305, 0.38];
const PHOTON_SCALE: [f64; 5] = [60.0, 28.0, 13.0, 6.0, 3.0];
const IMPULSE_FRACTION: [f64; 5] = [0.03, 0.09, 0.15, 0.21, 0.27];
const JPEG_QUALITY: [u8; 5] = [25, 20, 16, 11, 7];
const BRIGHTNESS_OFFSET: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
const CONTRAST_FACTOR: [f64; 5] = [0.8, 0.65, 0.5, 0.35, 0.2];
const FOG_INTENSITY: [f64; 5] = [0.15, 0.3, 0.45, 0.6, 0.75];
const ELASTIC_DISPLACEMENT: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];

pub fn severity_params(operator: Operator, level: Level) -> SeverityParams {
    let Some(i) = level.index().checked_sub(1) else {
        return SeverityParams::Identity;
    };
    match operator {
        Operator::GaussianNoise => SeverityParams::GaussianStd(GAUSSIAN_STD[i]),
        Operator::ShotNoise => SeverityParams::PhotonScale(PHOTON_SCALE[i]),
        Operator::ImpulseNoise => SeverityParams::ImpulseFraction(IMPULSE_FRACTION[i]),
        Operator::Fog => SeverityParams::Fog {
            intensity: FOG_INTENSITY[i],
            roughness_decay: FOG_ROUGHNESS_DECAY,
        },
        Operator::Brightness => SeverityParams::BrightnessOffset(BRIGHTNESS_OFFSET[i]),
        Operator::Contrast => SeverityParams::ContrastFactor(CONTRAST_FACTOR[i]),
        Operator::ElasticTransform => SeverityParams::Elastic {
            displacement_px: ELASTIC_DISPLACEMENT[i],
            sigma_px: ELASTIC_SIGMA_PX,
        },
        Operator::JpegCompression => SeverityParams::JpegQuality(JPEG_QUALITY[i]),
    }
}

/// Convert any decoded image to 8-bit RGB. Alpha is dropped, gray is
/// replicated across channels.
pub fn to_rgb8(img: DynamicImage) -> RgbImage {
    match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    }
}

pub fn load_rgb(path: &std::path::Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => RacError::io(path, source),
        other => RacError::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(to_rgb8(img))
}

pub fn encode_jpeg(img: &RgbImage, quality: u8) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(img)
        .map_err(|e| RacError::validation(format!("jpeg encode failed: {e}")))?;
    Ok(buf)
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load(Cursor::new(bytes), ImageFormat::Jpeg)
        .map_err(|e| RacError::validation(format!("jpeg decode failed: {e}")))?;
    Ok(to_rgb8(img))
}

/// Apply one corruption. Pure in `(image, spec)`; the CLEAN level returns a
/// bit-identical copy.
pub fn apply_corruption(image: &RgbImage, spec: &CorruptionSpec) -> Result<RgbImage> {
    if image.width() == 0 || image.height() == 0 {
        return Err(RacError::validation(format!(
            "cannot corrupt a {}x{} raster",
            image.width(),
            image.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let out = match severity_params(spec.operator, spec.level) {
        SeverityParams::Identity => image.clone(),
        SeverityParams::GaussianStd(std) => ops::gaussian_noise(image, std, &mut rng),
        SeverityParams::PhotonScale(scale) => ops::shot_noise(image, scale, &mut rng),
        SeverityParams::ImpulseFraction(p) => ops::impulse_noise(image, p, &mut rng),
        SeverityParams::Fog {
            intensity,
            roughness_decay,
        } => ops::fog(image, intensity, roughness_decay, &mut rng),
        SeverityParams::BrightnessOffset(offset) => ops::brightness(image, offset),
        SeverityParams::ContrastFactor(factor) => ops::contrast(image, factor),
        SeverityParams::Elastic {
            displacement_px,
            sigma_px,
        } => ops::elastic(image, displacement_px, sigma_px, &mut rng),
        SeverityParams::JpegQuality(q) => decode_jpeg(&encode_jpeg(image, q)?)?,
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn natural(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let fx = x as f64 / w as f64;
            let fy = y as f64 / h as f64;
            let r = 128.0 + 90.0 * (6.0 * fx).sin() * (4.0 * fy).cos();
            let g = 40.0 + 170.0 * fy;
            let b = if (x / 8 + y / 8) % 2 == 0 { 200.0 } else { 60.0 };
            Rgb([r as u8, g as u8, b as u8])
        })
    }

    fn mse(a: &RgbImage, b: &RgbImage) -> f64 {
        let n = a.as_raw().len() as f64;
        a.as_raw()
            .iter()
            .zip(b.as_raw())
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
            .sum::<f64>()
            / n
    }

    fn spec(operator: Operator, level: Level, seed: u64) -> CorruptionSpec {
        CorruptionSpec { operator, level, seed }
    }

    fn channel_std(img: &RgbImage) -> f64 {
        let v: Vec<f64> = img.as_raw().iter().map(|&p| f64::from(p)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn ladder_values() {
        assert_eq!(
            severity_params(Operator::GaussianNoise, Level::T02),
            SeverityParams::GaussianStd(0.08)
        );
        assert_eq!(
            severity_params(Operator::JpegCompression, Level::T10),
            SeverityParams::JpegQuality(7)
        );
        assert_eq!(
            severity_params(Operator::ImpulseNoise, Level::T06),
            SeverityParams::ImpulseFraction(0.15)
        );
        let q: Vec<_> = Level::CORRUPTED
            .iter()
            .map(|&l| match severity_params(Operator::JpegCompression, l) {
                SeverityParams::JpegQuality(q) => q,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(q, vec![25, 20, 16, 11, 7]);
        for op in Operator::ALL {
            assert_eq!(severity_params(op, Level::Clean), SeverityParams::Identity);
        }
    }

    #[test]
    fn operator_names_round_trip() {
        for op in Operator::ALL {
            assert_eq!(op.name().parse::<Operator>().unwrap(), op);
            let json = serde_json::to_string(&op).unwrap();
            assert_eq!(json, format!("\"{}\"", op.name()));
        }
        assert!("motion_blur".parse::<Operator>().is_err());
    }

    #[test]
    fn clean_is_bit_identical_and_canvas_is_preserved() {
        let img = natural(37, 23);
        for op in Operator::ALL {
            let out = apply_corruption(&img, &spec(op, Level::Clean, 9)).unwrap();
            assert_eq!(out, img);
            for level in Level::CORRUPTED {
                let out = apply_corruption(&img, &spec(op, level, 9)).unwrap();
                assert_eq!(out.dimensions(), img.dimensions(), "{op} {level}");
            }
        }
    }

    #[test]
    fn corruption_is_deterministic() {
        let img = natural(32, 32);
        for op in Operator::ALL {
            for level in Level::CORRUPTED {
                let s = spec(op, level, 1234);
                assert_eq!(apply_corruption(&img, &s).unwrap(), apply_corruption(&img, &s).unwrap());
            }
        }
    }

    #[test]
    fn empty_raster_is_rejected() {
        let img = RgbImage::new(0, 4);
        assert!(apply_corruption(&img, &spec(Operator::Fog, Level::T02, 0)).is_err());
    }

    #[test]
    fn noise_mse_increases_with_level() {
        let img = natural(64, 64);
        for op in [Operator::GaussianNoise, Operator::ShotNoise, Operator::ImpulseNoise] {
            let errs: Vec<f64> = Level::CORRUPTED
                .iter()
                .map(|&l| mse(&img, &apply_corruption(&img, &spec(op, l, 77)).unwrap()))
                .collect();
            assert!(errs.windows(2).all(|w| w[0] < w[1]), "{op}: {errs:?}");
        }
    }

    #[test]
    fn gaussian_std_on_constant_image() {
        let img = RgbImage::from_pixel(64, 64, Rgb([128, 128, 128]));
        let out = apply_corruption(&img, &spec(Operator::GaussianNoise, Level::T02, 5)).unwrap();
        let target = 0.08 * 255.0;
        assert!((channel_std(&out) - target).abs() <= 0.05 * target);
    }

    #[test]
    fn gaussian_std_at_top_level_matches_clipped_normal() {
        // Clipping to [0, 255] shrinks the spread; the reference value is the
        // std of round(clip(128 + N(0, 0.38*255))) computed numerically.
        let img = RgbImage::from_pixel(64, 64, Rgb([128, 128, 128]));
        let out = apply_corruption(&img, &spec(Operator::GaussianNoise, Level::T10, 5)).unwrap();
        let expected = 80.835;
        assert!((channel_std(&out) - expected).abs() <= 0.05 * expected, "{}", channel_std(&out));
    }

    #[test]
    fn jpeg_requantization_is_nearly_idempotent() {
        let img = natural(64, 48);
        let s = spec(Operator::JpegCompression, Level::T10, 0);
        let once = apply_corruption(&img, &s).unwrap();
        let twice = apply_corruption(&once, &s).unwrap();
        assert!(mse(&once, &twice) < mse(&img, &once));
        assert!(mse(&once, &twice).sqrt() < 4.0, "{}", mse(&once, &twice));
    }

    #[test]
    fn brightness_and_contrast_move_in_the_right_direction() {
        let img = natural(32, 32);
        let mean = |im: &RgbImage| im.as_raw().iter().map(|&p| f64::from(p)).sum::<f64>();
        let bright = apply_corruption(&img, &spec(Operator::Brightness, Level::T06, 0)).unwrap();
        assert!(mean(&bright) > mean(&img));
        let stds: Vec<f64> = Level::CORRUPTED
            .iter()
            .map(|&l| channel_std(&apply_corruption(&img, &spec(Operator::Contrast, l, 0)).unwrap()))
            .collect();
        assert!(stds.windows(2).all(|w| w[0] > w[1]), "{stds:?}");
        assert!(stds[0] < channel_std(&img));
    }

    #[test]
    fn fog_and_elastic_distortion_grow_with_level() {
        let img = natural(64, 64);
        for op in [Operator::Fog, Operator::ElasticTransform] {
            let errs: Vec<f64> = Level::CORRUPTED
                .iter()
                .map(|&l| mse(&img, &apply_corruption(&img, &spec(op, l, 3)).unwrap()))
                .collect();
            assert!(errs[0] > 0.0, "{op}");
            assert!(errs[4] > errs[0], "{op}: {errs:?}");
        }
    }
}
