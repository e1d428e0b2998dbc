//! Dark-channel-prior estimators for ambient light and transmission.

use super::{AmbientLight, Image, TransmissionMap, EPSILON_T};
use crate::error::{Error, Result};
use crate::grid::Plane;

/// Fraction of the image kept when sampling the haziest pixels.
const AMBIENT_TOP_FRACTION: f64 = 0.001;

/// Patch side used for the dark channel when locating the ambient light.
pub const AMBIENT_PATCH: usize = 15;

/// Share of the haze removed by the transmission estimate (`ω`).
pub const HAZE_RETENTION: f64 = 0.95;

fn channel_min(image: &Image, scale: [f64; 3]) -> Plane {
    let (r, g, b) = (image.channel(0), image.channel(1), image.channel(2));
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((r, g), b)| (r * scale[0]).min(g * scale[1]).min(b * scale[2]))
        .collect();
    Plane::new(image.width(), image.height(), data)
}

/// Mean colour of the pixels whose dark channel lies in the top 0.1 %.
pub fn estimate_ambient(observed: &Image) -> AmbientLight {
    let dark = channel_min(observed, [1.0; 3]).min_filter(AMBIENT_PATCH);
    let n = dark.data().len();
    let keep = ((n as f64 * AMBIENT_TOP_FRACTION).ceil() as usize).clamp(1, n);

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ties in raster order.
    order.sort_by(|&i, &j| dark.data()[j].total_cmp(&dark.data()[i]));

    let mut sum = [0.0; 3];
    for &i in &order[..keep] {
        for (c, s) in sum.iter_mut().enumerate() {
            *s += observed.channel(c).data()[i];
        }
    }
    let mean = sum.map(|s| (s / keep as f64).clamp(0.0, 1.0));
    AmbientLight::new(mean).expect("mean of [0,1] values")
}

/// Single-channel transmission from the dark channel of `I / A`:
/// `t = clamp(1 - ω · min_patch min_c I_c / A_c, ε_t, 1)`.
pub fn estimate_transmission(
    observed: &Image,
    ambient: AmbientLight,
    patch: usize,
) -> Result<TransmissionMap> {
    if patch < 3 || patch % 2 == 0 {
        return Err(Error::param(format!("patch must be odd and >= 3, got {patch}")));
    }
    let a = ambient.rgb();
    if a.iter().any(|&v| v <= 0.0) {
        return Err(Error::param(format!(
            "ambient light {a:?} has a zero channel; transmission is undefined"
        )));
    }
    let dark = channel_min(observed, a.map(|v| 1.0 / v)).min_filter(patch);
    TransmissionMap::new(dark.map(|d| (1.0 - HAZE_RETENTION * d).clamp(EPSILON_T, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_black_ambient() {
        let c = [0.2, 0.45, 0.7];
        let a = estimate_ambient(&Image::uniform(16, 12, c).unwrap());
        assert_eq!(a.rgb(), c);
        let a = estimate_ambient(&Image::uniform(16, 12, [0.0; 3]).unwrap());
        assert_eq!(a.rgb(), [0.0; 3]);
    }

    #[test]
    fn ambient_picks_the_haziest_region() {
        // Bright veil in the top-left block, dark texture elsewhere.
        let img = Image::from_fn(64, 64, |x, y| {
            if x < 20 && y < 20 {
                [0.3, 0.6, 0.7]
            } else {
                let v = ((x * 7 + y * 3) % 5) as f64 / 10.0;
                [0.0, v, v]
            }
        })
        .unwrap();
        let a = estimate_ambient(&img).rgb();
        assert!((a[0] - 0.3).abs() < 1e-12 && (a[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn black_scene_is_clear() {
        let img = Image::uniform(16, 16, [0.0; 3]).unwrap();
        let a = AmbientLight::new([0.2, 0.5, 0.6]).unwrap();
        let t = estimate_transmission(&img, a, 7).unwrap();
        assert!(t.plane().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fully_veiled_scene_keeps_residual_haze() {
        let a = [0.2, 0.5, 0.6];
        let img = Image::uniform(16, 16, a).unwrap();
        let t = estimate_transmission(&img, AmbientLight::new(a).unwrap(), 7).unwrap();
        for &v in t.plane().data() {
            assert!((v - (1.0 - HAZE_RETENTION)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_patch_and_zero_ambient() {
        let img = Image::uniform(16, 16, [0.3; 3]).unwrap();
        let a = AmbientLight::new([0.5; 3]).unwrap();
        assert!(estimate_transmission(&img, a, 4).is_err());
        assert!(estimate_transmission(&img, a, 1).is_err());
        let zero = AmbientLight::new([0.0, 0.5, 0.5]).unwrap();
        assert!(estimate_transmission(&img, zero, 5).is_err());
    }

    #[test]
    fn output_is_bounded_and_scale_invariant() {
        let img = Image::from_fn(24, 20, |x, y| {
            let v = ((x * 13 + y * 7) % 11) as f64 / 12.0;
            [v * 0.5, v, 0.9 - 0.5 * v]
        })
        .unwrap();
        let a = [0.3, 0.8, 0.9];
        let t = estimate_transmission(&img, AmbientLight::new(a).unwrap(), 5).unwrap();
        assert!(t.plane().data().iter().all(|v| (EPSILON_T..=1.0).contains(v)));

        let k = 0.5;
        let scaled = Image::from_fn(24, 20, |x, y| img.pixel(x, y).map(|v| v * k)).unwrap();
        let ts = estimate_transmission(&scaled, AmbientLight::new(a.map(|v| v * k)).unwrap(), 5).unwrap();
        for (p, q) in t.plane().data().iter().zip(ts.plane().data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
