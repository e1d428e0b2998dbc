//! Coarse-to-fine iterative Lucas–Kanade with a dense per-pixel window.
//!
//! At every pyramid level each pixel solves the 2×2 normal equations of the
//! linearised brightness-constancy residual over its window, using the
//! gradients of the first frame and the second frame warped by the current
//! estimate. Samples warped outside the frame are ignored, and a median
//! filter after each level keeps outliers from
//! spreading to the next.

use super::{FlowField, FlowParams};
use crate::error::{check_shape, Error, Result};
use crate::grid::Plane;
use crate::imaging::Image;

/// Largest update (pixels) a single iteration may apply.
const MAX_STEP: f64 = 2.0;

/// Median filter applied to the flow after each pyramid level.
const MEDIAN_WINDOW: usize = 5;

/// Tikhonov damping relative to the level's mean gradient energy; keeps
/// textureless windows from producing arbitrary updates.
const RELATIVE_DAMPING: f64 = 1e-3;

/// Dense flow from `frame_a` to `frame_b` on Rec.601 luminance.
pub fn estimate_flow(frame_a: &Image, frame_b: &Image, params: FlowParams) -> Result<FlowField> {
    check_shape(frame_a.dims(), frame_b.dims())?;
    estimate_flow_luma(&frame_a.luminance(), &frame_b.luminance(), params)
}

/// Dense flow between two single-channel images.
pub fn estimate_flow_luma(a: &Plane, b: &Plane, params: FlowParams) -> Result<FlowField> {
    check_shape(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let need = params.min_image_side();
    if w.min(h) < need {
        return Err(Error::param(format!(
            "{w}x{h} image too small for {} pyramid levels with window {} (needs {need} px)",
            params.pyramid_levels(),
            params.window()
        )));
    }

    let pyr_a = pyramid(a, params.pyramid_levels());
    let pyr_b = pyramid(b, params.pyramid_levels());

    let coarsest = pyr_a.last().unwrap();
    let mut u = Plane::filled(coarsest.width(), coarsest.height(), 0.0);
    let mut v = u.clone();
    for level in (0..params.pyramid_levels()).rev() {
        let (ia, ib) = (&pyr_a[level], &pyr_b[level]);
        if u.dims() != ia.dims() {
            u = upsample_flow(&u, ia.dims());
            v = upsample_flow(&v, ia.dims());
        }
        refine_level(ia, ib, &mut u, &mut v, params);
    }

    let (wf, hf) = (w as f64, h as f64);
    FlowField::new(u.map(|x| x.clamp(-wf, wf)), v.map(|x| x.clamp(-hf, hf)))
}

fn pyramid(base: &Plane, levels: usize) -> Vec<Plane> {
    let mut out = vec![base.clone()];
    for _ in 1..levels {
        let next = out.last().unwrap().pyr_down();
        out.push(next);
    }
    out
}

/// Doubles a coarse flow component onto the finer grid.
fn upsample_flow(coarse: &Plane, (w, h): (usize, usize)) -> Plane {
    Plane::par_from_fn(w, h, |x, y| {
        2.0 * coarse.sample_bilinear(x as f64 * 0.5, y as f64 * 0.5)
    })
}

fn refine_level(ia: &Plane, ib: &Plane, u: &mut Plane, v: &mut Plane, params: FlowParams) {
    let win = params.window();
    let (w, h) = ia.dims();
    let n = w * h;
    let (gx, gy) = ia.gradients();

    let mean_energy = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(a, b)| a * a + b * b)
        .sum::<f64>()
        / n as f64;
    let damping = RELATIVE_DAMPING * mean_energy + 1e-15;
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);

    for _ in 0..params.iterations_per_level() {
        // Samples warped outside the second frame carry no information and
        // are left out of both sides of the normal equations.
        let residual = Plane::par_from_fn(w, h, |x, y| {
            let (sx, sy) = (x as f64 + u.get(x, y), y as f64 + v.get(x, y));
            if (0.0..=max_x).contains(&sx) && (0.0..=max_y).contains(&sy) {
                ib.sample_bilinear(sx, sy) - ia.get(x, y)
            } else {
                f64::NAN
            }
        });
        // Neighbour residuals are sampled at the neighbour's own flow; shift
        // them to first order onto the centre's flow: r(q) + g(q)·(f(p) - f(q)).
        let mut terms = [
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        ];
        for i in 0..n {
            let ri = residual.data()[i];
            if ri.is_nan() {
                continue;
            }
            let (gxi, gyi) = (gx.data()[i], gy.data()[i]);
            let e = ri - (gxi * u.data()[i] + gyi * v.data()[i]);
            terms[0][i] = gxi * gxi;
            terms[1][i] = gxi * gyi;
            terms[2][i] = gyi * gyi;
            terms[3][i] = gxi * e;
            terms[4][i] = gyi * e;
        }
        let [gxx, gxy, gyy, bx, by] = terms.map(|t| Plane::new(w, h, t).box_mean(win));

        for i in 0..n {
            let a11 = gxx.data()[i] + damping;
            let a12 = gxy.data()[i];
            let a22 = gyy.data()[i] + damping;
            let det = a11 * a22 - a12 * a12;
            let (u0, v0) = (u.data()[i], v.data()[i]);
            // Damped system around the current estimate:
            // (G + λI) f = G f₀ - b + λ f₀, with b carrying the -G f₀ term.
            let rx = bx.data()[i] - damping * u0;
            let ry = by.data()[i] - damping * v0;
            let target_u = -(a22 * rx - a12 * ry) / det;
            let target_v = -(a11 * ry - a12 * rx) / det;
            let (mut du, mut dv) = (target_u - u0, target_v - v0);
            let step = du.hypot(dv);
            if step > MAX_STEP {
                du *= MAX_STEP / step;
                dv *= MAX_STEP / step;
            }
            u.data_mut()[i] += du;
            v.data_mut()[i] += dv;
        }
    }
    *u = u.median_filter(MEDIAN_WINDOW);
    *v = v.median_filter(MEDIAN_WINDOW);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flow_epe, interior_mask};

    /// Smooth periodic texture with several frequencies.
    fn texture(x: f64, y: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        0.5 + 0.12 * (tau * x / 37.0).sin() * (tau * y / 29.0).cos()
            + 0.1 * (tau * (x + 2.0 * y) / 131.0).sin()
            + 0.1 * (tau * (2.0 * x - y) / 113.0).cos()
            + 0.06 * (tau * (x - 3.0 * y) / 61.0).sin()
    }

    fn shifted_pair(w: usize, h: usize, du: f64, dv: f64) -> (Plane, Plane) {
        let a = Plane::from_fn(w, h, |x, y| texture(x as f64, y as f64));
        // b(x + d) = a(x): content moves by +d.
        let b = Plane::from_fn(w, h, |x, y| texture(x as f64 - du, y as f64 - dv));
        (a, b)
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let (a, _) = shifted_pair(160, 128, 0.0, 0.0);
        let f = estimate_flow_luma(&a, &a, FlowParams::default()).unwrap();
        let (_, max) = f.magnitude().min_max();
        assert!(max < 1e-3, "max magnitude {max}");
    }

    #[test]
    fn recovers_integer_translation() {
        let (a, b) = shifted_pair(160, 128, 3.0, 0.0);
        let f = estimate_flow_luma(&a, &b, FlowParams::default()).unwrap();
        let truth = FlowField::uniform(160, 128, 3.0, 0.0).unwrap();
        let epe = flow_epe(&f, &truth, Some(&interior_mask(160, 128, 16))).unwrap();
        assert!(epe < 0.05, "epe {epe}");
    }

    #[test]
    fn recovers_large_subpixel_translation() {
        let (a, b) = shifted_pair(200, 160, -7.4, 5.6);
        let f = estimate_flow_luma(&a, &b, FlowParams::default()).unwrap();
        let truth = FlowField::uniform(200, 160, -7.4, 5.6).unwrap();
        let epe = flow_epe(&f, &truth, Some(&interior_mask(200, 160, 20))).unwrap();
        assert!(epe < 0.1, "epe {epe}");
    }

    #[test]
    fn too_small_for_pyramid() {
        let a = Plane::filled(100, 130, 0.5);
        assert!(matches!(
            estimate_flow_luma(&a, &a, FlowParams::default()),
            Err(Error::Parameter(_))
        ));
        let p = FlowParams::new(3, 5, 15).unwrap();
        assert!(estimate_flow_luma(&a, &a, p).is_ok());
    }

    #[test]
    fn deterministic() {
        let (a, b) = shifted_pair(160, 128, 1.3, -2.2);
        let f1 = estimate_flow_luma(&a, &b, FlowParams::default()).unwrap();
        let f2 = estimate_flow_luma(&a, &b, FlowParams::default()).unwrap();
        assert_eq!(f1, f2);
    }
}
