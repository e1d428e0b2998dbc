//! Middlebury flow colour coding: hue from direction, saturation from
//! magnitude.

use super::FlowField;
use crate::imaging::Image;

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;
const NCOLS: usize = RY + YG + GC + CB + BM + MR;

fn wheel() -> Vec<[f64; 3]> {
    let mut w = Vec::with_capacity(NCOLS);
    for i in 0..RY {
        w.push([255.0, 255.0 * i as f64 / RY as f64, 0.0]);
    }
    for i in 0..YG {
        w.push([255.0 - 255.0 * i as f64 / YG as f64, 255.0, 0.0]);
    }
    for i in 0..GC {
        w.push([0.0, 255.0, 255.0 * i as f64 / GC as f64]);
    }
    for i in 0..CB {
        w.push([0.0, 255.0 - 255.0 * i as f64 / CB as f64, 255.0]);
    }
    for i in 0..BM {
        w.push([255.0 * i as f64 / BM as f64, 0.0, 255.0]);
    }
    for i in 0..MR {
        w.push([255.0, 0.0, 255.0 - 255.0 * i as f64 / MR as f64]);
    }
    w
}

fn encode(wheel: &[[f64; 3]], u: f64, v: f64) -> [f64; 3] {
    let rad = u.hypot(v);
    let angle = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (angle + 1.0) / 2.0 * (NCOLS - 1) as f64;
    let k0 = fk.floor() as usize % NCOLS;
    let k1 = (k0 + 1) % NCOLS;
    let f = fk - fk.floor();
    std::array::from_fn(|c| {
        let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        }
    })
}

/// Colour-codes a flow field, dividing magnitudes by `max_magnitude`
/// (a vector of that length reaches full saturation). Zero flow is white.
pub fn flow_to_color(flow: &FlowField, max_magnitude: f64) -> Image {
    let wheel = wheel();
    let scale = if max_magnitude > 0.0 {
        1.0 / max_magnitude
    } else {
        0.0
    };
    Image::from_fn(flow.width(), flow.height(), |x, y| {
        let (u, v) = flow.at(x, y);
        encode(&wheel, u * scale, v * scale)
    })
    .expect("flow field dimensions are valid image dimensions")
}
