use super::{AmbientLight, Image, TransmissionMap};
use crate::error::{check_shape, Result};
use crate::grid::Plane;

/// Transmission that may differ per colour channel.
///
/// A single [`TransmissionMap`] is shared by all three channels; an array of
/// three maps supplies one per channel (R, G, B).
pub trait ChannelTransmission {
    fn channel(&self, c: usize) -> &TransmissionMap;
}

impl ChannelTransmission for TransmissionMap {
    fn channel(&self, _c: usize) -> &TransmissionMap {
        self
    }
}

impl ChannelTransmission for [TransmissionMap; 3] {
    fn channel(&self, c: usize) -> &TransmissionMap {
        &self[c]
    }
}

fn check_dims<T: ChannelTransmission + ?Sized>(image: &Image, t: &T) -> Result<()> {
    for c in 0..3 {
        check_shape(image.dims(), t.channel(c).dims())?;
    }
    Ok(())
}

/// Forward haze model: `I_c = D_c t_c + A_c (1 - t_c)`.
pub fn apply_degradation<T: ChannelTransmission + ?Sized>(
    radiance: &Image,
    t: &T,
    ambient: AmbientLight,
) -> Result<Image> {
    check_dims(radiance, t)?;
    let planes: [Plane; 3] = std::array::from_fn(|c| {
        let a = ambient.channel(c);
        let d = radiance.channel(c);
        let tc = t.channel(c).plane();
        let data = d
            .data()
            .iter()
            .zip(tc.data())
            .map(|(&d, &t)| d * t + a * (1.0 - t))
            .collect();
        Plane::new(d.width(), d.height(), data)
    });
    let [r, g, b] = planes;
    Image::from_planes_clamped(r, g, b)
}

/// Inverse haze model: `D_c = (I_c - A_c (1 - t_c)) / t_c`, clamped to `[0, 1]`.
pub fn restore_radiance<T: ChannelTransmission + ?Sized>(
    observed: &Image,
    t: &T,
    ambient: AmbientLight,
) -> Result<Image> {
    check_dims(observed, t)?;
    let planes: [Plane; 3] = std::array::from_fn(|c| {
        let a = ambient.channel(c);
        let i = observed.channel(c);
        let tc = t.channel(c).plane();
        let data = i
            .data()
            .iter()
            .zip(tc.data())
            .map(|(&i, &t)| (i - a * (1.0 - t)) / t)
            .collect();
        Plane::new(i.width(), i.height(), data)
    });
    let [r, g, b] = planes;
    Image::from_planes_clamped(r, g, b)
}
