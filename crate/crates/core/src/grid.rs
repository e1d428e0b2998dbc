//! Row-major scalar grids and the handful of filters the pipeline needs.
//!
//! Every neighbourhood operation clamps indices to the image border.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Like [`Plane::from_fn`], evaluating rows in parallel.
    pub fn par_from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; width * height];
        data.par_chunks_mut(width.max(1))
            .enumerate()
            .for_each(|(y, row)| {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = f(x, y);
                }
            });
        Self::new(width, height, data)
    }

    /// Element-wise combination of two equally sized planes.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert_eq!(self.dims(), other.dims(), "zip_map shape");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Plane::new(self.width, self.height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Bilinear interpolation at a sub-pixel location, clamping to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Mean over a `window`×`window` neighbourhood (window odd).
    pub fn box_mean(&self, window: usize) -> Plane {
        let norm = 1.0 / (window * window) as f64;
        let mut out = self.box_sum(window);
        out.data.iter_mut().for_each(|v| *v *= norm);
        out
    }

    fn box_sum(&self, window: usize) -> Plane {
        let r = (window / 2) as isize;
        let rows = separable_rows(self, |row, out| {
            let w = row.len() as isize;
            let at = |i: isize| row[i.clamp(0, w - 1) as usize];
            let mut acc: f64 = (-r..=r).map(at).sum();
            for x in 0..w {
                out[x as usize] = acc;
                acc += at(x + r + 1) - at(x - r);
            }
        });
        let rows_t = rows.transpose();
        let cols = separable_rows(&rows_t, |row, out| {
            let w = row.len() as isize;
            let at = |i: isize| row[i.clamp(0, w - 1) as usize];
            let mut acc: f64 = (-r..=r).map(at).sum();
            for x in 0..w {
                out[x as usize] = acc;
                acc += at(x + r + 1) - at(x - r);
            }
        });
        cols.transpose()
    }

    /// Minimum over a `window`×`window` neighbourhood (window odd).
    pub fn min_filter(&self, window: usize) -> Plane {
        let r = (window / 2) as isize;
        let pass = |p: &Plane| {
            separable_rows(p, |row, out| {
                let w = row.len() as isize;
                for x in 0..w {
                    let lo = (x - r).max(0) as usize;
                    let hi = (x + r).min(w - 1) as usize;
                    out[x as usize] = row[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
                }
            })
        };
        pass(&pass(self).transpose()).transpose()
    }

    pub fn transpose(&self) -> Plane {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.data[y * self.width + x];
            }
        }
        Plane::new(self.height, self.width, data)
    }

    /// Blur with the 5-tap binomial kernel and keep every second sample.
    pub fn pyr_down(&self) -> Plane {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let blur = |p: &Plane| {
            separable_rows(p, |row, out| {
                let w = row.len() as isize;
                for x in 0..w {
                    out[x as usize] = K
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * row[(x + k as isize - 2).clamp(0, w - 1) as usize])
                        .sum();
                }
            })
        };
        let blurred = blur(&blur(self).transpose()).transpose();
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Plane::from_fn(w, h, |x, y| blurred.get(2 * x, 2 * y))
    }

    /// Median over a `window`×`window` neighbourhood, clamped at the edges.
    pub fn median_filter(&self, window: usize) -> Plane {
        let r = (window / 2) as isize;
        Plane::par_from_fn(self.width, self.height, |x, y| {
            let mut vals = Vec::with_capacity(window * window);
            for dy in -r..=r {
                for dx in -r..=r {
                    vals.push(self.get_clamped(x as isize + dx, y as isize + dy));
                }
            }
            let mid = vals.len() / 2;
            *vals.select_nth_unstable_by(mid, f64::total_cmp).1
        })
    }

    /// Central-difference gradients `(d/dx, d/dy)`.
    pub fn gradients(&self) -> (Plane, Plane) {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut gx = Plane::filled(self.width, self.height, 0.0);
        let mut gy = Plane::filled(self.width, self.height, 0.0);
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                gx.data[i] = 0.5 * (self.get_clamped(x + 1, y) - self.get_clamped(x - 1, y));
                gy.data[i] = 0.5 * (self.get_clamped(x, y + 1) - self.get_clamped(x, y - 1));
            }
        }
        (gx, gy)
    }
}

fn separable_rows(p: &Plane, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Plane {
    let mut out = vec![0.0; p.data.len()];
    out.par_chunks_mut(p.width)
        .zip(p.data.par_chunks(p.width))
        .for_each(|(o, row)| f(row, o));
    Plane::new(p.width, p.height, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Plane {
        Plane::from_fn(9, 7, |x, y| (x * 10 + y) as f64)
    }

    #[test]
    fn box_mean_matches_direct_sum() {
        let p = ramp();
        let m = p.box_mean(3);
        for y in 0..7isize {
            for x in 0..9isize {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += p.get_clamped(x + dx, y + dy);
                    }
                }
                assert!((m.get(x as usize, y as usize) - s / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn min_filter_matches_direct_scan() {
        let p = Plane::from_fn(11, 6, |x, y| (((x * 7 + y * 13) % 17) as f64).sin());
        let m = p.min_filter(5);
        for y in 0..6isize {
            for x in 0..11isize {
                let mut lo = f64::INFINITY;
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        lo = lo.min(p.get_clamped(x + dx, y + dy));
                    }
                }
                assert_eq!(m.get(x as usize, y as usize), lo);
            }
        }
    }

    #[test]
    fn bilinear_hits_grid_points_and_midpoints() {
        let p = ramp();
        assert_eq!(p.sample_bilinear(3.0, 2.0), 32.0);
        assert!((p.sample_bilinear(3.5, 2.5) - 37.5).abs() < 1e-12);
        assert_eq!(p.sample_bilinear(-5.0, 100.0), p.get(0, 6));
    }

    #[test]
    fn pyr_down_halves_and_preserves_constant() {
        let p = Plane::filled(9, 7, 0.25);
        let d = p.pyr_down();
        assert_eq!(d.dims(), (5, 4));
        assert!(d.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
