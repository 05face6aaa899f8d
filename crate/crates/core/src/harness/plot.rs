//! Minimal raster plots written as PGM.

use crate::io::Image;

const WIDTH: usize = 480;
const HEIGHT: usize = 320;
const MARGIN: usize = 24;

/// Gray levels cycled through for successive series.
const INKS: [u8; 5] = [0, 96, 160, 48, 128];

struct Canvas {
    pixels: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, ink: u8) {
        if (0..WIDTH as i64).contains(&x) && (0..HEIGHT as i64).contains(&y) {
            self.pixels[y as usize * WIDTH + x as usize] = ink;
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), ink: u8, dotted: bool) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        let mut n = 0u32;
        loop {
            if !dotted || n % 4 < 2 {
                self.put(x, y, ink);
            }
            n += 1;
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// One curve: points `(x, y)` and an optional symmetric band.
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<f64>>,
}

/// Line plot of every series on shared axes, framed, white background.
/// Bands are drawn as dotted upper and lower lines.
pub fn line_plot(series: &[Series]) -> Image {
    let mut c = Canvas {
        pixels: vec![255; WIDTH * HEIGHT],
    };
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let b = s.band.as_ref().map_or(0.0, |b| b[i]);
            if x.is_finite() && y.is_finite() {
                xs = (xs.0.min(x), xs.1.max(x));
                ys = (ys.0.min(y - b), ys.1.max(y + b));
            }
        }
    }
    if !(xs.1 > xs.0) {
        xs = (xs.0 - 1.0, xs.0 + 1.0);
    }
    if !(ys.1 > ys.0) {
        ys = (ys.0 - 1.0, ys.0 + 1.0);
    }
    let (w, h) = ((WIDTH - 2 * MARGIN) as f64, (HEIGHT - 2 * MARGIN) as f64);
    let px = |x: f64, y: f64| -> (i64, i64) {
        (
            (MARGIN as f64 + (x - xs.0) / (xs.1 - xs.0) * w).round() as i64,
            (MARGIN as f64 + (ys.1 - y) / (ys.1 - ys.0) * h).round() as i64,
        )
    };
    let (l, r, t, b) = (MARGIN as i64, (WIDTH - MARGIN) as i64, MARGIN as i64, (HEIGHT - MARGIN) as i64);
    for (p, q) in [((l, t), (r, t)), ((r, t), (r, b)), ((r, b), (l, b)), ((l, b), (l, t))] {
        c.line(p, q, 200, false);
    }
    for (k, s) in series.iter().enumerate() {
        let ink = INKS[k % INKS.len()];
        let finite: Vec<usize> = (0..s.points.len())
            .filter(|&i| s.points[i].0.is_finite() && s.points[i].1.is_finite())
            .collect();
        for pair in finite.windows(2) {
            let (i, j) = (pair[0], pair[1]);
            let (a, bpt) = (s.points[i], s.points[j]);
            c.line(px(a.0, a.1), px(bpt.0, bpt.1), ink, false);
            if let Some(band) = &s.band {
                for sign in [-1.0, 1.0] {
                    c.line(
                        px(a.0, a.1 + sign * band[i]),
                        px(bpt.0, bpt.1 + sign * band[j]),
                        ink,
                        true,
                    );
                }
            }
        }
        for &i in &finite {
            let (x, y) = px(s.points[i].0, s.points[i].1);
            for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                c.put(x + dx, y + dy, ink);
            }
        }
    }
    Image {
        width: WIDTH,
        height: HEIGHT,
        pixels: c.pixels,
    }
}

/// Gather image with a symmetric amplitude scale: `-clip` is black,
/// zero mid-gray, `+clip` white. Rows are time samples.
pub fn gather_image(data: &[f32], n_traces: usize, n_samples: usize, clip: f32) -> Image {
    let clip = if clip > 0.0 { clip } else { 1.0 };
    let pixels = data
        .iter()
        .map(|&v| ((v / clip).clamp(-1.0, 1.0) * 127.5 + 127.5).round() as u8)
        .collect();
    Image {
        width: n_traces,
        height: n_samples,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_marks_pixels() {
        let img = line_plot(&[Series {
            points: vec![(1.0, 0.0), (2.0, 1.0), (3.0, 0.5)],
            band: Some(vec![0.1, 0.1, 0.1]),
        }]);
        assert_eq!(img.pixels.len(), WIDTH * HEIGHT);
        assert!(img.pixels.iter().any(|&p| p == 0));
    }

    #[test]
    fn gather_image_is_symmetric_about_gray() {
        let img = gather_image(&[-2.0, -1.0, 0.0, 1.0], 2, 2, 1.0);
        assert_eq!(img.pixels, vec![0, 0, 128, 255]);
    }
}
