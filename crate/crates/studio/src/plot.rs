//! Small raster charts for reports. No text: the CSV next to each chart
//! carries the numbers.

use custom_tokens::Image;

const WHITE: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [60, 60, 60];
const GRID: [u8; 3] = [225, 225, 225];
const LINE: [u8; 3] = [31, 119, 180];
const ACCENT: [u8; 3] = [214, 39, 40];
const MARGIN: u32 = 12;

fn put(img: &mut Image, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.set(x as u32, y as u32, c);
    }
}

fn segment(img: &mut Image, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
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

fn fill_rect(img: &mut Image, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
    for y in y0.min(y1)..=y0.max(y1) {
        for x in x0.min(x1)..=x0.max(x1) {
            put(img, x, y, c);
        }
    }
}

/// Finite range padded so a constant series still has height.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    width: u32,
    height: u32,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (i64, i64) {
        let w = (self.width - 2 * MARGIN) as f64;
        let h = (self.height - 2 * MARGIN) as f64;
        let fx = (x - self.x.0) / (self.x.1 - self.x.0);
        let fy = (y - self.y.0) / (self.y.1 - self.y.0);
        ((MARGIN as f64 + fx * w).round() as i64, (self.height as f64 - MARGIN as f64 - fy * h).round() as i64)
    }

    fn canvas(&self) -> Image {
        let mut img = Image::filled(self.width, self.height, WHITE);
        for k in 1..4 {
            let y = self.y.0 + (self.y.1 - self.y.0) * k as f64 / 4.0;
            segment(&mut img, self.px(self.x.0, y), self.px(self.x.1, y), GRID);
        }
        let origin = self.px(self.x.0, self.y.0);
        segment(&mut img, origin, self.px(self.x.1, self.y.0), AXIS);
        segment(&mut img, origin, self.px(self.x.0, self.y.1), AXIS);
        img
    }
}

/// Polyline through `(x, y)` with a marker at each point; `mark` gets a
/// vertical accent line.
pub fn line_chart(points: &[(f64, f64)], mark: Option<f64>, width: u32, height: u32) -> Image {
    let frame = Frame { width, height, x: range(points.iter().map(|p| p.0)), y: range(points.iter().map(|p| p.1)) };
    let mut img = frame.canvas();
    if let Some(m) = mark {
        segment(&mut img, frame.px(m, frame.y.0), frame.px(m, frame.y.1), ACCENT);
    }
    let pts: Vec<_> =
        points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| frame.px(x, y)).collect();
    for w in pts.windows(2) {
        segment(&mut img, w[0], w[1], LINE);
    }
    for &(x, y) in &pts {
        fill_rect(&mut img, x - 1, y - 1, x + 1, y + 1, LINE);
    }
    img
}

/// One bar per value from zero; bar `highlight` is drawn in the accent colour.
pub fn bar_chart(values: &[f64], highlight: Option<usize>, width: u32, height: u32) -> Image {
    let n = values.len().max(1) as f64;
    let frame = Frame { width, height, x: (0.0, n), y: range(values.iter().copied().chain([0.0])) };
    let mut img = frame.canvas();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        let (x0, y0) = frame.px(i as f64 + 0.15, 0.0);
        let (x1, y1) = frame.px(i as f64 + 0.85, v);
        fill_rect(&mut img, x0, y0, x1.max(x0), y1, if Some(i) == highlight { ACCENT } else { LINE });
    }
    img
}

/// Square cells coloured blue (−clip) through white to red (+clip).
pub fn heatmap(matrix: &[Vec<f64>], clip: f64, cell: u32) -> Image {
    let n = matrix.len() as u32;
    let cols = matrix.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let clip = if clip > 0.0 { clip } else { 1.0 };
    Image::from_fn((cols * cell).max(1), (n * cell).max(1), |x, y| {
        let v = matrix.get((y / cell.max(1)) as usize).and_then(|r| r.get((x / cell.max(1)) as usize)).copied();
        let Some(v) = v.filter(|v| v.is_finite()) else {
            return [128, 128, 128];
        };
        let t = (v / clip).clamp(-1.0, 1.0);
        let fade = |full: u8| (255.0 - (255.0 - full as f64) * t.abs()).round() as u8;
        if t >= 0.0 {
            [fade(ACCENT[0]), fade(ACCENT[1]), fade(ACCENT[2])]
        } else {
            [fade(LINE[0]), fade(LINE[1]), fade(LINE[2])]
        }
    })
}
