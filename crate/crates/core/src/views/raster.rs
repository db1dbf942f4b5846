use std::io::Write;

use super::ViewsError;

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [236, 236, 232];

/// Trajectory colors, indexed by `id % 8`.
pub const PALETTE: [Rgb; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 0],
];

pub fn palette_color(id: u32) -> Rgb {
    PALETTE[(id % PALETTE.len() as u32) as usize]
}

// 3×5 bitmaps, one row per byte, most significant of the low 3 bits is the left column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// An RGB8 image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Rgb> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Some([self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]])
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: Rgb) {
        for y in y0.max(0)..(y0 + h).min(i64::from(self.height)) {
            for x in x0.max(0)..(x0 + w).min(i64::from(self.width)) {
                self.put(x, y, c);
            }
        }
    }

    /// Fills a convex polygon, sampling at pixel centers.
    pub fn fill_convex(&mut self, poly: &[[f64; 2]], c: Rgb) {
        if poly.len() < 3 {
            return;
        }
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in poly {
            y_lo = y_lo.min(p[1]);
            y_hi = y_hi.max(p[1]);
        }
        let y_start = (y_lo - 0.5).ceil().max(0.0) as i64;
        let y_end = (y_hi - 0.5).floor().min(f64::from(self.height) - 1.0) as i64;
        for y in y_start..=y_end {
            let yc = y as f64 + 0.5;
            let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                if (a[1] <= yc && b[1] >= yc) || (b[1] <= yc && a[1] >= yc) {
                    if a[1] == b[1] {
                        x_lo = x_lo.min(a[0].min(b[0]));
                        x_hi = x_hi.max(a[0].max(b[0]));
                    } else {
                        let x = a[0] + (yc - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                        x_lo = x_lo.min(x);
                        x_hi = x_hi.max(x);
                    }
                }
            }
            if x_lo > x_hi {
                continue;
            }
            let xs = (x_lo - 0.5).ceil().max(0.0) as i64;
            let xe = (x_hi - 0.5).floor().min(f64::from(self.width) - 1.0) as i64;
            for x in xs..=xe {
                self.put(x, y, c);
            }
        }
    }

    /// Draws a segment clipped to the canvas, `thickness` pixels wide.
    pub fn draw_line(&mut self, a: [f64; 2], b: [f64; 2], c: Rgb, thickness: u32) {
        let Some((a, b)) = clip_segment(a, b, f64::from(self.width), f64::from(self.height)) else {
            return;
        };
        let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
        let half = thickness as i64 / 2;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (a[0] + (b[0] - a[0]) * t).floor() as i64;
            let y = (a[1] + (b[1] - a[1]) * t).floor() as i64;
            for dy in -half..(thickness as i64 - half) {
                for dx in -half..(thickness as i64 - half) {
                    self.put(x + dx, y + dy, c);
                }
            }
        }
    }

    /// Renders a non-negative integer with the built-in digit font, top-left at
    /// `(x, y)`, on a white plate for legibility.
    pub fn draw_number(&mut self, x: i64, y: i64, n: u32, c: Rgb, scale: u32) {
        let text = n.to_string();
        let s = i64::from(scale.max(1));
        let w = text.len() as i64 * 4 * s + s;
        self.fill_rect(x - s, y - s, w + s, 7 * s, [255, 255, 255]);
        for (k, ch) in text.bytes().enumerate() {
            let glyph = DIGITS[(ch - b'0') as usize];
            let ox = x + k as i64 * 4 * s;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        self.fill_rect(ox + col * s, y + row as i64 * s, s, s, c);
                    }
                }
            }
        }
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ViewsError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| ViewsError::Encode(e.to_string()))?;
            writer
                .write_image_data(&self.pixels)
                .map_err(|e| ViewsError::Encode(e.to_string()))?;
            writer
                .finish()
                .map_err(|e| ViewsError::Encode(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_ppm())
    }
}

/// Liang–Barsky clip of segment `a`–`b` to `[0, w) × [0, h)`.
pub fn clip_segment(a: [f64; 2], b: [f64; 2], w: f64, h: f64) -> Option<([f64; 2], [f64; 2])> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let max_x = w - 1e-9;
    let max_y = h - 1e-9;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a[0]),
        (dx, max_x - a[0]),
        (-dy, a[1]),
        (dy, max_y - a[1]),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((
        [a[0] + t0 * dx, a[1] + t0 * dy],
        [a[0] + t1 * dx, a[1] + t1 * dy],
    ))
}

/// Convex hull (Andrew's monotone chain), counter-clockwise in pixel space.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies inside or on the convex polygon `hull`.
pub fn hull_contains(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    let mut sign = 0.0;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let c = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}
