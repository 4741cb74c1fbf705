//! Procedural surface textures for the synthetic provider.

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, x: i64, y: i64) -> u64 {
    mix64(seed ^ mix64((x as u64).wrapping_mul(0x1F1F_1F1F) ^ mix64(y as u64)))
}

/// Uniform value in `[0, 1)` fixed by `(seed, x, y)`.
pub(crate) fn unit(seed: u64, x: i64, y: i64) -> f32 {
    (lattice(seed, x, y) >> 40) as f32 / (1u64 << 24) as f32
}

/// Smooth value noise in `[0, 1)` with lattice spacing `cell`.
pub(crate) fn value_noise(seed: u64, x: f32, y: f32, cell: f32) -> f32 {
    let (fx, fy) = (x / cell, y / cell);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = unit(seed, ix, iy);
    let b = unit(seed, ix + 1, iy);
    let c = unit(seed, ix, iy + 1);
    let d = unit(seed, ix + 1, iy + 1);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Texture {
    Concrete,
    Brick,
    Bluestone,
    Asphalt,
    Mixed,
    GraniteBlock,
    HexPaver,
    Cobble,
    /// Striped fallback for material names without a dedicated generator.
    Generic(u8),
    Road,
    Background,
}

impl Texture {
    pub(crate) fn for_material(name: &str, index: u8) -> Self {
        match name {
            "concrete" => Texture::Concrete,
            "brick" => Texture::Brick,
            "granite/bluestone" => Texture::Bluestone,
            "asphalt" => Texture::Asphalt,
            "mixed" => Texture::Mixed,
            "granite block/stone" => Texture::GraniteBlock,
            "hexagonal asphalt paver" => Texture::HexPaver,
            "cobblestone" => Texture::Cobble,
            _ => Texture::Generic(index),
        }
    }
}

/// Per-image rendering state: pattern phase, color tint and noise seed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Surface {
    pub seed: u64,
    pub phase: (f32, f32),
    pub tint: [f32; 3],
    /// Row of the horizon; the background uses it to split sky from facade.
    pub horizon: f32,
}

fn add(c: [f32; 3], d: f32) -> [f32; 3] {
    [c[0] + d, c[1] + d, c[2] + d]
}

fn joint(v: f32, period: f32, width: f32) -> bool {
    v.rem_euclid(period) < width
}

pub(crate) fn shade(texture: Texture, x: usize, y: usize, s: &Surface) -> [f32; 3] {
    let (xf, yf) = (x as f32 + s.phase.0, y as f32 + s.phase.1);
    let speck = unit(s.seed, x as i64, y as i64) - 0.5;
    let rgb = match texture {
        Texture::Concrete => {
            if joint(xf, 14.0, 1.0) || joint(yf, 14.0, 1.0) {
                [0.50, 0.49, 0.47]
            } else {
                add([0.74, 0.73, 0.70], 0.06 * speck)
            }
        }
        Texture::Brick => {
            let row = (yf / 5.0).floor();
            let shift = if row as i64 % 2 == 0 { 0.0 } else { 5.0 };
            if joint(yf, 5.0, 1.0) || joint(xf + shift, 10.0, 1.0) {
                [0.78, 0.74, 0.66]
            } else {
                let v = 0.08 * (unit(s.seed, (xf + shift) as i64 / 10, row as i64) - 0.5);
                add([0.64, 0.27, 0.20], v + 0.04 * speck)
            }
        }
        Texture::Bluestone => {
            if joint(xf, 22.0, 1.0) || joint(yf, 16.0, 1.0) {
                [0.28, 0.30, 0.34]
            } else {
                let m = value_noise(s.seed, xf, yf, 6.0) - 0.5;
                add([0.43, 0.49, 0.58], 0.12 * m + 0.03 * speck)
            }
        }
        Texture::Asphalt => add([0.27, 0.27, 0.28], 0.16 * speck),
        Texture::Mixed => {
            let cell = ((xf / 4.0).floor() as i64 + (yf / 4.0).floor() as i64).rem_euclid(2);
            let inner = if cell == 0 { Texture::Concrete } else { Texture::Brick };
            return shade(inner, x, y, s);
        }
        Texture::GraniteBlock => {
            let row = (yf / 6.0).floor();
            let shift = if row as i64 % 2 == 0 { 0.0 } else { 3.0 };
            if joint(yf, 6.0, 1.0) || joint(xf + shift, 6.0, 1.0) {
                [0.25, 0.24, 0.23]
            } else {
                add([0.57, 0.55, 0.52], 0.08 * speck)
            }
        }
        Texture::HexPaver => {
            let size = 5.0f32;
            let q = (3f32.sqrt() / 3.0 * xf - yf / 3.0) / size;
            let r = (2.0 / 3.0 * yf) / size;
            let (mut rx, mut rz) = (q.round(), r.round());
            let ry = (-q - r).round();
            let (dx, dy, dz) = ((rx - q).abs(), (ry - (-q - r)).abs(), (rz - r).abs());
            if dx > dy && dx > dz {
                rx = -ry - rz;
            } else if dy <= dz {
                rz = -rx - ry;
            }
            let cx = size * 3f32.sqrt() * (rx + rz / 2.0);
            let cy = size * 1.5 * rz;
            let d = ((xf - cx).powi(2) + (yf - cy).powi(2)).sqrt();
            if d > 0.8 * size {
                [0.46, 0.46, 0.40]
            } else {
                add([0.22, 0.25, 0.21], 0.05 * speck)
            }
        }
        Texture::Cobble => {
            let cell = 7.0f32;
            let (gx, gy) = ((xf / cell).floor() as i64, (yf / cell).floor() as i64);
            let (mut f1, mut f2) = (f32::INFINITY, f32::INFINITY);
            for j in -1..=1 {
                for i in -1..=1 {
                    let (cx, cy) = (gx + i, gy + j);
                    let px = (cx as f32 + 0.2 + 0.6 * unit(s.seed ^ 11, cx, cy)) * cell;
                    let py = (cy as f32 + 0.2 + 0.6 * unit(s.seed ^ 13, cx, cy)) * cell;
                    let d = ((xf - px).powi(2) + (yf - py).powi(2)).sqrt();
                    if d < f1 {
                        f2 = f1;
                        f1 = d;
                    } else if d < f2 {
                        f2 = d;
                    }
                }
            }
            if f2 - f1 < 1.3 {
                [0.20, 0.18, 0.16]
            } else {
                add([0.55, 0.45, 0.36], 0.05 * speck - 0.02 * f1)
            }
        }
        Texture::Generic(i) => {
            let period = 3.0 + f32::from(i % 5);
            let base = [
                0.3 + 0.1 * f32::from(i % 4),
                0.5 - 0.07 * f32::from(i % 3),
                0.35 + 0.08 * f32::from(i % 5),
            ];
            if joint(xf + yf, period, 1.0) {
                add(base, -0.18)
            } else {
                add(base, 0.05 * speck)
            }
        }
        Texture::Road => {
            let lane = joint(yf, 12.0, 6.0) && (xf - s.phase.0 * 0.5).rem_euclid(48.0) < 2.0;
            if lane {
                [0.86, 0.86, 0.80]
            } else {
                add([0.36, 0.33, 0.40], 0.04 * speck)
            }
        }
        Texture::Background => {
            if (y as f32) < s.horizon * 0.45 {
                let t = y as f32 / (s.horizon * 0.45).max(1.0);
                [0.55 + 0.2 * t, 0.70 + 0.1 * t, 0.92]
            } else if joint(xf, 9.0, 4.0) && joint(yf, 8.0, 4.0) {
                [0.18, 0.22, 0.28]
            } else {
                add([0.66, 0.56, 0.46], 0.05 * speck)
            }
        }
    };
    [
        (rgb[0] * s.tint[0]).clamp(0.0, 1.0),
        (rgb[1] * s.tint[1]).clamp(0.0, 1.0),
        (rgb[2] * s.tint[2]).clamp(0.0, 1.0),
    ]
}
