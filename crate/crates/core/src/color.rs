//! Per-pixel color conversions.

/// BT.601 peak magnitude of the U chroma channel over the RGB cube.
const U_MAX: f64 = 0.436;
/// BT.601 peak magnitude of the V chroma channel over the RGB cube.
const V_MAX: f64 = 0.615;

/// BT.601 full-range YUV with both chroma channels shifted into `[0, 1]`.
///
/// Returns `(luma, u, v)`. Luma is in `[0, 1]` by construction; chroma is
/// scaled by the channel's peak so that the whole RGB cube lands inside the
/// unit interval.
pub fn rgb_to_yuv(rgb: [u8; 3]) -> [f64; 3] {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = 0.492 * (b - y) / (2.0 * U_MAX);
    let v = 0.877 * (r - y) / (2.0 * V_MAX);
    [
        y.clamp(0.0, 1.0),
        (u + 0.5).clamp(0.0, 1.0),
        (v + 0.5).clamp(0.0, 1.0),
    ]
}

// D65 reference white.
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// 8-bit sRGB to CIELAB (D65). Returns `[L, a, b]`.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let r = srgb_to_linear(rgb[0] as f64 / 255.0);
    let g = srgb_to_linear(rgb[1] as f64 / 255.0);
    let b = srgb_to_linear(rgb[2] as f64 / 255.0);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / XN);
    let fy = lab_f(y / YN);
    let fz = lab_f(z / ZN);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
