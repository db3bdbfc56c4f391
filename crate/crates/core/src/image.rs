//! Raster types, image IO and the scribble annotation model.
//!
//! Pixels are stored row-major. Masks are written as PNG with foreground in
//! white; scribble sidecars use pure green for foreground seeds and pure red
//! for background seeds, every other color meaning "unlabeled".

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Luma, RgbImage};

use crate::color;
use crate::{Error, Result};

pub const FOREGROUND_COLOR: [u8; 3] = [0, 255, 0];
pub const BACKGROUND_COLOR: [u8; 3] = [255, 0, 0];

/// Dense 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::LengthMismatch {
                expected: width * height * 3,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixel_at(y * self.width + x)
    }

    pub fn pixel_at(&self, i: usize) -> [u8; 3] {
        let o = 3 * i;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Reference image in YUV with every channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct YuvImage {
    pub width: usize,
    pub height: usize,
    pub luma: Vec<f64>,
    pub chroma_u: Vec<f64>,
    pub chroma_v: Vec<f64>,
}

impl YuvImage {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

pub fn rgb_to_yuv(img: &ImageBuffer) -> YuvImage {
    let n = img.pixel_count();
    let mut luma = Vec::with_capacity(n);
    let mut chroma_u = Vec::with_capacity(n);
    let mut chroma_v = Vec::with_capacity(n);
    for p in img.pixels() {
        let [y, u, v] = color::rgb_to_yuv(p);
        luma.push(y);
        chroma_u.push(u);
        chroma_v.push(v);
    }
    YuvImage {
        width: img.width,
        height: img.height,
        luma,
        chroma_u,
        chroma_v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Label {
    Foreground,
    Background,
    #[default]
    Unlabeled,
}

/// Per-pixel seed annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScribbleMap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl ScribbleMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![Label::Unlabeled; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Maps exact green to foreground and exact red to background.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let labels = img
            .pixels()
            .map(|p| match p {
                FOREGROUND_COLOR => Label::Foreground,
                BACKGROUND_COLOR => Label::Background,
                _ => Label::Unlabeled,
            })
            .collect();
        Self {
            width: img.width,
            height: img.height,
            labels,
        }
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.width, self.height, |x, y| match self.get(x, y) {
            Label::Foreground => FOREGROUND_COLOR,
            Label::Background => BACKGROUND_COLOR,
            Label::Unlabeled => [0, 0, 0],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    /// `(foreground, background)` seed counts.
    pub fn seed_counts(&self) -> (usize, usize) {
        self.labels.iter().fold((0, 0), |(f, b), l| match l {
            Label::Foreground => (f + 1, b),
            Label::Background => (f, b + 1),
            Label::Unlabeled => (f, b),
        })
    }

    /// Fails with `MissingSeeds` unless both classes have at least one seed.
    pub fn require_both_classes(&self) -> Result<()> {
        match self.seed_counts() {
            (0, 0) => Err(Error::MissingSeeds("no foreground or background seeds".into())),
            (0, _) => Err(Error::MissingSeeds("no foreground seeds".into())),
            (_, 0) => Err(Error::MissingSeeds("no background seeds".into())),
            _ => Ok(()),
        }
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        check_dims((width, height), (self.width, self.height))
    }
}

/// Binary segmentation, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    /// White foreground on black background.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let img = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        let rgb = DynamicImage::ImageLuma8(img).to_rgb8();
        encode_png(&rgb)
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn decode_dynamic(bytes: &[u8]) -> Result<DynamicImage> {
    let format = checked_format(bytes)?;
    image::load_from_memory_with_format(bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::CorruptImage(other.to_string()),
    })
}

fn checked_format(bytes: &[u8]) -> Result<ImageFormat> {
    let format = image::guess_format(bytes)
        .map_err(|_| Error::UnsupportedFormat("unrecognized image data".into()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    Ok(format)
}

/// Width and height from the image header, without decoding pixels.
pub fn probe_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let format = checked_format(bytes)?;
    let (w, h) = image::ImageReader::with_format(std::io::Cursor::new(bytes), format)
        .into_dimensions()
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    Ok((w as usize, h as usize))
}

/// Decodes PNG or binary PPM bytes. Gray inputs are expanded to three
/// identical channels and alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let rgb = decode_dynamic(bytes)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w as usize, h as usize, rgb.into_raw())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    decode_image(&read_bytes(path.as_ref())?)
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}

pub fn encode_png_rgb(img: &ImageBuffer) -> Result<Vec<u8>> {
    let rgb = RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer length checked at construction");
    encode_png(&rgb)
}

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Writes `.ppm`/`.pnm` as binary PPM and everything else as PNG.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pnm"));
    let bytes = if is_ppm {
        encode_ppm(img)
    } else {
        encode_png_rgb(img)?
    };
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mask.to_png_bytes()?)?;
    Ok(())
}

pub fn load_scribbles(path: impl AsRef<Path>, width: usize, height: usize) -> Result<ScribbleMap> {
    let img = load_image(path)?;
    check_dims((width, height), (img.width, img.height))?;
    Ok(ScribbleMap::from_image(&img))
}

pub fn save_scribbles(scribbles: &ScribbleMap, path: impl AsRef<Path>) -> Result<()> {
    save_image(&scribbles.to_image(), path)
}

/// Ground truth read back as a mask (luma ≥ 128 is foreground) together with
/// a flag per pixel telling whether the value was strictly between 0 and 255.
pub struct GroundTruth {
    pub mask: BinaryMask,
    pub uncertain: Vec<bool>,
}

impl GroundTruth {
    pub fn has_uncertain(&self) -> bool {
        self.uncertain.iter().any(|&u| u)
    }
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let gray = decode_dynamic(&read_bytes(path.as_ref())?)?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw = gray.into_raw();
    Ok(GroundTruth {
        mask: BinaryMask {
            width: w,
            height: h,
            values: raw.iter().map(|&v| v >= 128).collect(),
        },
        uncertain: raw.iter().map(|&v| v != 0 && v != 255).collect(),
    })
}

/// Grayscale PNG of `values * 255`, clamped. Used for debug dumps of costs.
pub fn scalar_field_png(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    let img = image::GrayImage::from_fn(width as u32, height as u32, |x, y| {
        let v = values[y as usize * width + x as usize];
        Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
    });
    encode_png(&DynamicImage::ImageLuma8(img).to_rgb8())
}

/// Image with superpixel boundaries painted in `color`.
pub fn label_boundary_overlay(img: &ImageBuffer, labels: &[u32], color: [u8; 3]) -> ImageBuffer {
    let (w, h) = (img.width, img.height);
    ImageBuffer::from_fn(w, h, |x, y| {
        let l = labels[y * w + x];
        let edge = (x + 1 < w && labels[y * w + x + 1] != l) || (y + 1 < h && labels[(y + 1) * w + x] != l);
        if edge {
            color
        } else {
            img.pixel(x, y)
        }
    })
}
