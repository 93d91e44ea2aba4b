//! 8-bit RGB rasters, PNG/PPM codecs, color conversion and Gaussian smoothing.

use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    BadDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image encoding failed: {0}")]
    Encode(String),
}

pub type Rgb = [u8; 3];

/// Row-major 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single color. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Interleaved RGBA input, alpha dropped.
    pub fn from_rgba(width: usize, height: usize, rgba: &[u8]) -> Result<Self, ImageError> {
        if rgba.len() != width * height * 4 {
            return Err(ImageError::BadDimensions {
                width,
                height,
                len: rgba.len() / 4,
            });
        }
        let pixels = rgba.chunks_exact(4).map(|p| [p[0], p[1], p[2]]).collect();
        Self::new(width, height, pixels)
    }

    pub fn to_rgba(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
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
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, color: Rgb) {
        self.pixels[y * self.width + x] = color;
    }

    /// Copies the half-open rectangle `[x0, x1) x [y0, y1)`, clipped to the image.
    /// Returns `None` when the clipped rectangle is empty.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<Image> {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(Image::from_fn(x1 - x0, y1 - y0, |x, y| {
            self.get(x0 + x, y0 + y)
        }))
    }

    /// Per-channel mean.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0u64; 3];
        for p in &self.pixels {
            for c in 0..3 {
                sum[c] += u64::from(p[c]);
            }
        }
        let n = self.pixels.len() as f64;
        sum.map(|s| s as f64 / n)
    }
}

/// Row-major plane of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatPlane {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl FloatPlane {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, ImageError> {
        if values.len() != width * height {
            return Err(ImageError::BadDimensions {
                width,
                height,
                len: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Splits an image into its three channels.
    pub fn channels(img: &Image) -> [FloatPlane; 3] {
        std::array::from_fn(|c| FloatPlane {
            width: img.width,
            height: img.height,
            values: img.pixels.iter().map(|p| f32::from(p[c])).collect(),
        })
    }
}

/// Decodes a PNG or binary PPM (P6) stream.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageError> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat)
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let malformed = |e: png::DecodingError| ImageError::MalformedImage(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(malformed)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::MalformedImage("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(malformed)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let data = &buf[..frame.buffer_size()];
    let pixels: Vec<Rgb> = match frame.color_type {
        png::ColorType::Rgb => data.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Rgba => data.chunks_exact(4).map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => {
            return Err(ImageError::MalformedImage(
                "palette was not expanded".into(),
            ))
        }
    };
    Image::new(width, height, pixels)
}

struct PpmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_ppm_header(bytes: &[u8]) -> Result<PpmHeader, ImageError> {
    let malformed = |m: &str| ImageError::MalformedImage(format!("ppm header: {m}"));
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("unexpected end")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("number out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing separator")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval out of range"));
    }
    Ok(PpmHeader {
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

fn decode_ppm(bytes: &[u8]) -> Result<Image, ImageError> {
    let header = parse_ppm_header(bytes)?;
    let n = header.width.checked_mul(header.height).ok_or_else(|| {
        ImageError::MalformedImage("ppm dimensions overflow".into())
    })?;
    let sample_bytes = if header.maxval > 255 { 2 } else { 1 };
    let need = n * 3 * sample_bytes;
    let data = &bytes[header.data_offset..];
    if data.len() < need {
        return Err(ImageError::MalformedImage(format!(
            "ppm payload truncated: need {need} bytes, have {}",
            data.len()
        )));
    }
    let pixels = if sample_bytes == 2 {
        // 16-bit samples keep the high byte
        data[..need]
            .chunks_exact(6)
            .map(|p| [p[0], p[2], p[4]])
            .collect()
    } else if header.maxval == 255 {
        data[..need]
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect()
    } else {
        let m = header.maxval as u32;
        let scale = |v: u8| ((u32::from(v).min(m) * 255 + m / 2) / m) as u8;
        data[..need]
            .chunks_exact(3)
            .map(|p| [scale(p[0]), scale(p[1]), scale(p[2])])
            .collect()
    };
    Image::new(header.width, header.height, pixels)
}

/// Binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.len() * 3);
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

/// 8-bit RGB PNG.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImageError::Encode(e.to_string()))?;
        let data: Vec<u8> = img.pixels.iter().flatten().copied().collect();
        writer
            .write_image_data(&data)
            .map_err(|e| ImageError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Normalised Gaussian kernel truncated at radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    kernel
}

fn convolve_rows(plane: &[f32], width: usize, height: usize, kernel: &[f64]) -> Vec<f32> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0f64;
            for (i, k) in kernel.iter().enumerate() {
                let sx = (x as isize + i as isize - radius).clamp(0, width as isize - 1);
                acc += k * f64::from(row[sx as usize]);
            }
            out[y * width + x] = acc as f32;
        }
    }
    out
}

fn convolve_cols(plane: &[f32], width: usize, height: usize, kernel: &[f64]) -> Vec<f32> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0f64;
            for (i, k) in kernel.iter().enumerate() {
                let sy = (y as isize + i as isize - radius).clamp(0, height as isize - 1);
                acc += k * f64::from(plane[sy as usize * width + x]);
            }
            out[y * width + x] = acc as f32;
        }
    }
    out
}

/// Separable Gaussian smoothing of each channel with edge-clamped borders,
/// kept in floating point. `sigma <= 0` returns the raw channels.
pub fn gaussian_smooth_planes(img: &Image, sigma: f64) -> [FloatPlane; 3] {
    let channels = FloatPlane::channels(img);
    if sigma <= 0.0 {
        return channels;
    }
    let kernel = gaussian_kernel(sigma);
    channels.map(|plane| {
        let tmp = convolve_rows(&plane.values, plane.width, plane.height, &kernel);
        let values = convolve_cols(&tmp, plane.width, plane.height, &kernel);
        FloatPlane { values, ..plane }
    })
}

/// Gaussian smoothing rounded back to 8 bits. `sigma = 0` is the identity.
pub fn gaussian_smooth(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let [r, g, b] = gaussian_smooth_planes(img, sigma);
    let to_u8 = |v: f32| v.round().clamp(0.0, 255.0) as u8;
    let pixels = (0..img.len())
        .map(|i| [to_u8(r.values[i]), to_u8(g.values[i]), to_u8(b.values[i])])
        .collect();
    Image {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// RGB to HSV with every channel rescaled to 0..=255 (hue degrees map 360 -> 255).
pub fn rgb_to_hsv_pixel(p: Rgb) -> Rgb {
    let [r, g, b] = p.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue_degrees = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let saturation = if max == 0.0 { 0.0 } else { delta / max };
    let h = (hue_degrees / 360.0 * 255.0).round().clamp(0.0, 255.0) as u8;
    let s = (saturation * 255.0).round() as u8;
    [h, s, max as u8]
}

/// HSV raster stored in an [`Image`] (channels are H, S, V).
pub fn to_hsv(img: &Image) -> Image {
    Image {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| rgb_to_hsv_pixel(p)).collect(),
    }
}
