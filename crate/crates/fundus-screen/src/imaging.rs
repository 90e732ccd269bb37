//! Image decoding and the deterministic preprocessing chain.
//!
//! The pipeline works on interleaved 8-bit RGB rasters. Preprocessing is
//! center crop, optional bilinear resize, then per-channel local-mean color
//! normalization: each channel is Gaussian-blurred, the blur is subtracted
//! from the original, the residual is amplified and re-centered around an
//! offset, and the result is clamped back to `[0, 255]`.
//!
//! All operations are pure; identical inputs yield bit-identical outputs.

use crate::kv::{self, KvConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// Interleaved 8-bit RGB raster, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Dimension(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImagingError::Dimension(format!(
                "pixel buffer holds {} bytes, expected {expected} for {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Solid-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Splits the raster into R, G, B planes as f32 channels.
    pub fn channels(&self) -> [Channel; 3] {
        let n = self.width as usize * self.height as usize;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for px in self.data.chunks_exact(3) {
            planes[0].push(px[0] as f32);
            planes[1].push(px[1] as f32);
            planes[2].push(px[2] as f32);
        }
        planes.map(|data| Channel {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Single-plane f32 raster used for per-channel arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Channel {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::Dimension(format!(
                "channel buffer holds {} values, expected {} for {width}x{height}",
                data.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Parameters of the preprocessing chain.
///
/// `resize_to = 0` skips the resize step (the crop-only variant used when
/// full resolution must be preserved).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocessConfig {
    pub crop_size: u32,
    pub resize_to: u32,
    pub sigma: f64,
    pub amplification: f64,
    pub offset: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            crop_size: 800,
            resize_to: 448,
            sigma: 10.0,
            amplification: 4.0,
            offset: 128.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 {
            return Err(ImagingError::Parameter("crop_size must be >= 1".into()));
        }
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return Err(ImagingError::Parameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.amplification <= 0.0 || !self.amplification.is_finite() {
            return Err(ImagingError::Parameter(format!(
                "amplification must be positive, got {}",
                self.amplification
            )));
        }
        if !(0.0..=255.0).contains(&self.offset) {
            return Err(ImagingError::Parameter(format!(
                "offset must lie in [0, 255], got {}",
                self.offset
            )));
        }
        Ok(())
    }
}

impl KvConfig for PreprocessConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "crop_size" => self.crop_size = kv::parse_num(value, "crop_size")?,
            "resize_to" => self.resize_to = kv::parse_num(value, "resize_to")?,
            "sigma" => self.sigma = kv::parse_num(value, "sigma")?,
            "amplification" => self.amplification = kv::parse_num(value, "amplification")?,
            "offset" => self.offset = kv::parse_num(value, "offset")?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("crop_size".into(), self.crop_size.to_string()),
            ("resize_to".into(), self.resize_to.to_string()),
            ("sigma".into(), self.sigma.to_string()),
            ("amplification".into(), self.amplification.to_string()),
            ("offset".into(), self.offset.to_string()),
        ]
    }
}

// ---------------------------------------------------------------------------
// NetPBM P6 codec
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(ImagingError::Decode {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    /// Skips whitespace and `#` comments, then reads one ASCII token.
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return self.err("unexpected end of header");
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| ImagingError::Decode {
                offset: start,
                reason: "non-ASCII bytes in header".into(),
            })
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let start_err_pos = self.pos;
        let tok = self.token()?;
        tok.parse::<u32>().map_err(|_| ImagingError::Decode {
            offset: start_err_pos,
            reason: format!("invalid {what} {tok:?}"),
        })
    }
}

/// Decodes a binary NetPBM P6 stream with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    if magic != "P6" {
        return Err(ImagingError::Decode {
            offset: 0,
            reason: format!("expected P6 magic, got {magic:?}"),
        });
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    if width == 0 || height == 0 {
        return cur.err(format!("degenerate dimensions {width}x{height}"));
    }
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImagingError::Decode {
            offset: maxval_pos,
            reason: format!("unsupported maxval {maxval} (only 255)"),
        });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return cur.err("missing whitespace after maxval");
    }
    cur.pos += 1;
    let expected = width as usize * height as usize * 3;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(ImagingError::Decode {
            offset: bytes.len(),
            reason: format!(
                "truncated pixel data: got {} of {expected} bytes",
                payload.len()
            ),
        });
    }
    if payload.len() > expected {
        return Err(ImagingError::Decode {
            offset: cur.pos + expected,
            reason: format!("{} trailing bytes after pixel data", payload.len() - expected),
        });
    }
    Image::new(width, height, payload.to_vec())
}

/// Encodes an image as a canonical binary P6 stream.
///
/// `decode_ppm(encode_ppm(img))` reproduces `img` byte for byte.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

pub fn load_ppm(path: &std::path::Path) -> Result<Image> {
    decode_ppm(&std::fs::read(path)?)
}

pub fn save_ppm(path: &std::path::Path, img: &Image) -> Result<()> {
    Ok(std::fs::write(path, encode_ppm(img))?)
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Crops a centered `crop_w` x `crop_h` window.
///
/// The window origin is `(floor((w - crop_w) / 2), floor((h - crop_h) / 2))`.
pub fn center_crop(img: &Image, crop_w: u32, crop_h: u32) -> Result<Image> {
    if crop_w == 0 || crop_h == 0 || crop_w > img.width || crop_h > img.height {
        return Err(ImagingError::Dimension(format!(
            "crop {crop_w}x{crop_h} does not fit in {}x{} source",
            img.width, img.height
        )));
    }
    let x0 = ((img.width - crop_w) / 2) as usize;
    let y0 = ((img.height - crop_h) / 2) as usize;
    let mut data = Vec::with_capacity(crop_w as usize * crop_h as usize * 3);
    for y in 0..crop_h as usize {
        let row = ((y0 + y) * img.width as usize + x0) * 3;
        data.extend_from_slice(&img.data[row..row + crop_w as usize * 3]);
    }
    Image::new(crop_w, crop_h, data)
}

/// Rounds half away from zero, the quantization rule used everywhere bytes
/// are produced from floats.
#[inline]
pub(crate) fn round_half_away(v: f64) -> f64 {
    v.round()
}

#[inline]
fn quantize(v: f64) -> u8 {
    round_half_away(v).clamp(0.0, 255.0) as u8
}

/// Bilinear resize with half-pixel sample centers.
///
/// Source coordinate for output index `d` is `(d + 0.5) * scale - 0.5`,
/// clamped to the valid range, so resizing to the same size is an identity.
pub fn resize_bilinear(img: &Image, out_w: u32, out_h: u32) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::Dimension(format!(
            "resize target must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    let (in_w, in_h) = (img.width as usize, img.height as usize);
    let scale_x = in_w as f64 / out_w as f64;
    let scale_y = in_h as f64 / out_h as f64;

    let src_axis = |d: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };

    let mut data = vec![0u8; out_w as usize * out_h as usize * 3];
    for oy in 0..out_h as usize {
        let (y0, y1, fy) = src_axis(oy, scale_y, in_h);
        for ox in 0..out_w as usize {
            let (x0, x1, fx) = src_axis(ox, scale_x, in_w);
            let idx = |x: usize, y: usize| (y * in_w + x) * 3;
            let (i00, i10, i01, i11) = (idx(x0, y0), idx(x1, y0), idx(x0, y1), idx(x1, y1));
            let out = (oy * out_w as usize + ox) * 3;
            for c in 0..3 {
                let top = img.data[i00 + c] as f64 * (1.0 - fx) + img.data[i10 + c] as f64 * fx;
                let bot = img.data[i01 + c] as f64 * (1.0 - fx) + img.data[i11 + c] as f64 * fx;
                data[out + c] = quantize(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Image::new(out_w, out_h, data)
}

// ---------------------------------------------------------------------------
// Gaussian blur and color normalization
// ---------------------------------------------------------------------------

/// 1-D Gaussian taps for `i in [-r, r]`, `r = ceil(3 sigma)`, normalized to
/// sum exactly 1.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Reflect-101 index: the border pixel is the mirror axis and is not
/// duplicated (`-1 -> 1`, `n -> n-2`).
#[inline]
pub(crate) fn reflect_101(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Separable Gaussian blur with reflect-101 borders.
///
/// Both passes accumulate in f64; the intermediate plane stays in f64 so the
/// only f32 rounding happens once, on output.
pub fn gaussian_blur(ch: &Channel, sigma: f64) -> Result<Channel> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(ImagingError::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (ch.width as i64, ch.height as i64);

    // Horizontal pass.
    let mut mid = vec![0f64; ch.data.len()];
    for y in 0..h {
        let row = (y * w) as usize;
        for x in 0..w {
            let mut acc = 0f64;
            for (t, &k) in kernel.iter().enumerate() {
                let sx = reflect_101(x + t as i64 - r, w);
                acc += k * ch.data[row + sx] as f64;
            }
            mid[row + x as usize] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0f32; ch.data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f64;
            for (t, &k) in kernel.iter().enumerate() {
                let sy = reflect_101(y + t as i64 - r, h);
                acc += k * mid[(sy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc as f32;
        }
    }
    Channel::new(ch.width, ch.height, out)
}

/// Local-mean color normalization.
///
/// Per channel: `out = clamp(round(amplification * (orig - blur) + offset))`,
/// with the blur taken at `cfg.sigma`. Channels are processed independently
/// and reinterleaved.
pub fn color_normalize(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    cfg.validate()?;
    let channels = img.channels();
    let mut out = vec![0u8; img.data.len()];
    for (c, ch) in channels.iter().enumerate() {
        let blurred = gaussian_blur(ch, cfg.sigma)?;
        for (i, (&orig, &blur)) in ch.data.iter().zip(&blurred.data).enumerate() {
            let v = cfg.amplification * (orig as f64 - blur as f64) + cfg.offset;
            out[i * 3 + c] = quantize(v);
        }
    }
    Image::new(img.width, img.height, out)
}

/// Full preprocessing chain: center crop, optional bilinear resize, then
/// color normalization.
pub fn preprocess(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    cfg.validate()?;
    let cropped = center_crop(img, cfg.crop_size, cfg.crop_size)?;
    let sized = if cfg.resize_to > 0 {
        resize_bilinear(&cropped, cfg.resize_to, cfg.resize_to)?
    } else {
        cropped
    };
    color_normalize(&sized, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct (non-separable) 2-D convolution oracle with the full
    /// `(2r+1)^2` Gaussian kernel and reflect-101 borders, all in f64.
    fn blur_oracle(ch: &Channel, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as i64;
        let mut kernel2d = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        let mut sum = 0f64;
        for dy in -r..=r {
            for dx in -r..=r {
                let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                kernel2d.push(v);
                sum += v;
            }
        }
        for v in &mut kernel2d {
            *v /= sum;
        }
        let (w, h) = (ch.width as i64, ch.height as i64);
        let mut out = vec![0f64; ch.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f64;
                let mut t = 0;
                for dy in -r..=r {
                    let sy = reflect_101(y + dy, h);
                    for dx in -r..=r {
                        let sx = reflect_101(x + dx, w);
                        acc += kernel2d[t] * ch.data[(sy * w + sx) as usize] as f64;
                        t += 1;
                    }
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        out
    }

    fn test_rng(seed: u64) -> crate::augment::RngStream {
        crate::augment::rng_for(seed, 0, 0)
    }

    fn random_channel(rng: &mut crate::augment::RngStream, w: u32, h: u32) -> Channel {
        let data = (0..w as usize * h as usize)
            .map(|_| (rng.next_f64() * 255.0) as f32)
            .collect();
        Channel::new(w, h, data).unwrap()
    }

    fn random_image(rng: &mut crate::augment::RngStream, w: u32, h: u32) -> Image {
        let data = (0..w as usize * h as usize * 3)
            .map(|_| (rng.next_f64() * 256.0) as u8)
            .collect();
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn decode_two_pixel_stream() {
        let mut bytes = b"P6 2 1 255 ".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
        assert_eq!(img.pixel(1, 0), [0, 255, 0]);
    }

    #[test]
    fn decode_single_black_pixel() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img, Image::filled(1, 1, [0, 0, 0]));
    }

    #[test]
    fn decode_rejects_wide_maxval() {
        let mut bytes = b"P6 1 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0; 6]);
        let err = decode_ppm(&bytes).unwrap_err();
        assert!(err.to_string().contains("unsupported maxval"), "{err}");
    }

    #[test]
    fn decode_rejects_truncation_and_bad_magic() {
        let bytes = b"P6 2 2 255\n\x00\x00\x00".to_vec();
        let err = decode_ppm(&bytes).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let err = decode_ppm(b"P5 1 1 255\n\x00").unwrap_err();
        assert!(err.to_string().contains("P6"), "{err}");
    }

    #[test]
    fn encode_black_pixel_is_canonical() {
        let img = Image::filled(1, 1, [0, 0, 0]);
        let mut expected = b"P6\n1 1\n255\n".to_vec();
        expected.extend_from_slice(&[0, 0, 0]);
        assert_eq!(encode_ppm(&img), expected);
    }

    #[test]
    fn encode_two_by_two_has_exact_length() {
        let img = Image::filled(2, 2, [7, 8, 9]);
        let bytes = encode_ppm(&img);
        assert_eq!(bytes.len(), b"P6\n2 2\n255\n".len() + 12);
    }

    #[test]
    fn ppm_round_trip_random() {
        let mut rng = test_rng(11);
        let img = random_image(&mut rng, 16, 16);
        let bytes = encode_ppm(&img);
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
        // encode(decode(bytes)) is also the identity on canonical streams
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn center_crop_offsets_match_dimensions() {
        // 1016x800 -> 800x800 leaves offsets (108, 0)
        let mut img = Image::filled(1016, 800, [0, 0, 0]);
        img.set_pixel(108, 0, [1, 2, 3]);
        let out = center_crop(&img, 800, 800).unwrap();
        assert_eq!((out.width, out.height), (800, 800));
        assert_eq!(out.pixel(0, 0), [1, 2, 3]);

        // 1016x800 -> 500x500 leaves offsets (258, 150)
        let mut img = Image::filled(1016, 800, [0, 0, 0]);
        img.set_pixel(258, 150, [9, 9, 9]);
        let out = center_crop(&img, 500, 500).unwrap();
        assert_eq!(out.pixel(0, 0), [9, 9, 9]);
    }

    #[test]
    fn center_crop_full_size_is_identity() {
        let mut rng = test_rng(3);
        let img = random_image(&mut rng, 10, 6);
        assert_eq!(center_crop(&img, 10, 6).unwrap(), img);
    }

    #[test]
    fn center_crop_rejects_oversize() {
        let img = Image::filled(4, 4, [0, 0, 0]);
        assert!(matches!(
            center_crop(&img, 5, 4),
            Err(ImagingError::Dimension(_))
        ));
    }

    #[test]
    fn center_crops_compose_with_even_sizes() {
        let mut rng = test_rng(4);
        let img = random_image(&mut rng, 32, 32);
        let two_step = center_crop(&center_crop(&img, 24, 24).unwrap(), 16, 16).unwrap();
        let one_step = center_crop(&img, 16, 16).unwrap();
        assert_eq!(two_step, one_step);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let mut rng = test_rng(5);
        let img = random_image(&mut rng, 9, 7);
        assert_eq!(resize_bilinear(&img, 9, 7).unwrap(), img);
    }

    #[test]
    fn resize_two_to_four_hand_values() {
        // Half-pixel centers, scale 0.5: sources -0.25, 0.25, 0.75, 1.25
        // clamp to [0,1] -> values 0, 63.75, 191.25, 255 -> rounded.
        let img = Image::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let out = resize_bilinear(&img, 4, 1).unwrap();
        for c in 0..3 {
            assert_eq!(
                [
                    out.data[c],
                    out.data[3 + c],
                    out.data[6 + c],
                    out.data[9 + c]
                ],
                [0, 64, 191, 255]
            );
        }
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(13, 5, [77, 12, 250]);
        let out = resize_bilinear(&img, 31, 17).unwrap();
        assert_eq!(out, Image::filled(31, 17, [77, 12, 250]));
    }

    #[test]
    fn blur_constant_channel_is_constant() {
        for sigma in [0.2, 1.0, 3.0, 10.0] {
            let ch = Channel::new(9, 9, vec![100.0; 81]).unwrap();
            let out = gaussian_blur(&ch, sigma).unwrap();
            for &v in &out.data {
                assert!((v - 100.0).abs() < 1e-4, "sigma {sigma}: {v}");
            }
        }
    }

    #[test]
    fn blur_impulse_matches_oracle() {
        let mut data = vec![0f32; 121];
        data[5 * 11 + 5] = 1.0;
        let ch = Channel::new(11, 11, data).unwrap();
        let out = gaussian_blur(&ch, 1.0).unwrap();
        let oracle = blur_oracle(&ch, 1.0);
        for (a, b) in out.data.iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
        // center of the impulse response is k(0)^2
        let k = gaussian_kernel(1.0);
        let k0 = k[k.len() / 2];
        assert!((out.at(5, 5) as f64 - k0 * k0).abs() < 1e-5);
    }

    #[test]
    fn blur_tiny_sigma_matches_oracle() {
        let mut rng = test_rng(6);
        let ch = random_channel(&mut rng, 13, 7);
        let out = gaussian_blur(&ch, 0.2).unwrap();
        let oracle = blur_oracle(&ch, 0.2);
        for (a, b) in out.data.iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let ch = Channel::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            gaussian_blur(&ch, 0.0),
            Err(ImagingError::Parameter(_))
        ));
        assert!(matches!(
            gaussian_blur(&ch, -1.0),
            Err(ImagingError::Parameter(_))
        ));
    }

    #[test]
    fn normalize_constant_image_is_offset() {
        let cfg = PreprocessConfig {
            amplification: 4.0,
            offset: 128.0,
            ..Default::default()
        };
        let img = Image::filled(12, 9, [31, 200, 7]);
        let out = color_normalize(&img, &cfg).unwrap();
        assert_eq!(out, Image::filled(12, 9, [128, 128, 128]));
    }

    #[test]
    fn normalize_bright_square_matches_scalar_oracle() {
        // 9x9 dark background with a bright 3x3 square in the middle.
        let mut img = Image::filled(9, 9, [10, 10, 10]);
        for y in 3..6 {
            for x in 3..6 {
                img.set_pixel(x, y, [200, 200, 200]);
            }
        }
        let cfg = PreprocessConfig {
            crop_size: 9,
            resize_to: 0,
            sigma: 1.5,
            amplification: 2.0,
            offset: 128.0,
        };
        let out = color_normalize(&img, &cfg).unwrap();

        // Scalar reference: apply the definition pixel by pixel, with the
        // blur taken from the direct 2-D oracle quantized to f32 like the
        // Channel type requires.
        let channels = img.channels();
        for (c, ch) in channels.iter().enumerate() {
            let blurred = blur_oracle(ch, cfg.sigma);
            for i in 0..ch.data.len() {
                let expect = (cfg.amplification * (ch.data[i] as f64 - blurred[i] as f32 as f64)
                    + cfg.offset)
                    .round()
                    .clamp(0.0, 255.0) as u8;
                assert_eq!(out.data[i * 3 + c], expect, "pixel {i} channel {c}");
            }
        }
        // Square center sits above the offset, the halo outside below it.
        assert!(out.pixel(4, 4)[0] >= 128);
        assert!(out.pixel(2, 2)[0] < 128);
    }

    #[test]
    fn normalize_vanishing_gain_collapses_to_offset() {
        let mut rng = test_rng(7);
        let img = random_image(&mut rng, 8, 8);
        let cfg = PreprocessConfig {
            amplification: 0.0001,
            offset: 77.0,
            ..Default::default()
        };
        let out = color_normalize(&img, &cfg).unwrap();
        for &v in &out.data {
            assert!((v as i32 - 77).abs() <= 1);
        }
    }

    #[test]
    fn preprocess_pipeline_dimensions() {
        let mut rng = test_rng(8);
        let img = random_image(&mut rng, 1016, 800);
        let out = preprocess(&img, &PreprocessConfig::default()).unwrap();
        assert_eq!((out.width, out.height), (448, 448));

        let crop_only = PreprocessConfig {
            resize_to: 0,
            ..Default::default()
        };
        let out = preprocess(&img, &crop_only).unwrap();
        assert_eq!((out.width, out.height), (800, 800));
    }

    #[test]
    fn preprocess_constant_image_is_offset() {
        let img = Image::filled(64, 64, [90, 90, 90]);
        let cfg = PreprocessConfig {
            crop_size: 32,
            resize_to: 16,
            sigma: 2.0,
            amplification: 4.0,
            offset: 128.0,
        };
        let out = preprocess(&img, &cfg).unwrap();
        assert_eq!(out, Image::filled(16, 16, [128, 128, 128]));
    }

    #[test]
    fn imaging_ops_are_pure() {
        let mut rng = test_rng(9);
        let img = random_image(&mut rng, 40, 40);
        let cfg = PreprocessConfig {
            crop_size: 32,
            resize_to: 16,
            sigma: 1.0,
            amplification: 3.0,
            offset: 120.0,
        };
        assert_eq!(
            preprocess(&img, &cfg).unwrap(),
            preprocess(&img, &cfg).unwrap()
        );
    }

    #[test]
    fn preprocess_config_kv_round_trip() {
        let cfg = PreprocessConfig {
            crop_size: 123,
            resize_to: 45,
            sigma: 2.5,
            amplification: 1.75,
            offset: 100.0,
        };
        let mut parsed = PreprocessConfig::default();
        parsed.apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(parsed, cfg);
    }
}
