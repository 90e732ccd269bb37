//! Seed-derived augmentation for training and the fixed TTA view set.
//!
//! Every random decision flows from an [`RngStream`] derived from
//! `(master_seed, image_index, epoch)`, so augmented batches are fully
//! reproducible regardless of iteration order or thread count.

use crate::imaging::Image;

/// Counter-free deterministic generator.
///
/// Stream derivation mixes the seed triple through the SplitMix64 finalizer;
/// draws come from xorshift64* on the mixed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the stream for one `(master_seed, image_index, epoch)` triple.
///
/// Same triple, same stream; distinct triples give independent streams.
pub fn rng_for(master_seed: u64, image_index: u64, epoch: u64) -> RngStream {
    let mut state = splitmix64(master_seed);
    state = splitmix64(state ^ image_index.wrapping_mul(0xA24B_AED4_963E_E407));
    state = splitmix64(state ^ epoch.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    RngStream {
        // xorshift has a fixed point at zero
        state: if state == 0 { 0x9E37_79B9_7F4A_7C15 } else { state },
    }
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Deterministic Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// One concrete augmentation, applied in the fixed order
/// flips -> rotation -> zoom -> brightness -> contrast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub flip_h: bool,
    pub flip_v: bool,
    pub rotation_deg: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub zoom: f64,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self {
            flip_h: false,
            flip_v: false,
            rotation_deg: 0.0,
            brightness: 1.0,
            contrast: 1.0,
            zoom: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// Per-family enable flags, application probabilities, and value ranges.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentPolicy {
    pub flip_h_enabled: bool,
    pub flip_h_prob: f64,
    pub flip_v_enabled: bool,
    pub flip_v_prob: f64,
    pub rotation_enabled: bool,
    pub rotation_prob: f64,
    pub rotation_max_deg: f64,
    pub brightness_enabled: bool,
    pub brightness_prob: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,
    pub contrast_enabled: bool,
    pub contrast_prob: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub zoom_enabled: bool,
    pub zoom_prob: f64,
    pub zoom_min: f64,
    pub zoom_max: f64,
    /// When false, [`tta_set`] collapses to the identity view.
    pub tta_enabled: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_h_enabled: true,
            flip_h_prob: 0.5,
            flip_v_enabled: true,
            flip_v_prob: 0.5,
            rotation_enabled: true,
            rotation_prob: 0.5,
            rotation_max_deg: 45.0,
            brightness_enabled: true,
            brightness_prob: 0.5,
            brightness_min: 0.8,
            brightness_max: 1.2,
            contrast_enabled: true,
            contrast_prob: 0.5,
            contrast_min: 0.8,
            contrast_max: 1.2,
            zoom_enabled: true,
            zoom_prob: 0.5,
            zoom_min: 0.9,
            zoom_max: 1.1,
            tta_enabled: true,
        }
    }
}

impl AugmentPolicy {
    /// Policy that never perturbs an image.
    pub fn disabled() -> Self {
        Self {
            flip_h_enabled: false,
            flip_v_enabled: false,
            rotation_enabled: false,
            brightness_enabled: false,
            contrast_enabled: false,
            zoom_enabled: false,
            tta_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            ("flip_h_prob", self.flip_h_prob),
            ("flip_v_prob", self.flip_v_prob),
            ("rotation_prob", self.rotation_prob),
            ("brightness_prob", self.brightness_prob),
            ("contrast_prob", self.contrast_prob),
            ("zoom_prob", self.zoom_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.rotation_max_deg < 0.0 {
            return Err(format!(
                "rotation_max_deg must be non-negative, got {}",
                self.rotation_max_deg
            ));
        }
        let ranges = [
            ("brightness", self.brightness_min, self.brightness_max),
            ("contrast", self.contrast_min, self.contrast_max),
            ("zoom", self.zoom_min, self.zoom_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo > 0.0 && hi >= lo) {
                return Err(format!("{name} range [{lo}, {hi}] must be positive and ordered"));
            }
        }
        Ok(())
    }
}

impl crate::kv::KvConfig for AugmentPolicy {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        use crate::kv::{parse_bool, parse_num};
        match key {
            "flip_h_enabled" => self.flip_h_enabled = parse_bool(value)?,
            "flip_h_prob" => self.flip_h_prob = parse_num(value, key)?,
            "flip_v_enabled" => self.flip_v_enabled = parse_bool(value)?,
            "flip_v_prob" => self.flip_v_prob = parse_num(value, key)?,
            "rotation_enabled" => self.rotation_enabled = parse_bool(value)?,
            "rotation_prob" => self.rotation_prob = parse_num(value, key)?,
            "rotation_max_deg" => self.rotation_max_deg = parse_num(value, key)?,
            "brightness_enabled" => self.brightness_enabled = parse_bool(value)?,
            "brightness_prob" => self.brightness_prob = parse_num(value, key)?,
            "brightness_min" => self.brightness_min = parse_num(value, key)?,
            "brightness_max" => self.brightness_max = parse_num(value, key)?,
            "contrast_enabled" => self.contrast_enabled = parse_bool(value)?,
            "contrast_prob" => self.contrast_prob = parse_num(value, key)?,
            "contrast_min" => self.contrast_min = parse_num(value, key)?,
            "contrast_max" => self.contrast_max = parse_num(value, key)?,
            "zoom_enabled" => self.zoom_enabled = parse_bool(value)?,
            "zoom_prob" => self.zoom_prob = parse_num(value, key)?,
            "zoom_min" => self.zoom_min = parse_num(value, key)?,
            "zoom_max" => self.zoom_max = parse_num(value, key)?,
            "tta_enabled" => self.tta_enabled = parse_bool(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("flip_h_enabled".into(), self.flip_h_enabled.to_string()),
            ("flip_h_prob".into(), self.flip_h_prob.to_string()),
            ("flip_v_enabled".into(), self.flip_v_enabled.to_string()),
            ("flip_v_prob".into(), self.flip_v_prob.to_string()),
            ("rotation_enabled".into(), self.rotation_enabled.to_string()),
            ("rotation_prob".into(), self.rotation_prob.to_string()),
            ("rotation_max_deg".into(), self.rotation_max_deg.to_string()),
            ("brightness_enabled".into(), self.brightness_enabled.to_string()),
            ("brightness_prob".into(), self.brightness_prob.to_string()),
            ("brightness_min".into(), self.brightness_min.to_string()),
            ("brightness_max".into(), self.brightness_max.to_string()),
            ("contrast_enabled".into(), self.contrast_enabled.to_string()),
            ("contrast_prob".into(), self.contrast_prob.to_string()),
            ("contrast_min".into(), self.contrast_min.to_string()),
            ("contrast_max".into(), self.contrast_max.to_string()),
            ("zoom_enabled".into(), self.zoom_enabled.to_string()),
            ("zoom_prob".into(), self.zoom_prob.to_string()),
            ("zoom_min".into(), self.zoom_min.to_string()),
            ("zoom_max".into(), self.zoom_max.to_string()),
            ("tta_enabled".into(), self.tta_enabled.to_string()),
        ]
    }
}

/// Samples one transform. Families draw in the fixed order flip_h, flip_v,
/// rotation, brightness, contrast, zoom; disabled families consume nothing.
pub fn sample_transform(rng: &mut RngStream, policy: &AugmentPolicy) -> TransformSpec {
    let mut t = TransformSpec::identity();
    if policy.flip_h_enabled {
        t.flip_h = rng.next_bool(policy.flip_h_prob);
    }
    if policy.flip_v_enabled {
        t.flip_v = rng.next_bool(policy.flip_v_prob);
    }
    if policy.rotation_enabled && rng.next_bool(policy.rotation_prob) {
        t.rotation_deg = rng.next_range(-policy.rotation_max_deg, policy.rotation_max_deg);
    }
    if policy.brightness_enabled && rng.next_bool(policy.brightness_prob) {
        t.brightness = rng.next_range(policy.brightness_min, policy.brightness_max);
    }
    if policy.contrast_enabled && rng.next_bool(policy.contrast_prob) {
        t.contrast = rng.next_range(policy.contrast_min, policy.contrast_max);
    }
    if policy.zoom_enabled && rng.next_bool(policy.zoom_prob) {
        t.zoom = rng.next_range(policy.zoom_min, policy.zoom_max);
    }
    t
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn flip(img: &Image, horizontal: bool, vertical: bool) -> Image {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut data = vec![0u8; img.data.len()];
    for y in 0..h {
        let sy = if vertical { h - 1 - y } else { y };
        for x in 0..w {
            let sx = if horizontal { w - 1 - x } else { x };
            let src = (sy * w + sx) * 3;
            let dst = (y * w + x) * 3;
            data[dst..dst + 3].copy_from_slice(&img.data[src..src + 3]);
        }
    }
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Inverse-maps each output pixel through `map`, sampling the source
/// bilinearly; taps outside the raster contribute black.
fn warp(img: &Image, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (w, h) = (img.width as usize, img.height as usize);
    let tap = |x: i64, y: i64, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            img.data[(y as usize * w + x as usize) * 3 + c] as f64
        }
    };
    let mut data = vec![0u8; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x as f64, y as f64);
            let x0 = sx.floor();
            let y0 = sy.floor();
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..3 {
                let top = tap(x0, y0, c) * (1.0 - fx) + tap(x0 + 1, y0, c) * fx;
                let bot = tap(x0, y0 + 1, c) * (1.0 - fx) + tap(x0 + 1, y0 + 1, c) * fx;
                data[(y * w + x) * 3 + c] = quantize(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Applies a transform in the fixed stage order. Identity components
/// short-circuit, so the identity spec is a bit-exact no-op.
pub fn apply_transform(img: &Image, t: &TransformSpec) -> Image {
    let mut out = img.clone();
    if t.flip_h || t.flip_v {
        out = flip(&out, t.flip_h, t.flip_v);
    }
    if t.rotation_deg != 0.0 {
        let theta = t.rotation_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        let cx = (out.width as f64 - 1.0) / 2.0;
        let cy = (out.height as f64 - 1.0) / 2.0;
        out = warp(&out, |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            (cos * dx + sin * dy + cx, -sin * dx + cos * dy + cy)
        });
    }
    if t.zoom != 1.0 {
        let cx = (out.width as f64 - 1.0) / 2.0;
        let cy = (out.height as f64 - 1.0) / 2.0;
        let inv = 1.0 / t.zoom;
        out = warp(&out, |x, y| ((x - cx) * inv + cx, (y - cy) * inv + cy));
    }
    if t.brightness != 1.0 {
        for v in &mut out.data {
            *v = quantize(*v as f64 * t.brightness);
        }
    }
    if t.contrast != 1.0 {
        for v in &mut out.data {
            *v = quantize((*v as f64 - 128.0) * t.contrast + 128.0);
        }
    }
    out
}

/// Deterministic TTA views, identity first.
///
/// The default set is the four flip combinations plus rotations by +/-15
/// degrees; with TTA disabled only the identity view remains.
pub fn tta_set(policy: &AugmentPolicy) -> Vec<TransformSpec> {
    let identity = TransformSpec::identity();
    if !policy.tta_enabled {
        return vec![identity];
    }
    let mut views = vec![identity];
    views.push(TransformSpec {
        flip_h: true,
        ..identity
    });
    views.push(TransformSpec {
        flip_v: true,
        ..identity
    });
    views.push(TransformSpec {
        flip_h: true,
        flip_v: true,
        ..identity
    });
    views.push(TransformSpec {
        rotation_deg: 15.0,
        ..identity
    });
    views.push(TransformSpec {
        rotation_deg: -15.0,
        ..identity
    });
    views
}
