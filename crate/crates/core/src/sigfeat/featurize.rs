//! Rasterisation of characters into multi-channel feature maps.

use std::fmt;
use std::str::FromStr;

use super::signature::{signature_into, signature_len, SignatureScratch, TruncatedSignature};
use crate::error::{Error, Result};
use crate::ink::{self, Character};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// One channel, 1 on every pixel the pen visits.
    Bitmap,
    /// Local signatures of the `(x, y)` path.
    Sig2d,
    /// Local signatures of the `(t, x, y)` path.
    Sig3d,
}

impl FeatureMode {
    pub fn channels(self, depth: usize) -> usize {
        match self {
            FeatureMode::Bitmap => 1,
            FeatureMode::Sig2d => signature_len(2, depth),
            FeatureMode::Sig3d => signature_len(3, depth),
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitmap" => Ok(FeatureMode::Bitmap),
            "sig2d" => Ok(FeatureMode::Sig2d),
            "sig3d" => Ok(FeatureMode::Sig3d),
            other => Err(Error::config(format!("unknown feature mode `{other}` (bitmap|sig2d|sig3d)"))),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Bitmap => "bitmap",
            FeatureMode::Sig2d => "sig2d",
            FeatureMode::Sig3d => "sig3d",
        })
    }
}

/// Local window used for per-point signatures: the `half_window` resampled
/// points on each side of a point, clipped to its stroke. Spatial
/// displacements inside the window are divided by `2 * half_window`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub half_window: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { half_window: 4 }
    }
}

/// Everything that determines how a character becomes a feature map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureParams {
    pub mode: FeatureMode,
    pub depth: usize,
    pub window: WindowSpec,
    pub grid: usize,
    pub box_size: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Sig3d,
            depth: 4,
            window: WindowSpec::default(),
            grid: ink::DEFAULT_GRID,
            box_size: ink::DEFAULT_BOX,
        }
    }
}

impl FeatureParams {
    pub fn channels(&self) -> usize {
        self.mode.channels(self.depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.half_window == 0 {
            return Err(Error::config("signature half window must be >= 1"));
        }
        if self.depth > 6 {
            return Err(Error::config("signature depth above 6 is not supported"));
        }
        if self.box_size.is_nan() || self.box_size <= 0.0 || (self.grid as f64) < self.box_size {
            return Err(Error::config(format!("need 0 < box ({}) <= grid ({})", self.box_size, self.grid)));
        }
        Ok(())
    }
}

/// `channels × size × size` grid, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    size: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, size: usize) -> Self {
        Self { channels, size, data: vec![0.0; channels * size * size] }
    }

    pub fn from_data(channels: usize, size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * size * size {
            return Err(Error::shape(format!(
                "{} values do not fill a {channels}x{size}x{size} feature map",
                data.len()
            )));
        }
        Ok(Self { channels, size, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.size + row) * self.size + col]
    }

    fn write_pixel(&mut self, row: usize, col: usize, values: impl Iterator<Item = f64>) {
        let plane = self.size * self.size;
        let base = row * self.size + col;
        for (ch, v) in values.enumerate() {
            self.data[ch * plane + base] = v as f32;
        }
    }
}

/// Pixel under a coordinate; pixel centres lie on integer coordinates.
fn pixel(v: f64, size: usize) -> Option<usize> {
    let p = (v + 0.5).floor();
    (p >= 0.0 && p < size as f64).then_some(p as usize)
}

/// Normalises `c` into the grid and rasterises it.
pub fn featurize(c: &Character, params: &FeatureParams) -> Result<FeatureMap> {
    params.validate()?;
    let normalized = ink::normalize(c, params.box_size, params.grid)?;
    rasterize(&normalized, params)
}

/// Rasterises a character that is already in grid coordinates. Points that
/// fall outside the grid are dropped.
///
/// The character is resampled at one pixel. Every resampled point writes its
/// local window signature into its pixel (or a 1 in bitmap mode); later
/// points overwrite earlier ones. Channel 0 is the constant 1 of the
/// signature, so it doubles as the presence bitmap.
pub fn rasterize(c: &Character, params: &FeatureParams) -> Result<FeatureMap> {
    let FeatureParams { mode, depth, window, grid, .. } = *params;
    let w = window.half_window;
    let mut map = FeatureMap::zeros(params.channels(), grid);
    let resampled = ink::resample_character(c, 1.0);
    let scale = 1.0 / (2 * w) as f64;
    let mut scratch = SignatureScratch::default();

    match mode {
        FeatureMode::Bitmap => {
            for p in resampled.points() {
                if let (Some(r), Some(col)) = (pixel(p.y, grid), pixel(p.x, grid)) {
                    map.write_pixel(r, col, std::iter::once(1.0));
                }
            }
        }
        FeatureMode::Sig2d => {
            let mut sig = TruncatedSignature::identity(2, depth);
            for stroke in &resampled.strokes {
                let pts: Vec<[f64; 2]> = stroke.points().iter().map(|p| [p.x * scale, p.y * scale]).collect();
                for (i, p) in stroke.points().iter().enumerate() {
                    let (Some(r), Some(col)) = (pixel(p.y, grid), pixel(p.x, grid)) else { continue };
                    let lo = i.saturating_sub(w);
                    let hi = (i + w).min(pts.len() - 1);
                    signature_into(pts[lo..=hi].iter().map(|q| q.as_slice()), &mut sig, &mut scratch);
                    map.write_pixel(r, col, sig.coeffs().iter().copied());
                }
            }
        }
        FeatureMode::Sig3d => {
            let mut sig = TruncatedSignature::identity(3, depth);
            let mut window_rows: Vec<[f64; 3]> = Vec::with_capacity(2 * w + 1);
            for path in ink::add_time(&resampled) {
                let rows = path.rows();
                for (i, row) in rows.iter().enumerate() {
                    let (Some(r), Some(col)) = (pixel(row[2], grid), pixel(row[1], grid)) else { continue };
                    let lo = i.saturating_sub(w);
                    let hi = (i + w).min(rows.len() - 1);
                    let (t0, t1) = (rows[lo][0], rows[hi][0]);
                    let t_scale = if t1 > t0 { 1.0 / (t1 - t0) } else { 0.0 };
                    window_rows.clear();
                    window_rows
                        .extend(rows[lo..=hi].iter().map(|q| [(q[0] - t0) * t_scale, q[1] * scale, q[2] * scale]));
                    signature_into(window_rows.iter().map(|q| q.as_slice()), &mut sig, &mut scratch);
                    map.write_pixel(r, col, sig.coeffs().iter().copied());
                }
            }
        }
    }
    Ok(map)
}
