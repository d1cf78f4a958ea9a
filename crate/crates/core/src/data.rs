//! IQ scenes, patch extraction, feature encoding, synthetic scenes, and the
//! `SIMIQ1` / `SIMSC1` file formats.
//!
//! Feature path for one patch: `side × side` IQ window → complex block mean
//! by `factor` → divide by the maximum modulus → concatenate with a copy
//! rotated by `e^{j·angle}` → layer-0 encoding.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex32;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::binio::{read_file, write_file, Reader};
use crate::exec::Exec;
use crate::network::{encode_input, EncodedInput};
use crate::rng::{stream, Purpose};
use crate::training::Sample;
use crate::{Error, Result, C64};

pub const OCEAN: usize = 0;
pub const LAND: usize = 1;

/// Raw IQ samples, row-major, with an optional per-pixel class mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IqScene {
    pub height: usize,
    pub width: usize,
    pub samples: Vec<Complex32>,
    pub mask: Option<Vec<u8>>,
}

impl IqScene {
    pub fn new(
        height: usize,
        width: usize,
        samples: Vec<Complex32>,
        mask: Option<Vec<u8>>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty scene {height}x{width}")));
        }
        if samples.len() != height * width {
            return Err(Error::Shape(format!(
                "{} samples for a {height}x{width} scene",
                samples.len()
            )));
        }
        if mask.as_ref().is_some_and(|m| m.len() != samples.len()) {
            return Err(Error::Shape("mask shape differs from scene".into()));
        }
        Ok(Self {
            height,
            width,
            samples,
            mask,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> Complex32 {
        self.samples[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqPatch {
    pub side: usize,
    pub origin: (usize, usize),
    pub label: usize,
    pub samples: Vec<Complex32>,
}

/// Number of window positions per axis, `floor((dim − side)/stride) + 1`, or 0 if the window does not fit.
pub fn windows_along(dim: usize, side: usize, stride: usize) -> usize {
    if side == 0 || stride == 0 || side > dim {
        0
    } else {
        (dim - side) / stride + 1
    }
}

/// Patch-grid shape `(rows, cols)` for a scene.
pub fn patch_grid(height: usize, width: usize, side: usize, stride: usize) -> (usize, usize) {
    (
        windows_along(height, side, stride),
        windows_along(width, side, stride),
    )
}

/// Window origins in row-major order.
pub fn patch_origins(
    height: usize,
    width: usize,
    side: usize,
    stride: usize,
) -> Vec<(usize, usize)> {
    let (rows, cols) = patch_grid(height, width, side, stride);
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r * stride, c * stride)))
        .collect()
}

/// Majority vote of the mask under a window; ties go to class 0.
pub fn label_patch(scene: &IqScene, origin: (usize, usize), side: usize) -> Result<usize> {
    let mask = scene
        .mask
        .as_ref()
        .ok_or_else(|| Error::Labeling("scene has no label mask".into()))?;
    let (r0, c0) = origin;
    if r0 + side > scene.height || c0 + side > scene.width {
        return Err(Error::Bounds(format!(
            "window at {origin:?} of side {side} leaves the {}x{} scene",
            scene.height, scene.width
        )));
    }
    let mut counts = [0usize; 256];
    for r in r0..r0 + side {
        for &k in &mask[r * scene.width + c0..r * scene.width + c0 + side] {
            counts[k as usize] += 1;
        }
    }
    // first maximum wins, so ties resolve to the lowest class
    let best = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (k, &n)| if n > acc.1 { (k, n) } else { acc });
    Ok(best.0)
}

/// Cuts all fully-contained `side × side` windows at the given stride.
/// Patches are labeled by mask majority when the scene has a mask, otherwise class 0.
pub fn extract_patches(scene: &IqScene, side: usize, stride: usize) -> Result<Vec<IqPatch>> {
    if side == 0 || stride == 0 {
        return Err(Error::config(
            "patch_side",
            "side and stride must be positive",
        ));
    }
    let origins = patch_origins(scene.height, scene.width, side, stride);
    if origins.is_empty() {
        log::warn!(
            "patch side {side} does not fit in the {}x{} scene; no patches",
            scene.height,
            scene.width
        );
    }
    origins
        .into_iter()
        .map(|origin| {
            let label = match scene.mask {
                Some(_) => label_patch(scene, origin, side)?,
                None => OCEAN,
            };
            let samples = (origin.0..origin.0 + side)
                .flat_map(|r| {
                    let start = r * scene.width + origin.1;
                    scene.samples[start..start + side].iter().copied()
                })
                .collect();
            Ok(IqPatch {
                side,
                origin,
                label,
                samples,
            })
        })
        .collect()
}

/// Non-overlapping `factor × factor` complex block means of a square window, row-major.
pub fn downsample(patch: &IqPatch, factor: usize) -> Result<Vec<C64>> {
    downsample_with(patch.side, factor, |r, c| patch.samples[r * patch.side + c])
}

/// Same as [`downsample`] but reads the window straight from the scene.
pub fn downsample_window(
    scene: &IqScene,
    origin: (usize, usize),
    side: usize,
    factor: usize,
) -> Result<Vec<C64>> {
    if origin.0 + side > scene.height || origin.1 + side > scene.width {
        return Err(Error::Bounds(format!(
            "window at {origin:?} leaves the scene"
        )));
    }
    downsample_with(side, factor, |r, c| scene.at(origin.0 + r, origin.1 + c))
}

fn downsample_with(
    side: usize,
    factor: usize,
    at: impl Fn(usize, usize) -> Complex32,
) -> Result<Vec<C64>> {
    if factor == 0 || !side.is_multiple_of(factor) {
        return Err(Error::config(
            "downsample",
            format!("factor {factor} does not divide patch side {side}"),
        ));
    }
    let n = side / factor;
    let inv = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(n * n);
    for br in 0..n {
        for bc in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for r in br * factor..(br + 1) * factor {
                for c in bc * factor..(bc + 1) * factor {
                    let v = at(r, c);
                    acc += C64::new(v.re as f64, v.im as f64);
                }
            }
            out.push(acc * inv);
        }
    }
    Ok(out)
}

/// Scales so the largest modulus is 1; phases are untouched.
pub fn normalize(features: &[C64]) -> Result<Vec<C64>> {
    let peak = features.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::DegeneratePatch(format!(
            "peak modulus {peak}; nothing to encode"
        )));
    }
    Ok(features.iter().map(|v| v / peak).collect())
}

/// `concat(features, e^{j·angle}·features)` sized to fill an `atoms`-element input layer.
pub fn phase_rotate_augment(features: &[C64], angle: f64, atoms: usize) -> Result<Vec<C64>> {
    if 2 * features.len() != atoms {
        return Err(Error::Shape(format!(
            "{} features cannot fill half of a {atoms}-atom layer",
            features.len()
        )));
    }
    let rot = C64::from_polar(1.0, angle);
    Ok(features
        .iter()
        .copied()
        .chain(features.iter().map(|v| v * rot))
        .collect())
}

/// How patches become layer-0 inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    pub side: usize,
    pub stride: usize,
    pub factor: usize,
    /// Rotation applied to the second half; `0` duplicates the features unrotated.
    pub rotation: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            side: 128,
            stride: 32,
            factor: 4,
            rotation: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl EncodeConfig {
    /// Input-layer size this encoding produces, `2·(side/factor)²`.
    pub fn atoms(&self) -> usize {
        let n = self.side / self.factor.max(1);
        2 * n * n
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::config("patch_side", "must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::config("patch_stride", "must be positive"));
        }
        if self.factor == 0 || !self.side.is_multiple_of(self.factor) {
            return Err(Error::config(
                "downsample",
                format!(
                    "factor {} does not divide patch side {}",
                    self.factor, self.side
                ),
            ));
        }
        if !self.rotation.is_finite() {
            return Err(Error::config("rotation_deg", "must be finite"));
        }
        Ok(())
    }

    pub fn encode(&self, block_means: &[C64], atoms: usize) -> Result<EncodedInput> {
        let features = normalize(block_means)?;
        encode_input(
            &phase_rotate_augment(&features, self.rotation, atoms)?,
            atoms,
        )
    }
}

/// Encoded patches of a scene plus where each one sits in the patch grid.
#[derive(Debug, Clone)]
pub struct EncodedScene {
    pub samples: Vec<Sample>,
    /// Row-major grid position of each sample.
    pub grid_index: Vec<usize>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl EncodedScene {
    /// Spreads per-sample values over the full grid; skipped patches get `fill`.
    pub fn to_grid(&self, values: &[usize], fill: usize) -> Vec<usize> {
        let mut grid = vec![fill; self.grid_rows * self.grid_cols];
        for (&g, &v) in self.grid_index.iter().zip(values) {
            grid[g] = v;
        }
        grid
    }
}

/// Encodes every window of a labeled scene. Degenerate (all-zero) windows are skipped.
pub fn encode_scene(
    scene: &IqScene,
    cfg: &EncodeConfig,
    atoms: usize,
    exec: Exec,
) -> Result<EncodedScene> {
    cfg.validate()?;
    if scene.mask.is_none() {
        return Err(Error::Labeling("scene has no label mask".into()));
    }
    let (grid_rows, grid_cols) = patch_grid(scene.height, scene.width, cfg.side, cfg.stride);
    let origins = patch_origins(scene.height, scene.width, cfg.side, cfg.stride);
    let encoded = exec.map(origins.len(), |i| -> Result<Option<Sample>> {
        let origin = origins[i];
        let means = downsample_window(scene, origin, cfg.side, cfg.factor)?;
        match cfg.encode(&means, atoms) {
            Ok(input) => Ok(Some(Sample {
                input,
                label: label_patch(scene, origin, cfg.side)?,
            })),
            Err(Error::DegeneratePatch(msg)) => {
                log::warn!("skipping patch at {origin:?}: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    });
    let mut samples = Vec::with_capacity(origins.len());
    let mut grid_index = Vec::with_capacity(origins.len());
    for (i, s) in encoded.into_iter().enumerate() {
        if let Some(s) = s? {
            samples.push(s);
            grid_index.push(i);
        }
    }
    Ok(EncodedScene {
        samples,
        grid_index,
        grid_rows,
        grid_cols,
    })
}

/// Encodes stored patches (e.g. loaded from a `SIMIQ1` file).
pub fn encode_patches(
    patches: &[IqPatch],
    cfg: &EncodeConfig,
    atoms: usize,
    exec: Exec,
) -> Result<Vec<Sample>> {
    let encoded = exec.map(patches.len(), |i| -> Result<Option<Sample>> {
        let p = &patches[i];
        match cfg.encode(&downsample(p, cfg.factor)?, atoms) {
            Ok(input) => Ok(Some(Sample {
                input,
                label: p.label,
            })),
            Err(Error::DegeneratePatch(msg)) => {
                log::warn!("skipping patch at {:?}: {msg}", p.origin);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    });
    encoded.into_iter().filter_map(Result::transpose).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneLayout {
    /// Left half ocean, right half land.
    HalfSplit,
    /// Ocean background with a few round land masses.
    Blobs,
}

impl std::str::FromStr for SceneLayout {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "half-split" | "half_split" => Ok(SceneLayout::HalfSplit),
            "blobs" => Ok(SceneLayout::Blobs),
            _ => Err(format!("unknown layout `{s}` (expected half-split|blobs)")),
        }
    }
}

impl SceneLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneLayout::HalfSplit => "half-split",
            SceneLayout::Blobs => "blobs",
        }
    }
}

/// Synthetic land/ocean scene.
///
/// Ocean pixels are circular complex Gaussian speckle with per-component
/// std `ocean_sigma` plus a Doppler-shifted return of amplitude
/// `ocean_coherence · ocean_sigma` whose phase advances one cycle every
/// `doppler_period` pixels along columns. Land pixels are speckle with std `land_sigma` plus a
/// deterministic return of amplitude `land_coherence · land_sigma`. With
/// texture on, that return carries a smooth linear phase ramp with period
/// `texture_period` pixels along columns (twice that along rows); with
/// texture off its phase is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub layout: SceneLayout,
    pub ocean_sigma: f64,
    pub ocean_coherence: f64,
    pub doppler_period: f64,
    pub land_sigma: f64,
    pub land_coherence: f64,
    pub land_phase_texture: bool,
    pub texture_period: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 1024,
            width: 1024,
            layout: SceneLayout::HalfSplit,
            ocean_sigma: 0.3,
            ocean_coherence: 0.5,
            doppler_period: 128.0,
            land_sigma: 1.0,
            land_coherence: 0.5,
            land_phase_texture: false,
            texture_period: 256.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("scene_height", "scene must be non-empty"));
        }
        for (key, v) in [
            ("ocean_sigma", self.ocean_sigma),
            ("land_sigma", self.land_sigma),
            ("texture_period_px", self.texture_period),
            ("doppler_period_px", self.doppler_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("land_coherence", self.land_coherence),
            ("ocean_coherence", self.ocean_coherence),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Phase of the coherent land return at a pixel.
    pub fn texture_phase(&self, row: usize, col: usize) -> f64 {
        if self.land_phase_texture {
            TAU * (col as f64 / self.texture_period + row as f64 / (2.0 * self.texture_period))
        } else {
            0.0
        }
    }
}

fn layout_mask(cfg: &SynthConfig) -> Vec<u8> {
    let (h, w) = (cfg.height, cfg.width);
    match cfg.layout {
        SceneLayout::HalfSplit => (0..h * w)
            .map(|i| {
                if i % w < w / 2 {
                    OCEAN as u8
                } else {
                    LAND as u8
                }
            })
            .collect(),
        SceneLayout::Blobs => {
            let mut rng = stream(cfg.seed, Purpose::Scene, u64::MAX, 0);
            let short = h.min(w) as f64;
            let blobs: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.random::<f64>() * h as f64,
                        rng.random::<f64>() * w as f64,
                        short * (0.125 + 0.125 * rng.random::<f64>()),
                    )
                })
                .collect();
            (0..h * w)
                .map(|i| {
                    let (r, c) = ((i / w) as f64, (i % w) as f64);
                    let inside = blobs
                        .iter()
                        .any(|&(br, bc, rad)| (r - br).powi(2) + (c - bc).powi(2) <= rad * rad);
                    if inside {
                        LAND as u8
                    } else {
                        OCEAN as u8
                    }
                })
                .collect()
        }
    }
}

/// Generates a labeled scene. Each row draws from its own stream, so the
/// result is independent of `exec`.
pub fn synthesize_scene(cfg: &SynthConfig, exec: Exec) -> Result<IqScene> {
    cfg.validate()?;
    let mask = layout_mask(cfg);
    let w = cfg.width;
    let rows = exec.map(cfg.height, |r| {
        let mut rng = stream(cfg.seed, Purpose::Scene, r as u64, 0);
        (0..w)
            .map(|c| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let g = C64::new(re, im);
                let v = if mask[r * w + c] as usize == LAND {
                    cfg.land_sigma
                        * (g + C64::from_polar(cfg.land_coherence, cfg.texture_phase(r, c)))
                } else {
                    let doppler = TAU * c as f64 / cfg.doppler_period;
                    cfg.ocean_sigma * (g + C64::from_polar(cfg.ocean_coherence, doppler))
                };
                Complex32::new(v.re as f32, v.im as f32)
            })
            .collect::<Vec<_>>()
    });
    IqScene::new(cfg.height, cfg.width, rows.concat(), Some(mask))
}

const DATASET_MAGIC: &[u8] = b"SIMIQ1";
const SCENE_MAGIC: &[u8] = b"SIMSC1";

fn push_iq(out: &mut Vec<u8>, samples: &[Complex32]) {
    for v in samples {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

fn read_iq(r: &mut Reader<'_>, count: usize) -> Result<Vec<Complex32>> {
    (0..count)
        .map(|_| Ok(Complex32::new(r.f32("I sample")?, r.f32("Q sample")?)))
        .collect()
}

/// `SIMIQ1` bytes: magic, u32 count, u32 side, then per patch u8 label,
/// u32 origin row, u32 origin col and `side²` f32 I/Q pairs.
pub fn dataset_to_bytes(patches: &[IqPatch], side: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(14 + patches.len() * (9 + 8 * side * side));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(patches.len() as u32).to_le_bytes());
    out.extend_from_slice(&(side as u32).to_le_bytes());
    for p in patches {
        if p.side != side || p.samples.len() != side * side {
            return Err(Error::Shape(format!(
                "patch at {:?} has side {}, dataset side is {side}",
                p.origin, p.side
            )));
        }
        let label = u8::try_from(p.label)
            .map_err(|_| Error::Shape(format!("label {} does not fit in a byte", p.label)))?;
        out.push(label);
        out.extend_from_slice(&(p.origin.0 as u32).to_le_bytes());
        out.extend_from_slice(&(p.origin.1 as u32).to_le_bytes());
        push_iq(&mut out, &p.samples);
    }
    Ok(out)
}

/// Returns `(side, patches)`.
pub fn dataset_from_bytes(bytes: &[u8]) -> Result<(usize, Vec<IqPatch>)> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let count = r.u32("patch count")? as usize;
    let side = r.u32("patch side")? as usize;
    let mut patches = Vec::with_capacity(count.min(bytes.len()));
    for _ in 0..count {
        let label = r.u8("label")? as usize;
        let origin = (r.u32("origin row")? as usize, r.u32("origin col")? as usize);
        let samples = read_iq(&mut r, side * side)?;
        patches.push(IqPatch {
            side,
            origin,
            label,
            samples,
        });
    }
    r.finish()?;
    Ok((side, patches))
}

pub fn save_dataset(path: &Path, patches: &[IqPatch], side: usize) -> Result<()> {
    write_file(path, &dataset_to_bytes(patches, side)?)
}

pub fn load_dataset(path: &Path) -> Result<(usize, Vec<IqPatch>)> {
    dataset_from_bytes(&read_file(path)?)
}

/// `SIMSC1` bytes: magic, u32 H, u32 W, `H·W` f32 I/Q pairs, u8 mask flag, then `H·W` mask bytes if the flag is 1.
pub fn scene_to_bytes(scene: &IqScene) -> Vec<u8> {
    let n = scene.height * scene.width;
    let mut out = Vec::with_capacity(15 + 9 * n);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&(scene.height as u32).to_le_bytes());
    out.extend_from_slice(&(scene.width as u32).to_le_bytes());
    push_iq(&mut out, &scene.samples);
    match &scene.mask {
        Some(mask) => {
            out.push(1);
            out.extend_from_slice(mask);
        }
        None => out.push(0),
    }
    out
}

pub fn scene_from_bytes(bytes: &[u8]) -> Result<IqScene> {
    let mut r = Reader::new(bytes);
    r.magic(SCENE_MAGIC)?;
    let height = r.u32("scene height")? as usize;
    let width = r.u32("scene width")? as usize;
    let samples = read_iq(&mut r, height * width)?;
    let flag_at = r.offset();
    let mask = match r.u8("mask flag")? {
        0 => None,
        1 => Some(
            (0..height * width)
                .map(|_| r.u8("mask"))
                .collect::<Result<Vec<_>>>()?,
        ),
        other => {
            return Err(Error::Format {
                offset: flag_at,
                msg: format!("mask flag must be 0 or 1, got {other}"),
            })
        }
    };
    r.finish()?;
    IqScene::new(height, width, samples, mask)
}

pub fn save_scene(path: &Path, scene: &IqScene) -> Result<()> {
    write_file(path, &scene_to_bytes(scene))
}

pub fn load_scene(path: &Path) -> Result<IqScene> {
    scene_from_bytes(&read_file(path)?)
}
