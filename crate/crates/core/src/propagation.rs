//! Fixed diffraction couplings between adjacent layers.
//!
//! Matrix orientation: entry `(m, m')` couples atom `m'` on the source layer
//! to atom `m` on the destination layer, so propagation is `W · u`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::exec::Exec;
use crate::geometry::SimGeometry;
use crate::{Error, Result, C64};

/// Rayleigh–Sommerfeld point-to-point transmission coefficient
///
/// `w = (dx·dy·cosχ / d) · (1/(2πd) − j/λ) · exp(j·2πd/λ)`.
pub fn diffraction_coefficient(
    distance: f64,
    cos_angle: f64,
    pitch_x: f64,
    pitch_y: f64,
    wavelength: f64,
) -> Result<C64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "propagation distance must be positive, got {distance}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let amplitude = pitch_x * pitch_y * cos_angle / distance;
    let near_far = C64::new(1.0 / (2.0 * PI * distance), -1.0 / wavelength);
    let phase = C64::from_polar(1.0, 2.0 * PI * distance / wavelength);
    Ok(near_far * phase * amplitude)
}

/// Dense `M × M` complex coupling matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    n: usize,
    entries: Vec<C64>,
    pub from_layer: usize,
}

impl TransmissionMatrix {
    pub fn from_entries(n: usize, entries: Vec<C64>, from_layer: usize) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Shape(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            n,
            entries,
            from_layer,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.n + col]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// `W · x`
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.n);
        self.entries
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// `Wᴴ · v`
    pub fn apply_adjoint(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for (row, vi) in self.entries.chunks_exact(self.n).zip(v) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w.conj() * vi;
            }
        }
        out
    }

    /// Writes `row col re im` lines.
    pub fn dump_text(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for (k, w) in self.entries.iter().enumerate() {
            writeln!(out, "{} {} {:e} {:e}", k / self.n, k % self.n, w.re, w.im)
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Builds `W^l` coupling layer `to_layer − 1` into `to_layer`.
pub fn build_transmission_matrix(
    geometry: &SimGeometry,
    to_layer: usize,
    exec: Exec,
) -> Result<TransmissionMatrix> {
    if to_layer == 0 || to_layer > geometry.num_layers {
        return Err(Error::Bounds(format!(
            "transmission matrix target layer {to_layer} outside 1..={}",
            geometry.num_layers
        )));
    }
    let m = geometry.atoms();
    let from = to_layer - 1;
    let rows = exec.map(m, |dst| -> Result<Vec<C64>> {
        (0..m)
            .map(|src| {
                let (d, c) = geometry.pair_distance_angle(from, src, dst)?;
                coefficient(geometry, d, c)
            })
            .collect()
    });
    let mut entries = Vec::with_capacity(m * m);
    for row in rows {
        entries.extend(row?);
    }
    TransmissionMatrix::from_entries(m, entries, from)
}

/// Builds `w⁰`, the coupling from the transmit antenna to each layer-0 atom.
pub fn build_input_vector(geometry: &SimGeometry) -> Result<Vec<C64>> {
    (0..geometry.atoms())
        .map(|m| {
            let (d, c) = geometry.tx_distance_angle(m)?;
            coefficient(geometry, d, c)
        })
        .collect()
}

fn coefficient(g: &SimGeometry, distance: f64, cos_angle: f64) -> Result<C64> {
    diffraction_coefficient(
        distance,
        cos_angle,
        g.atom_pitch_x,
        g.atom_pitch_y,
        g.wavelength,
    )
}

/// All fixed couplings of one geometry.
///
/// Layers share one layout and one spacing, so a single matrix serves every
/// `W^l`; it is built once and shared.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub input: Vec<C64>,
    layer: Arc<TransmissionMatrix>,
    num_layers: usize,
}

impl Propagation {
    pub fn new(geometry: &SimGeometry, exec: Exec) -> Result<Self> {
        Ok(Self {
            input: build_input_vector(geometry)?,
            layer: Arc::new(build_transmission_matrix(geometry, 1, exec)?),
            num_layers: geometry.num_layers,
        })
    }

    /// Arbitrary couplings, mainly for tests on non-physical instances.
    pub fn from_parts(
        input: Vec<C64>,
        layer: TransmissionMatrix,
        num_layers: usize,
    ) -> Result<Self> {
        if input.len() != layer.size() {
            return Err(Error::Shape(format!(
                "input vector length {} vs matrix size {}",
                input.len(),
                layer.size()
            )));
        }
        Ok(Self {
            input,
            layer: Arc::new(layer),
            num_layers,
        })
    }

    pub fn atoms(&self) -> usize {
        self.input.len()
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// `W^l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &TransmissionMatrix {
        debug_assert!(l >= 1 && l <= self.num_layers);
        &self.layer
    }
}
