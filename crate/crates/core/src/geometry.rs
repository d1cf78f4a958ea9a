//! Physical layout of the (L+1)-layer metasurface stack.
//!
//! Layer 0 is the input (data-encoding) layer; layers 1..=L carry trainable
//! phases. Every layer uses the same `rows × cols` meta-atom grid, centred on
//! the optical axis, with layer `l` at `z = l · d_L`. The transmit antenna
//! sits on-axis at `z = -tx_antenna_distance`.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub wavelength: f64,
    pub sim_thickness: f64,
    pub num_layers: usize,
    pub rows: usize,
    pub cols: usize,
    /// Distance from the transmit antenna to layer 0; `None` means one layer spacing.
    pub tx_distance: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.025,
            sim_thickness: 0.05,
            num_layers: 4,
            rows: 32,
            cols: 64,
            tx_distance: None,
        }
    }
}

impl GeometryConfig {
    /// Square `N × N` grid with `atoms = N²`. Fails if `atoms` is not a perfect square.
    pub fn square(atoms: usize) -> Result<Self> {
        let n = atoms.isqrt();
        if atoms == 0 || n * n != atoms {
            return Err(Error::config(
                "atoms",
                format!("{atoms} is not a positive perfect square"),
            ));
        }
        Ok(Self {
            rows: n,
            cols: n,
            ..Self::default()
        })
    }

    pub fn atoms(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimGeometry {
    pub wavelength: f64,
    pub num_layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub atoms_per_layer: usize,
    pub sim_thickness: f64,
    pub layer_spacing: f64,
    pub atom_pitch_x: f64,
    pub atom_pitch_y: f64,
    pub tx_antenna_distance: f64,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

/// Builds the stack layout; meta-atom pitch is λ/2 on both axes and `d_L = T_SIM / L`.
pub fn build_geometry(config: &GeometryConfig) -> Result<SimGeometry> {
    let wavelength = positive("lambda_m", config.wavelength)?;
    let sim_thickness = positive("t_sim_m", config.sim_thickness)?;
    if config.num_layers == 0 {
        return Err(Error::config("layers", "need at least one trainable layer"));
    }
    if config.rows == 0 {
        return Err(Error::config("atoms_rows", "must be at least 1"));
    }
    if config.cols == 0 {
        return Err(Error::config("atoms_cols", "must be at least 1"));
    }
    let layer_spacing = sim_thickness / config.num_layers as f64;
    let tx_antenna_distance = match config.tx_distance {
        Some(d) => positive("tx_distance_m", d)?,
        None => layer_spacing,
    };
    let pitch = wavelength / 2.0;
    Ok(SimGeometry {
        wavelength,
        num_layers: config.num_layers,
        rows: config.rows,
        cols: config.cols,
        atoms_per_layer: config.rows * config.cols,
        sim_thickness,
        layer_spacing,
        atom_pitch_x: pitch,
        atom_pitch_y: pitch,
        tx_antenna_distance,
    })
}

impl SimGeometry {
    pub fn atoms(&self) -> usize {
        self.atoms_per_layer
    }

    /// Centre of meta-atom `index` (row-major) on `layer`.
    pub fn atom_position(&self, layer: usize, index: usize) -> Result<Point3> {
        if layer > self.num_layers {
            return Err(Error::Bounds(format!(
                "layer {layer} outside 0..={}",
                self.num_layers
            )));
        }
        if index >= self.atoms_per_layer {
            return Err(Error::Bounds(format!(
                "atom {index} outside 0..{}",
                self.atoms_per_layer
            )));
        }
        let row = (index / self.cols) as f64;
        let col = (index % self.cols) as f64;
        Ok(Point3::new(
            (col - (self.cols as f64 - 1.0) / 2.0) * self.atom_pitch_x,
            (row - (self.rows as f64 - 1.0) / 2.0) * self.atom_pitch_y,
            layer as f64 * self.layer_spacing,
        ))
    }

    pub fn tx_position(&self) -> Point3 {
        Point3::new(0.0, 0.0, -self.tx_antenna_distance)
    }

    /// Distance and cosine of the propagation angle (from the layer normal)
    /// between atom `from_index` on `from_layer` and atom `to_index` on the next layer.
    pub fn pair_distance_angle(
        &self,
        from_layer: usize,
        from_index: usize,
        to_index: usize,
    ) -> Result<(f64, f64)> {
        if from_layer >= self.num_layers {
            return Err(Error::Bounds(format!(
                "source layer {from_layer} has no successor (L = {})",
                self.num_layers
            )));
        }
        let a = self.atom_position(from_layer, from_index)?;
        let b = self.atom_position(from_layer + 1, to_index)?;
        Ok(distance_angle(b.x - a.x, b.y - a.y, self.layer_spacing))
    }

    /// Distance and cosine from the transmit antenna to atom `to_index` on layer 0.
    pub fn tx_distance_angle(&self, to_index: usize) -> Result<(f64, f64)> {
        let b = self.atom_position(0, to_index)?;
        Ok(distance_angle(b.x, b.y, self.tx_antenna_distance))
    }
}

// The axial gap is taken from the spacing itself rather than from the
// difference of z coordinates, so every layer pair yields identical values.
fn distance_angle(dx: f64, dy: f64, dz: f64) -> (f64, f64) {
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    (d, dz / d)
}
