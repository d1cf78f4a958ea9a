#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use simd2nn::channel::{complex_gaussian, ChannelRealization};
use simd2nn::config::ExperimentConfig;
use simd2nn::exec::Exec;
use simd2nn::experiment::quick_config;
use simd2nn::geometry::{build_geometry, GeometryConfig};
use simd2nn::network::{encode_input, EncodedInput, ModelKind, Params, System};
use simd2nn::propagation::Propagation;
use simd2nn::C64;

pub struct Instance {
    pub geometry: GeometryConfig,
    pub system: System,
    pub params: Params,
    pub input: EncodedInput,
    pub label: usize,
}

/// A small physical stack with a unit-power random channel, so outputs are O(1).
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_atoms: usize,
    max_layers: usize,
    num_rx: usize,
    kind: ModelKind,
) -> Instance {
    let rows = rng.random_range(1..=max_atoms.min(4));
    let cols = rng.random_range(2usize.div_ceil(rows)..=(max_atoms / rows).max(2));
    let geometry = GeometryConfig {
        wavelength: rng.random_range(0.01..0.05),
        sim_thickness: rng.random_range(0.02..0.1),
        num_layers: rng.random_range(1..=max_layers),
        rows,
        cols,
        tx_distance: None,
    };
    let geom = build_geometry(&geometry).unwrap();
    let m = geom.atoms();
    let propagation = Propagation::new(&geom, Exec::Sequential).unwrap();
    let h: Vec<C64> = (0..num_rx * m).map(|_| complex_gaussian(rng)).collect();
    let channel = ChannelRealization::new(h, num_rx, m, 0.05).unwrap();
    let system = System::new(propagation, channel, rng.random_range(0.5..5.0)).unwrap();
    let params = Params::init(geometry.num_layers, m, kind, rng);
    let features: Vec<C64> = (0..m)
        .map(|_| C64::from_polar(rng.random_range(0.05..1.0), rng.random_range(-PI..PI)))
        .collect();
    Instance {
        input: encode_input(&features, m).unwrap(),
        label: rng.random_range(0..num_rx),
        geometry,
        system,
        params,
    }
}

/// The diffraction coupling written out directly from the Rayleigh-Sommerfeld
/// form, with atom positions laid out here rather than taken from the library.
pub fn rs_coupling(distance: f64, cos: f64, pitch: f64, lambda: f64) -> C64 {
    let amp = pitch * pitch * cos / distance;
    let k = C64::new(1.0 / (TAU * distance), -1.0 / lambda);
    amp * k * C64::from_polar(1.0, TAU * distance / lambda)
}

fn grid(g: &GeometryConfig) -> Vec<(f64, f64)> {
    let p = g.wavelength / 2.0;
    let mut out = Vec::new();
    for r in 0..g.rows {
        for c in 0..g.cols {
            out.push((
                (c as f64 - (g.cols as f64 - 1.0) / 2.0) * p,
                (r as f64 - (g.rows as f64 - 1.0) / 2.0) * p,
            ));
        }
    }
    out
}

/// Dense inter-layer coupling matrix (row = receiving atom).
pub fn oracle_layer_matrix(g: &GeometryConfig) -> DMatrix<C64> {
    let pts = grid(g);
    let dz = g.sim_thickness / g.num_layers as f64;
    let n = pts.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        let d = (dx * dx + dy * dy + dz * dz).sqrt();
        rs_coupling(d, dz / d, g.wavelength / 2.0, g.wavelength)
    })
}

pub fn oracle_input_vector(g: &GeometryConfig) -> DVector<C64> {
    let dz = g
        .tx_distance
        .unwrap_or(g.sim_thickness / g.num_layers as f64);
    let pts = grid(g);
    DVector::from_iterator(
        pts.len(),
        pts.iter().map(|&(x, y)| {
            let d = (x * x + y * y + dz * dz).sqrt();
            rs_coupling(d, dz / d, g.wavelength / 2.0, g.wavelength)
        }),
    )
}

/// `H · Φᴸ Wᴸ ⋯ Φ¹ W¹ · (s ⊙ w⁰) · √P_t` as one explicit matrix product.
pub fn oracle_output(inst: &Instance) -> DVector<C64> {
    let g = &inst.geometry;
    let m = g.rows * g.cols;
    let w = oracle_layer_matrix(g);
    let w0 = oracle_input_vector(g);
    let mut total = DMatrix::<C64>::identity(m, m);
    for l in 0..g.num_layers {
        let phi = DMatrix::from_diagonal(&DVector::from_vec(inst.params.layer_response(l)));
        total = &phi * &w * total;
    }
    let ch = &inst.system.channel;
    let h = DMatrix::from_row_slice(ch.num_rx, m, &ch.h_matrix);
    let phi0 = DVector::from_vec(inst.input.phi0_diag.clone());
    let x = phi0.component_mul(&w0) * C64::from(inst.system.tx_amplitude);
    h * total * x
}

pub fn relative_error(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

/// The scaled-down end-to-end configuration: M = 128 (8 × 16), L = 2,
/// 30 epochs, 1536 × 1536 half-split scene (2025 patches).
pub fn small_end_to_end(out_dir: impl Into<std::path::PathBuf>) -> ExperimentConfig {
    let mut c = quick_config(out_dir);
    c.synth.height = 1536;
    c.synth.width = 1536;
    c.training.epochs = 30;
    c.training.batch_size = 64;
    c.training.sample_rate = 0.10;
    c
}
