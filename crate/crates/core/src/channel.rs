//! SIM-to-ground link: Rician small-scale fading, path loss, and AWGN.
//!
//! Power convention: every dBm quantity maps to a linear amplitude as
//! `10^(dBm / 20)`, i.e. 0 dBm ↔ amplitude 1. Transmit power, noise power
//! and path loss all share this reference, so the simulated SNR equals
//! `P_t − PL − σ²` in dB.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub carrier_freq: f64,
    pub distance: f64,
    pub rician_k_db: f64,
    pub atmospheric_loss_db: f64,
    pub environment_loss_db: f64,
    pub noise_power_dbm: f64,
    pub tx_power_dbm: f64,
    pub num_rx_antennas: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 12e9,
            distance: 1000.0,
            rician_k_db: 20.0,
            atmospheric_loss_db: 0.0,
            environment_loss_db: 0.0,
            noise_power_dbm: -104.0,
            tx_power_dbm: 20.0,
            num_rx_antennas: 2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.rician_k_db.is_finite() {
            return Err(Error::config("rician_k_db", "must be finite"));
        }
        if self.num_rx_antennas < 2 {
            return Err(Error::config(
                "rx_antennas",
                "need at least two receive antennas",
            ));
        }
        for (key, v) in [
            ("freq_hz", self.carrier_freq),
            ("link_distance_m", self.distance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("la_db", self.atmospheric_loss_db),
            ("le_db", self.environment_loss_db),
            ("noise_dbm", self.noise_power_dbm),
            ("tx_power_dbm", self.tx_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        Ok(())
    }

    /// Linear Rician K-factor.
    pub fn rician_k_linear(&self) -> f64 {
        10f64.powf(self.rician_k_db / 10.0)
    }

    /// Transmit amplitude `√P_t` under the shared dBm reference.
    pub fn tx_amplitude(&self) -> f64 {
        dbm_to_amplitude(self.tx_power_dbm)
    }

    /// Noise standard deviation σ (complex, total over I and Q), converted
    /// from dBm to dBW before taking the amplitude.
    pub fn noise_sigma(&self) -> f64 {
        dbm_to_amplitude(self.noise_power_dbm - 30.0)
    }
}

pub fn dbm_to_amplitude(dbm: f64) -> f64 {
    10f64.powf(dbm / 20.0)
}

/// Free-space path loss in dB for distance in meters and frequency in Hz.
pub fn fspl_db(distance: f64, freq: f64) -> Result<f64> {
    if !(distance > 0.0) || !(freq > 0.0) {
        return Err(Error::Domain(format!(
            "FSPL needs positive distance and frequency, got d={distance}, f={freq}"
        )));
    }
    Ok(20.0 * freq.log10() + 20.0 * distance.log10() - 147.55)
}

/// FSPL plus atmospheric and environment losses.
pub fn path_loss_db(cfg: &ChannelConfig) -> Result<f64> {
    Ok(
        fspl_db(cfg.distance, cfg.carrier_freq)?
            + cfg.atmospheric_loss_db
            + cfg.environment_loss_db,
    )
}

/// One circularly-symmetric complex Gaussian draw with `E|z|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The `K × M` channel matrix (row-major) and receiver noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_matrix: Vec<C64>,
    pub num_rx: usize,
    pub atoms: usize,
    pub noise_sigma: f64,
}

impl ChannelRealization {
    pub fn new(h_matrix: Vec<C64>, num_rx: usize, atoms: usize, noise_sigma: f64) -> Result<Self> {
        if h_matrix.len() != num_rx * atoms {
            return Err(Error::Shape(format!(
                "{} channel entries for {num_rx}x{atoms}",
                h_matrix.len()
            )));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::Domain(format!(
                "noise sigma {noise_sigma} is negative"
            )));
        }
        Ok(Self {
            h_matrix,
            num_rx,
            atoms,
            noise_sigma,
        })
    }

    pub fn row(&self, k: usize) -> &[C64] {
        &self.h_matrix[k * self.atoms..(k + 1) * self.atoms]
    }

    /// `H · u`
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        self.h_matrix
            .chunks_exact(self.atoms)
            .map(|row| row.iter().zip(u).map(|(h, x)| h * x).sum())
            .collect()
    }

    /// `Hᴴ · v`
    pub fn apply_adjoint(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.atoms];
        for (row, vk) in self.h_matrix.chunks_exact(self.atoms).zip(v) {
            for (o, h) in out.iter_mut().zip(row) {
                *o += h.conj() * vk;
            }
        }
        out
    }
}

/// Unit-power Rician entries: `√(κ/(κ+1))·1 + √(1/(κ+1))·CN(0,1)`.
pub fn small_scale_rician<R: Rng + ?Sized>(
    rician_k_db: f64,
    count: usize,
    rng: &mut R,
) -> Vec<C64> {
    let kappa = 10f64.powf(rician_k_db / 10.0);
    let los = (kappa / (kappa + 1.0)).sqrt();
    let nlos = (1.0 / (kappa + 1.0)).sqrt();
    (0..count)
        .map(|_| C64::new(los, 0.0) + complex_gaussian(rng) * nlos)
        .collect()
}

/// Draws a block-fading channel for an `atoms`-element SIM.
pub fn sample_rician<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    atoms: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let alpha = 10f64.powf(-path_loss_db(cfg)? / 20.0);
    let h = small_scale_rician(cfg.rician_k_db, cfg.num_rx_antennas * atoms, rng)
        .into_iter()
        .map(|z| z * alpha)
        .collect();
    ChannelRealization::new(h, cfg.num_rx_antennas, atoms, cfg.noise_sigma())
}

/// Adds i.i.d. `CN(0, σ²)` noise to each component.
pub fn add_awgn<R: Rng + ?Sized>(signal: &[C64], noise_sigma: f64, rng: &mut R) -> Vec<C64> {
    if noise_sigma == 0.0 {
        return signal.to_vec();
    }
    signal
        .iter()
        .map(|s| s + complex_gaussian(rng) * noise_sigma)
        .collect()
}
