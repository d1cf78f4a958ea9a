//! Forward model of the SIM-D²NN and its digital (unconstrained) twin.
//!
//! For one encoded patch `s̄`:
//!
//! ```text
//! u⁰ = diag(s̄) · w⁰ · √P_t
//! qˡ = Wˡ · uˡ⁻¹,   uˡ = rˡ ⊙ qˡ        (l = 1..L)
//! z  = H · uᴸ,      y  = z + n
//! ```
//!
//! where the layer response `rˡ` is `exp(jθˡ)` for the SIM and a free
//! complex vector for the digital model.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::binio::{read_file, write_file, Reader};
use crate::channel::{add_awgn, ChannelRealization};
use crate::propagation::Propagation;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sim,
    Digital,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sim => "sim",
            ModelKind::Digital => "digital",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sim" => Ok(ModelKind::Sim),
            "digital" => Ok(ModelKind::Digital),
            _ => Err(format!("unknown model kind `{s}` (expected sim|digital)")),
        }
    }
}

/// Trainable phases `θˡ_m`, `L × M` row-major, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseParams {
    pub layers: usize,
    pub atoms: usize,
    pub theta: Vec<f64>,
}

/// Unconstrained complex layer responses, `L × M`, stored as interleaved re/im.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalParams {
    pub layers: usize,
    pub atoms: usize,
    pub weights: Vec<f64>,
}

impl DigitalParams {
    pub fn weight(&self, layer: usize, atom: usize) -> C64 {
        let k = 2 * (layer * self.atoms + atom);
        C64::new(self.weights[k], self.weights[k + 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Sim(PhaseParams),
    Digital(DigitalParams),
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Params::Sim(_) => ModelKind::Sim,
            Params::Digital(_) => ModelKind::Digital,
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            Params::Sim(p) => p.layers,
            Params::Digital(p) => p.layers,
        }
    }

    pub fn atoms(&self) -> usize {
        match self {
            Params::Sim(p) => p.atoms,
            Params::Digital(p) => p.atoms,
        }
    }

    /// Real parameter vector (θ, or interleaved re/im) that the optimizer updates.
    pub fn values(&self) -> &[f64] {
        match self {
            Params::Sim(p) => &p.theta,
            Params::Digital(p) => &p.weights,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            Params::Sim(p) => &mut p.theta,
            Params::Digital(p) => &mut p.weights,
        }
    }

    /// Response of trainable layer `l` (0-based, i.e. physical layer `l + 1`).
    pub fn layer_response(&self, l: usize) -> Vec<C64> {
        match self {
            Params::Sim(p) => p.theta[l * p.atoms..(l + 1) * p.atoms]
                .iter()
                .map(|&t| C64::from_polar(1.0, t))
                .collect(),
            Params::Digital(p) => (0..p.atoms).map(|m| p.weight(l, m)).collect(),
        }
    }

    /// SIM phases i.i.d. uniform on `[0, 2π)`; the digital model starts at `exp(jθ)` of the same draw.
    pub fn init<R: Rng + ?Sized>(
        layers: usize,
        atoms: usize,
        kind: ModelKind,
        rng: &mut R,
    ) -> Self {
        let theta: Vec<f64> = (0..layers * atoms)
            .map(|_| rng.random::<f64>() * TAU)
            .collect();
        match kind {
            ModelKind::Sim => Params::Sim(PhaseParams {
                layers,
                atoms,
                theta,
            }),
            ModelKind::Digital => Params::Digital(DigitalParams {
                layers,
                atoms,
                weights: theta.iter().flat_map(|t| [t.cos(), t.sin()]).collect(),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// `SIMTH1`, u32 L, u32 M, u8 kind, then the f64 values (all little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let values = self.values();
        let mut out = Vec::with_capacity(15 + 8 * values.len());
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&(self.layers() as u32).to_le_bytes());
        out.extend_from_slice(&(self.atoms() as u32).to_le_bytes());
        out.push(match self.kind() {
            ModelKind::Sim => 0,
            ModelKind::Digital => 1,
        });
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(PARAMS_MAGIC)?;
        let layers = r.u32("layer count")? as usize;
        let atoms = r.u32("atom count")? as usize;
        let kind_at = r.offset();
        let kind = r.u8("model kind")?;
        let per_atom = match kind {
            0 => 1,
            1 => 2,
            other => {
                return Err(Error::Format {
                    offset: kind_at,
                    msg: format!("unknown model kind byte {other}"),
                })
            }
        };
        let values = (0..per_atom * layers * atoms)
            .map(|_| r.f64("parameter value"))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(if kind == 0 {
            Params::Sim(PhaseParams {
                layers,
                atoms,
                theta: values,
            })
        } else {
            Params::Digital(DigitalParams {
                layers,
                atoms,
                weights: values,
            })
        })
    }
}

const PARAMS_MAGIC: &[u8] = b"SIMTH1";

/// Diagonal of the layer-0 configuration `Φ⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub phi0_diag: Vec<C64>,
}

/// Places a feature vector on layer 0. Meta-atoms cannot amplify, so `|s̄_m| ≤ 1`.
pub fn encode_input(features: &[C64], atoms: usize) -> Result<EncodedInput> {
    if features.len() != atoms {
        return Err(Error::Shape(format!(
            "{} features for a {atoms}-atom input layer",
            features.len()
        )));
    }
    if let Some((m, v)) = features
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.norm() <= 1.0 + 1e-9))
    {
        return Err(Error::Encoding(format!(
            "feature {m} has modulus {} > 1",
            v.norm()
        )));
    }
    Ok(EncodedInput {
        phi0_diag: features.to_vec(),
    })
}

/// Every intermediate field of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `u⁰ … uᴸ`
    pub fields: Vec<Vec<C64>>,
    /// `q¹ … qᴸ`, the field arriving at each trainable layer before modulation.
    pub incident: Vec<Vec<C64>>,
    /// `H · uᴸ`
    pub z: Vec<C64>,
    /// Received signal, `z + n`.
    pub y: Vec<C64>,
}

/// Fixed physical system: couplings, channel, and transmit amplitude.
#[derive(Debug, Clone)]
pub struct System {
    pub propagation: Propagation,
    pub channel: ChannelRealization,
    pub tx_amplitude: f64,
}

impl System {
    pub fn new(
        propagation: Propagation,
        channel: ChannelRealization,
        tx_amplitude: f64,
    ) -> Result<Self> {
        if channel.atoms != propagation.atoms() {
            return Err(Error::Shape(format!(
                "channel has {} columns, SIM has {} atoms",
                channel.atoms,
                propagation.atoms()
            )));
        }
        Ok(Self {
            propagation,
            channel,
            tx_amplitude,
        })
    }

    pub fn atoms(&self) -> usize {
        self.propagation.atoms()
    }

    pub fn layers(&self) -> usize {
        self.propagation.num_layers()
    }

    pub fn num_rx(&self) -> usize {
        self.channel.num_rx
    }

    pub fn check_params(&self, params: &Params) -> Result<()> {
        if params.layers() != self.layers() || params.atoms() != self.atoms() {
            return Err(Error::Shape(format!(
                "parameters are {}x{}, system is {}x{}",
                params.layers(),
                params.atoms(),
                self.layers(),
                self.atoms()
            )));
        }
        Ok(())
    }

    /// Runs one patch through the stack and the link. `noise = None` disables AWGN.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        params: &Params,
        input: &EncodedInput,
        noise: Option<&mut R>,
    ) -> Result<ForwardCache> {
        self.check_params(params)?;
        if input.phi0_diag.len() != self.atoms() {
            return Err(Error::Shape(format!(
                "input has {} entries, SIM has {} atoms",
                input.phi0_diag.len(),
                self.atoms()
            )));
        }
        let u0: Vec<C64> = input
            .phi0_diag
            .iter()
            .zip(&self.propagation.input)
            .map(|(s, w)| s * w * self.tx_amplitude)
            .collect();
        let layers = self.layers();
        let mut fields = Vec::with_capacity(layers + 1);
        let mut incident = Vec::with_capacity(layers);
        fields.push(u0);
        for l in 0..layers {
            let q = self.propagation.layer(l + 1).apply(&fields[l]);
            let r = params.layer_response(l);
            fields.push(q.iter().zip(&r).map(|(q, r)| q * r).collect());
            incident.push(q);
        }
        let z = self.channel.apply(&fields[layers]);
        let y = match noise {
            Some(rng) => add_awgn(&z, self.channel.noise_sigma, rng),
            None => z.clone(),
        };
        Ok(ForwardCache {
            fields,
            incident,
            z,
            y,
        })
    }
}

/// Index of the largest `|y_k|²`; ties go to the lowest index.
pub fn classify(y: &[C64]) -> Result<usize> {
    if y.is_empty() {
        return Err(Error::Shape("cannot classify an empty signal".into()));
    }
    let mut best = 0;
    let mut best_power = y[0].norm_sqr();
    for (k, v) in y.iter().enumerate().skip(1) {
        let p = v.norm_sqr();
        if p > best_power {
            best = k;
            best_power = p;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::TransmissionMatrix;
    use crate::rng::{stream, Purpose, StreamRng};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar_system() -> System {
        let prop = Propagation::from_parts(
            vec![c(1.0, 0.0)],
            TransmissionMatrix::from_entries(1, vec![c(1.0, 0.0)], 0).unwrap(),
            1,
        )
        .unwrap();
        let ch = ChannelRealization::new(vec![c(1.0, 0.0)], 1, 1, 0.0).unwrap();
        System::new(prop, ch, 1.0).unwrap()
    }

    fn phases(theta: Vec<f64>) -> Params {
        Params::Sim(PhaseParams {
            layers: 1,
            atoms: 1,
            theta,
        })
    }

    #[test]
    fn scalar_chain() {
        let sys = scalar_system();
        let input = encode_input(&[c(1.0, 0.0)], 1).unwrap();
        let y = sys
            .forward::<StreamRng>(&phases(vec![0.0]), &input, None)
            .unwrap()
            .y;
        assert_eq!(y, vec![c(1.0, 0.0)]);
        let y = sys
            .forward::<StreamRng>(&phases(vec![PI]), &input, None)
            .unwrap()
            .y;
        assert!((y[0] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&[c(1.0, 0.0), c(0.5, 0.0)]).unwrap(), 0);
        assert_eq!(classify(&[c(0.0, 0.1), c(2.0, -1.0)]).unwrap(), 1);
        assert_eq!(classify(&[c(3.0, 4.0), c(5.0, 0.0)]).unwrap(), 0);
        assert!(matches!(classify(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn encoding_contract() {
        let ones = vec![c(1.0, 0.0); 4];
        assert_eq!(encode_input(&ones, 4).unwrap().phi0_diag, ones);
        let v = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        assert_eq!(encode_input(&v, 4).unwrap().phi0_diag, v);
        assert!(matches!(
            encode_input(&[c(1.5, 0.0)], 1),
            Err(Error::Encoding(_))
        ));
        assert!(matches!(encode_input(&ones, 3), Err(Error::Shape(_))));
    }

    #[test]
    fn init_properties() {
        let a = Params::init(3, 5, ModelKind::Sim, &mut stream(4, Purpose::Init, 0, 0));
        let b = Params::init(3, 5, ModelKind::Sim, &mut stream(4, Purpose::Init, 0, 0));
        assert_eq!(a, b);
        let d = Params::init(
            3,
            5,
            ModelKind::Digital,
            &mut stream(4, Purpose::Init, 0, 0),
        );
        for l in 0..3 {
            for (w, r) in d.layer_response(l).iter().zip(a.layer_response(l)) {
                assert!((w.norm() - 1.0).abs() < 1e-15);
                assert!((w - r).norm() < 1e-15);
            }
        }
        let big = Params::init(
            1,
            100_000,
            ModelKind::Sim,
            &mut stream(5, Purpose::Init, 0, 0),
        );
        let mean = big.values().iter().sum::<f64>() / 100_000.0;
        assert!((mean - PI).abs() < 0.02, "{mean}");
        assert!(big.values().iter().all(|&t| (0.0..TAU).contains(&t)));
    }

    #[test]
    fn params_file_round_trip_and_errors() {
        for kind in [ModelKind::Sim, ModelKind::Digital] {
            let p = Params::init(2, 3, kind, &mut stream(1, Purpose::Init, 0, 0));
            let bytes = p.to_bytes();
            assert_eq!(&bytes[..6], b"SIMTH1");
            assert_eq!(bytes.len(), 15 + 8 * p.values().len());
            assert_eq!(Params::from_bytes(&bytes).unwrap(), p);
            let err = Params::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
            assert!(matches!(err, Error::Format { .. }));
        }
        let mut bytes =
            Params::init(1, 1, ModelKind::Sim, &mut stream(1, Purpose::Init, 0, 0)).to_bytes();
        bytes[14] = 7;
        assert!(matches!(
            Params::from_bytes(&bytes),
            Err(Error::Format { offset: 14, .. })
        ));
        assert!(matches!(
            Params::from_bytes(b"NOPE00"),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn forward_rejects_mismatched_shapes() {
        let sys = scalar_system();
        let input = encode_input(&[c(1.0, 0.0)], 1).unwrap();
        let wrong = Params::Sim(PhaseParams {
            layers: 2,
            atoms: 1,
            theta: vec![0.0; 2],
        });
        assert!(matches!(
            sys.forward::<StreamRng>(&wrong, &input, None),
            Err(Error::Shape(_))
        ));
        let input2 = EncodedInput {
            phi0_diag: vec![c(1.0, 0.0); 2],
        };
        assert!(matches!(
            sys.forward::<StreamRng>(&phases(vec![0.0]), &input2, None),
            Err(Error::Shape(_))
        ));
    }
}
