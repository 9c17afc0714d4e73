//! Model families behind one `Forecaster` trait: the attention model
//! (GRSA or SMHSA flavors), the per-degree linear baseline, and persistence.

use crate::blocks::{ensure_finite, PointwiseMlp};
use crate::config::ShnoConfig;
use crate::error::{ModelError, Result};
use crate::layer::{
    sfno_layer, shno_layer, AttentionKind, SfnoLayerParams, ShnoLayerParams,
};
use diff_engine::{Tape, Tensor, TensorData};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sht_core::{SphericalGrid, Sht};
use spectral_attention::LaplacianState;
use std::sync::Arc;

/// Names accepted by [`build_model`].
pub const MODEL_FAMILIES: [&str; 4] = ["shno", "shno-smhsa", "sfno-linear", "persistence"];

/// A single-step forecaster mapping a (B, C_in, H, W) state to the next one.
pub trait Forecaster {
    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor>;
    fn named_parameters(&self) -> Vec<(String, Tensor)>;
    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)>;
    fn config(&self) -> &ShnoConfig;
    fn kind(&self) -> &'static str;
}

fn check_input(cfg: &ShnoConfig, x: &Tensor) -> Result<()> {
    let s = x.shape();
    if s.len() != 4 || s[1] != cfg.in_channels || s[2] != cfg.nlat || s[3] != cfg.nlon {
        return Err(ModelError::Config(format!(
            "expected input shaped (batch, {}, {}, {}), got {:?}",
            cfg.in_channels, cfg.nlat, cfg.nlon, s
        )));
    }
    Ok(())
}

/// Constant (1, 2, H, W) planes of sin(latitude) and cos(latitude).
fn coord_planes(grid: &SphericalGrid) -> Tensor {
    let (h, w) = (grid.nlat(), grid.nlon());
    let mut data = vec![0.0; 2 * h * w];
    for (i, &lat) in grid.lats_rad().iter().enumerate() {
        data[i * w..(i + 1) * w].fill(lat.sin());
        data[(h + i) * w..(h + i + 1) * w].fill(lat.cos());
    }
    Tensor::constant(TensorData::new(vec![1, 2, h, w], data).unwrap())
}

/// Shared encoder/decoder scaffold of the spectral families.
struct Scaffold {
    cfg: ShnoConfig,
    sht: Arc<Sht>,
    coords: Option<Tensor>,
    encoder: PointwiseMlp,
    decoder: PointwiseMlp,
}

impl Scaffold {
    fn new(cfg: &ShnoConfig, rng: &mut ChaCha12Rng) -> Result<Self> {
        cfg.validate()?;
        let grid = Arc::new(SphericalGrid::gaussian(cfg.nlat, cfg.nlon, 1.0)?);
        let sht = Arc::new(Sht::new(Arc::clone(&grid), cfg.truncation()?)?);
        let coords = cfg.coord_channels.then(|| coord_planes(&grid));
        let c = cfg.embed_dim;
        let enc_in = cfg.encoder_in();
        Ok(Self {
            cfg: cfg.clone(),
            sht,
            coords,
            encoder: PointwiseMlp::init(rng, enc_in, c, c),
            decoder: PointwiseMlp::init(rng, c + enc_in, c, cfg.out_channels),
        })
    }

    /// Append the constant coordinate planes when configured.
    fn augment(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        match &self.coords {
            Some(planes) => {
                let b = x.shape()[0];
                let shape = [b, 2, self.cfg.nlat, self.cfg.nlon];
                let tiled = tape.broadcast_to(planes, &shape)?;
                Ok(tape.concat(&[x, &tiled], 1)?)
            }
            None => Ok(x.clone()),
        }
    }

    fn encode(&self, tape: &mut Tape, aug: &Tensor) -> Result<Tensor> {
        let z = self.encoder.apply(tape, aug)?;
        ensure_finite(&z, "encoder")?;
        Ok(z)
    }

    fn decode(&self, tape: &mut Tape, z: &Tensor, aug: &Tensor) -> Result<Tensor> {
        let cat = tape.concat(&[z, aug], 1)?;
        let y = self.decoder.apply(tape, &cat)?;
        ensure_finite(&y, "decoder")?;
        Ok(y)
    }

    fn visit(&self, out: &mut Vec<(String, Tensor)>) {
        self.encoder.visit("encoder", out);
        self.decoder.visit("decoder", out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.encoder.visit_mut("encoder", out);
        self.decoder.visit_mut("decoder", out);
    }
}

/// The attention model: encoder, L spectral attention layers threading a
/// Laplacian moving average, decoder on concat(z_L, x).
pub struct ShnoForecaster {
    scaffold: Scaffold,
    modes: Arc<Vec<(usize, usize)>>,
    pub layers: Vec<ShnoLayerParams>,
    attention: AttentionKind,
}

impl ShnoForecaster {
    pub fn new(cfg: &ShnoConfig, attention: AttentionKind) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let scaffold = Scaffold::new(cfg, &mut rng)?;
        let modes: Arc<Vec<(usize, usize)>> =
            Arc::new(scaffold.sht.trunc().modes().collect());
        let layers = (0..cfg.layers)
            .map(|_| {
                ShnoLayerParams::init(
                    &mut rng,
                    cfg.embed_dim,
                    cfg.heads,
                    cfg.registers,
                    cfg.ffn_hidden(),
                    modes.len(),
                    attention,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scaffold,
            modes,
            layers,
            attention,
        })
    }

    pub fn sht(&self) -> &Arc<Sht> {
        &self.scaffold.sht
    }

    pub fn modes(&self) -> &Arc<Vec<(usize, usize)>> {
        &self.modes
    }

    fn zero_state(&self, batch: usize) -> LaplacianState {
        let tokens = self.modes.len() + self.scaffold.cfg.registers;
        LaplacianState::zeros(batch, self.scaffold.cfg.heads, tokens)
    }

    pub fn encode(&self, tape: &mut Tape, x: &Tensor) -> Result<(Tensor, Tensor)> {
        check_input(&self.scaffold.cfg, x)?;
        let aug = self.scaffold.augment(tape, x)?;
        let z = self.scaffold.encode(tape, &aug)?;
        Ok((z, aug))
    }

    pub fn decode(&self, tape: &mut Tape, z: &Tensor, aug: &Tensor) -> Result<Tensor> {
        self.scaffold.decode(tape, z, aug)
    }

    pub fn layer_step(
        &self,
        tape: &mut Tape,
        index: usize,
        z: &Tensor,
        state: &LaplacianState,
    ) -> Result<(Tensor, LaplacianState)> {
        shno_layer(
            tape,
            &self.scaffold.sht,
            &self.modes,
            z,
            &self.layers[index],
            state,
        )
    }

    /// Forward pass that also returns every intermediate latent and the
    /// Laplacian state entering each layer.
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        x: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>, Vec<LaplacianState>)> {
        let (z0, aug) = self.encode(tape, x)?;
        let mut latents = vec![z0];
        let mut states = vec![self.zero_state(x.shape()[0])];
        for i in 0..self.layers.len() {
            let (z, s) = self.layer_step(tape, i, latents.last().unwrap(), states.last().unwrap())?;
            latents.push(z);
            states.push(s);
        }
        let y = self.decode(tape, latents.last().unwrap(), &aug)?;
        Ok((y, latents, states))
    }
}

impl Forecaster for ShnoForecaster {
    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let (z0, aug) = self.encode(tape, x)?;
        let mut z = z0;
        let mut state = self.zero_state(x.shape()[0]);
        for i in 0..self.layers.len() {
            let (next, s) = self.layer_step(tape, i, &z, &state)?;
            z = next;
            state = s;
        }
        self.decode(tape, &z, &aug)
    }

    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.scaffold.visit(&mut out);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("layer{i}"), &mut out);
        }
        out
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.scaffold.visit_mut(&mut out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("layer{i}"), &mut out);
        }
        out
    }

    fn config(&self) -> &ShnoConfig {
        &self.scaffold.cfg
    }

    fn kind(&self) -> &'static str {
        match self.attention {
            AttentionKind::Grsa => "shno",
            AttentionKind::Smhsa => "shno-smhsa",
        }
    }
}

/// The per-degree linear baseline on the same scaffold.
pub struct SfnoLinearForecaster {
    scaffold: Scaffold,
    pub layers: Vec<SfnoLayerParams>,
}

impl SfnoLinearForecaster {
    pub fn new(cfg: &ShnoConfig) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let scaffold = Scaffold::new(cfg, &mut rng)?;
        let degrees = cfg.n_max + 1;
        let layers = (0..cfg.layers)
            .map(|_| SfnoLayerParams::init(&mut rng, cfg.embed_dim, cfg.ffn_hidden(), degrees))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scaffold, layers })
    }

    pub fn sht(&self) -> &Arc<Sht> {
        &self.scaffold.sht
    }
}

impl Forecaster for SfnoLinearForecaster {
    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        check_input(&self.scaffold.cfg, x)?;
        let aug = self.scaffold.augment(tape, x)?;
        let mut z = self.scaffold.encode(tape, &aug)?;
        for layer in &self.layers {
            z = sfno_layer(tape, &self.scaffold.sht, &z, layer)?;
        }
        self.scaffold.decode(tape, &z, &aug)
    }

    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.scaffold.visit(&mut out);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("layer{i}"), &mut out);
        }
        out
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.scaffold.visit_mut(&mut out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("layer{i}"), &mut out);
        }
        out
    }

    fn config(&self) -> &ShnoConfig {
        &self.scaffold.cfg
    }

    fn kind(&self) -> &'static str {
        "sfno-linear"
    }
}

/// The no-op baseline: tomorrow equals today.
pub struct PersistenceForecaster {
    cfg: ShnoConfig,
}

impl PersistenceForecaster {
    pub fn new(cfg: &ShnoConfig) -> Result<Self> {
        if cfg.in_channels != cfg.out_channels {
            return Err(ModelError::Config(format!(
                "persistence needs matching channel counts, got {} in / {} out",
                cfg.in_channels, cfg.out_channels
            )));
        }
        Ok(Self { cfg: cfg.clone() })
    }
}

impl Forecaster for PersistenceForecaster {
    fn forward(&self, _tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        check_input(&self.cfg, x)?;
        Ok(x.clone())
    }

    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }

    fn config(&self) -> &ShnoConfig {
        &self.cfg
    }

    fn kind(&self) -> &'static str {
        "persistence"
    }
}

/// Build a forecaster by family name.
pub fn build_model(family: &str, cfg: &ShnoConfig) -> Result<Box<dyn Forecaster>> {
    match family {
        "shno" => Ok(Box::new(ShnoForecaster::new(cfg, AttentionKind::Grsa)?)),
        "shno-smhsa" => Ok(Box::new(ShnoForecaster::new(cfg, AttentionKind::Smhsa)?)),
        "sfno-linear" => Ok(Box::new(SfnoLinearForecaster::new(cfg)?)),
        "persistence" => Ok(Box::new(PersistenceForecaster::new(cfg)?)),
        other => Err(ModelError::Config(format!(
            "unknown model family {other:?}; expected one of {}",
            MODEL_FAMILIES.join(", ")
        ))),
    }
}
