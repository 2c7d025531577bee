//! FS-NET / CE-NET cascade: dataset generation, subnet-wise training, online
//! deployment, and the variant that feeds raw samples to the networks.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{argmax_first, BaselineReceiver, JfsceEstimate, OmpMatrixMode};
use crate::elm::{elm_init, elm_train, ElmModel};
use crate::rng::{substream, Phase, Purpose};
use crate::scenario::{Link, LinkParams, Observation, TrialStreams};
use crate::signal::SampleWindow;
use crate::{Error, Result, C64};

/// Samples generated and pushed through the FS-NET per chunk.
const CHUNK: usize = 4096;

/// What the networks see.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Correlation magnitudes into FS-NET, OMP channel estimate into CE-NET.
    #[default]
    Cascade,
    /// Complex window into the FS network, raw training segment into the CE network.
    Raw,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cascade => "cascade",
            Variant::Raw => "raw",
        }
    }
}

/// Feature-extractor settings the networks were trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub variant: Variant,
    pub m: usize,
    pub ns: usize,
    pub l: usize,
    pub zc_root: u64,
    pub omp_iters: usize,
    #[serde(default)]
    pub omp_mode: OmpMatrixMode,
}

impl ExtractorConfig {
    pub fn for_link(params: &LinkParams, variant: Variant) -> Self {
        Self {
            variant,
            m: params.m,
            ns: params.ns,
            l: params.l,
            zc_root: params.zc_root,
            omp_iters: params.l,
            omp_mode: OmpMatrixMode::TrainingOnly,
        }
    }

    pub fn with_omp_mode(self, omp_mode: OmpMatrixMode) -> Self {
        Self { omp_mode, ..self }
    }
}

/// Offline-training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub n_t: usize,
    pub n_c: usize,
    /// FS hidden multiplier: hidden = `n_m · M`.
    pub n_m: usize,
    /// CE hidden multiplier: hidden = `n_l · L`.
    pub n_l: usize,
    /// Training SNR is drawn uniformly from `[snr_low, snr_high]` dB.
    pub snr_low: f64,
    pub snr_high: f64,
    pub master_seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_c == 0 || self.n_m == 0 || self.n_l == 0 {
            return Err(Error::Config("n_t, n_c, n_m and n_l must be positive".into()));
        }
        if !(self.snr_low.is_finite() && self.snr_high.is_finite() && self.snr_low <= self.snr_high) {
            return Err(Error::Config("training SNR range must be finite with low <= high".into()));
        }
        Ok(())
    }

    /// Hidden multipliers of the raw variant.
    pub fn raw_multipliers() -> (usize, usize) {
        (12, 12)
    }
}

/// Feature extraction for one variant.
#[derive(Clone, Debug)]
pub struct Extractor {
    config: ExtractorConfig,
    receiver: BaselineReceiver,
}

fn normalized(v: impl IntoIterator<Item = C64>) -> Vec<C64> {
    let v: Vec<C64> = v.into_iter().collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.into_iter().map(|x| x / norm).collect()
    } else {
        v
    }
}

impl Extractor {
    pub fn new(config: ExtractorConfig, training: &[C64]) -> Result<Self> {
        if training.len() != config.ns {
            return Err(Error::LengthMismatch {
                what: "training sequence",
                expected: config.ns,
                actual: training.len(),
            });
        }
        let receiver = BaselineReceiver::new(training, config.m, config.l)?;
        Ok(Self { config, receiver })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn fs_input_len(&self) -> usize {
        self.config.m
    }

    pub fn ce_input_len(&self) -> usize {
        match self.config.variant {
            Variant::Cascade => self.config.l,
            Variant::Raw => self.config.ns,
        }
    }

    /// Unit-norm input of the FS network: correlation magnitudes, or the
    /// complex window itself for the raw variant.
    pub fn fs_features(&self, window: &SampleWindow) -> Result<Vec<C64>> {
        let mags: Vec<C64> = match self.config.variant {
            Variant::Cascade => {
                let (_, u) = self.receiver.fs_crosscorr(window)?;
                u.iter().map(|v| C64::new(v.norm(), 0.0)).collect()
            }
            Variant::Raw => {
                if window.m() != self.config.m {
                    return Err(Error::LengthMismatch {
                        what: "window",
                        expected: self.config.m,
                        actual: window.m(),
                    });
                }
                window.samples.clone()
            }
        };
        Ok(normalized(mags))
    }

    /// Whether [`Extractor::ce_features`] needs the transmitted frame.
    pub fn needs_frame(&self) -> bool {
        self.config.variant == Variant::Cascade && self.config.omp_mode == OmpMatrixMode::GenieFrame
    }

    /// Unit-norm input of the CE network given the offset estimate. `frame`
    /// is the transmitted frame, required when [`Extractor::needs_frame`].
    pub fn ce_features(&self, window: &SampleWindow, tau_hat: usize, frame: Option<&[C64]>) -> Result<Vec<C64>> {
        let iters = self.config.omp_iters;
        match self.config.variant {
            Variant::Cascade => Ok(normalized(match (self.config.omp_mode, frame) {
                (OmpMatrixMode::TrainingOnly, _) => self.receiver.omp_ce(window, tau_hat, iters)?,
                (OmpMatrixMode::GenieFrame, Some(f)) => self.receiver.omp_ce_genie(window, tau_hat, f, iters)?,
                (OmpMatrixMode::GenieFrame, None) => {
                    return Err(Error::InvalidArgument("genie OMP mode needs the transmitted frame".into()))
                }
            })),
            Variant::Raw => {
                if tau_hat >= self.config.m {
                    return Err(Error::InvalidArgument(format!("offset {tau_hat} outside window")));
                }
                let m = self.config.m;
                Ok(normalized((0..self.config.ns).map(|i| window.samples[(tau_hat + i) % m])))
            }
        }
    }
}

/// `(ū_FS, τ)` pairs; the one-hot label is built on demand.
#[derive(Clone, Debug, Default)]
pub struct FsDataset {
    pub inputs: Vec<Vec<C64>>,
    pub taus: Vec<usize>,
    pub m: usize,
}

impl FsDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn one_hot(&self, i: usize) -> Vec<C64> {
        one_hot(self.m, self.taus[i])
    }
}

pub fn one_hot(m: usize, tau: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); m];
    v[tau] = C64::new(1.0, 0.0);
    v
}

/// `(p̄_CE, h)` pairs.
#[derive(Clone, Debug, Default)]
pub struct CeDataset {
    pub inputs: Vec<Vec<C64>>,
    pub labels: Vec<Vec<C64>>,
    /// Offset estimates the inputs were extracted at, with the true offsets.
    pub tau_hat: Vec<usize>,
    pub tau_true: Vec<usize>,
}

impl CeDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn training_observation(link: &Link, cfg: &TrainingConfig, phase: Phase, i: u64) -> Result<Observation> {
    let mut streams = TrialStreams::new(cfg.master_seed, phase, i);
    let snr = if cfg.snr_low == cfg.snr_high {
        cfg.snr_low
    } else {
        streams.snr.random_range(cfg.snr_low..=cfg.snr_high)
    };
    link.observe(snr, &mut streams)
}

/// Draws `n_t` FS training samples: uniform offset, uniform training SNR,
/// fresh channel, frames and noise per sample.
pub fn gen_fs_dataset(link: &Link, extractor: &Extractor, cfg: &TrainingConfig, n_t: usize) -> Result<FsDataset> {
    let samples: Vec<(Vec<C64>, usize)> = (0..n_t as u64)
        .into_par_iter()
        .map(|i| {
            let obs = training_observation(link, cfg, Phase::FsTraining, i)?;
            Ok((extractor.fs_features(&obs.window)?, obs.window.true_offset))
        })
        .collect::<Result<_>>()?;
    let (inputs, taus) = samples.into_iter().unzip();
    Ok(FsDataset {
        inputs,
        taus,
        m: extractor.fs_input_len(),
    })
}

fn derived_seed(master: u64, which: u64) -> u64 {
    substream(master, Purpose::Weights, &[which]).random()
}

/// Trains an FS network with `hidden` units on the dataset.
pub fn train_fs_net(dataset: &FsDataset, hidden: usize, seed: u64) -> Result<ElmModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty FS dataset".into()));
    }
    let model = elm_init(dataset.m, hidden, dataset.m, seed)?;
    let labels: Vec<Vec<C64>> = (0..dataset.len()).map(|i| dataset.one_hot(i)).collect();
    elm_train(&model, &dataset.inputs, &labels)
}

/// `argmax |ũ_i|²` of FS network outputs.
pub fn offset_from_output(u: &[C64]) -> usize {
    argmax_first(u.iter().map(|v| v.norm_sqr()))
}

/// Draws `n_c` CE training samples: the frozen FS network picks `τ̂`, the
/// extractor produces `p̄_CE` at `τ̂`, and the label is the true channel.
pub fn gen_ce_dataset(
    fs_net: &ElmModel,
    link: &Link,
    extractor: &Extractor,
    cfg: &TrainingConfig,
    n_c: usize,
) -> Result<CeDataset> {
    if !fs_net.trained {
        return Err(Error::TrainingOrder("CE samples need a trained, frozen FS network"));
    }
    let mut out = CeDataset::default();
    for start in (0..n_c).step_by(CHUNK) {
        let end = (start + CHUNK).min(n_c);
        let observed: Vec<(Observation, Vec<C64>)> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| {
                let obs = training_observation(link, cfg, Phase::CeTraining, i)?;
                let f = extractor.fs_features(&obs.window)?;
                Ok((obs, f))
            })
            .collect::<Result<_>>()?;
        let (observations, features): (Vec<_>, Vec<_>) = observed.into_iter().unzip();
        let outputs = fs_net.forward_batch(&features)?;
        let rows: Vec<(Vec<C64>, usize)> = observations
            .par_iter()
            .zip(outputs.par_iter())
            .map(|(obs, u)| {
                let tau_hat = offset_from_output(u);
                Ok((extractor.ce_features(&obs.window, tau_hat, Some(&obs.frame))?, tau_hat))
            })
            .collect::<Result<_>>()?;
        for (obs, (input, tau_hat)) in observations.into_iter().zip(rows) {
            out.inputs.push(input);
            out.labels.push(obs.h.taps);
            out.tau_hat.push(tau_hat);
            out.tau_true.push(obs.window.true_offset);
        }
    }
    Ok(out)
}

/// Trains a CE network with `hidden` units on the dataset.
pub fn train_ce_net(dataset: &CeDataset, hidden: usize, seed: u64) -> Result<ElmModel> {
    let (Some(x), Some(t)) = (dataset.inputs.first(), dataset.labels.first()) else {
        return Err(Error::InvalidArgument("empty CE dataset".into()));
    };
    let model = elm_init(x.len(), hidden, t.len(), seed)?;
    elm_train(&model, &dataset.inputs, &dataset.labels)
}

/// Trained network pair plus the extractor configuration behind it.
#[derive(Clone, Debug)]
pub struct CascadeModel {
    pub fs_net: ElmModel,
    pub ce_net: ElmModel,
    pub extractor: Extractor,
    pub training: TrainingConfig,
    /// Fingerprint of link, extractor and training settings.
    pub config_hash: String,
}

/// Hex SHA-256 over the canonical JSON of everything a trained model depends on.
pub fn model_fingerprint(link: &LinkParams, extractor: &ExtractorConfig, training: &TrainingConfig) -> String {
    let canonical = serde_json::json!({ "link": link, "extractor": extractor, "training": training });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Offline training of a variant: FS network first, frozen, then CE network
/// on samples produced through it.
pub fn train(link: &Link, variant: Variant, cfg: &TrainingConfig) -> Result<CascadeModel> {
    train_with(link, ExtractorConfig::for_link(link.params(), variant), cfg)
}

/// [`train`] with an explicit extractor configuration.
pub fn train_with(link: &Link, ex_cfg: ExtractorConfig, cfg: &TrainingConfig) -> Result<CascadeModel> {
    cfg.validate()?;
    let params = link.params();
    let variant = ex_cfg.variant;
    if (ex_cfg.m, ex_cfg.ns, ex_cfg.l, ex_cfg.zc_root) != (params.m, params.ns, params.l, params.zc_root) {
        return Err(Error::ConfigMismatch("extractor shape differs from the link".into()));
    }
    let extractor = Extractor::new(ex_cfg.clone(), link.training())?;
    let (n_m, n_l) = match variant {
        Variant::Cascade => (cfg.n_m, cfg.n_l),
        Variant::Raw => TrainingConfig::raw_multipliers(),
    };
    let salt = match variant {
        Variant::Cascade => 0,
        Variant::Raw => 2,
    };
    let fs_data = gen_fs_dataset(link, &extractor, cfg, cfg.n_t)?;
    let fs_net = train_fs_net(&fs_data, n_m * params.m, derived_seed(cfg.master_seed, salt + 1))?;
    drop(fs_data);
    let ce_data = gen_ce_dataset(&fs_net, link, &extractor, cfg, cfg.n_c)?;
    let ce_net = train_ce_net(&ce_data, n_l * params.l, derived_seed(cfg.master_seed, salt + 2))?;
    Ok(CascadeModel {
        config_hash: model_fingerprint(params, &ex_cfg, cfg),
        fs_net,
        ce_net,
        extractor,
        training: cfg.clone(),
    })
}

/// Raw-input ablation: hidden sizes `12·M` and `12·L`.
pub fn elm_raw_variant(link: &Link, cfg: &TrainingConfig) -> Result<CascadeModel> {
    train(link, Variant::Raw, cfg)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    extractor: ExtractorConfig,
    training: TrainingConfig,
    config_hash: String,
    fs_net: String,
    ce_net: String,
}

impl CascadeModel {
    pub fn variant(&self) -> Variant {
        self.extractor.config.variant
    }

    /// Online deployment of one window.
    pub fn deploy(&self, window: &SampleWindow) -> Result<JfsceEstimate> {
        self.deploy_with_frame(window, None)
    }

    /// Deployment with the transmitted frame available to a genie-mode extractor.
    pub fn deploy_with_frame(&self, window: &SampleWindow, frame: Option<&[C64]>) -> Result<JfsceEstimate> {
        let u = self.fs_net.forward(&self.extractor.fs_features(window)?)?;
        let tau_hat = offset_from_output(&u);
        let h_hat = self.ce_net.forward(&self.extractor.ce_features(window, tau_hat, frame)?)?;
        Ok(JfsceEstimate {
            tau_hat,
            h_hat,
            metric: u.iter().map(|v| v.norm_sqr()).collect(),
        })
    }

    /// Deployment of many windows through batched network passes. `frames`,
    /// when given, pairs each window with its transmitted frame.
    pub fn deploy_batch(&self, windows: &[&SampleWindow], frames: Option<&[&[C64]]>) -> Result<Vec<JfsceEstimate>> {
        if let Some(f) = frames {
            if f.len() != windows.len() {
                return Err(Error::LengthMismatch {
                    what: "frames",
                    expected: windows.len(),
                    actual: f.len(),
                });
            }
        }
        let fs_in: Vec<Vec<C64>> = windows
            .par_iter()
            .map(|w| self.extractor.fs_features(w))
            .collect::<Result<_>>()?;
        let u = self.fs_net.forward_batch(&fs_in)?;
        let taus: Vec<usize> = u.iter().map(|v| offset_from_output(v)).collect();
        let ce_in: Vec<Vec<C64>> = windows
            .par_iter()
            .zip(taus.par_iter())
            .enumerate()
            .map(|(i, (w, &t))| self.extractor.ce_features(w, t, frames.map(|f| f[i])))
            .collect::<Result<_>>()?;
        let h = self.ce_net.forward_batch(&ce_in)?;
        Ok(taus
            .into_iter()
            .zip(h)
            .zip(u)
            .map(|((tau_hat, h_hat), u)| JfsceEstimate {
                tau_hat,
                h_hat,
                metric: u.iter().map(|v| v.norm_sqr()).collect(),
            })
            .collect())
    }

    /// Writes `manifest.json`, `fs_net.elm` and `ce_net.elm` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.fs_net.save(dir.join("fs_net.elm"))?;
        self.ce_net.save(dir.join("ce_net.elm"))?;
        let manifest = Manifest {
            format: 1,
            extractor: self.extractor.config.clone(),
            training: self.training.clone(),
            config_hash: self.config_hash.clone(),
            fs_net: "fs_net.elm".into(),
            ce_net: "ce_net.elm".into(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a saved model; `expected_hash` guards against a model trained
    /// under different settings.
    pub fn load(dir: impl AsRef<Path>, training_sequence: &[C64], expected_hash: Option<&str>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::ModelFormat {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if manifest.format != 1 {
            return Err(Error::ModelFormat {
                path,
                reason: format!("unsupported manifest format {}", manifest.format),
            });
        }
        if let Some(expected) = expected_hash {
            if expected != manifest.config_hash {
                return Err(Error::ConfigMismatch(format!(
                    "model in {} was trained under config {}, current config is {expected}",
                    dir.display(),
                    manifest.config_hash
                )));
            }
        }
        let fs_net = ElmModel::load(dir.join(&manifest.fs_net))?;
        let ce_net = ElmModel::load(dir.join(&manifest.ce_net))?;
        let extractor = Extractor::new(manifest.extractor, training_sequence)?;
        let model = Self {
            fs_net,
            ce_net,
            extractor,
            training: manifest.training,
            config_hash: manifest.config_hash,
        };
        model.check_shapes().map_err(|reason| Error::ModelFormat {
            path: dir.to_path_buf(),
            reason,
        })?;
        Ok(model)
    }

    fn check_shapes(&self) -> std::result::Result<(), String> {
        let (fs, ce) = (self.fs_net.dims, self.ce_net.dims);
        let ex = &self.extractor;
        if fs.input != ex.fs_input_len() || fs.output != ex.config.m {
            return Err(format!("FS network shape {fs:?} does not match window length {}", ex.config.m));
        }
        if ce.input != ex.ce_input_len() || ce.output != ex.config.l {
            return Err(format!("CE network shape {ce:?} does not match tap count {}", ex.config.l));
        }
        if !self.fs_net.trained || !self.ce_net.trained {
            return Err("model file holds an untrained network".into());
        }
        Ok(())
    }
}
