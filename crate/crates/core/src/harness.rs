//! Monte Carlo harness: configuration, sweeps over SNR and one link
//! parameter, and CSV/JSON result files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{BaselineReceiver, JfsceEstimate, OmpMatrixMode};
use crate::cascade::{self, CascadeModel, ExtractorConfig, TrainingConfig, Variant};
use crate::channel::LosProfile;
use crate::impairment::{EvmDefinition, HpaParams};
use crate::metrics::{normalized_error, Tally};
use crate::rng::Phase;
use crate::scenario::{HpaPlacement, Link, LinkParams, Observation, TrialStreams};
use crate::signal::SampleWindow;
use crate::{Error, Result, C64};

/// Trials generated together and pushed through every estimator.
const CHUNK: usize = 2048;

/// Estimators selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ml,
    Omp,
    ElmCascade,
    ElmRaw,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Ml,
        EstimatorKind::Omp,
        EstimatorKind::ElmCascade,
        EstimatorKind::ElmRaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ml => "ml",
            EstimatorKind::Omp => "omp",
            EstimatorKind::ElmCascade => "elm_cascade",
            EstimatorKind::ElmRaw => "elm_raw",
        }
    }

    /// Network variant behind the estimator, if it is learned.
    pub fn variant(self) -> Option<Variant> {
        match self {
            EstimatorKind::ElmCascade => Some(Variant::Cascade),
            EstimatorKind::ElmRaw => Some(Variant::Raw),
            _ => None,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?} (ml, omp, elm_cascade, elm_raw)")))
    }
}

/// Link parameter varied across a sweep, on top of the SNR grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// SNR grid only.
    #[default]
    Snr,
    /// Target EVM in percent.
    Evm,
    K,
    L,
    Ns,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Snr => "snr",
            SweepParam::Evm => "evm",
            SweepParam::K => "k",
            SweepParam::L => "l",
            SweepParam::Ns => "ns",
            SweepParam::M => "m",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::Snr, SweepParam::Evm, SweepParam::K, SweepParam::L, SweepParam::Ns, SweepParam::M]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter {s:?} (snr, evm, k, l, ns, m)")))
    }
}

/// Everything a sweep depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub ns: usize,
    pub m: usize,
    pub l: usize,
    pub zc_root: u64,
    pub k_factor: f64,
    pub eta: f64,
    pub los: LosProfile,
    pub n_m: usize,
    pub n_l: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub n_trials: usize,
    pub snr_grid: Vec<f64>,
    pub evm_target: Option<f64>,
    pub hpa: HpaParams,
    pub placement: HpaPlacement,
    pub evm_definition: EvmDefinition,
    pub pilot_frames: usize,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    pub omp_matrix_mode: OmpMatrixMode,
    pub train_snr_low: f64,
    pub train_snr_high: f64,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let link = LinkParams::default();
        Self {
            ns: link.ns,
            m: link.m,
            l: link.l,
            zc_root: link.zc_root,
            k_factor: link.k_factor,
            eta: link.eta,
            los: link.los,
            n_m: 10,
            n_l: 10,
            n_t: 100_000,
            n_c: 100_000,
            n_trials: 20_000,
            snr_grid: (0..=7).map(|i| 2.0 * i as f64).collect(),
            evm_target: link.evm_target,
            hpa: link.hpa,
            placement: link.placement,
            evm_definition: link.evm_definition,
            pilot_frames: link.pilot_frames,
            estimators: EstimatorKind::ALL.to_vec(),
            master_seed: 1,
            omp_matrix_mode: OmpMatrixMode::TrainingOnly,
            train_snr_low: 0.0,
            train_snr_high: 14.0,
            sweep_param: SweepParam::Snr,
            sweep_values: Vec::new(),
        }
    }
}

/// Keys accepted by [`SimConfig::set`], config files and `JFSCE_*` variables.
pub const CONFIG_KEYS: &[&str] = &[
    "ns",
    "m",
    "l",
    "zc_root",
    "k_factor",
    "eta",
    "los",
    "n_m",
    "n_l",
    "n_t",
    "n_c",
    "n_trials",
    "snr_grid",
    "evm_target",
    "hpa_alpha_a",
    "hpa_beta_a",
    "hpa_alpha_phi",
    "hpa_beta_phi",
    "hpa_drive_gain",
    "placement",
    "evm_definition",
    "pilot_frames",
    "estimators",
    "master_seed",
    "omp_matrix_mode",
    "train_snr_low",
    "train_snr_high",
    "sweep_param",
    "sweep_values",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `lo:step:hi` ranges are expanded; anything else is a comma list.
fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return parse_list(key, value);
    }
    let (lo, step, hi): (f64, f64, f64) = (parse(key, parts[0])?, parse(key, parts[1])?, parse(key, parts[2])?);
    if !(step > 0.0) || hi < lo {
        return Err(Error::Config(format!("{key}: bad range {value:?}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

impl SimConfig {
    /// Default link with the reduced training and evaluation sizes used for
    /// quick runs.
    pub fn desk() -> Self {
        Self {
            n_t: 20_000,
            n_c: 20_000,
            ..Self::default()
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "ns" => self.ns = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "l" => self.l = parse(key, value)?,
            "zc_root" => self.zc_root = parse(key, value)?,
            "k_factor" => self.k_factor = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "los" => self.los = value.parse()?,
            "n_m" => self.n_m = parse(key, value)?,
            "n_l" => self.n_l = parse(key, value)?,
            "n_t" => self.n_t = parse::<f64>(key, value)? as usize,
            "n_c" => self.n_c = parse::<f64>(key, value)? as usize,
            "n_trials" => self.n_trials = parse::<f64>(key, value)? as usize,
            "snr_grid" => self.snr_grid = parse_grid(key, value)?,
            "evm_target" => {
                self.evm_target = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "hpa_alpha_a" => self.hpa.alpha_a = parse(key, value)?,
            "hpa_beta_a" => self.hpa.beta_a = parse(key, value)?,
            "hpa_alpha_phi" => self.hpa.alpha_phi = parse(key, value)?,
            "hpa_beta_phi" => self.hpa.beta_phi = parse(key, value)?,
            "hpa_drive_gain" => self.hpa.drive_gain = parse(key, value)?,
            "placement" => self.placement = value.parse()?,
            "evm_definition" => self.evm_definition = value.parse()?,
            "pilot_frames" => self.pilot_frames = parse(key, value)?,
            "estimators" => self.estimators = parse_list(key, value)?,
            "master_seed" => self.master_seed = parse(key, value)?,
            "omp_matrix_mode" => self.omp_matrix_mode = value.parse()?,
            "train_snr_low" => self.train_snr_low = parse(key, value)?,
            "train_snr_high" => self.train_snr_high = parse(key, value)?,
            "sweep_param" => self.sweep_param = value.parse()?,
            "sweep_values" => self.sweep_values = parse_grid(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `JFSCE_<KEY>` variables from `vars`, e.g. `JFSCE_N_TRIALS=1000`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.strip_prefix("JFSCE_")?.to_ascii_lowercase();
                CONFIG_KEYS.contains(&key.as_str()).then_some((key, v))
            })
            .collect();
        found.sort();
        for (k, v) in found {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Text form readable by [`SimConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("ns", self.ns.to_string());
        kv("m", self.m.to_string());
        kv("l", self.l.to_string());
        kv("zc_root", self.zc_root.to_string());
        kv("k_factor", self.k_factor.to_string());
        kv("eta", self.eta.to_string());
        kv("los", self.los.name().into());
        kv("n_m", self.n_m.to_string());
        kv("n_l", self.n_l.to_string());
        kv("n_t", self.n_t.to_string());
        kv("n_c", self.n_c.to_string());
        kv("n_trials", self.n_trials.to_string());
        kv("snr_grid", list(&self.snr_grid));
        kv("evm_target", self.evm_target.map_or("none".into(), |v| v.to_string()));
        kv("hpa_alpha_a", self.hpa.alpha_a.to_string());
        kv("hpa_beta_a", self.hpa.beta_a.to_string());
        kv("hpa_alpha_phi", self.hpa.alpha_phi.to_string());
        kv("hpa_beta_phi", self.hpa.beta_phi.to_string());
        kv("hpa_drive_gain", self.hpa.drive_gain.to_string());
        kv("placement", self.placement.name().into());
        kv("evm_definition", self.evm_definition.name().into());
        kv("pilot_frames", self.pilot_frames.to_string());
        kv(
            "estimators",
            self.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(","),
        );
        kv("master_seed", self.master_seed.to_string());
        kv("omp_matrix_mode", self.omp_matrix_mode.name().into());
        kv("train_snr_low", self.train_snr_low.to_string());
        kv("train_snr_high", self.train_snr_high.to_string());
        kv("sweep_param", self.sweep_param.name().into());
        kv("sweep_values", list(&self.sweep_values));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be positive".into()));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_grid must be a nonempty list of finite values".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.sweep_param != SweepParam::Snr && self.sweep_values.is_empty() {
            return Err(Error::Config(format!(
                "sweep over {} needs sweep_values",
                self.sweep_param.name()
            )));
        }
        for (_, point) in self.points()? {
            point.link_params().validate()?;
            if point.needs_training() {
                point.training_config().validate()?;
            }
        }
        Ok(())
    }

    fn needs_training(&self) -> bool {
        self.estimators.iter().any(|e| e.variant().is_some())
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            ns: self.ns,
            m: self.m,
            l: self.l,
            zc_root: self.zc_root,
            k_factor: self.k_factor,
            eta: self.eta,
            los: self.los,
            hpa: self.hpa,
            placement: self.placement,
            evm_target: self.evm_target,
            evm_definition: self.evm_definition,
            pilot_frames: self.pilot_frames,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            n_t: self.n_t,
            n_c: self.n_c,
            n_m: self.n_m,
            n_l: self.n_l,
            snr_low: self.train_snr_low,
            snr_high: self.train_snr_high,
            master_seed: self.master_seed,
        }
    }

    pub fn extractor_config(&self, variant: Variant) -> ExtractorConfig {
        let ex = ExtractorConfig::for_link(&self.link_params(), variant);
        match variant {
            Variant::Cascade => ex.with_omp_mode(self.omp_matrix_mode),
            Variant::Raw => ex,
        }
    }

    /// Copy with the sweep parameter set to `value`.
    pub fn at(&self, param: SweepParam, value: f64) -> Result<SimConfig> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {value}", param.name())))
            }
        };
        let mut c = self.clone();
        match param {
            SweepParam::Snr => c.snr_grid = vec![value],
            SweepParam::Evm => c.evm_target = Some(value),
            SweepParam::K => c.k_factor = value,
            SweepParam::L => c.l = count()?,
            SweepParam::Ns => c.ns = count()?,
            SweepParam::M => c.m = count()?,
        }
        c.sweep_param = SweepParam::Snr;
        c.sweep_values.clear();
        Ok(c)
    }

    /// `(sweep value, point config)` pairs; a plain SNR sweep is one point.
    pub fn points(&self) -> Result<Vec<(Option<f64>, SimConfig)>> {
        if self.sweep_param == SweepParam::Snr {
            let mut c = self.clone();
            c.sweep_values.clear();
            return Ok(vec![(None, c)]);
        }
        self.sweep_values
            .iter()
            .map(|&v| Ok((Some(v), self.at(self.sweep_param, v)?)))
            .collect()
    }

    /// Hex prefix of the SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Result of one (estimator, sweep value, SNR) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: EstimatorKind,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub tally: Tally,
    pub wall_time_s: f64,
}

impl Cell {
    pub fn e_error(&self) -> f64 {
        self.tally.error_probability().unwrap_or(f64::NAN)
    }

    pub fn nmse(&self) -> f64 {
        self.tally.nmse().unwrap_or(f64::NAN)
    }
}

/// Link operating point and model provenance of one sweep value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointInfo {
    pub sweep_value: f64,
    pub drive_gain: Option<f64>,
    pub achieved_evm: Option<f64>,
    pub signal_power: f64,
    /// `(estimator, model fingerprint)` of the trained networks.
    pub models: Vec<(EstimatorKind, String)>,
    pub training_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SimConfig,
    pub config_hash: String,
    pub points: Vec<PointInfo>,
    pub cells: Vec<Cell>,
    pub wall_time_s: f64,
}

impl SweepResult {
    pub fn cell(&self, estimator: EstimatorKind, sweep_value: f64, snr_db: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.sweep_value == sweep_value && c.snr_db == snr_db)
    }
}

/// Execution options that do not change results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Directory for trained models: loaded when present, written otherwise.
    pub model_dir: Option<PathBuf>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

/// Runs `f` on a pool of `workers` threads, or the global pool for `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Loads the model in `dir` when a manifest exists, trains and saves it otherwise.
pub fn load_or_train(link: &Link, cfg: &SimConfig, variant: Variant, dir: Option<&Path>) -> Result<CascadeModel> {
    let ex = cfg.extractor_config(variant);
    let training = cfg.training_config();
    let expected = cascade::model_fingerprint(link.params(), &ex, &training);
    if let Some(dir) = dir {
        if dir.join("manifest.json").exists() {
            return CascadeModel::load(dir, link.training(), Some(&expected));
        }
    }
    let model = cascade::train_with(link, ex, &training)?;
    if let Some(dir) = dir {
        model.save(dir)?;
    }
    Ok(model)
}

fn model_subdir(opts: &RunOptions, index: usize, points: usize, e: EstimatorKind) -> Option<PathBuf> {
    opts.model_dir.as_ref().map(|d| {
        if points == 1 {
            d.join(e.name())
        } else {
            d.join(format!("point-{index}")).join(e.name())
        }
    })
}

/// Per-trial `(sync error, normalized channel error)` of one estimator.
fn score(est: &JfsceEstimate, obs: &Observation, rescale: bool) -> Result<(bool, f64)> {
    let err = if rescale {
        let h: Vec<C64> = est.h_hat.iter().map(|v| v / obs.amplitude_scale).collect();
        normalized_error(&h, &obs.h.taps)?
    } else {
        normalized_error(&est.h_hat, &obs.h.taps)?
    };
    Ok((est.tau_hat != obs.window.true_offset, err))
}

fn run_estimator(
    kind: EstimatorKind,
    rx: &BaselineReceiver,
    models: &[(EstimatorKind, CascadeModel)],
    cfg: &SimConfig,
    obs: &[Observation],
) -> Result<Vec<(bool, f64)>> {
    match kind {
        EstimatorKind::Ml => obs.par_iter().map(|o| score(&rx.estimate_ml(&o.window)?, o, true)).collect(),
        EstimatorKind::Omp => obs
            .par_iter()
            .map(|o| {
                let est = rx.estimate_omp(&o.window, cfg.l, cfg.omp_matrix_mode, Some(&o.frame))?;
                score(&est, o, true)
            })
            .collect(),
        EstimatorKind::ElmCascade | EstimatorKind::ElmRaw => {
            let model = &models
                .iter()
                .find(|(k, _)| *k == kind)
                .expect("models are trained for every selected network estimator")
                .1;
            let windows: Vec<&SampleWindow> = obs.iter().map(|o| &o.window).collect();
            let frames: Vec<&[C64]> = obs.iter().map(|o| o.frame.as_slice()).collect();
            let est = model.deploy_batch(&windows, Some(&frames))?;
            est.iter().zip(obs).map(|(e, o)| score(e, o, false)).collect()
        }
    }
}

/// Runs every point of the sweep. Results depend only on `cfg`; worker count
/// and chunking never change a bit of the tallies.
pub fn run_sweep(cfg: &SimConfig, opts: &RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    with_workers(opts.workers, || sweep_inner(cfg, opts))
}

fn sweep_inner(cfg: &SimConfig, opts: &RunOptions) -> Result<SweepResult> {
    let start = Instant::now();
    let points = cfg.points()?;
    let mut infos = Vec::new();
    let mut cells = Vec::new();
    for (index, (value, point)) in points.iter().enumerate() {
        let link = Link::new(point.link_params(), point.master_seed)?;
        let rx = BaselineReceiver::new(link.training(), link.m(), link.l())?;
        let t0 = Instant::now();
        let mut models = Vec::new();
        for &e in &point.estimators {
            if let Some(variant) = e.variant() {
                if opts.verbose {
                    eprintln!("training {} ({} samples)", e.name(), point.n_t);
                }
                let dir = model_subdir(opts, index, points.len(), e);
                models.push((e, load_or_train(&link, point, variant, dir.as_deref())?));
            }
        }
        let sweep_value = value.unwrap_or(f64::NAN);
        infos.push(PointInfo {
            sweep_value,
            drive_gain: link.calibration().map(|c| c.drive_gain),
            achieved_evm: link.calibration().map(|c| c.achieved_evm),
            signal_power: link.signal_power(),
            models: models.iter().map(|(e, m)| (*e, m.config_hash.clone())).collect(),
            training_time_s: t0.elapsed().as_secs_f64(),
        });

        for (snr_index, &snr) in point.snr_grid.iter().enumerate() {
            let mut tallies = vec![Tally::default(); point.estimators.len()];
            let mut times = vec![0.0; point.estimators.len()];
            for begin in (0..point.n_trials).step_by(CHUNK) {
                let end = (begin + CHUNK).min(point.n_trials);
                let obs: Vec<Observation> = (begin as u64..end as u64)
                    .into_par_iter()
                    .map(|i| link.observe(snr, &mut TrialStreams::new(point.master_seed, Phase::Evaluation(snr_index as u64), i)))
                    .collect::<Result<_>>()?;
                for (j, &e) in point.estimators.iter().enumerate() {
                    let t = Instant::now();
                    for (sync, err) in run_estimator(e, &rx, &models, point, &obs)? {
                        tallies[j].record(sync, err);
                    }
                    times[j] += t.elapsed().as_secs_f64();
                }
            }
            for (j, &e) in point.estimators.iter().enumerate() {
                let sweep_value = value.unwrap_or(snr);
                if opts.verbose {
                    let label = value.map_or(String::new(), |v| format!(" {}={v}", cfg.sweep_param.name()));
                    eprintln!(
                        "{}{label} snr={snr} e_error={:.4e} nmse={:.4e}",
                        e.name(),
                        tallies[j].error_probability()?,
                        tallies[j].nmse()?
                    );
                }
                cells.push(Cell {
                    estimator: e,
                    sweep_value,
                    snr_db: snr,
                    tally: tallies[j],
                    wall_time_s: times[j],
                });
            }
        }
    }
    Ok(SweepResult {
        config: cfg.clone(),
        config_hash: cfg.fingerprint(),
        points: infos,
        cells,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `%.6e` as C prints it: two-digit minimum exponent with explicit sign.
pub fn format_c_exp(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub const CSV_HEADER: &str = "estimator,sweep_param,sweep_value,snr_db,e_error,nmse,n_trials,seed,config_hash";

/// The CSV body; identical for identical tallies.
pub fn results_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.estimator.name(),
            result.config.sweep_param.name(),
            format_c_exp(c.sweep_value),
            format_c_exp(c.snr_db),
            format_c_exp(c.e_error()),
            format_c_exp(c.nmse()),
            c.tally.trials,
            result.config.master_seed,
            result.config_hash
        );
    }
    out
}

/// One row of an emitted CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub estimator: EstimatorKind,
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub e_error: f64,
    pub nmse: f64,
    pub n_trials: u64,
    pub seed: u64,
    pub config_hash: String,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("results CSV header mismatch".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Config(format!("results CSV row has {} fields", f.len())));
            }
            Ok(CsvRow {
                estimator: f[0].parse()?,
                sweep_param: f[1].parse()?,
                sweep_value: parse("sweep_value", f[2])?,
                snr_db: parse("snr_db", f[3])?,
                e_error: parse("e_error", f[4])?,
                nmse: parse("nmse", f[5])?,
                n_trials: parse("n_trials", f[6])?,
                seed: parse("seed", f[7])?,
                config_hash: f[8].to_string(),
            })
        })
        .collect()
}

/// A published curve value the default configuration is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub figure: u32,
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub metric: &'static str,
    pub value: f64,
}

pub const REFERENCE_POINTS: &[ReferencePoint] = &[
    ReferencePoint { figure: 3, estimator: EstimatorKind::ElmCascade, snr_db: 10.0, metric: "e_error", value: 2.22e-2 },
    ReferencePoint { figure: 3, estimator: EstimatorKind::Omp, snr_db: 10.0, metric: "e_error", value: 5.36e-2 },
    ReferencePoint { figure: 3, estimator: EstimatorKind::Ml, snr_db: 10.0, metric: "e_error", value: 5.65e-1 },
    ReferencePoint { figure: 3, estimator: EstimatorKind::ElmRaw, snr_db: 10.0, metric: "e_error", value: 4.57e-1 },
    ReferencePoint { figure: 4, estimator: EstimatorKind::ElmCascade, snr_db: 6.0, metric: "nmse", value: 7.03e-2 },
];

/// Measured-to-reference ratios for the reference points present in `result`.
pub fn reference_comparison(result: &SweepResult) -> Vec<serde_json::Value> {
    if result.config.sweep_param != SweepParam::Snr {
        return Vec::new();
    }
    REFERENCE_POINTS
        .iter()
        .filter_map(|r| {
            let cell = result.cell(r.estimator, r.snr_db, r.snr_db)?;
            let measured = if r.metric == "nmse" { cell.nmse() } else { cell.e_error() };
            let ratio = measured / r.value;
            Some(serde_json::json!({
                "figure": r.figure,
                "estimator": r.estimator.name(),
                "snr_db": r.snr_db,
                "metric": r.metric,
                "reference": r.value,
                "measured": measured,
                "ratio": ratio,
                "within_half_to_triple": (0.5..=3.0).contains(&ratio),
            }))
        })
        .collect()
}

const NOTES: &[&str] = &[
    "LOS component sits on the first tap only; all-taps LOS is available as los = all-taps",
    "HPA acts on the noiseless channel output; the drive gain is calibrated to the EVM target on a pilot",
    "training-only OMP rows limit CE accuracy at low SNR; omp_matrix_mode = genie-frame uses the full known frame",
    "classical channel estimates are divided by the SNR amplitude scale; HPA gain and rotation are not removed",
];

/// Writes the CSV to `path` and the JSON companion next to it (`.json`).
pub fn emit_results(result: &SweepResult, path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    if result.cells.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let csv = path.as_ref().to_path_buf();
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&csv, results_csv(result)).map_err(|e| Error::io(&csv, e))?;
    let json = csv.with_extension("json");
    let doc = serde_json::json!({
        "config": result.config,
        "config_text": result.config.to_text(),
        "config_hash": result.config_hash,
        "points": result.points,
        "cells": result.cells.iter().map(|c| serde_json::json!({
            "estimator": c.estimator.name(),
            "sweep_value": c.sweep_value,
            "snr_db": c.snr_db,
            "e_error": c.e_error(),
            "nmse": c.nmse(),
            "n_trials": c.tally.trials,
            "wall_time_s": c.wall_time_s,
        })).collect::<Vec<_>>(),
        "wall_time_s": result.wall_time_s,
        "reference_comparison": reference_comparison(result),
        "notes": NOTES,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

/// Configuration of a figure reproduction on top of `base`.
pub fn figure_config(figure: u32, base: &SimConfig) -> Result<SimConfig> {
    let mut c = base.clone();
    let sweep = |c: &mut SimConfig, p: SweepParam, v: &[f64]| {
        c.sweep_param = p;
        c.sweep_values = v.to_vec();
    };
    match figure {
        3 => {}
        4 => c.omp_matrix_mode = OmpMatrixMode::GenieFrame,
        5 => sweep(&mut c, SweepParam::Evm, &[35.0, 40.0, 45.0, 50.0]),
        6 => sweep(&mut c, SweepParam::K, &[5.0, 7.0, 9.0]),
        7 => sweep(&mut c, SweepParam::L, &[4.0, 6.0, 8.0, 10.0, 12.0]),
        8 => sweep(&mut c, SweepParam::Ns, &[16.0, 32.0, 64.0]),
        9 => sweep(&mut c, SweepParam::M, &[64.0, 128.0, 192.0]),
        other => return Err(Error::Config(format!("no figure {other} (3 to 9)"))),
    }
    Ok(c)
}
