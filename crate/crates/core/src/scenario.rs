//! End-to-end link: training sequence, HPA operating point, Rician channel and
//! noise, producing one received window per trial.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{window_from_signal, ChannelModel, ChannelRealization, LosProfile};
use crate::impairment::{self, calibrate_drive_gain, hpa_apply, Calibration, EvmDefinition, HpaParams, NoiseSpec};
use crate::rng::{trial_stream, Phase, Purpose, StreamRng};
use crate::signal::{build_frame, convolve_frames, qpsk_payload, zadoff_chu, SampleWindow};
use crate::{Error, Result, C64};

/// Where the memoryless HPA sits in the transmit chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HpaPlacement {
    /// Applied to the noiseless multipath sum `X̃h`.
    #[default]
    PostChannel,
    /// Applied per transmitted sample before the channel.
    PreChannel,
    /// No amplifier distortion.
    Off,
}

impl HpaPlacement {
    pub fn name(self) -> &'static str {
        match self {
            HpaPlacement::PostChannel => "post-channel",
            HpaPlacement::PreChannel => "pre-channel",
            HpaPlacement::Off => "off",
        }
    }
}

impl std::str::FromStr for HpaPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post-channel" => Ok(HpaPlacement::PostChannel),
            "pre-channel" => Ok(HpaPlacement::PreChannel),
            "off" => Ok(HpaPlacement::Off),
            other => Err(Error::Config(format!("unknown HPA placement {other:?}"))),
        }
    }
}

/// Physical-layer parameters of a link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub ns: usize,
    pub m: usize,
    pub l: usize,
    pub zc_root: u64,
    pub k_factor: f64,
    pub eta: f64,
    pub los: LosProfile,
    pub hpa: HpaParams,
    pub placement: HpaPlacement,
    /// Target EVM in percent; when `None` the configured drive gain is used as is.
    pub evm_target: Option<f64>,
    pub evm_definition: EvmDefinition,
    /// Number of frames in the calibration pilot.
    pub pilot_frames: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            ns: 32,
            m: 160,
            l: 8,
            zc_root: 1,
            k_factor: 8.0,
            eta: 0.2,
            los: LosProfile::FirstTap,
            hpa: HpaParams::default(),
            placement: HpaPlacement::PostChannel,
            evm_target: Some(35.0),
            evm_definition: EvmDefinition::RootRatio,
            pilot_frames: 64,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if self.ns < 2 || self.ns > self.m || self.l == 0 || self.l > self.ns {
            return Err(Error::Config(format!(
                "need 2 <= ns <= m and 1 <= l <= ns (ns={}, m={}, l={})",
                self.ns, self.m, self.l
            )));
        }
        if self.pilot_frames == 0 {
            return Err(Error::Config("pilot_frames must be positive".into()));
        }
        self.channel_model()?;
        self.hpa.validate()
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        ChannelModel::new(self.l, self.k_factor, self.eta, self.los)
    }
}

/// Random streams of one trial.
pub struct TrialStreams {
    pub channel: StreamRng,
    pub noise: StreamRng,
    pub payload: StreamRng,
    pub offset: StreamRng,
    pub snr: StreamRng,
}

impl TrialStreams {
    pub fn new(master: u64, phase: Phase, trial: u64) -> Self {
        Self {
            channel: trial_stream(master, Purpose::Channel, phase, trial),
            noise: trial_stream(master, Purpose::Noise, phase, trial),
            payload: trial_stream(master, Purpose::Payload, phase, trial),
            offset: trial_stream(master, Purpose::Offset, phase, trial),
            snr: trial_stream(master, Purpose::SnrDraw, phase, trial),
        }
    }
}

/// One received window together with the ground truth behind it.
#[derive(Clone, Debug)]
pub struct Observation {
    pub window: SampleWindow,
    pub h: ChannelRealization,
    /// Undistorted current frame (training + payload).
    pub frame: Vec<C64>,
    pub snr_db: f64,
    /// Amplitude factor applied to the signal before noise; divides a raw
    /// channel estimate back to the scale of `h`.
    pub amplitude_scale: f64,
}

/// A calibrated link ready to generate trials.
#[derive(Clone, Debug)]
pub struct Link {
    params: LinkParams,
    channel: ChannelModel,
    training: Vec<C64>,
    hpa: Option<HpaParams>,
    calibration: Option<Calibration>,
    signal_power: f64,
}

impl Link {
    /// Builds the training sequence, calibrates the HPA drive gain on a pilot
    /// drawn from `master_seed`, and measures the nominal signal power.
    pub fn new(params: LinkParams, master_seed: u64) -> Result<Self> {
        params.validate()?;
        let training = zadoff_chu(params.ns, params.zc_root)?;
        let mut link = Self {
            channel: params.channel_model()?,
            hpa: None,
            calibration: None,
            signal_power: 1.0,
            training,
            params,
        };
        let pilot = link.pilot(master_seed)?;
        match link.params.placement {
            HpaPlacement::Off => {
                link.signal_power = mean_power(&pilot);
            }
            HpaPlacement::PostChannel => {
                let hpa = match link.params.evm_target {
                    Some(target) => {
                        let cal = calibrate_drive_gain(target, &link.params.hpa, &pilot, link.params.evm_definition)?;
                        let hpa = link.params.hpa.with_drive_gain(cal.drive_gain);
                        link.calibration = Some(cal);
                        hpa
                    }
                    None => link.params.hpa,
                };
                link.signal_power = mean_power(&hpa_apply(&pilot, &hpa));
                link.hpa = Some(hpa);
            }
            HpaPlacement::PreChannel => {
                if link.params.evm_target.is_some() {
                    return Err(Error::Config(
                        "pre-channel HPA on constant-modulus frames has zero EVM and cannot be calibrated; \
                         unset evm_target and give drive_gain"
                            .into(),
                    ));
                }
                let hpa = link.params.hpa;
                link.signal_power = mean_power(&hpa_apply(&pilot, &hpa));
                link.hpa = Some(hpa);
            }
        }
        if !(link.signal_power > 0.0 && link.signal_power.is_finite()) {
            return Err(Error::Config("nominal signal power is not positive".into()));
        }
        Ok(link)
    }

    /// Calibration pilot: noiseless channel outputs for post-channel placement,
    /// transmitted frames otherwise.
    fn pilot(&self, master: u64) -> Result<Vec<C64>> {
        let p = &self.params;
        let mut out = Vec::with_capacity(p.pilot_frames * p.m);
        for i in 0..p.pilot_frames as u64 {
            let mut s = TrialStreams::new(master, Phase::Calibration, i);
            let (cur, prev) = self.frames(&mut s.payload)?;
            match p.placement {
                HpaPlacement::PostChannel | HpaPlacement::Off => {
                    let h = self.channel.draw(&mut s.channel);
                    out.extend(convolve_frames(&cur, &prev, &h.taps)?);
                }
                HpaPlacement::PreChannel => out.extend(cur),
            }
        }
        Ok(out)
    }

    fn frames<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<C64>, Vec<C64>)> {
        let p = &self.params;
        let cur = build_frame(&self.training, &qpsk_payload(rng, p.m - p.ns), p.m)?;
        let prev = build_frame(&self.training, &qpsk_payload(rng, p.m - p.ns), p.m)?;
        Ok((cur.into_samples(), prev.into_samples()))
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn training(&self) -> &[C64] {
        &self.training
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn l(&self) -> usize {
        self.params.l
    }

    /// HPA in effect (with the calibrated drive gain), if any.
    pub fn hpa(&self) -> Option<&HpaParams> {
        self.hpa.as_ref()
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    /// Mean power of the HPA output that the SNR refers to.
    pub fn signal_power(&self) -> f64 {
        self.signal_power
    }

    pub fn noise_spec(&self, snr_db: f64) -> Result<NoiseSpec> {
        NoiseSpec::new(snr_db, self.signal_power)
    }

    /// Draws a trial with a uniform random offset.
    pub fn observe(&self, snr_db: f64, streams: &mut TrialStreams) -> Result<Observation> {
        let tau = streams.offset.random_range(0..self.params.m);
        self.observe_at(snr_db, tau, streams)
    }

    /// Draws a trial with the given offset.
    pub fn observe_at(&self, snr_db: f64, tau: usize, streams: &mut TrialStreams) -> Result<Observation> {
        let noise = self.noise_spec(snr_db)?;
        self.observe_with(&noise, tau, streams)
    }

    /// Draws a trial under an explicit noise specification.
    pub fn observe_with(&self, noise: &NoiseSpec, tau: usize, streams: &mut TrialStreams) -> Result<Observation> {
        let p = &self.params;
        let (cur, prev) = self.frames(&mut streams.payload)?;
        let h = self.channel.draw(&mut streams.channel);
        let y = match (p.placement, &self.hpa) {
            (HpaPlacement::PostChannel, Some(hpa)) => hpa_apply(&convolve_frames(&cur, &prev, &h.taps)?, hpa),
            (HpaPlacement::PreChannel, Some(hpa)) => {
                convolve_frames(&hpa_apply(&cur, hpa), &hpa_apply(&prev, hpa), &h.taps)?
            }
            _ => convolve_frames(&cur, &prev, &h.taps)?,
        };
        let window = window_from_signal(&y, tau, noise, &mut streams.noise)?;
        Ok(Observation {
            window,
            h,
            frame: cur,
            snr_db: noise.snr_db,
            amplitude_scale: noise.amplitude_scale(),
        })
    }

    /// Measured EVM of the configured HPA on this link's pilot.
    pub fn measured_evm(&self, master_seed: u64) -> Result<Option<f64>> {
        match &self.hpa {
            None => Ok(None),
            Some(hpa) => {
                let pilot = self.pilot(master_seed)?;
                impairment::evm(&hpa_apply(&pilot, hpa), &pilot, self.params.evm_definition).map(Some)
            }
        }
    }
}

fn mean_power(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}
