//! Statistical model of a reciprocal TDD link between an access point and a
//! user, with a passive eavesdropper nearby.
//!
//! The link gain in dB, normalized to zero mean and unit variance, is a
//! latent Gaussian that evolves as an AR(1) process across probes. Each probe
//! measures it twice (forward and backward direction) through independent
//! Gaussian measurement noise whose power sets the correlation between the
//! two readings. Eve measures the same latent gain through her own, much
//! larger, noise.
//!
//! People moving through the room are modelled as intermittent disturbance
//! periods (a two-state Markov chain) during which reciprocity drops to a
//! lower level. The noise stays independent across probes, so the
//! disturbance changes how often the two sides disagree without correlating
//! consecutive bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// Long-run fraction of probes taken while the link is disturbed.
    pub duty: f64,
    /// Mean length of a disturbed period, in probes.
    pub mean_dwell_probes: f64,
    /// Forward/backward reading correlation while disturbed.
    pub reciprocity_rho: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            duty: 0.0,
            mean_dwell_probes: 1.0,
            reciprocity_rho: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Correlation between forward and backward readings, noise included.
    pub reciprocity_rho: f64,
    /// AR(1) coefficient of the latent fading between consecutive probes.
    pub temporal_rho: f64,
    /// Thermal SNR of each observation. Caps the achievable reciprocity.
    pub snr_db: f64,
    pub probe_rate_hz: f64,
    /// Correlation between Eve's reading and the noiseless latent gain.
    #[serde(default)]
    pub eve_rho: f64,
    #[serde(default)]
    pub disturbance: Disturbance,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            reciprocity_rho: 0.9,
            temporal_rho: 0.0,
            snr_db: 30.0,
            probe_rate_hz: 500.0,
            eve_rho: 0.0,
            disturbance: Disturbance::default(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        let half_open = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0, 1)")))
            }
        };
        unit("reciprocity_rho", self.reciprocity_rho)?;
        half_open("temporal_rho", self.temporal_rho)?;
        half_open("eve_rho", self.eve_rho)?;
        if self.snr_db.is_nan() {
            return Err(Error::invalid("snr_db is NaN"));
        }
        if !(self.probe_rate_hz > 0.0 && self.probe_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "probe_rate_hz = {} must be positive",
                self.probe_rate_hz
            )));
        }
        half_open("disturbance.duty", self.disturbance.duty)?;
        unit("disturbance.reciprocity_rho", self.disturbance.reciprocity_rho)?;
        if self.disturbance.duty > 0.0 && !(self.disturbance.mean_dwell_probes >= 1.0) {
            return Err(Error::invalid(format!(
                "disturbance.mean_dwell_probes = {} must be ≥ 1",
                self.disturbance.mean_dwell_probes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProbe {
    pub t: f64,
    /// Normalized gain measured by the user.
    pub gain_forward: f64,
    /// Normalized gain measured by the access point.
    pub gain_backward: f64,
    pub gain_eve: f64,
}

/// Mixing weights for one observation: `obs = a·g + b·w` with `a² + b² = 1`.
#[derive(Debug, Clone, Copy)]
struct Mix {
    shared: f64,
    private: f64,
}

impl Mix {
    /// Two observations mixed this way have correlation `lambda`.
    fn for_pair_correlation(lambda: f64) -> Self {
        let l = lambda.clamp(0.0, 1.0);
        Self {
            shared: l.sqrt(),
            private: (1.0 - l).sqrt(),
        }
    }

    /// An observation mixed this way has correlation `lambda` with `g`.
    fn for_latent_correlation(lambda: f64) -> Self {
        let l = lambda.clamp(0.0, 1.0);
        Self {
            shared: l,
            private: (1.0 - l * l).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    params: ChannelParams,
    rng: ChaCha8Rng,
    g: f64,
    disturbed: bool,
    quiet: Mix,
    noisy: Mix,
    eve: Mix,
    enter_p: f64,
    leave_p: f64,
    t: f64,
}

impl ChannelState {
    pub fn new(params: ChannelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thermal = 10f64.powf(-params.snr_db / 10.0);
        // largest pair correlation thermal noise alone permits
        let snr_cap = 1.0 / (1.0 + thermal);
        let pair_lambda = |rho: f64| rho.min(snr_cap);
        let d = params.disturbance;
        let (enter_p, leave_p) = if d.duty > 0.0 {
            let leave = 1.0 / d.mean_dwell_probes;
            (leave * d.duty / (1.0 - d.duty), leave)
        } else {
            (0.0, 1.0)
        };
        let disturbed = d.duty > 0.0 && rng.random_bool(d.duty);
        Ok(Self {
            params,
            g: rng.sample(StandardNormal),
            rng,
            disturbed,
            quiet: Mix::for_pair_correlation(pair_lambda(params.reciprocity_rho)),
            noisy: Mix::for_pair_correlation(pair_lambda(d.reciprocity_rho)),
            eve: Mix::for_latent_correlation(params.eve_rho.min(snr_cap.sqrt())),
            enter_p: enter_p.min(1.0),
            leave_p,
            t: 0.0,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Whether the next probe falls inside a disturbance period.
    pub fn is_disturbed(&self) -> bool {
        self.disturbed
    }

    pub fn probe(&mut self) -> ChannelProbe {
        let mix = if self.disturbed { self.noisy } else { self.quiet };
        let rng = &mut self.rng;
        let g = self.g;
        let mut observe = |m: Mix| m.shared * g + m.private * rng.sample::<f64, _>(StandardNormal);
        let probe = ChannelProbe {
            t: self.t,
            gain_forward: observe(mix),
            gain_backward: observe(mix),
            gain_eve: observe(self.eve),
        };

        let a = self.params.temporal_rho;
        let innovation: f64 = rng.sample(StandardNormal);
        self.g = a * self.g + (1.0 - a * a).sqrt() * innovation;
        self.disturbed = if self.disturbed {
            !rng.random_bool(self.leave_p)
        } else {
            self.enter_p > 0.0 && rng.random_bool(self.enter_p)
        };
        self.t += 1.0 / self.params.probe_rate_hz;
        probe
    }

    pub fn probes(&mut self, n: usize) -> Vec<ChannelProbe> {
        (0..n).map(|_| self.probe()).collect()
    }
}

/// Pearson sample correlation.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
