use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelModel, TdlModel, TdlProfile};
use crate::error::{Error, Result};

/// Channel family plus the ranges from which a fresh delay spread and
/// Doppler shift are drawn for every slot. `model` is `flat-rayleigh`,
/// `tdl-b` or `tdl-c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub model: String,
    pub delay_spread_ns: [f64; 2],
    pub doppler_hz: [f64; 2],
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            model: "flat-rayleigh".into(),
            delay_spread_ns: [100.0, 100.0],
            doppler_hz: [400.0, 400.0],
        }
    }
}

impl ChannelSpec {
    pub fn flat_rayleigh() -> Self {
        Self::default()
    }

    pub fn tdl(name: &str, delay_spread_ns: f64, doppler_hz: f64) -> Self {
        Self {
            model: name.into(),
            delay_spread_ns: [delay_spread_ns; 2],
            doppler_hz: [doppler_hz; 2],
        }
    }

    fn profile(&self) -> Result<Option<TdlProfile>> {
        match self.model.as_str() {
            "flat-rayleigh" => Ok(None),
            name => TdlProfile::builtin(name)
                .map(Some)
                .ok_or_else(|| Error::ModelValidation(format!("unknown channel model `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let profile = self.profile()?;
        let [d0, d1] = self.delay_spread_ns;
        let [f0, f1] = self.doppler_hz;
        if profile.is_some() && !(d0 > 0.0 && d0 <= d1 && d1.is_finite()) {
            return Err(Error::ModelValidation(format!(
                "bad delay spread range [{d0}, {d1}] ns"
            )));
        }
        if profile.is_some() && !(f0 >= 0.0 && f0 <= f1 && f1.is_finite()) {
            return Err(Error::ModelValidation(format!("bad Doppler range [{f0}, {f1}] Hz")));
        }
        Ok(())
    }

    /// Model for one slot. Flat Rayleigh consumes no randomness here.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<ChannelModel> {
        self.validate()?;
        let draw = |rng: &mut dyn rand::RngCore, [a, b]: [f64; 2]| {
            if a == b {
                a
            } else {
                rng.random_range(a..=b)
            }
        };
        Ok(match self.profile()? {
            None => ChannelModel::FlatRayleighBlock,
            Some(p) => {
                let ds = draw(rng, self.delay_spread_ns) * 1e-9;
                let fd = draw(rng, self.doppler_hz);
                ChannelModel::Tdl(TdlModel::new(p, ds, fd))
            }
        })
    }
}
