use crate::error::{Error, Result};

const TDL_B: &str = include_str!("profiles/tdl-b.txt");
const TDL_C: &str = include_str!("profiles/tdl-c.txt");

/// Tapped-delay-line power delay profile with delays normalized to unit RMS
/// delay spread and linear tap powers summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlProfile {
    pub name: String,
    pub delays: Vec<f64>,
    pub powers: Vec<f64>,
}

impl TdlProfile {
    pub fn tdl_b() -> Self {
        Self::parse("tdl-b", TDL_B).expect("bundled profile parses")
    }

    pub fn tdl_c() -> Self {
        Self::parse("tdl-c", TDL_C).expect("bundled profile parses")
    }

    /// Bundled profile by name (`tdl-b`, `tdl-c`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tdl-b" | "tdlb" => Some(Self::tdl_b()),
            "tdl-c" | "tdlc" => Some(Self::tdl_c()),
            _ => None,
        }
    }

    /// Parse a plain-text table of `delay power_dB` rows. Delays are in
    /// nanoseconds unless a `units normalized` line precedes the rows;
    /// nanosecond tables are rescaled to unit RMS delay spread. `#` starts a
    /// comment. Rows are sorted by delay and powers normalized to sum to one.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut normalized = false;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let first = it.next().expect("non-empty line");
            if first == "units" {
                normalized = match it.next() {
                    Some("normalized") => true,
                    Some("ns") => false,
                    other => {
                        return Err(Error::ModelValidation(format!(
                            "{name}:{}: unknown delay units {other:?}",
                            lineno + 1
                        )))
                    }
                };
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::ModelValidation(format!("{name}:{}: expected `delay power_dB`", lineno + 1)))
            };
            let delay = parse(Some(first))?;
            let power_db = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::ModelValidation(format!(
                    "{name}:{}: trailing fields",
                    lineno + 1
                )));
            }
            rows.push((delay, power_db));
        }
        if rows.is_empty() {
            return Err(Error::ModelValidation(format!("{name}: no taps")));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lin: Vec<f64> = rows.iter().map(|r| 10f64.powf(r.1 / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        let powers: Vec<f64> = lin.iter().map(|p| p / total).collect();
        let mut delays: Vec<f64> = rows.iter().map(|r| r.0).collect();
        if !normalized {
            let spread = rms_delay_spread(&delays, &powers);
            if spread > 0.0 {
                delays.iter_mut().for_each(|d| *d /= spread);
            }
        }
        let p = Self {
            name: name.to_string(),
            delays,
            powers,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays.is_empty() || self.delays.len() != self.powers.len() {
            return Err(Error::ModelValidation(format!(
                "{}: {} delays vs {} powers",
                self.name,
                self.delays.len(),
                self.powers.len()
            )));
        }
        if self.delays.windows(2).any(|w| w[1] <= w[0]) || self.delays[0] < 0.0 {
            return Err(Error::ModelValidation(format!(
                "{}: tap delays must be non-negative and strictly increasing",
                self.name
            )));
        }
        let total: f64 = self.powers.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.powers.iter().any(|p| *p < 0.0) {
            return Err(Error::ModelValidation(format!(
                "{}: tap powers sum to {total}, expected 1",
                self.name
            )));
        }
        Ok(())
    }

    pub fn rms_delay_spread(&self) -> f64 {
        rms_delay_spread(&self.delays, &self.powers)
    }
}

fn rms_delay_spread(delays: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let mean = delays.iter().zip(powers).map(|(d, p)| d * p).sum::<f64>() / total;
    let second = delays.iter().zip(powers).map(|(d, p)| d * d * p).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}
