//! One-axis sweeps over data volume, model width, synthetic volume or
//! degradation type.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of leading training sub-images, or `all`.
    DataVolume,
    /// Base channel width.
    ModelSize,
    /// Fraction of the synthetic set: a number in [0, 1], `half` or `all`.
    SyntheticVolume,
    /// Synthetic set source: `gaussian`, `bicubic` or `learned`.
    DegradationType,
}

impl SweepAxis {
    pub const NAMES: [&'static str; 4] = ["data_volume", "model_size", "synthetic_volume", "degradation_type"];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DataVolume => "data_volume",
            SweepAxis::ModelSize => "model_size",
            SweepAxis::SyntheticVolume => "synthetic_volume",
            SweepAxis::DegradationType => "degradation_type",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "data_volume" => Ok(SweepAxis::DataVolume),
            "model_size" => Ok(SweepAxis::ModelSize),
            "synthetic_volume" => Ok(SweepAxis::SyntheticVolume),
            "degradation_type" => Ok(SweepAxis::DegradationType),
            other => Err(format!("unknown sweep axis `{other}`, expected one of {}", Self::NAMES.join(", "))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradationType {
    Gaussian,
    Bicubic,
    Learned,
}

/// A parsed sweep value.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    /// `None` means every record.
    DataVolume(Option<usize>),
    ModelSize(usize),
    SyntheticVolume(mixsr::degradation::SyntheticFraction),
    DegradationType(DegradationType),
}

impl SweepValue {
    /// Position on a numeric axis; `None` for categorical values.
    fn order_key(&self) -> Option<f64> {
        use mixsr::degradation::SyntheticFraction;
        match *self {
            SweepValue::DataVolume(n) => Some(n.map_or(f64::INFINITY, |n| n as f64)),
            SweepValue::ModelSize(c) => Some(c as f64),
            SweepValue::SyntheticVolume(SyntheticFraction::All) => Some(1.0),
            SweepValue::SyntheticVolume(SyntheticFraction::Fraction(f)) => Some(f),
            SweepValue::DegradationType(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// `(label, value)` in the given order.
    pub values: Vec<(String, SweepValue)>,
}

fn parse_value(axis: SweepAxis, text: &str) -> Result<SweepValue, String> {
    let bad = || format!("invalid {axis} value `{text}`");
    match axis {
        SweepAxis::DataVolume => match text {
            "all" => Ok(SweepValue::DataVolume(None)),
            _ => match text.parse::<usize>() {
                Ok(n) if n > 0 => Ok(SweepValue::DataVolume(Some(n))),
                _ => Err(bad()),
            },
        },
        SweepAxis::ModelSize => match text.parse::<usize>() {
            Ok(c) if c > 0 => Ok(SweepValue::ModelSize(c)),
            _ => Err(bad()),
        },
        SweepAxis::SyntheticVolume => crate::config::parse_fraction(text).map(SweepValue::SyntheticVolume),
        SweepAxis::DegradationType => match text {
            "gaussian" => Ok(SweepValue::DegradationType(DegradationType::Gaussian)),
            "bicubic" => Ok(SweepValue::DegradationType(DegradationType::Bicubic)),
            "learned" => Ok(SweepValue::DegradationType(DegradationType::Learned)),
            _ => Err(format!("{}, expected gaussian, bicubic or learned", bad())),
        },
    }
}

impl SweepSpec {
    /// Values must be non-empty; numeric axes must be strictly increasing
    /// (`all` sorts last), categorical values must be distinct.
    pub fn new(axis: SweepAxis, labels: Vec<String>) -> Result<Self, String> {
        if labels.is_empty() {
            return Err(format!("sweep over {axis} has no values"));
        }
        let values = labels
            .into_iter()
            .map(|label| parse_value(axis, &label).map(|v| (label, v)))
            .collect::<Result<Vec<_>, _>>()?;
        for pair in values.windows(2) {
            match (pair[0].1.order_key(), pair[1].1.order_key()) {
                (Some(a), Some(b)) if a >= b => {
                    return Err(format!("{axis} values must be strictly increasing: `{}` then `{}`", pair[0].0, pair[1].0));
                }
                _ => {}
            }
        }
        for (i, (label, v)) in values.iter().enumerate() {
            if values[..i].iter().any(|(_, w)| w == v) {
                return Err(format!("duplicate {axis} value `{label}`"));
            }
        }
        Ok(Self { axis, values })
    }

    pub fn parse(axis: &str, values: &str) -> Result<Self, String> {
        let axis: SweepAxis = axis.parse()?;
        Self::new(axis, values.split(',').map(|v| v.trim().to_owned()).filter(|v| !v.is_empty()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_axes_must_increase() {
        assert!(SweepSpec::parse("data_volume", "2000,all").is_ok());
        assert!(SweepSpec::parse("data_volume", "all,2000").is_err());
        assert!(SweepSpec::parse("model_size", "24,32,48,64,96").is_ok());
        assert!(SweepSpec::parse("model_size", "32,32").is_err());
        assert!(SweepSpec::parse("synthetic_volume", "0,half,all").is_ok());
        assert!(SweepSpec::parse("synthetic_volume", "0,1,all").is_err());
    }

    #[test]
    fn categorical_axis() {
        let spec = SweepSpec::parse("degradation_type", "gaussian,bicubic,learned").unwrap();
        assert_eq!(spec.values.len(), 3);
        assert!(SweepSpec::parse("degradation_type", "bicubic,bicubic").is_err());
        assert!(SweepSpec::parse("degradation_type", "blur").is_err());
    }

    #[test]
    fn empty_and_unknown() {
        assert!(SweepSpec::parse("model_size", "").is_err());
        assert!(SweepSpec::parse("depth", "1").is_err());
        assert!(SweepSpec::parse("model_size", "0").is_err());
    }
}
