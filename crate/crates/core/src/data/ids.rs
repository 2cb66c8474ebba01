use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Scalar diffusion metric carried by a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricId {
    /// Axonal water fraction.
    Awf,
    /// Diffusivity within axons.
    Da,
    /// Extra-axonal diffusion parallel to the tracts.
    DePar,
    /// Extra-axonal diffusion perpendicular to the tracts.
    DePerp,
    /// Fractional anisotropy.
    Fa,
    /// Mean diffusion.
    Md,
    /// Axial kurtosis.
    Ak,
    /// Mean kurtosis.
    Mk,
    /// Radial kurtosis.
    Rk,
}

impl MetricId {
    pub const ALL: [MetricId; 9] = [
        MetricId::Awf,
        MetricId::Da,
        MetricId::DePar,
        MetricId::DePerp,
        MetricId::Fa,
        MetricId::Md,
        MetricId::Ak,
        MetricId::Mk,
        MetricId::Rk,
    ];

    /// The metrics available in the thalamus.
    pub const THALAMUS: [MetricId; 5] = [
        MetricId::Fa,
        MetricId::Md,
        MetricId::Ak,
        MetricId::Mk,
        MetricId::Rk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Awf => "AWF",
            MetricId::Da => "DA",
            MetricId::DePar => "DePar",
            MetricId::DePerp => "DePerp",
            MetricId::Fa => "FA",
            MetricId::Md => "MD",
            MetricId::Ak => "AK",
            MetricId::Mk => "MK",
            MetricId::Rk => "RK",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::data(format!("unknown metric {s:?}")))
    }
}

/// Anatomical region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionId {
    CorpusCallosum,
    Thalamus,
    PrefrontalWm,
    CcGenu,
    CcBody,
    CcSplenium,
}

impl RegionId {
    pub const ALL: [RegionId; 6] = [
        RegionId::CorpusCallosum,
        RegionId::Thalamus,
        RegionId::PrefrontalWm,
        RegionId::CcGenu,
        RegionId::CcBody,
        RegionId::CcSplenium,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionId::CorpusCallosum => "CorpusCallosum",
            RegionId::Thalamus => "Thalamus",
            RegionId::PrefrontalWm => "PrefrontalWM",
            RegionId::CcGenu => "CCGenu",
            RegionId::CcBody => "CCBody",
            RegionId::CcSplenium => "CCSplenium",
        }
    }

    /// Short label used in feature names (`CC.FA.word07`).
    pub fn short(self) -> &'static str {
        match self {
            RegionId::CorpusCallosum => "CC",
            RegionId::Thalamus => "Thal",
            other => other.as_str(),
        }
    }

    /// Whether bag-of-words codebooks may be learned for this region.
    pub fn supports_bow(self) -> bool {
        matches!(self, RegionId::CorpusCallosum | RegionId::Thalamus)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegionId::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::data(format!("unknown region {s:?}")))
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(MetricId);
string_serde!(RegionId);

/// A (metric, region) pair; the unit for which a codebook is learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub metric: MetricId,
    pub region: RegionId,
}

impl FeatureKey {
    pub fn new(metric: MetricId, region: RegionId) -> Self {
        FeatureKey { metric, region }
    }

    /// `<metric>_<region>`, used for file stems.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.metric, self.region)
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.region.short(), self.metric)
    }
}

/// Cohort membership. mTBI is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Control,
    Mtbi,
}

impl Cohort {
    pub fn from_label(label: u8) -> Option<Cohort> {
        match label {
            0 => Some(Cohort::Control),
            1 => Some(Cohort::Mtbi),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Cohort::Control => 0,
            Cohort::Mtbi => 1,
        }
    }

    /// SVM sign convention: mTBI = +1.
    pub fn sign(self) -> f64 {
        match self {
            Cohort::Control => -1.0,
            Cohort::Mtbi => 1.0,
        }
    }
}
