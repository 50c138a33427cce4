//! Explanatory variables and model scopes.

use std::fmt;
use std::str::FromStr;

use crate::accuracy::MatchedObservation;
use crate::detection::{group_detection, individual_detection, DeviceClass, GroupObservation, ThresholdPair};
use crate::error::{Error, Result};
use crate::ingest::{GroundTruthActivity, OsClass, Registries};

use super::logit::{Column, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Covariate {
    FarOver100,
    DurationMin,
    OpenSpace,
    AndroidDummy,
    AndroidRatio,
    Sharp702shDummy,
    Sharp702shRatio,
    WifiOnDummy,
    WifiOnRatio,
    GroupSize,
}

impl Covariate {
    pub const ALL: [Covariate; 10] = [
        Covariate::FarOver100,
        Covariate::DurationMin,
        Covariate::OpenSpace,
        Covariate::AndroidDummy,
        Covariate::AndroidRatio,
        Covariate::Sharp702shDummy,
        Covariate::Sharp702shRatio,
        Covariate::WifiOnDummy,
        Covariate::WifiOnRatio,
        Covariate::GroupSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::FarOver100 => "far_over_100",
            Covariate::DurationMin => "duration_min",
            Covariate::OpenSpace => "open_space",
            Covariate::AndroidDummy => "android_dummy",
            Covariate::AndroidRatio => "android_ratio",
            Covariate::Sharp702shDummy => "sharp702sh_dummy",
            Covariate::Sharp702shRatio => "sharp702sh_ratio",
            Covariate::WifiOnDummy => "wifi_on_dummy",
            Covariate::WifiOnRatio => "wifi_on_ratio",
            Covariate::GroupSize => "group_size",
        }
    }

    pub fn is_dummy(self) -> bool {
        matches!(
            self,
            Covariate::OpenSpace | Covariate::AndroidDummy | Covariate::Sharp702shDummy | Covariate::WifiOnDummy
        )
    }

    fn is_individual_only(self) -> bool {
        matches!(self, Covariate::AndroidDummy | Covariate::Sharp702shDummy | Covariate::WifiOnDummy)
    }

    fn is_joint_only(self) -> bool {
        matches!(
            self,
            Covariate::AndroidRatio | Covariate::Sharp702shRatio | Covariate::WifiOnRatio | Covariate::GroupSize
        )
    }

    fn is_android(self) -> bool {
        matches!(self, Covariate::AndroidDummy | Covariate::AndroidRatio)
    }

    fn is_702sh(self) -> bool {
        matches!(self, Covariate::Sharp702shDummy | Covariate::Sharp702shRatio)
    }

    pub fn value(self, f: &Features) -> f64 {
        match self {
            Covariate::FarOver100 => f.far_over_100,
            Covariate::DurationMin => f.duration_min,
            Covariate::OpenSpace => f64::from(u8::from(f.open_space)),
            Covariate::AndroidDummy | Covariate::AndroidRatio => f.android_ratio,
            Covariate::Sharp702shDummy | Covariate::Sharp702shRatio => f.sharp702sh_ratio,
            Covariate::WifiOnDummy | Covariate::WifiOnRatio => f.wifi_on_ratio,
            Covariate::GroupSize => f.group_size as f64,
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::UnknownCovariate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    IndividualAllDevices,
    IndividualAndroidOnly,
    JointAllDevices,
    JointAndroidOnly,
}

impl Scope {
    pub const ALL: [Scope; 4] = [
        Scope::IndividualAllDevices,
        Scope::IndividualAndroidOnly,
        Scope::JointAllDevices,
        Scope::JointAndroidOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scope::IndividualAllDevices => "individual_all_devices",
            Scope::IndividualAndroidOnly => "individual_android_only",
            Scope::JointAllDevices => "joint_all_devices",
            Scope::JointAndroidOnly => "joint_android_only",
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Scope::JointAllDevices | Scope::JointAndroidOnly)
    }

    pub fn device_class(self) -> DeviceClass {
        match self {
            Scope::IndividualAllDevices | Scope::JointAllDevices => DeviceClass::Mixed,
            Scope::IndividualAndroidOnly | Scope::JointAndroidOnly => DeviceClass::Android,
        }
    }

    pub fn default_covariates(self) -> Vec<Covariate> {
        use Covariate::*;
        match self {
            Scope::IndividualAllDevices => vec![FarOver100, DurationMin, OpenSpace, AndroidDummy, WifiOnDummy],
            Scope::IndividualAndroidOnly => vec![FarOver100, DurationMin, OpenSpace, Sharp702shDummy, WifiOnDummy],
            Scope::JointAllDevices => vec![FarOver100, DurationMin, OpenSpace, AndroidRatio, WifiOnRatio, GroupSize],
            Scope::JointAndroidOnly => vec![FarOver100, DurationMin, OpenSpace, Sharp702shRatio, WifiOnRatio, GroupSize],
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown scope `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub threshold: ThresholdPair,
    pub covariates: Vec<Covariate>,
    pub scope: Scope,
}

impl ModelSpec {
    pub fn new(threshold: ThresholdPair, covariates: Vec<Covariate>, scope: Scope) -> Result<Self> {
        for (i, c) in covariates.iter().enumerate() {
            if covariates[..i].contains(c) {
                return Err(Error::DuplicateKey(c.name().into()));
            }
            let misplaced = if scope.is_joint() { c.is_individual_only() } else { c.is_joint_only() };
            if misplaced {
                return Err(Error::Validation(format!("covariate `{c}` is not used in scope {scope}")));
            }
            if scope.device_class() == DeviceClass::Android && c.is_android() {
                return Err(Error::Validation(format!("covariate `{c}` is constant in scope {scope}")));
            }
            if scope.device_class() == DeviceClass::Mixed && c.is_702sh() {
                return Err(Error::Validation(format!("covariate `{c}` is only used in android-only scopes")));
            }
        }
        Ok(Self {
            threshold,
            covariates,
            scope,
        })
    }

    pub fn with_defaults(threshold: ThresholdPair, scope: Scope) -> Self {
        Self::new(threshold, scope.default_covariates(), scope).expect("default covariates are valid")
    }
}

/// Covariate values of one observation. For individual observations the
/// ratios are 0/1 indicators of the single device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub far_over_100: f64,
    pub duration_min: f64,
    pub open_space: bool,
    pub android_ratio: f64,
    pub sharp702sh_ratio: f64,
    pub wifi_on_ratio: f64,
    pub group_size: usize,
}

/// Location and timing attributes shared by all observations of an activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityFeatures {
    pub far_over_100: f64,
    pub duration_min: f64,
    pub open_space: bool,
}

impl ActivityFeatures {
    pub fn of(activity: &GroundTruthActivity, registries: &Registries) -> Result<Self> {
        let loc = registries.location(&activity.location_id)?;
        Ok(Self {
            far_over_100: loc.far_over_100(),
            duration_min: activity.duration_min(),
            open_space: loc.open_space,
        })
    }

    pub fn individual(&self, obs: &MatchedObservation) -> Features {
        let ind = |b: bool| f64::from(u8::from(b));
        Features {
            far_over_100: self.far_over_100,
            duration_min: self.duration_min,
            open_space: self.open_space,
            android_ratio: ind(obs.os_class == OsClass::Android),
            sharp702sh_ratio: ind(obs.is_702sh()),
            wifi_on_ratio: ind(obs.wifi_on),
            group_size: 1,
        }
    }

    pub fn group(&self, grp: &GroupObservation<'_>) -> Features {
        Features {
            far_over_100: self.far_over_100,
            duration_min: self.duration_min,
            open_space: self.open_space,
            android_ratio: grp.android_ratio(),
            sharp702sh_ratio: grp.sharp702sh_ratio(),
            wifi_on_ratio: grp.wifi_on_ratio(),
            group_size: grp.group_size(),
        }
    }
}

/// Design for `covariates` over (features, outcome) rows.
pub fn dataset_from_features(covariates: &[Covariate], rows: &[(Features, bool)]) -> Result<Dataset> {
    let columns = covariates
        .iter()
        .map(|c| {
            let values = rows.iter().map(|(f, _)| c.value(f)).collect();
            if c.is_dummy() {
                Column::dummy(c.name(), values)
            } else {
                Ok(Column::continuous(c.name(), values))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(columns, rows.iter().map(|(_, y)| *y).collect())
}

fn activity_lookup<'a>(
    activities: &'a [GroundTruthActivity],
    registries: &Registries,
) -> Result<std::collections::BTreeMap<&'a str, ActivityFeatures>> {
    activities
        .iter()
        .map(|a| Ok((a.activity_id.as_str(), ActivityFeatures::of(a, registries)?)))
        .collect()
}

/// One row per matched device observation admitted by the scope's class.
pub fn individual_rows(
    activities: &[GroundTruthActivity],
    matched: &[MatchedObservation],
    registries: &Registries,
    spec: &ModelSpec,
) -> Result<Vec<(Features, bool)>> {
    if spec.scope.is_joint() {
        return Err(Error::Validation(format!("scope {} is not an individual scope", spec.scope)));
    }
    let lookup = activity_lookup(activities, registries)?;
    let class = spec.scope.device_class();
    matched
        .iter()
        .filter(|m| class.admits(m.os_class))
        .map(|m| {
            let af = lookup.get(m.activity_id.as_str()).ok_or_else(|| Error::Dangling {
                kind: "activity",
                id: m.activity_id.clone(),
            })?;
            Ok((af.individual(m), individual_detection(m, &spec.threshold)))
        })
        .collect()
}

pub fn joint_rows(
    groups: &[&GroupObservation<'_>],
    activities: &[GroundTruthActivity],
    registries: &Registries,
    spec: &ModelSpec,
) -> Result<Vec<(Features, bool)>> {
    let lookup = activity_lookup(activities, registries)?;
    groups
        .iter()
        .map(|g| {
            let af = lookup.get(g.activity_id).ok_or_else(|| Error::Dangling {
                kind: "activity",
                id: g.activity_id.to_string(),
            })?;
            Ok((af.group(g), group_detection(g, &spec.threshold)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thr() -> ThresholdPair {
        ThresholdPair::place_id(1.0).unwrap()
    }

    #[test]
    fn dummy_and_ratio_forms_are_scoped() {
        assert!(ModelSpec::new(thr(), vec![Covariate::AndroidRatio], Scope::IndividualAllDevices).is_err());
        assert!(ModelSpec::new(thr(), vec![Covariate::AndroidDummy], Scope::JointAllDevices).is_err());
        assert!(ModelSpec::new(thr(), vec![Covariate::AndroidDummy], Scope::IndividualAndroidOnly).is_err());
        assert!(ModelSpec::new(thr(), vec![Covariate::Sharp702shRatio], Scope::JointAllDevices).is_err());
        assert!(ModelSpec::new(thr(), vec![Covariate::GroupSize, Covariate::GroupSize], Scope::JointAllDevices).is_err());
        for s in Scope::ALL {
            ModelSpec::new(thr(), s.default_covariates(), s).unwrap();
        }
    }

    #[test]
    fn names_round_trip() {
        for c in Covariate::ALL {
            assert_eq!(c.name().parse::<Covariate>().unwrap(), c);
        }
        for s in Scope::ALL {
            assert_eq!(s.name().parse::<Scope>().unwrap(), s);
        }
    }
}
