//! Run settings loaded from TOML. Every table and key is optional.
//!
//! ```toml
//! [campaign]
//! base_seed = 42
//! min_spans = 5
//! [campaign.thresholds]
//! tau_iou = 0.1
//! [campaign.nt_stamp]
//! radius = 40.0
//! [phase2]
//! policies = ["random", "rule", "llm-neutral"]
//! [phase2.rule]
//! gap_density = 0.8
//! [mock]
//! drop_threshold = 0.6
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{CampaignOptions, Phase2Options};
use crate::synthetic::MockParserRules;

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("reading settings: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid settings: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid settings: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub campaign: CampaignOptions,
    pub phase2: Phase2Options,
    pub mock: MockParserRules,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, SettingsError> {
        let s: Settings = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SettingsError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        let bad = |m: &str| Err(SettingsError::Invalid(m.to_string()));
        let th = &self.campaign.thresholds;
        if !(0.0..=1.0).contains(&th.tau_iou) || !(0.0..=1.0).contains(&th.tau_text) || !(0.0..=1.0).contains(&th.eta_occ) {
            return bad("thresholds must lie in [0, 1]");
        }
        let nt = &self.campaign.nt_stamp;
        if !(nt.radius > 0.0) || !(nt.alpha > 0.0 && nt.alpha <= 1.0) || nt.budget == 0 {
            return bad("nt_stamp needs radius > 0, alpha in (0, 1] and a positive budget");
        }
        if self.campaign.pages_per_batch == 0 {
            return bad("pages_per_batch must be positive");
        }
        if self.phase2.policies.is_empty() {
            return bad("phase2.policies is empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    #[test]
    fn empty_file_gives_defaults() {
        let s = Settings::from_toml("").unwrap();
        assert_eq!(s.campaign.base_seed, 42);
        assert_eq!(s.campaign.thresholds.tau_text, 0.5);
        assert_eq!(s.campaign.nt_stamp.budget, 64);
        assert_eq!(s.phase2.policies, [PolicyKind::Random, PolicyKind::Rule]);
    }

    #[test]
    fn partial_tables_override_single_keys() {
        let s = Settings::from_toml(
            "[campaign]\nmin_spans = 3\n[campaign.thresholds]\ntau_iou = 0.2\n[campaign.nt_stamp]\nradius = 25.0\n\
             [phase2]\npolicies = [\"llm-neutral\"]\n[phase2.rule]\ngap_density = 1.5\n[mock]\ndrop_threshold = 0.9\n",
        )
        .unwrap();
        assert_eq!(s.campaign.min_spans, 3);
        assert_eq!((s.campaign.thresholds.tau_iou, s.campaign.thresholds.tau_text), (0.2, 0.5));
        assert_eq!((s.campaign.nt_stamp.radius, s.campaign.nt_stamp.alpha), (25.0, 0.6));
        assert_eq!(s.phase2.policies, [PolicyKind::LlmNeutral]);
        assert_eq!((s.phase2.rule.gap_density, s.phase2.rule.default_area), (1.5, 0.03));
        assert_eq!((s.mock.drop_threshold, s.mock.misclass_threshold), (0.9, 0.5));
    }

    #[test]
    fn rejects_bad_values_and_unknown_tables() {
        assert!(Settings::from_toml("[campaign.thresholds]\ntau_iou = 1.5\n").is_err());
        assert!(Settings::from_toml("[phase2]\npolicies = []\n").is_err());
        assert!(Settings::from_toml("[campain]\nbase_seed = 1\n").is_err());
        assert!(Settings::from_toml("[phase2]\npolicies = [\"oracle\"]\n").is_err());
    }
}
