//! Sampling parameters sent with generation requests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on `max_new_tokens` for any profile.
pub const MAX_NEW_TOKENS_CAP: u32 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("max_new_tokens {0} exceeds the cap of {MAX_NEW_TOKENS_CAP}")]
    TooManyTokens(u32),
    #[error("unknown decoding profile `{0}`")]
    Unknown(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingProfile {
    pub name: String,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub max_new_tokens: u32,
    pub sampling: bool,
}

impl DecodingProfile {
    pub fn qwen() -> Self {
        Self { name: "qwen".into(), temperature: 0.6, top_p: 0.95, top_k: Some(20), max_new_tokens: 1000, sampling: true }
    }

    pub fn gemma() -> Self {
        Self { name: "gemma".into(), temperature: 1.0, top_p: 0.95, top_k: Some(64), max_new_tokens: 1000, sampling: true }
    }

    pub fn greedy() -> Self {
        Self { name: "greedy".into(), temperature: 0.0, top_p: 1.0, top_k: None, max_new_tokens: 1000, sampling: false }
    }

    pub fn preset(name: &str) -> Result<Self, ProfileError> {
        match name {
            "qwen" => Ok(Self::qwen()),
            "gemma" => Ok(Self::gemma()),
            "greedy" => Ok(Self::greedy()),
            other => Err(ProfileError::Unknown(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.max_new_tokens > MAX_NEW_TOKENS_CAP {
            return Err(ProfileError::TooManyTokens(self.max_new_tokens));
        }
        if self.max_new_tokens == 0 {
            return Err(ProfileError::Invalid("max_new_tokens must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.temperature < 0.0 {
            return Err(ProfileError::Invalid(format!(
                "temperature {} / top_p {} out of range",
                self.temperature, self.top_p
            )));
        }
        Ok(())
    }

    /// Greedy single-step parameters for yes/no scoring, whatever the preset.
    pub fn scoring(&self, max_tokens: u32) -> Self {
        Self {
            name: format!("{}-scoring", self.name),
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            max_new_tokens: max_tokens.min(self.max_new_tokens),
            sampling: false,
        }
    }
}

impl Default for DecodingProfile {
    fn default() -> Self {
        Self::qwen()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let q = DecodingProfile::qwen();
        assert_eq!((q.temperature, q.top_p, q.top_k), (0.6, 0.95, Some(20)));
        let g = DecodingProfile::gemma();
        assert_eq!((g.temperature, g.top_p, g.top_k), (1.0, 0.95, Some(64)));
        for p in [q, g, DecodingProfile::greedy()] {
            p.validate().unwrap();
        }
        assert!(DecodingProfile::preset("llama").is_err());
    }

    #[test]
    fn cap_enforced() {
        let mut p = DecodingProfile::qwen();
        p.max_new_tokens = 1001;
        assert_eq!(p.validate(), Err(ProfileError::TooManyTokens(1001)));
    }

    #[test]
    fn scoring_is_greedy() {
        let s = DecodingProfile::gemma().scoring(1);
        assert!(!s.sampling);
        assert_eq!(s.temperature, 0.0);
        assert_eq!(s.max_new_tokens, 1);
    }
}
