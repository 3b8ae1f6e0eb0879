//! Keyed anonymization of student identifiers.

use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;
use thiserror::Error;

use crate::model::StudentAlias;

/// Hex characters kept from the keyed digest.
pub const ALIAS_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AliasError {
    #[error("anonymization key is missing or empty")]
    MissingKey,
    #[error("raw student reference is empty")]
    EmptyId,
}

/// HMAC-SHA256 of the raw id under the deployment key, hex encoded and
/// truncated to [`ALIAS_LEN`] characters.
pub fn make_alias(raw_id: &str, deployment_key: &str) -> Result<StudentAlias, AliasError> {
    if deployment_key.is_empty() {
        return Err(AliasError::MissingKey);
    }
    if raw_id.is_empty() {
        return Err(AliasError::EmptyId);
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(deployment_key.as_bytes()).map_err(|_| AliasError::MissingKey)?;
    mac.update(raw_id.as_bytes());
    let digest = hex::encode(mac.finalize().into_bytes());
    Ok(StudentAlias::from_token(&digest[..ALIAS_LEN]).expect("digest is non-empty"))
}

/// Holds the deployment key so raw ids can be aliased at the boundary.
#[derive(Clone)]
pub struct Anonymizer {
    key: String,
}

impl std::fmt::Debug for Anonymizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Anonymizer { key: <redacted> }")
    }
}

impl Anonymizer {
    pub fn new(key: impl Into<String>) -> Result<Self, AliasError> {
        let key = key.into();
        if key.is_empty() {
            return Err(AliasError::MissingKey);
        }
        Ok(Self { key })
    }

    /// Reads `TELEMETRY_KEY`. A missing key is a startup failure.
    pub fn from_env() -> Result<Self, AliasError> {
        Self::new(std::env::var("TELEMETRY_KEY").unwrap_or_default())
    }

    pub fn alias(&self, raw_id: &str) -> Result<StudentAlias, AliasError> {
        make_alias(raw_id, &self.key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic_per_key() {
        let a = make_alias("s1001", "k1").unwrap();
        assert_eq!(a, make_alias("s1001", "k1").unwrap());
        assert_ne!(a, make_alias("s1001", "k2").unwrap());
        assert_eq!(a.as_str().len(), ALIAS_LEN);
    }

    #[test]
    fn fixture_ids_are_distinct_and_do_not_leak() {
        let ids = ["jdoe001", "asmith22", "mlee3", "kpatel44", "rgarcia5"];
        let aliases: HashSet<_> = ids.iter().map(|id| make_alias(id, "deploy-key").unwrap()).collect();
        assert_eq!(aliases.len(), ids.len());
        for alias in &aliases {
            assert!(ids.iter().all(|id| !alias.as_str().contains(id)));
        }
    }

    #[test]
    fn missing_key_is_fatal() {
        assert_eq!(make_alias("x", ""), Err(AliasError::MissingKey));
        assert_eq!(Anonymizer::new("").unwrap_err(), AliasError::MissingKey);
        assert_eq!(make_alias("", "k"), Err(AliasError::EmptyId));
    }
}
