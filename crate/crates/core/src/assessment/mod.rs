//! Trust assessment programs.
//!
//! A program maps a query (who assesses which public-key-to-id binding) and a
//! trust view to a value in `[0, 1]` plus the relations it relied on. Two
//! programs are provided: OpenPGP-style web-of-trust validity and X.509-style
//! chain validation. [`enumerate_chains`] is the exhaustive path enumerator
//! used to cross-check both.

mod chains;
mod pgp;
mod x509;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::trust_graph::{Context, EntityId, Identity, TrustGraph, TrustRelation, TrustValue};

pub use chains::enumerate_chains;
pub use pgp::{pgp_validity, LabelMap, PgpLabel, PgpPolicy};
pub use x509::{x509_validate, X509Policy};

/// `T_{A->B}^c`: `source` assesses whether `binding.0` holds `binding.1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentQuery {
    pub source: EntityId,
    pub binding: (EntityId, Identity),
    pub context: Context,
}

impl AssessmentQuery {
    /// Validity query for `key` holding `identity`.
    pub fn validity(source: EntityId, key: EntityId, identity: Identity) -> Result<Self, AssessError> {
        let context = Context::validity(identity.clone()).map_err(|_| AssessError::EmptyIdentity)?;
        Ok(AssessmentQuery { source, binding: (key, identity), context })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssessmentResult {
    pub value: TrustValue,
    /// Chains of relations the program relied on; each exists in the view.
    pub evidence: Vec<Vec<TrustRelation>>,
}

impl AssessmentResult {
    pub fn no_evidence(value: TrustValue) -> Self {
        AssessmentResult { value, evidence: Vec::new() }
    }

    /// The distinct relations appearing in the evidence.
    pub fn evidence_relations(&self) -> Vec<TrustRelation> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for rel in self.evidence.iter().flatten() {
            if seen.insert(rel.key()) {
                out.push(rel.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssessError {
    #[error("unknown assessment program {0:?}")]
    UnknownProgram(String),
    #[error("binding identity must be non-empty")]
    EmptyIdentity,
    #[error("query context must be validity of the queried identity")]
    UnsupportedContext,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "program", rename_all = "kebab-case")]
pub enum AssessmentProgram {
    Pgp(PgpPolicy),
    X509(X509Policy),
}

impl AssessmentProgram {
    /// `"pgp"` with default policy, or `"x509"` anchored at `roots`.
    pub fn by_name(name: &str, roots: BTreeSet<EntityId>) -> Result<Self, AssessError> {
        match name {
            "pgp" => Ok(AssessmentProgram::Pgp(PgpPolicy::default())),
            "x509" => Ok(AssessmentProgram::X509(X509Policy::new(roots))),
            other => Err(AssessError::UnknownProgram(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AssessmentProgram::Pgp(_) => "pgp",
            AssessmentProgram::X509(_) => "x509",
        }
    }
}

/// Runs `program` on `view`. Deterministic in its inputs; nothing outside the
/// view is consulted.
pub fn assess(
    program: &AssessmentProgram,
    query: &AssessmentQuery,
    view: &TrustGraph,
) -> Result<AssessmentResult, AssessError> {
    let (key, identity) = &query.binding;
    if identity.is_empty() {
        return Err(AssessError::EmptyIdentity);
    }
    if !query.context.is_validity() || query.context.subject() != identity {
        return Err(AssessError::UnsupportedContext);
    }
    match program {
        AssessmentProgram::Pgp(policy) => {
            policy.validate()?;
            Ok(pgp_validity(view, &query.source, (key, identity), policy))
        }
        AssessmentProgram::X509(policy) => {
            policy.validate()?;
            Ok(x509_validate(view, policy, (key, identity)))
        }
    }
}
