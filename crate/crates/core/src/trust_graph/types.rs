use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::canon::{escape, unescape};
use super::ModelError;

/// An entity: a public key participating in the system, named by an opaque
/// non-empty token (think fingerprint).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(token: impl Into<String>) -> Result<Self, ModelError> {
        let token = token.into();
        if token.is_empty() {
            return Err(ModelError::EmptyEntityId);
        }
        Ok(EntityId(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn canonical(&self) -> String {
        escape(&self.0)
    }

    pub(crate) fn parse_canonical(token: &str) -> Option<Self> {
        unescape(token).and_then(|s| EntityId::new(s).ok())
    }
}

impl TryFrom<String> for EntityId {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// A set of attributes describing the holder of a key.
///
/// Attributes are kept sorted by name, so two identities are equal exactly when
/// their canonical serializations are equal.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identity(BTreeMap<String, String>);

impl Identity {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single-attribute identity `name=<value>`.
    pub fn named(value: impl Into<String>) -> Self {
        Self::new().with("name", value)
    }

    pub fn with(mut self, attribute: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(attribute.into(), value.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// `-` for the empty identity, otherwise `name=value;name=value`.
    pub fn canonical(&self) -> String {
        if self.0.is_empty() {
            return "-".to_string();
        }
        self.0.iter().map(|(k, v)| format!("{}={}", escape(k), escape(v))).collect::<Vec<_>>().join(";")
    }

    pub fn parse_canonical(token: &str) -> Option<Self> {
        if token == "-" {
            return Some(Identity::new());
        }
        let mut map = BTreeMap::new();
        for pair in token.split(';') {
            let (k, v) = pair.split_once('=')?;
            let k = unescape(k)?;
            if k.is_empty() || map.insert(k, unescape(v)?).is_some() {
                return None;
            }
        }
        let id = Identity(map);
        (id.canonical() == token).then_some(id)
    }
}

impl Ord for Identity {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical().cmp(&other.canonical())
    }
}

impl PartialOrd for Identity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({})", self.canonical())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextClass {
    /// Belief in a public-key-to-identity binding.
    Validity,
    /// Trust in the trustee as an authenticator of others.
    AuthenticatorTrust,
}

impl ContextClass {
    pub fn token(self) -> &'static str {
        match self {
            ContextClass::Validity => "validity",
            ContextClass::AuthenticatorTrust => "authenticator-trust",
        }
    }

    pub fn parse_token(s: &str) -> Option<Self> {
        match s {
            "validity" => Some(ContextClass::Validity),
            "authenticator-trust" => Some(ContextClass::AuthenticatorTrust),
            _ => None,
        }
    }
}

/// Context of a trust relation. Validity contexts carry the subject identity
/// whose binding is asserted; authenticator-trust contexts carry none.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "ContextRepr", into = "ContextRepr")]
pub struct Context {
    class: ContextClass,
    subject: Identity,
}

impl Context {
    pub fn validity(subject: Identity) -> Result<Self, ModelError> {
        if subject.is_empty() {
            return Err(ModelError::EmptyValiditySubject);
        }
        Ok(Context { class: ContextClass::Validity, subject })
    }

    pub fn authenticator_trust() -> Self {
        Context { class: ContextClass::AuthenticatorTrust, subject: Identity::new() }
    }

    pub fn new(class: ContextClass, subject: Identity) -> Result<Self, ModelError> {
        match class {
            ContextClass::Validity => Self::validity(subject),
            ContextClass::AuthenticatorTrust if subject.is_empty() => Ok(Self::authenticator_trust()),
            ContextClass::AuthenticatorTrust => Err(ModelError::UnexpectedSubject),
        }
    }

    pub fn class(&self) -> ContextClass {
        self.class
    }

    pub fn subject(&self) -> &Identity {
        &self.subject
    }

    pub fn is_validity(&self) -> bool {
        self.class == ContextClass::Validity
    }
}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            ContextClass::Validity => write!(f, "validity({})", self.subject),
            ContextClass::AuthenticatorTrust => f.write_str("authenticator-trust"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextRepr {
    class: ContextClass,
    #[serde(default, skip_serializing_if = "Identity::is_empty")]
    subject: Identity,
}

impl TryFrom<ContextRepr> for Context {
    type Error = ModelError;
    fn try_from(r: ContextRepr) -> Result<Self, Self::Error> {
        Context::new(r.class, r.subject)
    }
}

impl From<Context> for ContextRepr {
    fn from(c: Context) -> Self {
        ContextRepr { class: c.class, subject: c.subject }
    }
}

/// Trust value in `[0, 1]`. `0` is revocation / no trust, `0.5` complete
/// uncertainty, `1` total trust.
#[derive(Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TrustValue(f64);

impl TrustValue {
    pub const REVOKED: TrustValue = TrustValue(0.0);
    pub const UNCERTAIN: TrustValue = TrustValue(0.5);
    pub const FULL: TrustValue = TrustValue(1.0);

    pub fn new(v: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&v) {
            return Err(ModelError::ValueOutOfRange(v));
        }
        // normalise -0.0
        Ok(TrustValue(if v == 0.0 { 0.0 } else { v }))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_revoked(self) -> bool {
        self.0 == 0.0
    }

    /// Strictly above complete uncertainty.
    pub fn asserts(self) -> bool {
        self.0 > 0.5
    }

    pub(crate) fn canonical(self) -> String {
        format!("{}", self.0)
    }

    pub(crate) fn parse_canonical(token: &str) -> Option<Self> {
        let v: f64 = token.parse().ok()?;
        let tv = TrustValue::new(v).ok()?;
        (tv.canonical() == token).then_some(tv)
    }
}

impl Eq for TrustValue {}

impl TryFrom<f64> for TrustValue {
    type Error = ModelError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        TrustValue::new(v)
    }
}

impl From<TrustValue> for f64 {
    fn from(v: TrustValue) -> Self {
        v.0
    }
}

impl fmt::Debug for TrustValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TrustValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Lamport time totalised by the author id: compare counters, then authors.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LogicalTime {
    pub counter: u64,
    pub tiebreak: EntityId,
}

impl LogicalTime {
    pub fn new(counter: u64, tiebreak: EntityId) -> Self {
        LogicalTime { counter, tiebreak }
    }
}

impl fmt::Debug for LogicalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.counter, self.tiebreak)
    }
}

/// Signature-like token binding a relation to its author.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attestation {
    pub signer: EntityId,
    pub nonce: String,
}

impl fmt::Debug for Attestation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig({}:{})", self.signer, &self.nonce[..self.nonce.len().min(8)])
    }
}

/// Edge identity in the multigraph: at most one live relation per key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationKey {
    pub trustor: EntityId,
    pub trustee: EntityId,
    pub context: Context,
}

impl RelationKey {
    pub fn new(trustor: EntityId, trustee: EntityId, context: Context) -> Self {
        RelationKey { trustor, trustee, context }
    }

    pub(crate) fn canonical_fields(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.trustor.canonical(),
            self.trustee.canonical(),
            self.context.class.token(),
            self.context.subject.canonical()
        )
    }
}

impl fmt::Debug for RelationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{} {:?}", self.trustor, self.trustee, self.context)
    }
}

/// One labelled edge `<trustor, trustee, context, value, attestation, time>`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustRelation {
    pub trustor: EntityId,
    pub trustee: EntityId,
    pub context: Context,
    pub value: TrustValue,
    pub attestation: Attestation,
    pub time: LogicalTime,
}

impl TrustRelation {
    pub fn key(&self) -> RelationKey {
        RelationKey::new(self.trustor.clone(), self.trustee.clone(), self.context.clone())
    }

    /// Bytes covered by the attestation: every field except the attestation.
    pub fn signing_payload(
        trustor: &EntityId,
        trustee: &EntityId,
        context: &Context,
        value: TrustValue,
        time: &LogicalTime,
    ) -> String {
        format!(
            "rel\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            trustor.canonical(),
            trustee.canonical(),
            context.class.token(),
            context.subject.canonical(),
            value.canonical(),
            time.counter,
            time.tiebreak.canonical()
        )
    }

    pub fn payload(&self) -> String {
        Self::signing_payload(&self.trustor, &self.trustee, &self.context, self.value, &self.time)
    }

    /// Canonical one-line serialization. Field order:
    /// trustor, trustee, context class, subject identity, value, time counter,
    /// time tiebreak, attestation signer, attestation nonce; tab separated.
    pub fn canonical_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.trustor.canonical(),
            self.trustee.canonical(),
            self.context.class.token(),
            self.context.subject.canonical(),
            self.value.canonical(),
            self.time.counter,
            self.time.tiebreak.canonical(),
            self.attestation.signer.canonical(),
            escape(&self.attestation.nonce)
        )
    }

    pub fn parse_canonical_line(line: &str) -> Result<Self, ModelError> {
        let fields: Vec<&str> = line.split('\t').collect();
        let rel = Self::from_fields(&fields)?;
        if rel.canonical_line() != line {
            return Err(ModelError::NonCanonical(line.to_string()));
        }
        Ok(rel)
    }

    pub(crate) fn from_fields(fields: &[&str]) -> Result<Self, ModelError> {
        let bad = |what: &str| ModelError::Parse(format!("bad {what}"));
        if fields.len() != 9 {
            return Err(ModelError::Parse(format!("expected 9 fields, found {}", fields.len())));
        }
        let trustor = EntityId::parse_canonical(fields[0]).ok_or_else(|| bad("trustor"))?;
        let trustee = EntityId::parse_canonical(fields[1]).ok_or_else(|| bad("trustee"))?;
        let class = ContextClass::parse_token(fields[2]).ok_or_else(|| bad("context class"))?;
        let subject = Identity::parse_canonical(fields[3]).ok_or_else(|| bad("subject"))?;
        let context = Context::new(class, subject)?;
        let value = TrustValue::parse_canonical(fields[4]).ok_or_else(|| bad("value"))?;
        let counter = parse_counter(fields[5]).ok_or_else(|| bad("time counter"))?;
        let tiebreak = EntityId::parse_canonical(fields[6]).ok_or_else(|| bad("time tiebreak"))?;
        let signer = EntityId::parse_canonical(fields[7]).ok_or_else(|| bad("signer"))?;
        let nonce = unescape(fields[8]).ok_or_else(|| bad("nonce"))?;
        Ok(TrustRelation {
            trustor,
            trustee,
            context,
            value,
            attestation: Attestation { signer, nonce },
            time: LogicalTime::new(counter, tiebreak),
        })
    }

    pub fn digest(&self) -> crate::Digest {
        crate::Digest::of(self.canonical_line().as_bytes())
    }
}

pub(crate) fn parse_counter(token: &str) -> Option<u64> {
    let v: u64 = token.parse().ok()?;
    (v.to_string() == token).then_some(v)
}

impl fmt::Debug for TrustRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}->{} {:?} v={} t={:?}>", self.trustor, self.trustee, self.context, self.value, self.time)
    }
}
