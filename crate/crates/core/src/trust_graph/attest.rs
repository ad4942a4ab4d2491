//! Simulated attestations.
//!
//! An attestation is an unforgeable capability token: the nonce is a keyed
//! digest over the signed payload under the signer's secret. Secrets are
//! derived from a registry master seed and only ever handed out as
//! [`SigningKey`] values, so code holding keys for a set of entities cannot
//! produce tokens that verify for anyone else. This stands in for real
//! signatures; no key material is modelled beyond that.

use std::fmt;

use sha2::{Digest as _, Sha256};

use super::types::{Attestation, Context, EntityId, LogicalTime, RelationKey, TrustRelation, TrustValue};

/// Checks attestations against signed payloads.
pub trait Verifier {
    fn verify(&self, payload: &[u8], attestation: &Attestation) -> bool;
}

/// Derives per-entity secrets from a master seed.
#[derive(Clone)]
pub struct KeyRegistry {
    master: [u8; 32],
}

impl KeyRegistry {
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"tmsim/key-registry\0");
        h.update(seed.to_be_bytes());
        let mut master = [0u8; 32];
        master.copy_from_slice(h.finalize().as_slice());
        KeyRegistry { master }
    }

    fn secret(&self, entity: &EntityId) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.master);
        h.update(b"\0");
        h.update(entity.as_str().as_bytes());
        let mut s = [0u8; 32];
        s.copy_from_slice(h.finalize().as_slice());
        s
    }

    pub fn signing_key(&self, entity: &EntityId) -> SigningKey {
        SigningKey { owner: entity.clone(), secret: self.secret(entity) }
    }
}

impl fmt::Debug for KeyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KeyRegistry(..)")
    }
}

impl Verifier for KeyRegistry {
    fn verify(&self, payload: &[u8], attestation: &Attestation) -> bool {
        mac(&self.secret(&attestation.signer), payload) == attestation.nonce
    }
}

fn mac(secret: &[u8; 32], payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(secret);
    h.update(payload);
    hex::encode(h.finalize().as_slice())
}

/// The ability to author attestations for one entity.
#[derive(Clone)]
pub struct SigningKey {
    owner: EntityId,
    secret: [u8; 32],
}

impl SigningKey {
    pub fn owner(&self) -> &EntityId {
        &self.owner
    }

    pub fn sign(&self, payload: &[u8]) -> Attestation {
        Attestation { signer: self.owner.clone(), nonce: mac(&self.secret, payload) }
    }

    /// Authors a relation with this key's owner as trustor.
    pub fn relation(&self, trustee: EntityId, context: Context, value: TrustValue, time: LogicalTime) -> TrustRelation {
        let payload = TrustRelation::signing_payload(&self.owner, &trustee, &context, value, &time);
        TrustRelation {
            trustor: self.owner.clone(),
            trustee,
            context,
            value,
            attestation: self.sign(payload.as_bytes()),
            time,
        }
    }

    /// Attestation for removing the relation at `key` at `time`.
    pub fn removal(&self, key: &RelationKey, time: &LogicalTime) -> Attestation {
        self.sign(removal_payload(key, time).as_bytes())
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({})", self.owner)
    }
}

pub fn removal_payload(key: &RelationKey, time: &LogicalTime) -> String {
    format!("remove\t{}\t{}\t{}", key.canonical_fields(), time.counter, time.tiebreak.canonical())
}
