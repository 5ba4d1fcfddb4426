//! Deterministic party keys and digests.

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

use super::PartyId;

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Ed25519 keys for every party, derived from the run seed.
#[derive(Clone)]
pub struct KeyRing {
    seed: u64,
    keys: BTreeMap<PartyId, SigningKey>,
}

impl std::fmt::Debug for KeyRing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyRing")
            .field("seed", &self.seed)
            .field("parties", &self.keys.keys())
            .finish()
    }
}

impl KeyRing {
    pub fn new(seed: u64) -> Self {
        KeyRing {
            seed,
            keys: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn derive(&self, party: &PartyId) -> SigningKey {
        let mut h = Sha256::new();
        h.update(b"chainvoice/party-key/v1");
        h.update(self.seed.to_le_bytes());
        h.update(party.as_str().as_bytes());
        SigningKey::from_bytes(&h.finalize().into())
    }

    pub fn register(&mut self, party: &PartyId) {
        if !self.keys.contains_key(party) {
            let key = self.derive(party);
            self.keys.insert(party.clone(), key);
        }
    }

    pub fn contains(&self, party: &PartyId) -> bool {
        self.keys.contains_key(party)
    }

    /// Hex signature, or `None` for an unregistered party.
    pub fn sign(&self, party: &PartyId, message: &[u8]) -> Option<String> {
        self.keys
            .get(party)
            .map(|k| hex::encode(k.sign(message).to_bytes()))
    }

    pub fn verifying_key(&self, party: &PartyId) -> Option<VerifyingKey> {
        self.keys.get(party).map(SigningKey::verifying_key)
    }

    pub fn verify(&self, party: &PartyId, message: &[u8], signature_hex: &str) -> bool {
        let Some(vk) = self.verifying_key(party) else {
            return false;
        };
        let Ok(bytes) = hex::decode(signature_hex) else {
            return false;
        };
        let Ok(bytes) = <[u8; 64]>::try_from(bytes.as_slice()) else {
            return false;
        };
        vk.verify(message, &Signature::from_bytes(&bytes)).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_only_on_seed_and_party() {
        let fran = PartyId::from("FarmerFran");
        let mut a = KeyRing::new(7);
        let mut b = KeyRing::new(7);
        let mut c = KeyRing::new(8);
        for k in [&mut a, &mut b, &mut c] {
            k.register(&fran);
        }
        assert_eq!(a.sign(&fran, b"m"), b.sign(&fran, b"m"));
        assert_ne!(a.sign(&fran, b"m"), c.sign(&fran, b"m"));
        let sig = a.sign(&fran, b"m").unwrap();
        assert!(b.verify(&fran, b"m", &sig));
        assert!(!c.verify(&fran, b"m", &sig));
        assert!(!a.verify(&fran, b"n", &sig));
        assert!(!a.verify(&fran, b"m", "zz"));
    }

    #[test]
    fn digest_is_length_prefixed() {
        assert_ne!(sha256_hex(&[b"ab", b"c"]), sha256_hex(&[b"a", b"bc"]));
    }
}
