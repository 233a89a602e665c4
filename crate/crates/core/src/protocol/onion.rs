//! Layered per-hop payload envelope.
//!
//! This is a test double for onion routing, not real cryptography: keys come
//! from a toy Diffie-Hellman group modulo the Mersenne prime 2^61 - 1 and
//! each layer is sealed with ChaCha20-Poly1305 under its own key. It preserves the property the protocol relies on: only
//! the holder of `sk_i` can open layer `i`, and doing so reveals `Z_i` plus an
//! opaque inner packet.

use num_rational::BigRational;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::contract::{sample_preimage_pair, Digest, Preimage};
use crate::model::{Amount, Minutes, NodeId};
use crate::penalty::PathPlan;

const MODULUS: u64 = (1 << 61) - 1;
const GENERATOR: u64 = 3;
const TAG_LEN: usize = 16;

/// Product modulo 2^61 - 1, folding the high bits back in since
/// 2^61 ≡ 1.
fn mul_mod(a: u64, b: u64) -> u64 {
    let x = a as u128 * b as u128;
    let folded = (x & MODULUS as u128) as u64 + (x >> 61) as u64;
    let folded = (folded & MODULUS) + (folded >> 61);
    if folded >= MODULUS {
        folded - MODULUS
    } else {
        folded
    }
}

fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= MODULUS;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

fn random_exponent<R: RngCore>(rng: &mut R) -> u64 {
    loop {
        let e = rng.next_u64() % (MODULUS - 1);
        if e > 1 {
            return e;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: u64,
    pub public: u64,
}

impl KeyPair {
    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let secret = random_exponent(rng);
        KeyPair {
            secret,
            public: pow_mod(GENERATOR, secret),
        }
    }
}

/// `Z_i`: what node `U_i` learns when it opens its layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopPayload {
    pub payment_hash: Digest,
    pub cancellation_hash: Digest,
    /// `α_i` for intermediaries, `α_{n-1}` for the payee.
    pub amount: Amount,
    /// Locktime of the cancellation contract this node offers upstream.
    pub timelock: Minutes,
    /// Penalty this node locks in that cancellation contract.
    pub tgp: Amount,
    /// `None` marks the payee's layer.
    pub next_hop: Option<NodeId>,
}

const FIXED_PAYLOAD: usize = 32 + 32 + 8 + 8 + 8;

impl HopPayload {
    /// Both hashes, amount, timelock and tgp as big-endian fixed-width
    /// fields, then the next hop's id (empty for the payee).
    fn encode(&self) -> Vec<u8> {
        let next = self.next_hop.as_ref().map_or("", |n| n.as_str());
        let mut out = Vec::with_capacity(FIXED_PAYLOAD + 1 + next.len());
        out.extend_from_slice(&self.payment_hash.0);
        out.extend_from_slice(&self.cancellation_hash.0);
        out.extend_from_slice(&self.amount.msat().to_be_bytes());
        out.extend_from_slice(&self.timelock.get().to_be_bytes());
        out.extend_from_slice(&self.tgp.msat().to_be_bytes());
        out.push(u8::from(self.next_hop.is_some()));
        out.extend_from_slice(next.as_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, OnionError> {
        if bytes.len() < FIXED_PAYLOAD + 1 {
            return Err(OnionError::Malformed("payload too short".into()));
        }
        let word = |at: usize| u64::from_be_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let next_hop = match bytes[FIXED_PAYLOAD] {
            0 => None,
            1 => Some(NodeId::new(
                std::str::from_utf8(&bytes[FIXED_PAYLOAD + 1..]).map_err(|e| OnionError::Malformed(e.to_string()))?,
            )),
            flag => return Err(OnionError::Malformed(format!("bad next-hop flag {flag}"))),
        };
        Ok(HopPayload {
            payment_hash: Digest(bytes[..32].try_into().expect("32 bytes")),
            cancellation_hash: Digest(bytes[32..64].try_into().expect("32 bytes")),
            amount: Amount::from_msat(word(64)),
            timelock: Minutes::new(word(72)),
            tgp: Amount::from_msat(word(80)),
            next_hop,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnionPacket {
    ephemeral: u64,
    /// Encrypted layer followed by its authentication tag.
    ciphertext: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rest {
    Forward(OnionPacket),
    /// Blinding factor for the payee.
    Final(BigRational),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Peeled {
    pub payload: HopPayload,
    pub rest: Rest,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OnionError {
    #[error("layer authentication failed")]
    Authentication,
    #[error("malformed layer: {0}")]
    Malformed(String),
}

fn layer_key(shared: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"onion-layer");
    h.update(shared.to_be_bytes());
    h.finalize().into()
}

/// Each layer key is used once, so a fixed nonce is safe.
fn cipher(key: &[u8; 32]) -> (ChaCha20Poly1305, Nonce) {
    (ChaCha20Poly1305::new(key.into()), Nonce::default())
}

impl OnionPacket {
    fn seal<R: RngCore>(recipient: u64, plaintext: Vec<u8>, rng: &mut R) -> Self {
        let e = random_exponent(rng);
        let (aead, nonce) = cipher(&layer_key(pow_mod(recipient, e)));
        let ciphertext = aead.encrypt(&nonce, plaintext.as_slice()).expect("in-memory encryption");
        OnionPacket {
            ephemeral: pow_mod(GENERATOR, e),
            ciphertext,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.ciphertext.len());
        out.extend_from_slice(&self.ephemeral.to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OnionError> {
        if bytes.len() < 8 + TAG_LEN {
            return Err(OnionError::Malformed("packet shorter than header".into()));
        }
        Ok(OnionPacket {
            ephemeral: u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes")),
            ciphertext: bytes[8..].to_vec(),
        })
    }

    /// Opens the outer layer with `secret`.
    pub fn peel(&self, secret: u64) -> Result<Peeled, OnionError> {
        let (aead, nonce) = cipher(&layer_key(pow_mod(self.ephemeral, secret)));
        let plain = aead
            .decrypt(&nonce, self.ciphertext.as_slice())
            .map_err(|_| OnionError::Authentication)?;
        if plain.len() < 4 {
            return Err(OnionError::Malformed("missing length prefix".into()));
        }
        let len = u32::from_be_bytes(plain[..4].try_into().expect("4 bytes")) as usize;
        let body = plain
            .get(4..4 + len)
            .ok_or_else(|| OnionError::Malformed("payload length exceeds layer".into()))?;
        let payload = HopPayload::decode(body)?;
        let inner = &plain[4 + len..];
        let rest = if payload.next_hop.is_some() {
            Rest::Forward(OnionPacket::from_bytes(inner)?)
        } else {
            let text = std::str::from_utf8(inner).map_err(|e| OnionError::Malformed(e.to_string()))?;
            Rest::Final(text.parse().map_err(|_| OnionError::Malformed(format!("bad blinding factor {text:?}")))?)
        };
        Ok(Peeled { payload, rest })
    }
}

fn layer_plaintext(payload: &HopPayload, inner: Vec<u8>) -> Vec<u8> {
    let body = payload.encode();
    let mut out = Vec::with_capacity(4 + body.len() + inner.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&inner);
    out
}

/// Builds `M_0`, nesting `Z_n` innermost (together with φ) and `Z_1`
/// outermost. `public_keys[i]` belongs to `U_i`; index 0 is unused.
pub fn build_onion<R: RngCore>(plan: &PathPlan, payloads: &[HopPayload], public_keys: &[u64], rng: &mut R) -> OnionPacket {
    let n = plan.hops();
    assert_eq!(payloads.len(), n, "one payload per hop");
    let phi = plan.phi.to_string().into_bytes();
    let mut packet = OnionPacket::seal(public_keys[n], layer_plaintext(&payloads[n - 1], phi), rng);
    for i in (1..n).rev() {
        packet = OnionPacket::seal(public_keys[i], layer_plaintext(&payloads[i - 1], packet.to_bytes()), rng);
    }
    packet
}

/// `Z_1..Z_n` for a plan, with `Z_i` at index `i - 1`.
pub fn hop_payloads(plan: &PathPlan, h: Digest, y: Digest) -> Vec<HopPayload> {
    let n = plan.hops();
    (1..=n)
        .map(|i| {
            let last = i == n;
            HopPayload {
                payment_hash: h,
                cancellation_hash: y,
                amount: plan.amounts[if last { n - 1 } else { i }],
                timelock: plan.timelocks[if last { n - 1 } else { i - 1 }],
                tgp: plan.tgp[if last { n - 1 } else { i - 1 }],
                next_hop: (!last).then(|| plan.path[i + 1].clone()),
            }
        })
        .collect()
}

/// Secrets the payee keeps after preprocessing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiverSecrets {
    pub x: Preimage,
    pub r: Preimage,
    pub phi: BigRational,
}

#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub payment_hash: Digest,
    pub cancellation_hash: Digest,
    pub onion: OnionPacket,
    pub receiver: ReceiverSecrets,
    /// Key pair of every node on the path, by position.
    pub keys: Vec<KeyPair>,
}

/// Payee samples `x ≠ r`; the sender builds the onion for the route.
pub fn preprocess<R: RngCore>(plan: &PathPlan, rng: &mut R) -> Preprocessed {
    let (x, r) = sample_preimage_pair(rng);
    let keys: Vec<KeyPair> = (0..=plan.hops()).map(|_| KeyPair::generate(rng)).collect();
    let (h, y) = (x.digest(), r.digest());
    let payloads = hop_payloads(plan, h, y);
    let publics: Vec<u64> = keys.iter().map(|k| k.public).collect();
    let onion = build_onion(plan, &payloads, &publics, rng);
    Preprocessed {
        payment_hash: h,
        cancellation_hash: y,
        onion,
        receiver: ReceiverSecrets {
            x,
            r,
            phi: plan.phi.clone(),
        },
        keys,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PlanParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn plan(hops: usize) -> PathPlan {
        PathPlan::build(
            (0..=hops).map(|i| NodeId::new(format!("u{i}"))).collect(),
            &PlanParams {
                alpha: Amount::from_msat(10_000),
                fees: vec![Amount::from_msat(7); hops - 1],
                gamma: "0.001".parse().unwrap(),
                delta: Minutes::new(60),
                t_base: Minutes::new(200),
                k: 4,
                psi: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn pow_mod_agrees_with_repeated_multiplication() {
        let mut acc = 1u64;
        for e in 0..200u64 {
            assert_eq!(pow_mod(GENERATOR, e), acc);
            acc = mul_mod(acc, GENERATOR);
        }
    }

    #[test]
    fn mersenne_reduction_matches_remainder() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let (a, b) = (rng.next_u64() % MODULUS, rng.next_u64() % MODULUS);
            assert_eq!(mul_mod(a, b), ((a as u128 * b as u128) % MODULUS as u128) as u64);
        }
        assert_eq!(mul_mod(MODULUS - 1, MODULUS - 1), 1);
    }

    #[test]
    fn payload_round_trips() {
        let p = plan(3);
        let pre = preprocess(&p, &mut ChaCha20Rng::seed_from_u64(2));
        for payload in hop_payloads(&p, pre.payment_hash, pre.cancellation_hash) {
            assert_eq!(HopPayload::decode(&payload.encode()).unwrap(), payload);
        }
        assert!(HopPayload::decode(&[0; 10]).is_err());
    }

    #[test]
    fn peeling_walks_the_route() {
        let p = plan(4);
        let pre = preprocess(&p, &mut ChaCha20Rng::seed_from_u64(3));
        let mut packet = pre.onion.clone();
        for i in 1..=4 {
            let peeled = packet.peel(pre.keys[i].secret).unwrap();
            assert_eq!(peeled.payload.payment_hash, pre.payment_hash);
            match peeled.rest {
                Rest::Forward(next) => {
                    assert_eq!(peeled.payload.next_hop.as_ref(), Some(&p.path[i + 1]));
                    assert_eq!(peeled.payload.amount, p.amounts[i]);
                    assert_eq!(peeled.payload.tgp, p.tgp[i - 1]);
                    packet = next;
                }
                Rest::Final(phi) => {
                    assert_eq!(i, 4);
                    assert_eq!(phi, p.phi);
                    assert_eq!(peeled.payload.next_hop, None);
                    assert_eq!(peeled.payload.timelock, p.timelocks[3]);
                }
            }
        }
    }

    #[test]
    fn wrong_key_fails() {
        let p = plan(3);
        let pre = preprocess(&p, &mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(pre.onion.peel(pre.keys[2].secret), Err(OnionError::Authentication));
    }

    #[test]
    fn bytes_round_trip() {
        let p = plan(2);
        let pre = preprocess(&p, &mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(OnionPacket::from_bytes(&pre.onion.to_bytes()).unwrap(), pre.onion);
    }
}
