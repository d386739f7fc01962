//! Signature, threshold-signature and hashing provider.
//!
//! The shipped provider is simulation grade: signatures are structural
//! records carrying a keyed tag, so they are deterministic, cheap and need no
//! external crypto crates. Secrets never leave the [`Keyring`]; the only way to
//! produce a signature for a process is through that process's [`SigningKey`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Seed of the digest mixing function. Fixed so digests agree across runs.
const DIGEST_SEED: u64 = 0x6d6f_7270_6865_7573;

/// Index of a process in `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Fixed-width 32-byte hash value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn short(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let text = std::str::from_utf8(chunk).ok()?;
            out[i] = u8::from_str_radix(text, 16).ok()?;
        }
        Some(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
    }
}

#[inline]
fn avalanche(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hashes `bytes` into a 32-byte digest with a seeded four-lane mixer.
pub fn hash_bytes(bytes: &[u8]) -> Digest {
    hash_seeded(DIGEST_SEED, bytes)
}

pub fn hash_seeded(seed: u64, bytes: &[u8]) -> Digest {
    const LANE_KEYS: [u64; 4] =
        [0x9e37_79b9_7f4a_7c15, 0xc2b2_ae3d_27d4_eb4f, 0x1656_67b1_9e37_79f9, 0x27d4_eb2f_1656_67c5];
    let mut lanes = LANE_KEYS.map(|k| avalanche(seed ^ k));
    let mut chunks = bytes.chunks_exact(8);
    for (i, chunk) in (&mut chunks).enumerate() {
        let word = u64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        for (l, lane) in lanes.iter_mut().enumerate() {
            *lane = (*lane ^ word.wrapping_add(LANE_KEYS[l]))
                .rotate_left(23 + l as u32)
                .wrapping_mul(0x9fb2_1c65_1e98_df25)
                .wrapping_add(i as u64);
        }
    }
    let mut tail = [0u8; 8];
    let rem = chunks.remainder();
    tail[..rem.len()].copy_from_slice(rem);
    let tail_word = u64::from_le_bytes(tail) ^ ((rem.len() as u64) << 56);
    let len = bytes.len() as u64;
    let mut out = [0u8; 32];
    for l in 0..4 {
        let mut v = lanes[l] ^ tail_word.rotate_left(l as u32 * 16) ^ len;
        // Cross-lane diffusion so every output lane depends on every input word.
        v = v.wrapping_add(lanes[(l + 1) % 4].rotate_left(17));
        v = avalanche(v ^ avalanche(lanes[(l + 2) % 4] ^ LANE_KEYS[l]));
        out[l * 8..l * 8 + 8].copy_from_slice(&v.to_be_bytes());
    }
    Digest(out)
}

fn tag_for(secret: u64, payload: &Digest) -> u64 {
    let mut x = secret;
    for chunk in payload.0.chunks_exact(8) {
        x = avalanche(x ^ u64::from_be_bytes(chunk.try_into().expect("8 bytes")));
    }
    x
}

/// A single-signer signature over a payload digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Signature {
    signer: ProcessId,
    payload: Digest,
    tag: u64,
}

impl Signature {
    pub fn signer(&self) -> ProcessId {
        self.signer
    }

    pub fn payload(&self) -> Digest {
        self.payload
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    /// Rebuilds a signature from its wire form. The result only verifies if
    /// the tag was produced by the signer's key over `payload`.
    pub fn from_parts(signer: ProcessId, payload: Digest, tag: u64) -> Self {
        Signature { signer, payload, tag }
    }
}

/// A compact m-of-n signature. Its encoded size does not depend on m.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ThresholdSignature {
    threshold: u32,
    payload: Digest,
    signers: u128,
    tag: u64,
}

impl ThresholdSignature {
    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn payload(&self) -> Digest {
        self.payload
    }

    pub fn signer_mask(&self) -> u128 {
        self.signers
    }

    pub fn signer_count(&self) -> u32 {
        self.signers.count_ones()
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn from_parts(threshold: u32, payload: Digest, signers: u128, tag: u64) -> Self {
        ThresholdSignature { threshold, payload, signers, tag }
    }

    /// Placeholder signature carried by the well-known genesis certificate.
    pub fn genesis(payload: Digest) -> Self {
        ThresholdSignature { threshold: 0, payload, signers: 0, tag: 0 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("need {needed} distinct signers, got {got}")]
    InsufficientShares { needed: u32, got: u32 },
    #[error("shares sign different payloads")]
    MixedPayloads,
    #[error("share from {0} does not verify")]
    InvalidShare(ProcessId),
    #[error("signer {0} outside committee of {1}")]
    UnknownSigner(ProcessId, usize),
}

/// Public-key infrastructure for a committee of `n` processes.
///
/// Holds every process's secret; hand out [`SigningKey`]s to the owning
/// process (or to the adversary for corrupted ones) and keep the ring itself
/// for verification.
pub struct Keyring {
    secrets: Vec<u64>,
}

impl fmt::Debug for Keyring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keyring").field("n", &self.secrets.len()).finish()
    }
}

impl Keyring {
    /// Maximum committee size supported by the signer bitmask.
    pub const MAX_N: usize = 128;

    pub fn new(n: usize, seed: u64) -> Arc<Self> {
        assert!(n > 0 && n <= Self::MAX_N, "committee size {n} unsupported");
        let secrets =
            (0..n as u64).map(|i| avalanche(avalanche(seed ^ 0x5eed) ^ avalanche(i.wrapping_add(0x51_6e)))).collect();
        Arc::new(Keyring { secrets })
    }

    pub fn n(&self) -> usize {
        self.secrets.len()
    }

    pub fn signing_key(&self, id: ProcessId) -> SigningKey {
        SigningKey { id, secret: self.secrets[id.index()] }
    }

    pub fn verify(&self, payload: &Digest, sig: &Signature, signer: ProcessId) -> bool {
        sig.signer == signer
            && sig.payload == *payload
            && signer.index() < self.secrets.len()
            && sig.tag == tag_for(self.secrets[signer.index()], payload)
    }

    /// Verifies `sig` against whichever signer it claims.
    pub fn verify_any(&self, payload: &Digest, sig: &Signature) -> bool {
        self.verify(payload, sig, sig.signer)
    }

    /// Combines shares from at least `m` distinct signers over one payload.
    pub fn aggregate<'a, I>(&self, shares: I, m: u32) -> Result<ThresholdSignature, CryptoError>
    where
        I: IntoIterator<Item = &'a Signature>,
    {
        let mut payload = None;
        let mut signers = 0u128;
        let mut tag = 0u64;
        for share in shares {
            if share.signer.index() >= self.secrets.len() {
                return Err(CryptoError::UnknownSigner(share.signer, self.secrets.len()));
            }
            match payload {
                None => payload = Some(share.payload),
                Some(p) if p != share.payload => return Err(CryptoError::MixedPayloads),
                Some(_) => {}
            }
            if !self.verify_any(&share.payload, share) {
                return Err(CryptoError::InvalidShare(share.signer));
            }
            let bit = 1u128 << share.signer.0;
            if signers & bit == 0 {
                signers |= bit;
                tag ^= share.tag;
            }
        }
        let got = signers.count_ones();
        match payload {
            Some(payload) if got >= m => Ok(ThresholdSignature { threshold: m, payload, signers, tag }),
            _ => Err(CryptoError::InsufficientShares { needed: m, got }),
        }
    }

    pub fn verify_threshold(&self, payload: &Digest, sig: &ThresholdSignature, m: u32) -> bool {
        if sig.threshold != m || sig.payload != *payload || sig.signers.count_ones() < m {
            return false;
        }
        if self.secrets.len() < 128 && sig.signers >> self.secrets.len() != 0 {
            return false;
        }
        let expected = (0..self.secrets.len())
            .filter(|i| sig.signers & (1u128 << i) != 0)
            .fold(0u64, |acc, i| acc ^ tag_for(self.secrets[i], payload));
        expected == sig.tag
    }
}

/// Signing capability of one process.
pub struct SigningKey {
    id: ProcessId,
    secret: u64,
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey").field("id", &self.id).finish_non_exhaustive()
    }
}

impl SigningKey {
    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        self.sign_digest(hash_bytes(payload))
    }

    pub fn sign_digest(&self, payload: Digest) -> Signature {
        Signature { signer: self.id, payload, tag: tag_for(self.secret, &payload) }
    }
}
