//! Risk update payloads and their sealing under the mailbox key.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskLevel;
use crate::transport::crypto::{self, CryptoMode};
use crate::transport::mailbox::derive_mailbox;
use crate::transport::tokens::Token;

const BODY_LEN: usize = 10;
pub const TAG_LEN: usize = 16;
const NONCE_LEN: usize = 12;

/// What one phone tells another. No sender identity; `counter` is the
/// per-token sequence number used against replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskUpdateMessage {
    pub day_of_encounter: u32,
    pub new_level: RiskLevel,
    pub prior_level: RiskLevel,
    pub counter: u32,
}

impl RiskUpdateMessage {
    fn body(&self) -> [u8; BODY_LEN] {
        let mut b = [0u8; BODY_LEN];
        b[..4].copy_from_slice(&self.day_of_encounter.to_be_bytes());
        b[4] = self.new_level.value();
        b[5] = self.prior_level.value();
        b[6..].copy_from_slice(&self.counter.to_be_bytes());
        b
    }

    fn from_body(b: &[u8]) -> Result<Self> {
        if b.len() != BODY_LEN {
            return Err(Error::Wire(format!("payload body of {} bytes", b.len())));
        }
        Ok(RiskUpdateMessage {
            day_of_encounter: u32::from_be_bytes(b[..4].try_into().expect("4 bytes")),
            new_level: RiskLevel::new(b[4])?,
            prior_level: RiskLevel::new(b[5])?,
            counter: u32::from_be_bytes(b[6..].try_into().expect("4 bytes")),
        })
    }

    fn tag(&self, token: &Token, mode: CryptoMode) -> [u8; TAG_LEN] {
        let mut t = [0u8; TAG_LEN];
        match mode {
            CryptoMode::Real => t.copy_from_slice(&crypto::hmac(&token.0, &[b"covi/tag", &self.body()])[..TAG_LEN]),
            CryptoMode::Null => t.copy_from_slice(&token.0[..TAG_LEN]),
        }
        t
    }

    /// Mailbox ciphertext: `nonce | aead(body | tag)` in real mode, plain
    /// `body | tag` in null mode.
    pub fn seal(&self, token: &Token, mode: CryptoMode) -> Vec<u8> {
        let mut plain = self.body().to_vec();
        plain.extend_from_slice(&self.tag(token, mode));
        match mode {
            CryptoMode::Null => plain,
            CryptoMode::Real => {
                let (_, key) = derive_mailbox(token);
                let mut nonce = [0u8; NONCE_LEN];
                nonce[..4].copy_from_slice(&self.counter.to_be_bytes());
                nonce[4..8].copy_from_slice(&self.day_of_encounter.to_be_bytes());
                let mut out = nonce.to_vec();
                out.extend(crypto::seal(&key.0, &nonce, b"covi/msg", &plain));
                out
            }
        }
    }

    /// Decrypt and authenticate. Any failure is `Error::Decrypt`.
    pub fn open(ciphertext: &[u8], token: &Token, mode: CryptoMode) -> Result<Self> {
        let plain = match mode {
            CryptoMode::Null => ciphertext.to_vec(),
            CryptoMode::Real => {
                if ciphertext.len() < NONCE_LEN {
                    return Err(Error::Decrypt);
                }
                let (_, key) = derive_mailbox(token);
                let nonce: [u8; NONCE_LEN] = ciphertext[..NONCE_LEN].try_into().expect("nonce");
                crypto::open(&key.0, &nonce, b"covi/msg", &ciphertext[NONCE_LEN..])?
            }
        };
        if plain.len() != BODY_LEN + TAG_LEN {
            return Err(Error::Decrypt);
        }
        let msg = Self::from_body(&plain[..BODY_LEN]).map_err(|_| Error::Decrypt)?;
        let tag = &plain[BODY_LEN..];
        let ok = match mode {
            CryptoMode::Real => crypto::hmac_verify(&token.0, &[b"covi/tag", &plain[..BODY_LEN]], tag),
            CryptoMode::Null => tag == &token.0[..TAG_LEN],
        };
        if !ok {
            return Err(Error::Decrypt);
        }
        Ok(msg)
    }
}

/// Remembers which counters each incoming token has already delivered.
#[derive(Debug, Clone, Default)]
pub struct ReplayGuard {
    seen: BTreeMap<Token, BTreeSet<u32>>,
    pub rejected: u64,
}

impl ReplayGuard {
    /// True the first time a (token, counter) pair is seen.
    pub fn accept(&mut self, token: &Token, counter: u32) -> bool {
        let fresh = self.seen.entry(*token).or_default().insert(counter);
        if !fresh {
            self.rejected += 1;
        }
        fresh
    }

    pub fn forget(&mut self, token: &Token) {
        self.seen.remove(token);
    }
}
