//! Mailbox derivation and the mailbox server.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::crypto::digest;
use crate::transport::onion::DepositRecord;
use crate::transport::tokens::Token;
use crate::transport::NetId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct MailboxKey(pub [u8; 32]);

/// Address and key are digests of the token under distinct domain tags.
pub fn derive_mailbox(token: &Token) -> (Address, MailboxKey) {
    (Address(digest(&[b"covi/addr", &token.0])), MailboxKey(digest(&[b"covi/key", &token.0])))
}

/// Per-sender daily quota.
#[derive(Debug, Clone, Default)]
pub struct RateLimiter {
    quota: u32,
    counts: BTreeMap<(NetId, u32), u32>,
}

impl RateLimiter {
    pub fn new(quota: u32) -> Self {
        RateLimiter { quota, counts: BTreeMap::new() }
    }

    pub fn admit(&mut self, from: NetId, day: u32) -> Result<()> {
        let c = self.counts.entry((from, day)).or_default();
        if *c >= self.quota {
            return Err(Error::Throttled { quota: self.quota });
        }
        *c += 1;
        Ok(())
    }

    /// Forget counters for days before `day`.
    pub fn roll(&mut self, day: u32) {
        self.counts.retain(|(_, d), _| *d >= day);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stored {
    pub ciphertext: Vec<u8>,
    pub deposit_day: u32,
}

/// Holds ciphertexts by address. Never sees keys or plaintext.
#[derive(Debug, Clone)]
pub struct MailboxServer {
    boxes: BTreeMap<Address, Vec<Stored>>,
    limiter: RateLimiter,
    relays: BTreeSet<NetId>,
    pub rejected: u64,
}

impl MailboxServer {
    pub fn new(daily_quota: u32) -> Self {
        MailboxServer { boxes: BTreeMap::new(), limiter: RateLimiter::new(daily_quota), relays: BTreeSet::new(), rejected: 0 }
    }

    /// Exempt a mix relay from the per-sender quota; the relay enforces it
    /// at ingress instead.
    pub fn trust_relay(&mut self, relay: NetId) {
        self.relays.insert(relay);
    }

    pub fn post(&mut self, address: Address, ciphertext: Vec<u8>, sender: NetId, day: u32) -> Result<()> {
        if !self.relays.contains(&sender) {
            if let Err(e) = self.limiter.admit(sender, day) {
                self.rejected += 1;
                return Err(e);
            }
        }
        self.boxes.entry(address).or_default().push(Stored { ciphertext, deposit_day: day });
        Ok(())
    }

    pub fn deposit(&mut self, record: DepositRecord, sender: NetId, day: u32) -> Result<()> {
        self.post(record.address, record.ciphertext, sender, day)
    }

    pub fn fetch(&self, address: &Address) -> Vec<Vec<u8>> {
        self.fetch_since(address, 0)
    }

    /// Ciphertexts deposited on or after `day`.
    pub fn fetch_since(&self, address: &Address, day: u32) -> Vec<Vec<u8>> {
        self.fetch_between(address, day, u32::MAX)
    }

    /// Ciphertexts deposited in `[from, to)`.
    pub fn fetch_between(&self, address: &Address, from: u32, to: u32) -> Vec<Vec<u8>> {
        self.boxes
            .get(address)
            .map(|v| v.iter().filter(|s| (from..to).contains(&s.deposit_day)).map(|s| s.ciphertext.clone()).collect())
            .unwrap_or_default()
    }

    /// Drop deposits made before `day`.
    pub fn expire_before(&mut self, day: u32) {
        self.boxes.retain(|_, v| {
            v.retain(|s| s.deposit_day >= day);
            !v.is_empty()
        });
        self.limiter.roll(day);
    }

    pub fn stored_count(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }

    /// Everything the server holds, for audits.
    pub fn scan(&self) -> impl Iterator<Item = (&Address, &Stored)> {
        self.boxes.iter().flat_map(|(a, v)| v.iter().map(move |s| (a, s)))
    }
}
