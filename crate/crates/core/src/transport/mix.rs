//! Batching, shuffling mix server.

use rand::seq::SliceRandom;

use crate::rng::SimRng;
use crate::transport::crypto::CryptoMode;
use crate::transport::mailbox::RateLimiter;
use crate::transport::onion::{peel, DepositRecord, MixEnvelope, MixKeys, Peeled};
use crate::transport::NetId;

/// Honest relays forward everything; the tracking adversary keeps only the
/// traffic of one sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixBehavior {
    Honest,
    KeepOnly(NetId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outgoing {
    Forward(MixEnvelope),
    Deposit(DepositRecord),
}

pub struct MixServer {
    pub position: u8,
    pub net_id: NetId,
    keys: MixKeys,
    mode: CryptoMode,
    threshold: usize,
    buffer: Vec<MixEnvelope>,
    rng: SimRng,
    behavior: MixBehavior,
    ingress: Option<RateLimiter>,
    /// Envelopes that failed to peel.
    pub dropped: u64,
    /// Envelopes refused by the ingress quota.
    pub throttled: u64,
    pub batches: u64,
}

impl MixServer {
    pub fn new(position: u8, net_id: NetId, keys: MixKeys, mode: CryptoMode, threshold: usize, rng: SimRng) -> Self {
        MixServer {
            position,
            net_id,
            keys,
            mode,
            threshold: threshold.max(1),
            buffer: Vec::new(),
            rng,
            behavior: MixBehavior::Honest,
            ingress: None,
            dropped: 0,
            throttled: 0,
            batches: 0,
        }
    }

    pub fn with_behavior(mut self, behavior: MixBehavior) -> Self {
        self.behavior = behavior;
        self
    }

    /// Enforce a per-sender daily quota on arrivals.
    pub fn with_ingress_quota(mut self, quota: u32) -> Self {
        self.ingress = Some(RateLimiter::new(quota));
        self
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.keys.public_bytes()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn receive(&mut self, env: MixEnvelope, from: NetId, day: u32) {
        if let MixBehavior::KeepOnly(target) = self.behavior {
            if from != target {
                return;
            }
        }
        if let Some(l) = self.ingress.as_mut() {
            if l.admit(from, day).is_err() {
                self.throttled += 1;
                return;
            }
        }
        self.buffer.push(env);
    }

    /// Once the buffer holds a full batch, peel every envelope and emit
    /// the whole buffer in uniformly shuffled order.
    pub fn process(&mut self) -> Vec<Outgoing> {
        if self.buffer.len() < self.threshold {
            return Vec::new();
        }
        self.batches += 1;
        let batch = std::mem::take(&mut self.buffer);
        let mut out = Vec::with_capacity(batch.len());
        for env in &batch {
            match peel(env, self.position, &self.keys, self.mode) {
                Ok(Peeled::Forward(e)) => out.push(Outgoing::Forward(e)),
                Ok(Peeled::Deposit(r)) => out.push(Outgoing::Deposit(r)),
                Err(_) => self.dropped += 1,
            }
        }
        out.shuffle(&mut self.rng);
        out
    }
}
