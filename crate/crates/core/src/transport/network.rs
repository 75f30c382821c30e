//! Mix chain and mailbox stepped in virtual time.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::config::TransportConfig;
use crate::error::Result;
use crate::rng::{Purpose, StreamKey};
use crate::transport::crypto::CryptoMode;
use crate::transport::mailbox::MailboxServer;
use crate::transport::mix::{MixBehavior, MixServer, Outgoing};
use crate::transport::onion::{onion_encrypt, DepositRecord, MixEnvelope, MixKeys};
use crate::transport::{NetId, SECONDS_PER_DAY};

/// Network id base for relays; phones use small ids.
pub const RELAY_NET_BASE: u64 = 1 << 48;
const HOP_LATENCY_SECS: u64 = 60;

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Arrival {
    at: u64,
    seq: u64,
    hop: usize,
    from: NetId,
    bytes: Vec<u8>,
}

pub struct MixNetwork {
    servers: Vec<MixServer>,
    pub mailbox: MailboxServer,
    mode: CryptoMode,
    queue: BinaryHeap<Reverse<Arrival>>,
    seq: u64,
    now: u64,
    pub deposited: u64,
    pub refused_deposits: u64,
}

impl MixNetwork {
    pub fn new(cfg: &TransportConfig, seed: u64) -> Self {
        let mode = CryptoMode::from_null_flag(cfg.null_crypto);
        let key = StreamKey::new(seed, Purpose::Mix);
        let servers = (0..cfg.mix_servers)
            .map(|i| {
                let pos = i as u8 + 1;
                let keys = MixKeys::generate(&mut key.with(u64::from(i)).with(1).rng());
                let s = MixServer::new(pos, NetId(RELAY_NET_BASE + u64::from(i)), keys, mode, cfg.batch_threshold as usize, key.with(u64::from(i)).with(2).rng());
                if i == 0 {
                    s.with_ingress_quota(cfg.daily_post_quota)
                } else {
                    s
                }
            })
            .collect::<Vec<_>>();
        let mut mailbox = MailboxServer::new(cfg.daily_post_quota);
        if let Some(last) = servers.last() {
            mailbox.trust_relay(last.net_id);
        }
        MixNetwork { servers, mailbox, mode, queue: BinaryHeap::new(), seq: 0, now: 0, deposited: 0, refused_deposits: 0 }
    }

    /// Make the first server a tracking adversary.
    pub fn set_first_behavior(&mut self, behavior: MixBehavior) {
        if let Some(first) = self.servers.first_mut() {
            *first = std::mem::replace(first, placeholder()).with_behavior(behavior);
        }
    }

    pub fn mode(&self) -> CryptoMode {
        self.mode
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn server_keys(&self) -> Vec<[u8; 32]> {
        self.servers.iter().map(MixServer::public_bytes).collect()
    }

    pub fn servers(&self) -> &[MixServer] {
        &self.servers
    }

    pub fn wrap<R: rand::RngCore + rand::CryptoRng>(&self, record: &DepositRecord, rng: &mut R) -> Result<MixEnvelope> {
        onion_encrypt(record, &self.server_keys(), self.mode, rng)
    }

    /// Hand an envelope to the first server at virtual time `at`.
    pub fn submit(&mut self, env: &MixEnvelope, from: NetId, at: u64) {
        self.push(at.max(self.now), 0, from, env.to_bytes());
    }

    fn push(&mut self, at: u64, hop: usize, from: NetId, bytes: Vec<u8>) {
        self.seq += 1;
        self.queue.push(Reverse(Arrival { at, seq: self.seq, hop, from, bytes }));
    }

    /// Deliver every arrival due by `until` and advance the clock.
    pub fn run_until(&mut self, until: u64) {
        while let Some(Reverse(next)) = self.queue.peek() {
            if next.at > until {
                break;
            }
            let Reverse(a) = self.queue.pop().expect("peeked");
            self.now = a.at;
            let day = (a.at / SECONDS_PER_DAY) as u32;
            let Ok(env) = MixEnvelope::from_bytes(&a.bytes) else {
                self.servers[a.hop].dropped += 1;
                continue;
            };
            let server = &mut self.servers[a.hop];
            server.receive(env, a.from, day);
            let relay = server.net_id;
            for out in server.process() {
                match out {
                    Outgoing::Forward(e) => self.push(a.at + HOP_LATENCY_SECS, a.hop + 1, relay, e.to_bytes()),
                    Outgoing::Deposit(r) => match self.mailbox.deposit(r, relay, day) {
                        Ok(()) => self.deposited += 1,
                        Err(_) => self.refused_deposits += 1,
                    },
                }
            }
        }
        self.now = self.now.max(until);
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len() + self.servers.iter().map(MixServer::buffered).sum::<usize>()
    }

    pub fn dropped(&self) -> u64 {
        self.servers.iter().map(|s| s.dropped).sum()
    }
}

fn placeholder() -> MixServer {
    let key = StreamKey::new(0, Purpose::Mix);
    MixServer::new(0, NetId(0), MixKeys::generate(&mut key.rng()), CryptoMode::Null, 1, key.rng())
}
