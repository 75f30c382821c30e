//! Phone-side protocol state: tokens per contact, counters, mailbox
//! fetching and canaries.

use std::collections::BTreeMap;

use rand::{CryptoRng, Rng, RngCore};

use crate::error::Result;
use crate::risk::{ContactHandle, RiskLevel};
use crate::transport::crypto::CryptoMode;
use crate::transport::mailbox::{derive_mailbox, Address, MailboxServer};
use crate::transport::message::{ReplayGuard, RiskUpdateMessage};
use crate::transport::network::MixNetwork;
use crate::transport::onion::DepositRecord;
use crate::transport::tokens::{ContactTokenPair, Role, Token};
use crate::transport::{NetId, SECONDS_PER_DAY};

pub const CANARY_TIMEOUT_SECS: u64 = 2 * SECONDS_PER_DAY;
/// Days after the encounter that a contact's tokens are kept.
const TOKEN_RETENTION_DAYS: u32 = 15;

#[derive(Debug, Clone, Copy)]
struct Incoming {
    token: Token,
    handle: ContactHandle,
    day: u32,
}

#[derive(Debug, Clone, Copy)]
struct Canary {
    token: Token,
    sent_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanaryVerdict {
    Delivered,
    Pending,
    Lost,
}

/// An authenticated, fresh update for a logged contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceivedUpdate {
    pub handle: ContactHandle,
    pub day: u32,
    pub message: RiskUpdateMessage,
}

pub struct PhoneTransport {
    pub net_id: NetId,
    mode: CryptoMode,
    outgoing: BTreeMap<u32, Vec<Token>>,
    incoming: BTreeMap<Address, Incoming>,
    counters: BTreeMap<Token, u32>,
    guard: ReplayGuard,
    canaries: BTreeMap<Address, Canary>,
    fetched_through: u32,
    pub alarms: u64,
    pub rejected_auth: u64,
}

impl PhoneTransport {
    pub fn new(net_id: NetId, mode: CryptoMode) -> Self {
        PhoneTransport {
            net_id,
            mode,
            outgoing: BTreeMap::new(),
            incoming: BTreeMap::new(),
            counters: BTreeMap::new(),
            guard: ReplayGuard::default(),
            canaries: BTreeMap::new(),
            fetched_through: 0,
            alarms: 0,
            rejected_auth: 0,
        }
    }

    pub fn add_contact(&mut self, handle: ContactHandle, day: u32, pair: &ContactTokenPair, role: Role) {
        self.outgoing.entry(day).or_default().push(pair.outgoing(role));
        let token = pair.incoming(role);
        let (address, _) = derive_mailbox(&token);
        self.incoming.insert(address, Incoming { token, handle, day });
    }

    pub fn contacts_on(&self, day: u32) -> usize {
        self.outgoing.get(&day).map_or(0, Vec::len)
    }

    /// Seal and onion-wrap one message per contact of `day`, each
    /// dispatched after an independent uniform delay of up to a day.
    /// Returns the delays in days.
    pub fn send_risk_update<R: RngCore + CryptoRng>(
        &mut self,
        net: &mut MixNetwork,
        day: u32,
        new_level: RiskLevel,
        prior_level: RiskLevel,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let Some(tokens) = self.outgoing.get(&day) else {
            return Ok(Vec::new());
        };
        let mut delays = Vec::with_capacity(tokens.len());
        for token in tokens {
            let counter = self.counters.entry(*token).or_insert(0);
            *counter += 1;
            let msg = RiskUpdateMessage { day_of_encounter: day, new_level, prior_level, counter: *counter };
            let (address, _) = derive_mailbox(token);
            let env = net.wrap(&DepositRecord { address, ciphertext: msg.seal(token, self.mode) }, rng)?;
            let delay: f64 = rng.gen();
            net.submit(&env, self.net_id, now + (delay * SECONDS_PER_DAY as f64) as u64);
            delays.push(delay);
        }
        Ok(delays)
    }

    /// Pull deposits made before day `until` that were not fetched yet.
    pub fn fetch(&mut self, mailbox: &MailboxServer, until: u32) -> Vec<ReceivedUpdate> {
        let from = self.fetched_through;
        self.fetched_through = until.max(from);
        let mut out = Vec::new();
        let pulled: Vec<(Incoming, Vec<u8>)> = self
            .incoming
            .iter()
            .flat_map(|(address, inc)| mailbox.fetch_between(address, from, until).into_iter().map(move |ct| (*inc, ct)))
            .collect();
        for (inc, ct) in pulled {
            self.receive(&ct, &inc, &mut out);
        }
        out
    }

    fn receive(&mut self, ct: &[u8], inc: &Incoming, out: &mut Vec<ReceivedUpdate>) {
        match RiskUpdateMessage::open(ct, &inc.token, self.mode) {
            Ok(m) if m.day_of_encounter == inc.day => {
                if self.guard.accept(&inc.token, m.counter) {
                    out.push(ReceivedUpdate { handle: inc.handle, day: inc.day, message: m });
                }
            }
            _ => self.rejected_auth += 1,
        }
    }

    /// Offer a raw ciphertext for a known address, as a replaying
    /// adversary would.
    pub fn deliver_raw(&mut self, address: &Address, ct: &[u8]) -> Option<ReceivedUpdate> {
        let inc = *self.incoming.get(address)?;
        let mut out = Vec::new();
        self.receive(ct, &inc, &mut out);
        out.pop()
    }

    pub fn replays_rejected(&self) -> u64 {
        self.guard.rejected
    }

    /// Drop tokens of contacts that left the window.
    pub fn purge(&mut self, today: u32) {
        let keep = |d: u32| d + TOKEN_RETENTION_DAYS >= today;
        let stale: Vec<u32> = self.outgoing.keys().copied().filter(|d| !keep(*d)).collect();
        for d in stale {
            for t in self.outgoing.remove(&d).unwrap_or_default() {
                self.counters.remove(&t);
            }
        }
        let guard = &mut self.guard;
        self.incoming.retain(|_, inc| {
            let k = keep(inc.day);
            if !k {
                guard.forget(&inc.token);
            }
            k
        });
    }

    /// Send a self-addressed message through the whole chain.
    pub fn send_canary<R: RngCore + CryptoRng>(&mut self, net: &mut MixNetwork, now: u64, rng: &mut R) -> Result<Address> {
        let mut t = [0u8; 32];
        rng.fill_bytes(&mut t);
        let token = Token(t);
        let (address, _) = derive_mailbox(&token);
        let msg = RiskUpdateMessage { day_of_encounter: (now / SECONDS_PER_DAY) as u32, new_level: RiskLevel::default(), prior_level: RiskLevel::default(), counter: 1 };
        let env = net.wrap(&DepositRecord { address, ciphertext: msg.seal(&token, self.mode) }, rng)?;
        let delay: f64 = rng.gen();
        let at = now + (delay * SECONDS_PER_DAY as f64) as u64;
        net.submit(&env, self.net_id, at);
        self.canaries.insert(address, Canary { token, sent_at: now });
        Ok(address)
    }

    /// Resolve pending canaries: delivered if found, lost after the
    /// timeout. Every loss raises the alarm counter.
    pub fn canary_check(&mut self, mailbox: &MailboxServer, now: u64) -> Vec<CanaryVerdict> {
        let mut verdicts = Vec::new();
        let mode = self.mode;
        let mut lost = 0;
        self.canaries.retain(|address, c| {
            let found = mailbox.fetch(address).iter().any(|ct| RiskUpdateMessage::open(ct, &c.token, mode).is_ok());
            let v = if found {
                CanaryVerdict::Delivered
            } else if now.saturating_sub(c.sent_at) > CANARY_TIMEOUT_SECS {
                lost += 1;
                CanaryVerdict::Lost
            } else {
                CanaryVerdict::Pending
            };
            verdicts.push(v);
            v == CanaryVerdict::Pending
        });
        self.alarms += lost;
        verdicts
    }

    pub fn pending_canaries(&self) -> usize {
        self.canaries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TransportConfig;
    use crate::rng::{Purpose, StreamKey};
    use crate::transport::mix::MixBehavior;
    use crate::transport::tokens::{exchange_tokens, ContactKeys};

    fn lvl(v: u8) -> RiskLevel {
        RiskLevel::new(v).unwrap()
    }

    fn pair_of_phones(mode: CryptoMode, contacts: usize) -> (PhoneTransport, PhoneTransport) {
        let mut rng = StreamKey::new(5, Purpose::Pseudonym).rng();
        let mut alice = PhoneTransport::new(NetId(1), mode);
        let mut bob = PhoneTransport::new(NetId(2), mode);
        for i in 0..contacts {
            let a = ContactKeys::generate(&mut rng);
            let b = ContactKeys::generate(&mut rng);
            let (pa, pb) = exchange_tokens(&a, &b).unwrap();
            alice.add_contact(ContactHandle(i as u64), 3, &pa, Role::Initiator);
            bob.add_contact(ContactHandle(100 + i as u64), 3, &pb, Role::Responder);
        }
        (alice, bob)
    }

    #[test]
    fn end_to_end_update() {
        for null in [true, false] {
            let cfg = TransportConfig { null_crypto: null, batch_threshold: 1, ..TransportConfig::default() };
            let mode = CryptoMode::from_null_flag(null);
            let mut net = MixNetwork::new(&cfg, 3);
            let (mut alice, mut bob) = pair_of_phones(mode, 2);
            let mut rng = StreamKey::new(6, Purpose::MessageDelay).rng();
            let now = 4 * SECONDS_PER_DAY;
            let delays = alice.send_risk_update(&mut net, 3, lvl(9), lvl(2), now, &mut rng).unwrap();
            assert_eq!(delays.len(), 2);
            net.run_until(now + SECONDS_PER_DAY + 600);
            let got = bob.fetch(&net.mailbox, 6);
            assert_eq!(got.len(), 2);
            assert!(got.iter().all(|u| u.message.new_level == lvl(9) && u.day == 3));
            assert!(bob.fetch(&net.mailbox, 6).is_empty());
        }
    }

    #[test]
    fn no_contacts_no_messages() {
        let cfg = TransportConfig::default();
        let mut net = MixNetwork::new(&cfg, 3);
        let (mut alice, _) = pair_of_phones(CryptoMode::Null, 1);
        let mut rng = StreamKey::new(6, Purpose::MessageDelay).rng();
        assert!(alice.send_risk_update(&mut net, 9, lvl(9), lvl(2), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn canary_honest_and_attacked() {
        let cfg = TransportConfig { batch_threshold: 1, ..TransportConfig::default() };
        for attacked in [false, true] {
            let mut net = MixNetwork::new(&cfg, 3);
            if attacked {
                net.set_first_behavior(MixBehavior::KeepOnly(NetId(77)));
            }
            let mut p = PhoneTransport::new(NetId(1), CryptoMode::Null);
            let mut rng = StreamKey::new(6, Purpose::MessageDelay).rng();
            p.send_canary(&mut net, 0, &mut rng).unwrap();
            net.run_until(SECONDS_PER_DAY + 600);
            let v = p.canary_check(&net.mailbox, SECONDS_PER_DAY + 600);
            let v2 = p.canary_check(&net.mailbox, 3 * SECONDS_PER_DAY);
            if attacked {
                assert_eq!((v, v2), (vec![CanaryVerdict::Pending], vec![CanaryVerdict::Lost]));
                assert_eq!(p.alarms, 1);
            } else {
                assert_eq!(v, vec![CanaryVerdict::Delivered]);
                assert_eq!(p.alarms, 0);
            }
        }
    }
}
