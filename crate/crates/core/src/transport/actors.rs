//! The mix chain and mailbox as threads talking length-prefixed frames over
//! loopback TCP. Each actor owns its state; nothing is shared.
//!
//! Frame: `len:u32 | kind:u8 | body[len - 1]`.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread::{self, JoinHandle};

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::risk::RiskLevel;
use crate::rng::{Purpose, StreamKey};
use crate::transport::crypto::CryptoMode;
use crate::transport::mailbox::{derive_mailbox, Address, MailboxServer};
use crate::transport::message::RiskUpdateMessage;
use crate::transport::mix::{MixBehavior, MixServer, Outgoing};
use crate::transport::network::RELAY_NET_BASE;
use crate::transport::onion::{onion_encrypt, DepositRecord, MixEnvelope, MixKeys};
use crate::transport::tokens::{exchange_tokens, ContactKeys, ContactTokenPair, Token};
use crate::transport::NetId;

const ENVELOPE: u8 = 1;
const DEPOSIT: u8 = 2;
const FETCH: u8 = 3;
const MESSAGES: u8 = 4;
const BARRIER: u8 = 5;
const ACK: u8 = 6;
const SHUTDOWN: u8 = 7;

fn write_frame(w: &mut impl Write, kind: u8, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len() + 1).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too long"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[kind])?;
    w.write_all(body)?;
    w.flush()
}

fn read_frame(r: &mut impl Read) -> io::Result<(u8, Vec<u8>)> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "empty frame"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let kind = buf.remove(0);
    Ok((kind, buf))
}

fn envelope_body(from: NetId, env: &MixEnvelope) -> Vec<u8> {
    let mut b = from.0.to_be_bytes().to_vec();
    b.extend(env.to_bytes());
    b
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MixStats {
    pub position: u8,
    pub batches: u64,
    pub dropped: u64,
}

fn mix_actor(listener: TcpListener, downstream: SocketAddr, mut server: MixServer) -> io::Result<MixStats> {
    let (mut up, _) = listener.accept()?;
    up.set_nodelay(true)?;
    let mut down = TcpStream::connect(downstream)?;
    down.set_nodelay(true)?;
    loop {
        let (kind, body) = read_frame(&mut up)?;
        match kind {
            ENVELOPE if body.len() >= 8 => {
                let from = NetId(u64::from_be_bytes(body[..8].try_into().expect("8 bytes")));
                match MixEnvelope::from_bytes(&body[8..]) {
                    Ok(env) => server.receive(env, from, 0),
                    Err(_) => server.dropped += 1,
                }
                for out in server.process() {
                    match out {
                        Outgoing::Forward(e) => write_frame(&mut down, ENVELOPE, &envelope_body(server.net_id, &e))?,
                        Outgoing::Deposit(r) => {
                            let bytes = r.to_bytes().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                            write_frame(&mut down, DEPOSIT, &bytes)?
                        }
                    }
                }
            }
            BARRIER => {
                write_frame(&mut down, BARRIER, &[])?;
                let (k, _) = read_frame(&mut down)?;
                if k != ACK {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, "expected ack"));
                }
                write_frame(&mut up, ACK, &[])?;
            }
            SHUTDOWN => {
                write_frame(&mut down, SHUTDOWN, &[])?;
                return Ok(MixStats { position: server.position, batches: server.batches, dropped: server.dropped });
            }
            _ => server.dropped += 1,
        }
    }
}

enum MailboxEvent {
    Frame(usize, u8, Vec<u8>),
    Closed,
}

fn mailbox_actor(listener: TcpListener, connections: usize, relay: NetId, quota: u32) -> io::Result<Vec<Address>> {
    let (tx, rx) = mpsc::channel();
    let mut writers = Vec::new();
    let mut readers = Vec::new();
    for id in 0..connections {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        writers.push(stream.try_clone()?);
        let tx = tx.clone();
        let mut stream = stream;
        readers.push(thread::spawn(move || loop {
            match read_frame(&mut stream) {
                Ok((kind, body)) => {
                    let stop = kind == SHUTDOWN;
                    if tx.send(MailboxEvent::Frame(id, kind, body)).is_err() || stop {
                        break;
                    }
                }
                Err(_) => {
                    let _ = tx.send(MailboxEvent::Closed);
                    break;
                }
            }
        }));
    }
    drop(tx);
    let mut mailbox = MailboxServer::new(quota);
    mailbox.trust_relay(relay);
    let mut order = Vec::new();
    let mut open = connections;
    while open > 0 {
        let Ok(ev) = rx.recv() else { break };
        match ev {
            MailboxEvent::Frame(_, DEPOSIT, body) => {
                if let Ok(r) = DepositRecord::from_bytes(&body) {
                    order.push(r.address);
                    let _ = mailbox.deposit(r, relay, 0);
                }
            }
            MailboxEvent::Frame(id, FETCH, body) if body.len() == 32 => {
                let address = Address(body[..32].try_into().expect("32 bytes"));
                let msgs = mailbox.fetch(&address);
                let mut reply = (msgs.len() as u32).to_be_bytes().to_vec();
                for m in msgs {
                    reply.extend((m.len() as u16).to_be_bytes());
                    reply.extend(m);
                }
                write_frame(&mut writers[id], MESSAGES, &reply)?;
            }
            MailboxEvent::Frame(id, BARRIER, _) => write_frame(&mut writers[id], ACK, &[])?,
            MailboxEvent::Frame(_, SHUTDOWN, _) | MailboxEvent::Closed => open -= 1,
            MailboxEvent::Frame(..) => {}
        }
    }
    for r in readers {
        let _ = r.join();
    }
    Ok(order)
}

fn fetch(stream: &mut TcpStream, address: &Address) -> Result<Vec<Vec<u8>>> {
    write_frame(stream, FETCH, &address.0)?;
    let (kind, body) = read_frame(stream)?;
    if kind != MESSAGES || body.len() < 4 {
        return Err(Error::Wire("bad fetch reply".into()));
    }
    let n = u32::from_be_bytes(body[..4].try_into().expect("4 bytes")) as usize;
    let mut out = Vec::with_capacity(n);
    let mut at = 4;
    for _ in 0..n {
        let len = usize::from(u16::from_be_bytes([body[at], body[at + 1]]));
        out.push(body[at + 2..at + 2 + len].to_vec());
        at += 2 + len;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub servers: usize,
    pub batch_threshold: usize,
    pub null_crypto: bool,
    pub messages: usize,
    pub canaries: usize,
    pub drop_attack: bool,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions { servers: 3, batch_threshold: 8, null_crypto: true, messages: 100, canaries: 4, drop_attack: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub messages_sent: usize,
    pub messages_delivered: usize,
    pub canaries_sent: usize,
    pub canaries_delivered: usize,
    pub alarms: usize,
    pub mixes: Vec<MixStats>,
    /// Rank correlation between submission order and deposit order.
    pub order_correlation: f64,
    /// Share of messages deposited at their submission position.
    pub fixed_points: f64,
    /// Deposit order as short address prefixes.
    pub transcript: Vec<String>,
}

fn spearman(xs: &[usize]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let d2: f64 = xs.iter().enumerate().map(|(i, &x)| (i as f64 - x as f64).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Spin up the chain on loopback, push scripted updates and canaries,
/// then fetch everything back. Canaries are topped up so the honest chain
/// only ever forwards full batches.
pub fn run_loopback_demo(opts: &DemoOptions) -> Result<DemoReport> {
    if opts.servers == 0 {
        return Err(Error::config("servers", "need at least one mix server"));
    }
    let mode = CryptoMode::from_null_flag(opts.null_crypto);
    let threshold = opts.batch_threshold.max(1);
    let total = opts.messages + opts.canaries;
    let canaries = opts.canaries + (threshold - total % threshold) % threshold;
    let key = StreamKey::new(opts.seed, Purpose::Mix);
    let mut rng = key.with(0xDE40).rng();

    let mailbox_listener = TcpListener::bind("127.0.0.1:0")?;
    let mailbox_addr = mailbox_listener.local_addr()?;
    let listeners: Vec<TcpListener> = (0..opts.servers).map(|_| TcpListener::bind("127.0.0.1:0")).collect::<io::Result<_>>()?;
    let addrs: Vec<SocketAddr> = listeners.iter().map(TcpListener::local_addr).collect::<io::Result<_>>()?;

    let target = NetId(1);
    let mut servers = Vec::new();
    for i in 0..opts.servers {
        let keys = MixKeys::generate(&mut key.with(i as u64).with(1).rng());
        let mut s = MixServer::new(i as u8 + 1, NetId(RELAY_NET_BASE + i as u64), keys, mode, threshold, key.with(i as u64).with(2).rng());
        if i == 0 && opts.drop_attack {
            s = s.with_behavior(MixBehavior::KeepOnly(target));
        }
        servers.push(s);
    }
    let pks: Vec<[u8; 32]> = servers.iter().map(MixServer::public_bytes).collect();
    let relay = servers.last().expect("non-empty").net_id;

    let mailbox = thread::spawn(move || mailbox_actor(mailbox_listener, 2, relay, 1000));
    let mut mixes: Vec<JoinHandle<io::Result<MixStats>>> = Vec::new();
    for (i, (l, s)) in listeners.into_iter().zip(servers).enumerate() {
        let down = addrs.get(i + 1).copied().unwrap_or(mailbox_addr);
        mixes.push(thread::spawn(move || mix_actor(l, down, s)));
    }

    let mut entry = TcpStream::connect(addrs[0])?;
    entry.set_nodelay(true)?;
    let mut client = TcpStream::connect(mailbox_addr)?;
    client.set_nodelay(true)?;

    // Message i goes from phone i+1 to its contact; canaries come from
    // phone 0, which the adversary does not follow.
    let mut expected: Vec<(Token, Address, usize)> = Vec::new();
    for i in 0..opts.messages + canaries {
        let is_canary = i >= opts.messages;
        let token = if is_canary {
            let mut t = [0u8; 32];
            rng.fill_bytes(&mut t);
            Token(t)
        } else if opts.null_crypto {
            ContactTokenPair::from_seed(&(opts.seed ^ i as u64).to_be_bytes()).token_ab
        } else {
            let a = ContactKeys::generate(&mut rng);
            let b = ContactKeys::generate(&mut rng);
            exchange_tokens(&a, &b)?.0.token_ab
        };
        let (address, _) = derive_mailbox(&token);
        let msg = RiskUpdateMessage { day_of_encounter: 0, new_level: RiskLevel::new((i % 16) as u8)?, prior_level: RiskLevel::default(), counter: 1 };
        let env = onion_encrypt(&DepositRecord { address, ciphertext: msg.seal(&token, mode) }, &pks, mode, &mut rng)?;
        let from = if is_canary { NetId(0) } else { NetId(i as u64 + 1) };
        write_frame(&mut entry, ENVELOPE, &envelope_body(from, &env))?;
        expected.push((token, address, i));
    }
    write_frame(&mut entry, BARRIER, &[])?;
    let (k, _) = read_frame(&mut entry)?;
    if k != ACK {
        return Err(Error::Wire("barrier not acknowledged".into()));
    }

    let mut delivered = 0;
    let mut canaries_delivered = 0;
    for (token, address, i) in &expected {
        let ok = fetch(&mut client, address)?.iter().any(|ct| RiskUpdateMessage::open(ct, token, mode).is_ok());
        if ok {
            if *i >= opts.messages {
                canaries_delivered += 1;
            } else {
                delivered += 1;
            }
        }
    }
    write_frame(&mut entry, SHUTDOWN, &[])?;
    write_frame(&mut client, SHUTDOWN, &[])?;

    let mut stats = Vec::new();
    for m in mixes {
        stats.push(m.join().map_err(|_| Error::Wire("mix actor panicked".into()))??);
    }
    let order = mailbox.join().map_err(|_| Error::Wire("mailbox actor panicked".into()))??;
    let index_of: std::collections::BTreeMap<Address, usize> = expected.iter().map(|(_, a, i)| (*a, *i)).collect();
    let ranks: Vec<usize> = order.iter().filter_map(|a| index_of.get(a).copied()).collect();
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let dense: Vec<usize> = ranks.iter().map(|r| sorted.binary_search(r).expect("present")).collect();

    Ok(DemoReport {
        messages_sent: opts.messages,
        messages_delivered: delivered,
        canaries_sent: canaries,
        canaries_delivered,
        alarms: canaries - canaries_delivered,
        mixes: stats,
        order_correlation: spearman(&dense),
        fixed_points: dense.iter().enumerate().filter(|(i, r)| i == *r).count() as f64 / dense.len().max(1) as f64,
        transcript: order.iter().map(|a| a.0[..4].iter().map(|b| format!("{b:02x}")).collect()).collect(),
    })
}
