//! Private risk messaging: per-encounter contact tokens, mailbox
//! derivation, onion-wrapped delivery through batching mix servers, replay
//! protection and canary-based drop detection.
//!
//! Wire formats (all integers big-endian):
//!
//! ```text
//! envelope       = version:u8 (=1) | layers:u8 | blob
//! layer (real)   = ephemeral_pubkey:32 | aead(blob')
//! layer (null)   = position:u8 | blob'
//! deposit record = address:32 | len:u16 | ciphertext[len]
//! ```

pub mod actors;
pub mod crypto;
pub mod mailbox;
pub mod message;
pub mod mix;
pub mod network;
pub mod onion;
pub mod phone;
pub mod tokens;

pub use crypto::CryptoMode;
pub use mailbox::{derive_mailbox, Address, MailboxKey, MailboxServer, RateLimiter};
pub use message::{ReplayGuard, RiskUpdateMessage};
pub use mix::{MixBehavior, MixServer, Outgoing};
pub use network::MixNetwork;
pub use onion::{onion_encrypt, peel, DepositRecord, MixEnvelope, MixKeys, Peeled};
pub use phone::{CanaryVerdict, PhoneTransport, ReceivedUpdate};
pub use tokens::{derive_tokens, exchange_tokens, ContactKeys, ContactTokenPair, Role, Token};

/// Address of a network participant as seen by servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct NetId(pub u64);

pub const SECONDS_PER_DAY: u64 = 86_400;
