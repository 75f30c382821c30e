//! Per-encounter Diffie-Hellman agreement of directional contact tokens.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::error::{Error, Result};
use crate::transport::crypto::hmac;

/// 256-bit directional secret.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token(pub [u8; 32]);

impl std::fmt::Debug for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Token({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

/// `token_ab` carries messages from initiator to responder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactTokenPair {
    pub token_ab: Token,
    pub token_ba: Token,
}

impl ContactTokenPair {
    pub fn outgoing(&self, role: Role) -> Token {
        match role {
            Role::Initiator => self.token_ab,
            Role::Responder => self.token_ba,
        }
    }

    pub fn incoming(&self, role: Role) -> Token {
        match role {
            Role::Initiator => self.token_ba,
            Role::Responder => self.token_ab,
        }
    }

    /// Tokens from a shared seed, skipping the key exchange. Used by the
    /// simulator's null-crypto path.
    pub fn from_seed(seed: &[u8]) -> Self {
        ContactTokenPair {
            token_ab: Token(hmac(seed, &[b"covi/token/ab"])),
            token_ba: Token(hmac(seed, &[b"covi/token/ba"])),
        }
    }
}

/// Fresh ephemeral key pair for one encounter.
pub struct ContactKeys {
    secret: StaticSecret,
    public: PublicKey,
}

impl ContactKeys {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = StaticSecret::random_from_rng(rng);
        let public = PublicKey::from(&secret);
        ContactKeys { secret, public }
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.public.to_bytes()
    }
}

/// Derive the pair from our keys and the bytes the peer broadcast. Short
/// keys and low-order points abort the exchange.
pub fn derive_tokens(own: &ContactKeys, role: Role, peer_public: &[u8]) -> Result<ContactTokenPair> {
    let peer: [u8; 32] = peer_public.try_into().map_err(|_| Error::MalformedKey)?;
    let shared = own.secret.diffie_hellman(&PublicKey::from(peer));
    if !shared.was_contributory() {
        return Err(Error::MalformedKey);
    }
    let own_pub = own.public_bytes();
    let (init, resp) = match role {
        Role::Initiator => (own_pub, peer),
        Role::Responder => (peer, own_pub),
    };
    let s = shared.as_bytes();
    Ok(ContactTokenPair {
        token_ab: Token(hmac(s, &[b"covi/token/ab", &init, &resp])),
        token_ba: Token(hmac(s, &[b"covi/token/ba", &init, &resp])),
    })
}

/// Run both sides of one exchange.
pub fn exchange_tokens(initiator: &ContactKeys, responder: &ContactKeys) -> Result<(ContactTokenPair, ContactTokenPair)> {
    let a = derive_tokens(initiator, Role::Initiator, &responder.public_bytes())?;
    let b = derive_tokens(responder, Role::Responder, &initiator.public_bytes())?;
    Ok((a, b))
}
