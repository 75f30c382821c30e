//! Layered envelopes for the mix chain.

use rand::{CryptoRng, RngCore};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::error::{Error, Result};
use crate::transport::crypto::{self, digest, CryptoMode};
use crate::transport::mailbox::Address;

pub const WIRE_VERSION: u8 = 1;
const EPH_LEN: usize = 32;

/// What the last mix hands to the mailbox.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepositRecord {
    pub address: Address,
    pub ciphertext: Vec<u8>,
}

impl DepositRecord {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let len = u16::try_from(self.ciphertext.len()).map_err(|_| Error::Wire("ciphertext longer than 65535 bytes".into()))?;
        let mut out = Vec::with_capacity(34 + self.ciphertext.len());
        out.extend_from_slice(&self.address.0);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        Ok(out)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 34 {
            return Err(Error::Wire("deposit record shorter than header".into()));
        }
        let len = usize::from(u16::from_be_bytes([b[32], b[33]]));
        if b.len() != 34 + len {
            return Err(Error::Wire(format!("deposit length field {len} but {} bytes follow", b.len() - 34)));
        }
        Ok(DepositRecord { address: Address(b[..32].try_into().expect("32 bytes")), ciphertext: b[34..].to_vec() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixEnvelope {
    pub layers: u8,
    pub blob: Vec<u8>,
}

impl MixEnvelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.blob.len());
        out.push(WIRE_VERSION);
        out.push(self.layers);
        out.extend_from_slice(&self.blob);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        match b {
            [WIRE_VERSION, layers, rest @ ..] if *layers > 0 => Ok(MixEnvelope { layers: *layers, blob: rest.to_vec() }),
            [v, ..] if *v != WIRE_VERSION => Err(Error::Wire(format!("unknown envelope version {v}"))),
            _ => Err(Error::Wire("truncated envelope".into())),
        }
    }
}

/// Long-term key pair of one mix server.
pub struct MixKeys {
    secret: StaticSecret,
    public: PublicKey,
}

impl MixKeys {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = StaticSecret::random_from_rng(rng);
        let public = PublicKey::from(&secret);
        MixKeys { secret, public }
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.public.to_bytes()
    }
}

fn layer_key(shared: &[u8; 32], eph: &[u8; 32], position: u8) -> [u8; 32] {
    digest(&[b"covi/onion", shared, eph, &[position]])
}

/// Wrap a deposit record for servers `1..=N`; server 1 peels first. In
/// null mode the keys are ignored and only their count matters.
pub fn onion_encrypt<R: RngCore + CryptoRng>(
    record: &DepositRecord,
    servers: &[[u8; 32]],
    mode: CryptoMode,
    rng: &mut R,
) -> Result<MixEnvelope> {
    if servers.is_empty() {
        return Err(Error::config("transport.mix_servers", "need at least one mix server"));
    }
    let layers = u8::try_from(servers.len()).map_err(|_| Error::config("transport.mix_servers", "at most 255 servers"))?;
    let mut blob = record.to_bytes()?;
    for (i, pk) in servers.iter().enumerate().rev() {
        let position = i as u8 + 1;
        blob = match mode {
            CryptoMode::Null => {
                let mut b = Vec::with_capacity(blob.len() + 1);
                b.push(position);
                b.extend_from_slice(&blob);
                b
            }
            CryptoMode::Real => {
                let eph = StaticSecret::random_from_rng(&mut *rng);
                let eph_pub = PublicKey::from(&eph).to_bytes();
                let shared = eph.diffie_hellman(&PublicKey::from(*pk));
                let key = layer_key(shared.as_bytes(), &eph_pub, position);
                let mut b = eph_pub.to_vec();
                b.extend(crypto::seal(&key, &[0u8; 12], &[position], &blob));
                b
            }
        };
    }
    Ok(MixEnvelope { layers, blob })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Peeled {
    Forward(MixEnvelope),
    Deposit(DepositRecord),
}

/// Remove the layer addressed to the server at `position`.
pub fn peel(env: &MixEnvelope, position: u8, keys: &MixKeys, mode: CryptoMode) -> Result<Peeled> {
    if env.layers == 0 {
        return Err(Error::Decrypt);
    }
    let inner = match mode {
        CryptoMode::Null => match env.blob.split_first() {
            Some((&p, rest)) if p == position => rest.to_vec(),
            _ => return Err(Error::Decrypt),
        },
        CryptoMode::Real => {
            if env.blob.len() < EPH_LEN {
                return Err(Error::Decrypt);
            }
            let eph: [u8; 32] = env.blob[..EPH_LEN].try_into().expect("32 bytes");
            let shared = keys.secret.diffie_hellman(&PublicKey::from(eph));
            let key = layer_key(shared.as_bytes(), &eph, position);
            crypto::open(&key, &[0u8; 12], &[position], &env.blob[EPH_LEN..])?
        }
    };
    if env.layers == 1 {
        DepositRecord::from_bytes(&inner).map(Peeled::Deposit).map_err(|_| Error::Decrypt)
    } else {
        Ok(Peeled::Forward(MixEnvelope { layers: env.layers - 1, blob: inner }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    fn record() -> DepositRecord {
        DepositRecord { address: Address([3; 32]), ciphertext: b"inner".to_vec() }
    }

    #[test]
    fn record_wire_format() {
        let b = record().to_bytes().unwrap();
        assert_eq!(b.len(), 32 + 2 + 5);
        assert_eq!(&b[32..34], &[0, 5]);
        assert_eq!(DepositRecord::from_bytes(&b).unwrap(), record());
        assert!(DepositRecord::from_bytes(&b[..36]).is_err());
    }

    #[test]
    fn envelope_wire_format() {
        let e = MixEnvelope { layers: 2, blob: vec![9, 9] };
        assert_eq!(e.to_bytes(), vec![1, 2, 9, 9]);
        assert_eq!(MixEnvelope::from_bytes(&e.to_bytes()).unwrap(), e);
        assert!(MixEnvelope::from_bytes(&[2, 1, 0]).is_err());
        assert!(MixEnvelope::from_bytes(&[1]).is_err());
    }

    #[test]
    fn zero_servers_is_config_error() {
        let mut rng = StreamKey::new(0, Purpose::Mix).rng();
        assert!(matches!(onion_encrypt(&record(), &[], CryptoMode::Real, &mut rng), Err(Error::Config { .. })));
    }

    #[test]
    fn out_of_order_peel_fails() {
        let mut rng = StreamKey::new(0, Purpose::Mix).rng();
        let keys: Vec<MixKeys> = (0..3).map(|_| MixKeys::generate(&mut rng)).collect();
        let pks: Vec<[u8; 32]> = keys.iter().map(MixKeys::public_bytes).collect();
        for mode in [CryptoMode::Real, CryptoMode::Null] {
            let env = onion_encrypt(&record(), &pks, mode, &mut rng).unwrap();
            assert!(peel(&env, 2, &keys[1], mode).is_err());
            let Peeled::Forward(e1) = peel(&env, 1, &keys[0], mode).unwrap() else { panic!() };
            assert!(peel(&e1, 3, &keys[2], mode).is_err());
        }
    }
}
