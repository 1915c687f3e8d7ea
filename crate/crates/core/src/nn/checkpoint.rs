//! Binary checkpoints: `HGCK`, format version (u32), architecture
//! fingerprint (u64), parameter count (u64), init seed (u64), then the
//! parameters as little-endian `f64`.

use super::{NetworkSpec, NetworkState, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HGCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

impl NetworkState {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let params = self.params();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec().fingerprint().to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.init_seed().to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Restore parameters saved for `spec`; the fingerprint must match.
    pub fn from_checkpoint(spec: NetworkSpec, bytes: &[u8]) -> Result<Self, NnError> {
        let bad = |m: String| NnError::Checkpoint(m);
        if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        if u64_at(8) != spec.fingerprint() {
            return Err(bad("architecture fingerprint does not match".into()));
        }
        let count = u64_at(16) as usize;
        let init_seed = u64_at(24);
        if count != spec.param_count() || bytes.len() != HEADER_LEN + 8 * count {
            return Err(bad(format!("expected {} parameters", spec.param_count())));
        }
        let params = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        NetworkState::from_params(spec, params, init_seed)
    }
}
