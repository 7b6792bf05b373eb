//! Flat binary snapshots of network parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SEEPARAM"
//! version      u32      1
//! kind         u8       0 = exploitation, 1 = exploration
//! env name     u16 length + UTF-8 bytes
//! obs_dim      u32
//! action_count u32
//! hidden       u32 count + u32 per layer
//! probe_count  u32      0 for exploitation snapshots
//! param_count  u64
//! params       param_count x f32
//! ```
//!
//! Exploration parameters start with the probe bank (`probe_count x obs_dim`),
//! followed by the MLP weights.

use std::path::Path;

use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::exploit::DuelingArch;
use crate::explore::ExplorationArch;
use crate::nn::ParameterVector;
use crate::replay::ByteReader;

const MAGIC: &[u8; 8] = b"SEEPARAM";
const VERSION: u32 = 1;
const MAX_LAYERS: usize = 64;
const MAX_WIDTH: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Exploit,
    Explore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub env: EnvName,
    pub hidden_dims: Vec<usize>,
    pub probe_count: usize,
    pub params: ParameterVector<f32>,
}

impl Snapshot {
    pub fn exploit(env: EnvName, arch: &DuelingArch, params: &ParameterVector<f32>) -> Self {
        Self {
            kind: SnapshotKind::Exploit,
            env,
            hidden_dims: arch.mlp.hidden_dims.clone(),
            probe_count: 0,
            params: params.clone(),
        }
    }

    pub fn explore(env: EnvName, arch: &ExplorationArch, params: &ParameterVector<f32>) -> Self {
        Self {
            kind: SnapshotKind::Explore,
            env,
            hidden_dims: arch.mlp.hidden_dims.clone(),
            probe_count: arch.probe_count,
            params: params.clone(),
        }
    }

    pub fn exploit_arch(&self) -> Result<DuelingArch> {
        let spec = self.env.spec();
        DuelingArch::new(spec.obs_dim, self.hidden_dims.clone(), spec.action_count)
    }

    pub fn explore_arch(&self) -> Result<ExplorationArch> {
        // The exploitation torso shares the hidden sizes.
        ExplorationArch::new(self.exploit_arch()?, self.probe_count, self.hidden_dims.clone())
    }

    fn expected_params(&self) -> Result<usize> {
        match self.kind {
            SnapshotKind::Exploit => Ok(self.exploit_arch()?.param_count()),
            SnapshotKind::Explore => Ok(self.explore_arch()?.param_count()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let spec = self.env.spec();
        let name = self.env.as_str().as_bytes();
        let mut out = Vec::with_capacity(64 + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.kind {
            SnapshotKind::Exploit => 0,
            SnapshotKind::Explore => 1,
        });
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(spec.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(spec.action_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dims.len() as u32).to_le_bytes());
        for &h in &self.hidden_dims {
            out.extend_from_slice(&(h as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.probe_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "parameter snapshot");
        if r.take(8)? != MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let kind = match r.take(1)?[0] {
            0 => SnapshotKind::Exploit,
            1 => SnapshotKind::Explore,
            k => return Err(r.fail(format!("unknown kind {k}"))),
        };
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| r.fail("env name is not UTF-8"))?;
        let env: EnvName = name.parse().map_err(|_| r.fail(format!("unknown env `{name}`")))?;
        let spec = env.spec();
        let obs_dim = r.u32()? as usize;
        let action_count = r.u32()? as usize;
        if obs_dim != spec.obs_dim || action_count != spec.action_count {
            return Err(r.fail(format!("dimensions do not match {env}")));
        }
        let layers = r.u32()? as usize;
        if layers > MAX_LAYERS {
            return Err(r.fail("too many hidden layers"));
        }
        let mut hidden_dims = Vec::with_capacity(layers);
        for _ in 0..layers {
            let h = r.u32()? as usize;
            if h == 0 || h > MAX_WIDTH {
                return Err(r.fail(format!("hidden width {h} out of range")));
            }
            hidden_dims.push(h);
        }
        let probe_count = r.u32()? as usize;
        if probe_count > MAX_WIDTH || (kind == SnapshotKind::Explore) != (probe_count > 0) {
            return Err(r.fail("probe count does not match the snapshot kind"));
        }
        let param_count = r.u64()?;
        let mut snap = Snapshot {
            kind,
            env,
            hidden_dims,
            probe_count,
            params: ParameterVector(Vec::new()),
        };
        let expected = snap.expected_params().map_err(|e| r.fail(e.to_string()))?;
        if param_count != expected as u64 {
            return Err(r.fail(format!("{param_count} parameters, architecture has {expected}")));
        }
        if r.remaining() as u64 != param_count * 4 {
            return Err(r.fail("parameter section has the wrong length"));
        }
        let data = r.take(expected * 4)?;
        snap.params = ParameterVector(
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        );
        if !snap.params.is_finite() {
            return Err(r.fail("non-finite parameter"));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}
