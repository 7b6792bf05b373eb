//! Transition and parameter replay buffers with seeded uniform sampling.
//!
//! Both buffers are FIFO rings and sample uniformly *with replacement*, so a
//! batch may be larger than the buffer (32 draws from two stored snapshots is
//! a normal request).
//!
//! The transition buffer can be dumped to a flat little-endian file:
//!
//! ```text
//! magic     8 bytes  "SEETRBUF"
//! version   u32      1
//! obs_dim   u32
//! actions   u32      action count; every stored action is below it
//! capacity  u64
//! len       u64
//! records   len x { s: obs_dim f64, action: u32, reward: f64,
//!                   s_next: obs_dim f64, flags: u8 }   oldest first
//! ```
//!
//! `flags` bit 0 is `terminated`, bit 1 is `truncated`.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::EnvObservation;
use crate::error::{Error, Result};
use crate::nn::{ParameterVector, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: EnvObservation,
    pub a: usize,
    pub r: f64,
    pub s_next: EnvObservation,
    pub terminated: bool,
    pub truncated: bool,
}

impl Transition {
    /// Whether the target bootstraps from `s_next` (time-limit cutoffs do).
    pub fn bootstraps(&self) -> bool {
        !self.terminated
    }
}

fn check_capacity(capacity: usize) -> Result<()> {
    if capacity == 0 {
        return Err(Error::config("buffer capacity must be positive"));
    }
    Ok(())
}

fn check_sample(len: usize, batch: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::usage("cannot sample from an empty buffer"));
    }
    if batch == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TransitionBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl TransitionBuffer {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Result<Self> {
        check_capacity(capacity)?;
        Ok(Self {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 20)),
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn sample(&mut self, batch: usize) -> Result<Vec<&Transition>> {
        check_sample(self.storage.len(), batch)?;
        let n = self.storage.len();
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.random_range(0..n)).collect();
        Ok(idx.into_iter().map(|i| &self.storage[i]).collect())
    }

    pub fn dump(&self, action_count: usize) -> Result<Vec<u8>> {
        let obs_dim = self.storage.front().map_or(0, |t| t.s.len());
        let mut out = Vec::with_capacity(40 + self.len() * (2 * obs_dim * 8 + 13));
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(action_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.capacity as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for t in &self.storage {
            if t.s.len() != obs_dim || t.s_next.len() != obs_dim || t.a >= action_count {
                return Err(Error::Internal("inconsistent transition in buffer".into()));
            }
            t.s.0.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            out.extend_from_slice(&(t.a as u32).to_le_bytes());
            out.extend_from_slice(&t.r.to_le_bytes());
            t.s_next.0.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            out.push(u8::from(t.terminated) | (u8::from(t.truncated) << 1));
        }
        Ok(out)
    }

    /// Rebuilds a buffer from [`TransitionBuffer::dump`] output.
    pub fn restore(bytes: &[u8], rng: ChaCha8Rng) -> Result<(Self, usize)> {
        let mut r = ByteReader::new(bytes, "transition buffer dump");
        if r.take(8)? != DUMP_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != DUMP_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let obs_dim = r.u32()? as usize;
        let action_count = r.u32()? as usize;
        let capacity = r.u64()?;
        let len = r.u64()?;
        if capacity == 0 || len > capacity || action_count == 0 {
            return Err(r.fail("inconsistent header"));
        }
        if len > 0 && obs_dim == 0 {
            return Err(r.fail("zero observation dimension"));
        }
        let record = (2 * obs_dim as u64 * 8) + 13;
        if r.remaining() as u64 != len.saturating_mul(record) {
            return Err(r.fail("record section has the wrong length"));
        }
        let mut buffer = Self::new(usize::try_from(capacity).map_err(|_| r.fail("capacity"))?, rng)?;
        for _ in 0..len {
            let s = r.obs(obs_dim)?;
            let a = r.u32()? as usize;
            let reward = r.f64()?;
            let s_next = r.obs(obs_dim)?;
            let flags = r.take(1)?[0];
            if a >= action_count || flags > 3 || !reward.is_finite() {
                return Err(r.fail("invalid record"));
            }
            buffer.push(Transition {
                s,
                a,
                r: reward,
                s_next,
                terminated: flags & 1 != 0,
                truncated: flags & 2 != 0,
            });
        }
        Ok((buffer, action_count))
    }
}

const DUMP_MAGIC: &[u8; 8] = b"SEETRBUF";
const DUMP_VERSION: u32 = 1;

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub fn fail(&self, detail: impl Into<String>) -> Error {
        Error::format(self.what, format!("{} (at byte {})", detail.into(), self.pos))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.fail("unexpected end of input"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn obs(&mut self, dim: usize) -> Result<EnvObservation> {
        let v = (0..dim).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.fail("non-finite observation"));
        }
        Ok(EnvObservation(v))
    }
}

/// A frozen copy of the exploitation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot<T = f32>(ParameterVector<T>);

impl<T: Scalar> ParameterSnapshot<T> {
    pub fn of(params: &ParameterVector<T>) -> Self {
        Self(params.clone())
    }

    pub fn params(&self) -> &ParameterVector<T> {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParameterBuffer<T = f32> {
    capacity: usize,
    storage: VecDeque<ParameterSnapshot<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParameterBuffer<T> {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Result<Self> {
        check_capacity(capacity)?;
        Ok(Self {
            capacity,
            storage: VecDeque::with_capacity(capacity),
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Stores a deep copy of `params`.
    pub fn push(&mut self, params: &ParameterVector<T>) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(ParameterSnapshot::of(params));
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &ParameterSnapshot<T>> {
        self.storage.iter()
    }

    pub fn sample(&mut self, batch: usize) -> Result<Vec<&ParameterVector<T>>> {
        check_sample(self.storage.len(), batch)?;
        let n = self.storage.len();
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.random_range(0..n)).collect();
        Ok(idx.into_iter().map(|i| self.storage[i].params()).collect())
    }
}
