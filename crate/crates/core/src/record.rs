//! Trajectory records and their on-disk forms.
//!
//! A record is reproducible bit-exactly from `(instance, schedule, seed,
//! n_steps, noise)`. It serializes to a columnar CSV and to a binary cache
//! whose header is `magic "TTSA", version u16, fast dim u16, slow dim u16,
//! sample count u64`, followed by little-endian doubles per sample.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::engine::NoiseModel;
use crate::error::{Error, Result};
use crate::fields::ProblemInstance;
use crate::schedule::StepSchedule;

const CACHE_MAGIC: &[u8; 4] = b"TTSA";
const CACHE_VERSION: u16 = 1;

/// A recorded run: sampled iterates plus everything needed to replay it.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub instance: Arc<ProblemInstance>,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Sample `j` holds iterate `j * stride`.
    pub stride: usize,
    /// Total iterates simulated.
    pub n_steps: usize,
    pub(crate) fast: Vec<f64>,
    pub(crate) slow: Vec<f64>,
    pub(crate) states: Vec<u32>,
    /// Observed running `sup_n (|x(n)| + |y(n)|)`.
    pub sup_norm: f64,
}

impl TrajectoryRecord {
    /// Number of stored samples (iterate 0 included).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn fast_dim(&self) -> usize {
        self.instance.fast_dim
    }

    pub fn slow_dim(&self) -> usize {
        self.instance.slow_dim
    }

    pub fn fast_at(&self, sample: usize) -> &[f64] {
        let d = self.fast_dim();
        &self.fast[sample * d..(sample + 1) * d]
    }

    pub fn slow_at(&self, sample: usize) -> &[f64] {
        let s = self.slow_dim();
        &self.slow[sample * s..(sample + 1) * s]
    }

    pub fn state_at(&self, sample: usize) -> usize {
        self.states[sample] as usize
    }

    /// Iterate index held by a sample slot.
    pub fn iterate_of(&self, sample: usize) -> usize {
        sample * self.stride
    }

    /// Columnar CSV: `n, x_0.., y_0.., z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "n")?;
        for i in 0..self.fast_dim() {
            write!(w, ",x_{i}")?;
        }
        for i in 0..self.slow_dim() {
            write!(w, ",y_{i}")?;
        }
        writeln!(w, ",z")?;
        for j in 0..self.len() {
            write!(w, "{}", self.iterate_of(j))?;
            for v in self.fast_at(j) {
                write!(w, ",{v}")?;
            }
            for v in self.slow_at(j) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.state_at(j))?;
        }
        Ok(())
    }

    /// Binary cache of the sampled columns.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.fast_dim() as u16).to_le_bytes())?;
        w.write_all(&(self.slow_dim() as u16).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for j in 0..self.len() {
            for v in self.fast_at(j) {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in self.slow_at(j) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&(self.state_at(j) as f64).to_le_bytes())?;
        }
        Ok(())
    }

    /// Rebuild a record from cached columns plus the run context.
    pub fn from_cache(
        cache: TrajectoryCache,
        instance: Arc<ProblemInstance>,
        schedule: StepSchedule,
        noise: NoiseModel,
        seed: u64,
        stride: usize,
        n_steps: usize,
    ) -> Result<Self> {
        if cache.fast_dim != instance.fast_dim || cache.slow_dim != instance.slow_dim {
            return Err(Error::CorruptCache(format!(
                "cache dims ({}, {}) do not match the instance ({}, {})",
                cache.fast_dim, cache.slow_dim, instance.fast_dim, instance.slow_dim
            )));
        }
        let sup_norm = (0..cache.states.len())
            .map(|j| {
                let d = cache.fast_dim;
                let s = cache.slow_dim;
                crate::linalg::norm(&cache.fast[j * d..(j + 1) * d])
                    + crate::linalg::norm(&cache.slow[j * s..(j + 1) * s])
            })
            .fold(0.0, f64::max);
        Ok(Self {
            instance,
            schedule,
            noise,
            seed,
            stride,
            n_steps,
            fast: cache.fast,
            slow: cache.slow,
            states: cache.states,
            sup_norm,
        })
    }
}

/// Raw columns read back from a binary cache.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCache {
    pub fast_dim: usize,
    pub slow_dim: usize,
    pub fast: Vec<f64>,
    pub slow: Vec<f64>,
    pub states: Vec<u32>,
}

pub fn read_cache<R: Read>(mut r: R) -> Result<TrajectoryCache> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::CorruptCache("bad magic".into()));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != CACHE_VERSION {
        return Err(Error::CorruptCache(format!("unknown version {version}")));
    }
    r.read_exact(&mut u16buf)?;
    let fast_dim = u16::from_le_bytes(u16buf) as usize;
    r.read_exact(&mut u16buf)?;
    let slow_dim = u16::from_le_bytes(u16buf) as usize;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let samples = u64::from_le_bytes(u64buf) as usize;
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut fast = Vec::with_capacity(samples * fast_dim);
    let mut slow = Vec::with_capacity(samples * slow_dim);
    let mut states = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..fast_dim {
            fast.push(read_f64(&mut r)?);
        }
        for _ in 0..slow_dim {
            slow.push(read_f64(&mut r)?);
        }
        let z = read_f64(&mut r)?;
        if z.is_nan() || z < 0.0 || z.fract() != 0.0 {
            return Err(Error::CorruptCache(format!("bad state value {z}")));
        }
        states.push(z as u32);
    }
    Ok(TrajectoryCache {
        fast_dim,
        slow_dim,
        fast,
        slow,
        states,
    })
}
