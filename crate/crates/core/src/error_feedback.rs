//! Error feedback as a property of a link rather than of an algorithm.
//!
//! An [`EfChannel`] sits on one directed link (an agent's uplink, or the
//! coordinator's downlink). Each send compresses the message plus the
//! cached residual and keeps whatever the compressor dropped:
//!
//! ```text
//! payload = C(message + cache)
//! cache   = message + cache − payload
//! ```
//!
//! With feedback disabled the channel is a plain compressor and its cache
//! stays zero.

use rand::Rng;

use crate::compressors::{compress, CompressorSpec};
use crate::error::{check_dim, Result};
use crate::vector::ModelVector;

#[derive(Debug, Clone, PartialEq)]
pub struct EfChannel {
    spec: CompressorSpec,
    cache: ModelVector,
    enabled: bool,
}

impl EfChannel {
    pub fn new(spec: CompressorSpec, dim: usize, enabled: bool) -> Result<Self> {
        spec.validate(dim)?;
        Ok(EfChannel {
            spec,
            cache: ModelVector::zeros(dim),
            enabled,
        })
    }

    pub fn spec(&self) -> &CompressorSpec {
        &self.spec
    }

    pub fn cache(&self) -> &ModelVector {
        &self.cache
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn dim(&self) -> usize {
        self.cache.dim()
    }

    /// Sets the cached residual directly, e.g. to resume a link mid-run.
    pub fn with_cache(mut self, cache: ModelVector) -> Result<Self> {
        check_dim(self.dim(), cache.dim())?;
        self.cache = cache;
        Ok(self)
    }

    pub fn send<R: Rng + ?Sized>(&mut self, message: &ModelVector, rng: &mut R) -> Result<ModelVector> {
        check_dim(self.dim(), message.dim())?;
        if !self.enabled {
            return compress(message, &self.spec, rng);
        }
        let corrected = message.add(&self.cache)?;
        let payload = compress(&corrected, &self.spec, rng)?;
        self.cache = corrected.sub(&payload)?;
        Ok(payload)
    }

    pub fn reset(&mut self) {
        self.cache = ModelVector::zeros(self.dim());
    }
}

pub fn ef_send<R: Rng + ?Sized>(
    channel: &mut EfChannel,
    message: &ModelVector,
    rng: &mut R,
) -> Result<ModelVector> {
    channel.send(message, rng)
}

pub fn ef_reset(mut channel: EfChannel) -> EfChannel {
    channel.reset();
    channel
}
