//! Lossy compressors for link payloads: uniform quantization and rand-d
//! sparsification, plus an empirical check of the δ-approximation ratio
//! `‖C(x) − x‖² ≤ (1 − δ)‖x‖²`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ModelVector;

/// Bits used for an uncompressed entry.
pub const DENSE_ENTRY_BITS: u64 = 64;

/// Vector magnitudes used by [`estimate_delta`].
pub const DEFAULT_DELTA_SCALES: [f64; 3] = [0.1, 0.3, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorSpec {
    Identity,
    /// `levels` steps of width `(v_max − v_min) / levels` over `[v_min, v_max]`.
    Quantization { levels: u32, v_min: f64, v_max: f64 },
    /// Keep `d` uniformly chosen coordinates, zero the rest.
    RandD { d: usize },
}

impl Default for CompressorSpec {
    fn default() -> Self {
        CompressorSpec::Identity
    }
}

impl CompressorSpec {
    pub fn quantization(levels: u32, v_min: f64, v_max: f64) -> Self {
        CompressorSpec::Quantization { levels, v_min, v_max }
    }

    pub fn rand_d(d: usize) -> Self {
        CompressorSpec::RandD { d }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CompressorSpec::Identity)
    }

    /// Constraint violations for messages of length `dim`.
    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        match *self {
            CompressorSpec::Identity => {}
            CompressorSpec::Quantization { levels, v_min, v_max } => {
                if levels < 1 {
                    v.push(format!("quantization levels must be >= 1, got {levels}"));
                }
                if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
                    v.push(format!("quantization needs finite v_min < v_max, got [{v_min}, {v_max}]"));
                }
            }
            CompressorSpec::RandD { d } => {
                if d > dim {
                    v.push(format!("rand_d budget d={d} exceeds dimension {dim}"));
                }
            }
        }
        v
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let v = self.violations(dim);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Nominal size in bits of one compressed message of length `dim`.
    ///
    /// Identity sends 64-bit floats. Quantization sends a level index of
    /// `⌈log2(L + 1)⌉` bits per entry. Rand-d sends `d` dense values plus a
    /// `⌈log2 n⌉`-bit index for each.
    pub fn payload_bits(&self, dim: usize) -> u64 {
        match *self {
            CompressorSpec::Identity => DENSE_ENTRY_BITS * dim as u64,
            CompressorSpec::Quantization { levels, .. } => {
                ceil_log2(levels as u64 + 1) * dim as u64
            }
            CompressorSpec::RandD { d } => {
                d as u64 * (DENSE_ENTRY_BITS + ceil_log2(dim as u64))
            }
        }
    }

    pub fn payload_bytes(&self, dim: usize) -> u64 {
        self.payload_bits(dim).div_ceil(8)
    }
}

pub(crate) fn ceil_log2(v: u64) -> u64 {
    if v <= 1 {
        0
    } else {
        64 - u64::from((v - 1).leading_zeros())
    }
}

/// Grid point `j` of a quantizer; the end points are returned exactly.
pub fn quantization_level(j: u32, levels: u32, v_min: f64, v_max: f64) -> f64 {
    if j == 0 {
        v_min
    } else if j >= levels {
        v_max
    } else {
        let step = (v_max - v_min) / levels as f64;
        step * j as f64 + v_min
    }
}

fn quantize_scalar(v: f64, levels: u32, v_min: f64, v_max: f64) -> f64 {
    let step = (v_max - v_min) / levels as f64;
    let clamped = v.clamp(v_min, v_max);
    let j = ((clamped - v_min) / step + 0.5).floor();
    let j = j.clamp(0.0, levels as f64) as u32;
    quantization_level(j, levels, v_min, v_max)
}

/// Component-wise uniform quantization `Δ·⌊(v − V_min)/Δ + 0.5⌋ + V_min`,
/// with inputs first clamped to `[V_min, V_max]`.
pub fn quantize(x: &ModelVector, spec: &CompressorSpec) -> Result<ModelVector> {
    match *spec {
        CompressorSpec::Quantization { levels, v_min, v_max } => {
            spec.validate(x.dim())?;
            Ok(x.map(|v| quantize_scalar(v, levels, v_min, v_max)))
        }
        _ => Err(Error::config("quantize called with a non-quantization spec")),
    }
}

/// Keeps a uniformly random size-`d` subset of coordinates.
pub fn rand_d<R: Rng + ?Sized>(x: &ModelVector, spec: &CompressorSpec, rng: &mut R) -> Result<ModelVector> {
    match *spec {
        CompressorSpec::RandD { d } => {
            spec.validate(x.dim())?;
            if d == x.dim() {
                return Ok(x.clone());
            }
            let mut out = ModelVector::zeros(x.dim());
            for i in index::sample(rng, x.dim(), d) {
                out[i] = x[i];
            }
            Ok(out)
        }
        _ => Err(Error::config("rand_d called with a non-rand_d spec")),
    }
}

pub fn compress<R: Rng + ?Sized>(x: &ModelVector, spec: &CompressorSpec, rng: &mut R) -> Result<ModelVector> {
    match spec {
        CompressorSpec::Identity => Ok(x.clone()),
        CompressorSpec::Quantization { .. } => quantize(x, spec),
        CompressorSpec::RandD { .. } => rand_d(x, spec, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorStats {
    /// `1 − worst_ratio`, clamped into `(0, 1]`.
    pub delta_hat: f64,
    pub samples: usize,
    /// Largest observed `‖C(x) − x‖² / ‖x‖²`.
    pub worst_ratio: f64,
}

/// Worst-case compression ratio over random Gaussian vectors drawn at each
/// of [`DEFAULT_DELTA_SCALES`] in turn.
///
/// For rand-d this is a worst case over draws, not the in-expectation
/// bound `1 − d/n` that rand-d actually satisfies.
pub fn estimate_delta<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    dim: usize,
    num_samples: usize,
    rng: &mut R,
) -> Result<CompressorStats> {
    estimate_delta_at_scales(spec, dim, num_samples, &DEFAULT_DELTA_SCALES, rng)
}

pub fn estimate_delta_at_scales<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    dim: usize,
    num_samples: usize,
    scales: &[f64],
    rng: &mut R,
) -> Result<CompressorStats> {
    if num_samples == 0 {
        return Err(Error::config("estimate_delta needs at least one sample"));
    }
    if scales.is_empty() {
        return Err(Error::config("estimate_delta needs at least one scale"));
    }
    spec.validate(dim)?;
    let mut worst: f64 = 0.0;
    for s in 0..num_samples {
        let scale = scales[s % scales.len()];
        let x = ModelVector::from_vec(
            (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        let norm = x.norm_sq();
        if norm == 0.0 {
            continue;
        }
        let c = compress(&x, spec, rng)?;
        worst = worst.max(c.dist_sq(&x)? / norm);
    }
    Ok(CompressorStats {
        delta_hat: (1.0 - worst).clamp(f64::EPSILON, 1.0),
        samples: num_samples,
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const COARSE: CompressorSpec = CompressorSpec::Quantization {
        levels: 10,
        v_min: -1.0,
        v_max: 1.0,
    };

    fn q1(v: f64, spec: &CompressorSpec) -> f64 {
        quantize(&ModelVector::from_vec(vec![v]), spec).unwrap()[0]
    }

    #[test]
    fn quantization_reference_points() {
        assert_eq!(q1(-1.0, &COARSE), -1.0);
        assert_eq!(q1(0.07, &COARSE), 0.0);
        assert_eq!(q1(1.0, &COARSE), 1.0);
    }

    #[test]
    fn out_of_range_is_clamped() {
        assert_eq!(q1(5.0, &COARSE), 1.0);
        assert_eq!(q1(-3.0, &COARSE), -1.0);
    }

    #[test]
    fn identity_and_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ModelVector::from_vec(vec![0.07, -0.55, 2.0]);
        assert_eq!(compress(&x, &CompressorSpec::Identity, &mut rng).unwrap(), x);
        assert_eq!(compress(&x, &COARSE, &mut rng).unwrap(), quantize(&x, &COARSE).unwrap());
        let spec = CompressorSpec::rand_d(2);
        let a = compress(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = rand_d(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        let x = ModelVector::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(rand_d(&x, &CompressorSpec::rand_d(4), &mut rng).is_err());
        assert!(quantize(&x, &CompressorSpec::quantization(0, -1.0, 1.0)).is_err());
        assert!(quantize(&x, &CompressorSpec::quantization(4, 1.0, 1.0)).is_err());
        assert!(quantize(&x, &CompressorSpec::Identity).is_err());
    }

    #[test]
    fn rand_d_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ModelVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rand_d(&x, &CompressorSpec::rand_d(4), &mut rng).unwrap(), x);
        assert_eq!(
            rand_d(&x, &CompressorSpec::rand_d(0), &mut rng).unwrap(),
            ModelVector::zeros(4)
        );
    }

    #[test]
    fn payload_bit_widths() {
        assert_eq!(COARSE.payload_bits(100), 4 * 100);
        assert_eq!(CompressorSpec::quantization(1000, -10.0, 10.0).payload_bits(100), 10 * 100);
        assert_eq!(CompressorSpec::quantization(1, 0.0, 1.0).payload_bits(3), 3);
        assert_eq!(CompressorSpec::rand_d(80).payload_bits(100), 80 * (64 + 7));
        assert_eq!(CompressorSpec::Identity.payload_bits(100), 6400);
        assert_eq!(CompressorSpec::Identity.payload_bytes(100), 800);
        assert_eq!(COARSE.payload_bytes(3), 2);
    }

    #[test]
    fn delta_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = estimate_delta(&CompressorSpec::Identity, 10, 50, &mut rng).unwrap();
        assert_eq!(s.delta_hat, 1.0);
        let s = estimate_delta(&CompressorSpec::rand_d(10), 10, 50, &mut rng).unwrap();
        assert_eq!(s.delta_hat, 1.0);
        assert!(estimate_delta(&CompressorSpec::Identity, 10, 0, &mut rng).is_err());
    }

    #[test]
    fn rand_d_ratio_is_dropped_mass() {
        // Enumerate every kept index set on n = 5 and check the ratio never
        // exceeds one and equals the dropped fraction of the squared norm.
        let x = ModelVector::from_vec(vec![0.5, -1.5, 2.0, 0.1, -0.7]);
        let n = x.dim();
        let d = 4;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != d {
                continue;
            }
            let c = ModelVector::from_vec(
                (0..n).map(|i| if mask >> i & 1 == 1 { x[i] } else { 0.0 }).collect(),
            );
            let dropped: f64 = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| x[i] * x[i]).sum();
            let ratio = c.dist_sq(&x).unwrap() / x.norm_sq();
            assert!(ratio <= 1.0);
            assert!((ratio - dropped / x.norm_sq()).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = estimate_delta(&CompressorSpec::rand_d(80), 100, 2000, &mut rng).unwrap();
        assert!(s.worst_ratio <= 1.0);
    }

    proptest! {
        #[test]
        fn quantization_is_idempotent_and_on_grid(
            xs in prop::collection::vec(-3.0f64..3.0, 1..32),
            levels in 1u32..2000,
            lo in -5.0f64..0.0,
            width in 0.01f64..10.0,
        ) {
            let hi = lo + width;
            let spec = CompressorSpec::quantization(levels, lo, hi);
            let x = ModelVector::from_vec(xs);
            let q = quantize(&x, &spec).unwrap();
            prop_assert_eq!(&quantize(&q, &spec).unwrap(), &q);
            let step = width / levels as f64;
            for (&qi, &xi) in q.iter().zip(x.iter()) {
                prop_assert!(qi >= lo && qi <= hi);
                let j = ((qi - lo) / step).round() as u32;
                prop_assert_eq!(qi, quantization_level(j, levels, lo, hi));
                prop_assert!((qi - xi.clamp(lo, hi)).abs() <= step / 2.0 * (1.0 + 1e-9));
            }
        }

        #[test]
        fn in_range_error_bound(xs in prop::collection::vec(-1.0f64..=1.0, 1..64), levels in 1u32..500) {
            let spec = CompressorSpec::quantization(levels, -1.0, 1.0);
            let x = ModelVector::from_vec(xs);
            let q = quantize(&x, &spec).unwrap();
            let step = 2.0 / levels as f64;
            let bound = x.dim() as f64 * step * step / 4.0;
            prop_assert!(q.dist_sq(&x).unwrap() <= bound * (1.0 + 1e-9));
        }

        #[test]
        fn rand_d_is_a_coordinate_mask(xs in prop::collection::vec(-5.0f64..5.0, 1..40), seed: u64, frac in 0.0f64..=1.0) {
            let x = ModelVector::from_vec(xs);
            let d = (frac * x.dim() as f64).floor() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = rand_d(&x, &CompressorSpec::rand_d(d), &mut rng).unwrap();
            for (ci, xi) in c.iter().zip(x.iter()) {
                prop_assert!(*ci == 0.0 || ci == xi);
            }
        }
    }
}
