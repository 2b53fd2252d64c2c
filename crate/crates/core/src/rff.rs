//! Random Fourier features for the Gaussian kernel
//! κ(x₁, x₂) = exp(−‖x₁ − x₂‖² / 2σ²).
//!
//! Frequencies ξ₁..ξ_D are drawn i.i.d. from N(0, σ⁻² I) and the feature map is
//!
//! ```text
//! z(a) = [sin(ξ₁ᵀa), …, sin(ξ_Dᵀa), cos(ξ₁ᵀa), …, cos(ξ_Dᵀa)] / √D
//! ```
//!
//! so that z(a₁)ᵀz(a₂) = (1/D) Σ cos(ξ_kᵀ(a₁ − a₂)) ≈ κ(a₁, a₂) and ‖z(a)‖² = 1.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, SkgError};
use crate::graph_data::AdjacencyVector;
use crate::rng::{stream_rng, Stream};

const BINARY_MAGIC: &[u8; 4] = b"SKGB";
const BINARY_VERSION: u32 = 1;

/// Frozen frequency vectors defining the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureBank {
    sigma_sq: f64,
    seed: u64,
    input_dim: usize,
    num_features: usize,
    // row-major D × M
    frequencies: Vec<f64>,
}

/// Unit-norm feature vector of length 2D (sine block, then cosine block).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Draws `num_features` frequency vectors of length `input_dim` from N(0, σ⁻² I).
pub fn sample_bank(sigma_sq: f64, num_features: usize, input_dim: usize, seed: u64) -> Result<RandomFeatureBank> {
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(SkgError::Argument(format!(
            "kernel variance must be positive, got {sigma_sq}"
        )));
    }
    if num_features == 0 || input_dim == 0 {
        return Err(SkgError::Argument(format!(
            "feature count and input dimension must be ≥ 1 (D={num_features}, M={input_dim})"
        )));
    }
    let normal = Normal::new(0.0, 1.0 / sigma_sq.sqrt()).map_err(|e| SkgError::Argument(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Bank);
    let frequencies = (0..num_features * input_dim).map(|_| normal.sample(&mut rng)).collect();
    Ok(RandomFeatureBank {
        sigma_sq,
        seed,
        input_dim,
        num_features,
        frequencies,
    })
}

impl RandomFeatureBank {
    /// Rebuilds a bank from explicit frequencies (row-major D × M).
    pub fn from_parts(
        sigma_sq: f64,
        seed: u64,
        input_dim: usize,
        num_features: usize,
        frequencies: Vec<f64>,
    ) -> Result<Self> {
        if !(sigma_sq > 0.0) || input_dim == 0 || num_features == 0 {
            return Err(SkgError::Argument("invalid bank header".into()));
        }
        check_dims(input_dim * num_features, frequencies.len())?;
        Ok(RandomFeatureBank {
            sigma_sq,
            seed,
            input_dim,
            num_features,
            frequencies,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// M, the adjacency-vector length.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// D, the number of frequency vectors.
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// 2D, the length of a feature vector.
    pub fn feature_dim(&self) -> usize {
        2 * self.num_features
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn frequency(&self, k: usize) -> &[f64] {
        &self.frequencies[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn feature_map(&self, a: &AdjacencyVector) -> Result<FeatureVector> {
        check_dims(self.input_dim, a.len())?;
        let d = self.num_features;
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = vec![0.0; 2 * d];
        // adjacency vectors are mostly zero; skip those columns
        let nz: Vec<(usize, f64)> = a
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| (i, x))
            .collect();
        for k in 0..d {
            let xi = self.frequency(k);
            let proj: f64 = nz.iter().map(|&(i, x)| xi[i] * x).sum();
            let (s, c) = proj.sin_cos();
            out[k] = s * scale;
            out[d + k] = c * scale;
        }
        Ok(FeatureVector(out))
    }
}

/// Free-function form of [`RandomFeatureBank::feature_map`].
pub fn feature_map(bank: &RandomFeatureBank, a: &AdjacencyVector) -> Result<FeatureVector> {
    bank.feature_map(a)
}

/// Exact Gaussian kernel exp(−‖a₁ − a₂‖² / 2σ²).
pub fn kernel_exact(a1: &AdjacencyVector, a2: &AdjacencyVector, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(SkgError::Argument(format!(
            "kernel variance must be positive, got {sigma_sq}"
        )));
    }
    Ok((-a1.sq_distance(a2)? / (2.0 * sigma_sq)).exp())
}

#[derive(Serialize, Deserialize)]
struct BankJson {
    input_dim: usize,
    num_features: usize,
    sigma_sq: String,
    seed: u64,
    /// IEEE-754 bit patterns as 16-digit hex, row-major.
    frequencies: Vec<String>,
}

fn f64_to_hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn f64_from_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s.trim_start_matches("0x"), 16)
        .map(f64::from_bits)
        .map_err(|_| SkgError::Validation(format!("bad hex float `{s}`")))
}

impl RandomFeatureBank {
    /// JSON encoding with every float stored as its hex bit pattern.
    pub fn to_json(&self) -> Result<String> {
        let doc = BankJson {
            input_dim: self.input_dim,
            num_features: self.num_features,
            sigma_sq: f64_to_hex(self.sigma_sq),
            seed: self.seed,
            frequencies: self.frequencies.iter().map(|&x| f64_to_hex(x)).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BankJson = serde_json::from_str(text)?;
        let freqs = doc
            .frequencies
            .iter()
            .map(|s| f64_from_hex(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            f64_from_hex(&doc.sigma_sq)?,
            doc.seed,
            doc.input_dim,
            doc.num_features,
            freqs,
        )
    }

    /// Binary layout, little endian: `SKGB`, u32 version, u64 M, u64 D,
    /// f64 σ², u64 seed, then D·M f64 frequencies row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.input_dim as u64).to_le_bytes())?;
        w.write_all(&(self.num_features as u64).to_le_bytes())?;
        w.write_all(&self.sigma_sq.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.frequencies {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(SkgError::Validation("not a feature-bank file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != BINARY_VERSION {
            return Err(SkgError::Validation("unsupported feature-bank version".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let sigma_sq = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let mut freqs = Vec::with_capacity(m.saturating_mul(d).min(1 << 24));
        for _ in 0..m * d {
            freqs.push(f64::from_le_bytes(next(&mut r)?));
        }
        Self::from_parts(sigma_sq, seed, m, d, freqs)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * self.frequencies.len());
        self.write_binary(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(fs::read(path)?.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_var(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn entry_variance_matches_inverse_sigma_sq() {
        let b = sample_bank(1.0, 10_000, 1, 11).unwrap();
        assert!((sample_var(b.frequencies()) - 1.0).abs() < 0.05);
        let b = sample_bank(4.0, 10_000, 1, 12).unwrap();
        assert!((sample_var(b.frequencies()) - 0.25).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic_and_validated() {
        assert_eq!(sample_bank(2.0, 5, 3, 9).unwrap(), sample_bank(2.0, 5, 3, 9).unwrap());
        assert_ne!(sample_bank(2.0, 5, 3, 9).unwrap(), sample_bank(2.0, 5, 3, 10).unwrap());
        assert!(sample_bank(0.0, 5, 3, 1).is_err());
        assert!(sample_bank(-1.0, 5, 3, 1).is_err());
        assert!(sample_bank(1.0, 0, 3, 1).is_err());
    }

    #[test]
    fn zero_input_features() {
        let b = sample_bank(1.0, 2, 3, 1).unwrap();
        let z = b.feature_map(&AdjacencyVector::zeros(3)).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(z.as_slice(), &[0.0, 0.0, h, h]);
    }

    #[test]
    fn sin_block_precedes_cos_block() {
        let b = RandomFeatureBank::from_parts(1.0, 0, 1, 2, vec![0.5, 1.5]).unwrap();
        let z = b.feature_map(&AdjacencyVector::new(vec![2.0])).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expect = [1f64.sin() * s, 3f64.sin() * s, 1f64.cos() * s, 3f64.cos() * s];
        for (a, e) in z.as_slice().iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let b = sample_bank(1.0, 4, 3, 1).unwrap();
        assert!(matches!(
            b.feature_map(&AdjacencyVector::zeros(2)),
            Err(SkgError::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(kernel_exact(&AdjacencyVector::zeros(2), &AdjacencyVector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn monte_carlo_kernel_value() {
        let b = sample_bank(2.0, 10_000, 2, 5).unwrap();
        let a1 = AdjacencyVector::new(vec![1.0, 0.0]);
        let a2 = AdjacencyVector::new(vec![0.0, 0.0]);
        let k = b.feature_map(&a1).unwrap().dot(&b.feature_map(&a2).unwrap());
        assert!((k - (-0.25f64).exp()).abs() < 0.02, "{k}");
    }

    #[test]
    fn exact_kernel_values() {
        let a = AdjacencyVector::new(vec![1.0, 2.0]);
        assert_eq!(kernel_exact(&a, &a, 3.0).unwrap(), 1.0);
        // ‖d‖² = 15 via fifteen unit coordinates
        let a1 = AdjacencyVector::new(vec![1.0; 15]);
        let a2 = AdjacencyVector::zeros(15);
        let k = kernel_exact(&a1, &a2, 10.0).unwrap();
        assert!((k - 0.472_366_552_741_014_7).abs() < 1e-12);
        let mut last = 0.0;
        for s in [0.1, 1.0, 10.0, 1e3, 1e9] {
            let v = kernel_exact(&a1, &a2, s).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(1.0 - last < 1e-6);
    }

    #[test]
    fn json_and_binary_round_trip_bit_exact() {
        let b = sample_bank(0.37, 7, 5, 42).unwrap();
        let j = RandomFeatureBank::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(j, b);
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 * 4 + 8 * 35);
        let r = RandomFeatureBank::read_binary(buf.as_slice()).unwrap();
        assert!(r
            .frequencies()
            .iter()
            .zip(b.frequencies())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(r, b);
        assert!(RandomFeatureBank::read_binary(&b"XXXX"[..]).is_err());
    }

    proptest! {
        #[test]
        fn features_have_unit_norm(
            entries in prop::collection::vec(-5.0f64..5.0, 6),
            sigma_sq in 0.01f64..100.0,
            seed in any::<u64>(),
        ) {
            let b = sample_bank(sigma_sq, 64, 6, seed).unwrap();
            let z = b.feature_map(&AdjacencyVector::new(entries)).unwrap();
            prop_assert!((z.norm_sq() - 1.0).abs() < 1e-12);
        }
    }
}
