//! The fixed Hankel spectral filter bank.
//!
//! `Z[i, j] = ∫₀¹ (β − 1)² β^{i+j−2} dβ = 2 / (n³ − n)` with `n = i + j`
//! (1-based). Its top eigenvectors, ordered by eigenvalue, are the causal
//! filters of every spectral layer.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{norm2, symmetric_eig, FilterBankConv, Matrix};

pub const DEFAULT_CAPACITY: usize = 32;
pub const BASIS_MAGIC: &[u8; 4] = b"ESSB";
pub const BASIS_FORMAT_VERSION: u32 = 1;
/// Environment variable overriding the basis cache directory.
pub const CACHE_DIR_ENV: &str = "ESSM_CACHE_DIR";

/// One unit-norm causal filter `φ(0..L)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterVector(Vec<f64>);

impl FilterVector {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        let n = norm2(&taps);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::structural(format!(
                "filter must have unit norm, got {n}"
            )));
        }
        Ok(FilterVector(taps))
    }

    pub fn taps(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ |φ(τ)|`.
    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

/// Ordered top-`capacity` eigenpairs of the length-`seq_len` Hankel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    seq_len: usize,
    capacity: usize,
    eigenvalues: Vec<f64>,
    filters: Vec<FilterVector>,
    scaled_filters: Vec<Vec<f64>>,
}

/// `Z` for sequence length `len`, from the closed-form entries.
pub fn hankel_matrix(len: usize) -> Result<Matrix> {
    if len == 0 {
        return Err(Error::structural("Hankel matrix needs L >= 1"));
    }
    Ok(Matrix::from_fn(len, len, |i, j| {
        let n = (i + j + 2) as f64;
        2.0 / (n * n * n - n)
    }))
}

/// `σ^{1/4}`, computed in log space; non-positive eigenvalues give zero.
fn quarter_power(sigma: f64) -> f64 {
    if sigma <= 0.0 {
        0.0
    } else {
        (sigma.ln() / 4.0).exp()
    }
}

impl SpectralBasis {
    /// Builds the basis from scratch. `capacity` must lie in `1..=len`.
    pub fn build(len: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > len {
            return Err(Error::structural(format!(
                "capacity K̄={capacity} must satisfy 1 <= K̄ <= L={len}"
            )));
        }
        let z = hankel_matrix(len)?;
        let eig = symmetric_eig(&z)?;
        let eigenvalues = eig.values[..capacity].to_vec();
        let filters = (0..capacity)
            .map(|k| FilterVector::new(eig.vector(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(len, capacity, eigenvalues, filters)
    }

    fn from_parts(
        seq_len: usize,
        capacity: usize,
        eigenvalues: Vec<f64>,
        filters: Vec<FilterVector>,
    ) -> Result<Self> {
        let scaled_filters = eigenvalues
            .iter()
            .zip(&filters)
            .enumerate()
            .map(|(k, (&sigma, f))| {
                if sigma <= 0.0 {
                    log::warn!(
                        "eigenvalue {} of the L={seq_len} Hankel matrix is {sigma:e}; its scaled filter is zeroed",
                        k + 1
                    );
                }
                let s = quarter_power(sigma);
                f.taps().iter().map(|v| s * v).collect()
            })
            .collect();
        Ok(SpectralBasis {
            seq_len,
            capacity,
            eigenvalues,
            filters,
            scaled_filters,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn filters(&self) -> &[FilterVector] {
        &self.filters
    }

    /// `σ_k^{1/4} φ_k`.
    pub fn scaled_filters(&self) -> &[Vec<f64>] {
        &self.scaled_filters
    }

    pub fn quarter_powers(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&s| quarter_power(s)).collect()
    }

    /// Convolution engine over the scaled filters.
    pub fn filter_bank(&self) -> Result<FilterBankConv> {
        FilterBankConv::new(&self.scaled_filters)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(BASIS_MAGIC);
        w.u32(BASIS_FORMAT_VERSION);
        w.u64(self.seq_len as u64);
        w.u32(self.capacity as u32);
        for &s in &self.eigenvalues {
            w.f64(s);
        }
        for f in &self.filters {
            for &v in f.taps() {
                w.f64(v);
            }
        }
        w.finish_with_crc()
    }

    /// Parses a basis file. With `expected = Some((L, K̄))` a header that
    /// disagrees is reported as a mismatch.
    pub fn from_bytes(bytes: &[u8], expected: Option<(usize, usize)>) -> Result<Self> {
        let mut r = ByteReader::with_crc(bytes)?;
        r.magic(BASIS_MAGIC)?;
        let version = r.u32()?;
        if version != BASIS_FORMAT_VERSION {
            return Err(Error::format(format!(
                "basis format version {version}, expected {BASIS_FORMAT_VERSION}"
            )));
        }
        let seq_len = r.u64()? as usize;
        let capacity = r.u32()? as usize;
        if let Some((len, cap)) = expected {
            if (len, cap) != (seq_len, capacity) {
                return Err(Error::Mismatch(format!(
                    "basis file holds L={seq_len}, K̄={capacity} but L={len}, K̄={cap} was requested"
                )));
            }
        }
        if capacity == 0 || capacity > seq_len {
            return Err(Error::format("basis header has K̄ outside 1..=L"));
        }
        let eigenvalues = r.f64_vec(capacity)?;
        let filters = (0..capacity)
            .map(|_| FilterVector::new(r.f64_vec(seq_len)?))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format(format!("corrupt filter: {e}")))?;
        r.finish()?;
        Self::from_parts(seq_len, capacity, eigenvalues, filters)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, expected: Option<(usize, usize)>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, expected)
    }
}

/// Free-function form of [`SpectralBasis::build`].
pub fn build_basis(len: usize, capacity: usize) -> Result<SpectralBasis> {
    SpectralBasis::build(len, capacity)
}

pub fn save_basis(basis: &SpectralBasis, path: &Path) -> Result<()> {
    basis.save(path)
}

pub fn load_basis(path: &Path, expected: Option<(usize, usize)>) -> Result<SpectralBasis> {
    SpectralBasis::load(path, expected)
}

/// Writes through a temporary file in the same directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// On-disk cache of bases keyed by `(L, K̄, format version)`.
#[derive(Clone, Debug)]
pub struct BasisCache {
    dir: PathBuf,
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BasisCache { dir: dir.into() }
    }

    /// `$ESSM_CACHE_DIR` if set, otherwise `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => BasisCache::new(dir),
            _ => BasisCache::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, len: usize, capacity: usize) -> PathBuf {
        let key = format!("essb:L={len}:K={capacity}:v={BASIS_FORMAT_VERSION}");
        let hash = crc32fast::hash(key.as_bytes());
        self.dir
            .join(format!("basis-L{len}-K{capacity}-{hash:08x}.essb"))
    }

    /// Returns the cached basis, building and storing it on a miss. The flag
    /// is `true` for a cache hit.
    pub fn get_or_build(&self, len: usize, capacity: usize) -> Result<(SpectralBasis, bool)> {
        let path = self.path_for(len, capacity);
        if path.exists() {
            match SpectralBasis::load(&path, Some((len, capacity))) {
                Ok(b) => {
                    log::info!("basis cache hit: {}", path.display());
                    return Ok((b, true));
                }
                Err(e) => log::warn!("ignoring unreadable cached basis {}: {e}", path.display()),
            }
        }
        let basis = SpectralBasis::build(len, capacity)?;
        basis.save(&path)?;
        log::info!("basis built and cached: {}", path.display());
        Ok((basis, false))
    }
}
