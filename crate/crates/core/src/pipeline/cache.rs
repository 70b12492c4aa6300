//! On-disk spectrum cache.
//!
//! Layout (little-endian): magic `MBTH`, format version `u32`, `N` `u32`,
//! dimension `u64`, eight `f64` parameters (`ε, C_b, C_m, Δ, N_m, K`, the
//! mode-label tag and the stored residual norm), the energies, the
//! column-major eigenvectors and a trailing CRC-32 of everything before it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crc32fast::Hasher;

use crate::model::ModelParams;
use crate::spectrum::Spectrum;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MBTH";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 4 + 8 + 8 * 8;
const CHUNK: usize = 1 << 20;

/// Decoded header of a cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub version: u32,
    pub n: u32,
    pub dim: u64,
    pub params: [f64; 8],
}

impl CacheHeader {
    pub fn residual_norm(&self) -> f64 {
        self.params[7]
    }
}

fn param_block(p: &ModelParams, residual: f64) -> [f64; 8] {
    [
        p.epsilon,
        p.c_b,
        p.c_m,
        p.delta,
        p.n_m as f64,
        p.k as f64,
        p.labels.tag(),
        residual,
    ]
}

pub fn cache_path(dir: &Path, p: &ModelParams) -> PathBuf {
    let labels = match p.labels {
        crate::model::ModeLabels::SiteIndex => "site",
        crate::model::ModeLabels::SectorLocal => "local",
    };
    dir.join(format!("spectrum_N{}_{labels}.mbth", p.n))
}

struct CrcWriter<W: Write> {
    inner: W,
    crc: Hasher,
}

impl<W: Write> CrcWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.crc.update(bytes);
        self.inner.write_all(bytes)
    }

    fn put_f64s(&mut self, values: &[f64]) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(CHUNK * 8);
        for chunk in values.chunks(CHUNK) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.put(&buf)?;
        }
        Ok(())
    }
}

/// Writes atomically: a temporary sibling is renamed over `path` on success.
pub fn write_cache(path: &Path, params: &ModelParams, spectrum: &Spectrum) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("mbth.partial");
    {
        let mut w = CrcWriter {
            inner: BufWriter::new(File::create(&tmp)?),
            crc: Hasher::new(),
        };
        w.put(MAGIC)?;
        w.put(&FORMAT_VERSION.to_le_bytes())?;
        w.put(&params.n.to_le_bytes())?;
        w.put(&(spectrum.dim() as u64).to_le_bytes())?;
        w.put_f64s(&param_block(params, spectrum.residual_norm()))?;
        w.put_f64s(spectrum.energies())?;
        w.put_f64s(spectrum.vectors())?;
        let crc = w.crc.finalize();
        w.inner.write_all(&crc.to_le_bytes())?;
        w.inner.flush()?;
        w.inner.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct CrcReader<R: Read> {
    inner: R,
    crc: Hasher,
    path: PathBuf,
}

impl<R: Read> CrcReader<R> {
    fn take(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::CorruptCache {
                path: self.path.clone(),
                reason: "file is truncated".into(),
            },
            _ => Error::Io(e),
        })?;
        self.crc.update(buf);
        Ok(())
    }

    fn take_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn take_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    /// Fills `out` (or just hashes when `out` is `None`) with `count` doubles.
    fn take_f64s(&mut self, count: usize, mut out: Option<&mut Vec<f64>>) -> Result<()> {
        let mut buf = vec![0u8; CHUNK.min(count.max(1)) * 8];
        let mut left = count;
        while left > 0 {
            let now = left.min(CHUNK);
            let bytes = &mut buf[..now * 8];
            self.take(bytes)?;
            if let Some(out) = out.as_deref_mut() {
                out.extend(
                    bytes
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
                );
            }
            left -= now;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        let computed = self.crc.clone().finalize();
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::CorruptCache {
                path: self.path.clone(),
                reason: "missing checksum".into(),
            })?;
        let mut extra = [0u8; 1];
        if self.inner.read(&mut extra)? != 0 {
            return Err(Error::CorruptCache {
                path: self.path,
                reason: "trailing bytes after checksum".into(),
            });
        }
        if u32::from_le_bytes(b) != computed {
            return Err(Error::CacheChecksum { path: self.path });
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<CrcReader<BufReader<File>>> {
    Ok(CrcReader {
        inner: BufReader::with_capacity(CHUNK, File::open(path)?),
        crc: Hasher::new(),
        path: path.to_path_buf(),
    })
}

fn read_header<R: Read>(r: &mut CrcReader<R>, expected: &ModelParams) -> Result<CacheHeader> {
    let path = r.path.clone();
    let mut magic = [0u8; 4];
    r.take(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CorruptCache {
            path,
            reason: "bad magic".into(),
        });
    }
    let version = r.take_u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CacheVersion {
            path,
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = r.take_u32()?;
    let dim = r.take_u64()?;
    let mut params = Vec::with_capacity(8);
    r.take_f64s(8, Some(&mut params))?;
    let params: [f64; 8] = params.try_into().unwrap();
    let header = CacheHeader {
        version,
        n,
        dim,
        params,
    };
    let want = param_block(expected, 0.0);
    if n != expected.n {
        return Err(Error::CacheParameterMismatch {
            path,
            reason: format!("file holds N = {n}, expected N = {}", expected.n),
        });
    }
    if dim != expected.sector_dimension() as u64 {
        return Err(Error::CacheParameterMismatch {
            path,
            reason: format!(
                "file holds dimension {dim}, expected {}",
                expected.sector_dimension()
            ),
        });
    }
    const NAMES: [&str; 7] = ["epsilon", "C_b", "C_m", "Delta", "N_m", "K", "mode labels"];
    for (i, name) in NAMES.iter().enumerate() {
        if params[i].to_bits() != want[i].to_bits() {
            return Err(Error::CacheParameterMismatch {
                path,
                reason: format!("{name}: file {} vs expected {}", params[i], want[i]),
            });
        }
    }
    Ok(header)
}

/// Validates magic, version, parameter block, length and checksum.
pub fn verify_cache(path: &Path, expected: &ModelParams) -> Result<CacheHeader> {
    let mut r = open(path)?;
    let header = read_header(&mut r, expected)?;
    check_length(path, &header)?;
    let dim = header.dim as usize;
    r.take_f64s(dim + dim * dim, None)?;
    r.finish()?;
    Ok(header)
}

fn check_length(path: &Path, h: &CacheHeader) -> Result<()> {
    let want = HEADER_LEN + 8 * (h.dim + h.dim * h.dim) + 4;
    let got = std::fs::metadata(path)?.len();
    if got != want {
        return Err(Error::CorruptCache {
            path: path.to_path_buf(),
            reason: format!("length {got} bytes, expected {want}"),
        });
    }
    Ok(())
}

/// Loads a validated spectrum.
pub fn read_cache(path: &Path, expected: &ModelParams) -> Result<Spectrum> {
    let mut r = open(path)?;
    let header = read_header(&mut r, expected)?;
    check_length(path, &header)?;
    let dim = header.dim as usize;
    let mut energies = Vec::with_capacity(dim);
    r.take_f64s(dim, Some(&mut energies))?;
    let mut vectors = Vec::with_capacity(dim * dim);
    r.take_f64s(dim * dim, Some(&mut vectors))?;
    r.finish()?;
    Spectrum::from_parts(energies, vectors, header.residual_norm())
}
