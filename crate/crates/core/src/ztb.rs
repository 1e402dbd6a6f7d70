//! Zero-tile book: a per-workload bitmap marking which physical D x D
//! weight tiles are entirely zero. The mapper consults it to skip fully
//! sparse windows and to deactivate cores in partially sparse ones.
//!
//! One bit per (k chunk, n tile, core) triple. A "window" is the set of C
//! tiles loaded together across the cores of a legion for one
//! (k chunk, n tile) pair, so the k axis here is already divided by C; the
//! header stores the raw tile count kt_raw = kt * c for compatibility with
//! tools that think in flat ceil(K / D) tiles (padded up to the window
//! grid).
//!
//! File format (little endian): magic "DLZT", u32 version, u32 kt_raw,
//! u32 nt, u32 c, then ceil(kt * nt * c / 8) bytes of bitmask packed
//! LSB first in (n, k, core) order, core fastest.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DLZT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroTileBook {
    pub kt: u64,
    pub nt: u64,
    pub c: u64,
    bits: Vec<u8>,
}

impl ZeroTileBook {
    /// All-dense book (no zero tiles).
    pub fn dense(kt: u64, nt: u64, c: u64) -> ZeroTileBook {
        let nbits = (kt * nt * c) as usize;
        ZeroTileBook {
            kt,
            nt,
            c,
            bits: vec![0; nbits.div_ceil(8)],
        }
    }

    #[inline]
    fn index(&self, k_chunk: u64, n_tile: u64, core: u64) -> usize {
        debug_assert!(k_chunk < self.kt && n_tile < self.nt && core < self.c);
        ((n_tile * self.kt + k_chunk) * self.c + core) as usize
    }

    #[inline]
    pub fn is_zero(&self, k_chunk: u64, n_tile: u64, core: u64) -> bool {
        let i = self.index(k_chunk, n_tile, core);
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set_zero(&mut self, k_chunk: u64, n_tile: u64, core: u64, zero: bool) {
        let i = self.index(k_chunk, n_tile, core);
        if zero {
            self.bits[i / 8] |= 1 << (i % 8);
        } else {
            self.bits[i / 8] &= !(1 << (i % 8));
        }
    }

    /// All C tiles of the window are zero: the whole window is skipped.
    pub fn window_fully_sparse(&self, k_chunk: u64, n_tile: u64) -> bool {
        (0..self.c).all(|core| self.is_zero(k_chunk, n_tile, core))
    }

    /// Number of zero tiles inside one window.
    pub fn window_zero_count(&self, k_chunk: u64, n_tile: u64) -> u64 {
        (0..self.c)
            .filter(|&core| self.is_zero(k_chunk, n_tile, core))
            .count() as u64
    }

    pub fn zero_tile_count(&self) -> u64 {
        let mut n = 0u64;
        for k in 0..self.kt {
            for t in 0..self.nt {
                n += self.window_zero_count(k, t);
            }
        }
        n
    }

    pub fn fully_sparse_window_count(&self) -> u64 {
        let mut n = 0u64;
        for k in 0..self.kt {
            for t in 0..self.nt {
                if self.window_fully_sparse(k, t) {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn check_shape(&self, kt: u64, nt: u64, c: u64) -> Result<()> {
        if self.kt != kt || self.nt != nt || self.c != c {
            return Err(Error::ZtbShapeMismatch {
                ekt: kt * c,
                ent: nt,
                ec: c,
                fkt: self.kt * self.c,
                fnt: self.nt,
                fc: self.c,
            });
        }
        Ok(())
    }

    /// Marks an exact fraction of windows fully sparse, chosen by a seeded
    /// shuffle. `fraction` is clamped to [0, 1]; the count rounds to
    /// nearest.
    pub fn with_window_sparsity(kt: u64, nt: u64, c: u64, fraction: f64, seed: u64) -> ZeroTileBook {
        let mut book = ZeroTileBook::dense(kt, nt, c);
        let total = kt * nt;
        let picked = ((total as f64) * fraction.clamp(0.0, 1.0)).round() as u64;
        let mut windows: Vec<u64> = (0..total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        windows.shuffle(&mut rng);
        for &w in windows.iter().take(picked as usize) {
            let (k, t) = (w % kt, w / kt);
            for core in 0..c {
                book.set_zero(k, t, core, true);
            }
        }
        book
    }

    /// Bernoulli per-tile sparsity: each tile is zero with probability
    /// `density_of_zeros`, independently. Produces a mix of partially and
    /// (occasionally) fully sparse windows.
    pub fn with_tile_sparsity(kt: u64, nt: u64, c: u64, p_zero: f64, seed: u64) -> ZeroTileBook {
        let mut book = ZeroTileBook::dense(kt, nt, c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = p_zero.clamp(0.0, 1.0);
        for t in 0..nt {
            for k in 0..kt {
                for core in 0..c {
                    if rng.gen_bool(p) {
                        book.set_zero(k, t, core, true);
                    }
                }
            }
        }
        book
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, (self.kt * self.c) as u32, self.nt as u32, self.c as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.bits)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<ZeroTileBook> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::ZtbFormat(format!("short header: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::ZtbFormat("bad magic".into()));
        }
        let mut word = [0u8; 4];
        let mut next = || -> Result<u32> {
            r.read_exact(&mut word)
                .map_err(|e| Error::ZtbFormat(format!("short header: {e}")))?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next()?;
        if version != VERSION {
            return Err(Error::ZtbFormat(format!("unsupported version {version}")));
        }
        let kt_raw = next()? as u64;
        let nt = next()? as u64;
        let c = next()? as u64;
        if c == 0 || kt_raw % c != 0 {
            return Err(Error::ZtbFormat(format!(
                "raw tile count {kt_raw} is not a multiple of core count {c}"
            )));
        }
        let kt = kt_raw / c;
        let nbytes = ((kt * nt * c) as usize).div_ceil(8);
        let mut bits = vec![0u8; nbytes];
        r.read_exact(&mut bits)
            .map_err(|e| Error::ZtbFormat(format!("short bitmask: {e}")))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::ZtbFormat("trailing bytes after bitmask".into()));
        }
        Ok(ZeroTileBook { kt, nt, c, bits })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<ZeroTileBook> {
        let mut f = std::fs::File::open(path)?;
        ZeroTileBook::read_from(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_book_has_no_zeros() {
        let b = ZeroTileBook::dense(20, 32, 8);
        assert_eq!(b.zero_tile_count(), 0);
        assert_eq!(b.fully_sparse_window_count(), 0);
        assert!(!b.window_fully_sparse(0, 0));
    }

    #[test]
    fn set_and_query() {
        let mut b = ZeroTileBook::dense(3, 4, 8);
        b.set_zero(1, 2, 5, true);
        assert!(b.is_zero(1, 2, 5));
        assert!(!b.is_zero(1, 2, 4));
        assert_eq!(b.zero_tile_count(), 1);
        assert_eq!(b.window_zero_count(1, 2), 1);
        assert!(!b.window_fully_sparse(1, 2));
        b.set_zero(1, 2, 5, false);
        assert_eq!(b.zero_tile_count(), 0);
    }

    #[test]
    fn window_sparsity_exact_fraction() {
        for &frac in &[0.0, 0.25, 0.5, 1.0] {
            let b = ZeroTileBook::with_window_sparsity(20, 32, 8, frac, 7);
            let expect = ((20.0 * 32.0) * frac).round() as u64;
            assert_eq!(b.fully_sparse_window_count(), expect);
            assert_eq!(b.zero_tile_count(), expect * 8);
        }
    }

    #[test]
    fn window_sparsity_deterministic() {
        let a = ZeroTileBook::with_window_sparsity(10, 10, 4, 0.3, 42);
        let b = ZeroTileBook::with_window_sparsity(10, 10, 4, 0.3, 42);
        assert_eq!(a, b);
        let c = ZeroTileBook::with_window_sparsity(10, 10, 4, 0.3, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn tile_sparsity_statistics() {
        let b = ZeroTileBook::with_tile_sparsity(40, 40, 8, 0.5, 1);
        let total = 40 * 40 * 8;
        let zeros = b.zero_tile_count();
        assert!(zeros > total * 45 / 100 && zeros < total * 55 / 100);
    }

    #[test]
    fn round_trip_through_file() {
        let b = ZeroTileBook::with_tile_sparsity(20, 32, 8, 0.3, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("book.ztb");
        b.save(&path).unwrap();
        let r = ZeroTileBook::load(&path).unwrap();
        assert_eq!(b, r);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        ZeroTileBook::dense(2, 2, 2).write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ZeroTileBook::read_from(&mut bad.as_slice()).is_err());
        let short = &buf[..buf.len() - 1];
        assert!(ZeroTileBook::read_from(&mut &short[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(ZeroTileBook::read_from(&mut long.as_slice()).is_err());
    }

    #[test]
    fn shape_check() {
        let b = ZeroTileBook::dense(20, 32, 8);
        assert!(b.check_shape(20, 32, 8).is_ok());
        assert!(matches!(
            b.check_shape(20, 32, 4),
            Err(Error::ZtbShapeMismatch { .. })
        ));
    }
}
