//! Bit-accurate functional model of one ADiP core: DiP weight permutation,
//! diagonal input dataflow, and reconfigurable-PE arithmetic in all three
//! precision modes. Serves as the correctness oracle target for the
//! simulator.
//!
//! The model is cycle-agnostic internally: it computes exact integer results
//! and reports cycle counts separately via [`core_cycle_count`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, PrecisionMode};
use crate::error::{Error, Result};

/// Dense integer matrix with a declared two's-complement element width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bit_width: u8,
    data: Vec<i32>,
}

fn width_range(bits: u8) -> (i32, i32) {
    if bits >= 32 {
        (i32::MIN, i32::MAX)
    } else {
        (-(1 << (bits - 1)), (1 << (bits - 1)) - 1)
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize, bit_width: u8) -> IntMatrix {
        IntMatrix {
            rows,
            cols,
            bit_width,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, bit_width: u8, data: Vec<i32>) -> Result<IntMatrix> {
        if data.len() != rows * cols {
            return Err(Error::MatrixShape {
                expected: format!("{rows}x{cols}"),
                found: format!("{} elements", data.len()),
            });
        }
        let (lo, hi) = width_range(bit_width);
        for &v in &data {
            if v < lo || v > hi {
                return Err(Error::ElementOutOfRange {
                    value: v,
                    bits: bit_width,
                });
            }
        }
        Ok(IntMatrix {
            rows,
            cols,
            bit_width,
            data,
        })
    }

    pub fn identity(n: usize, bit_width: u8) -> IntMatrix {
        let mut m = IntMatrix::zeros(n, n, bit_width);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn random<R: Rng>(rows: usize, cols: usize, bit_width: u8, rng: &mut R) -> IntMatrix {
        let (lo, hi) = width_range(bit_width.min(8));
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..=hi)).collect();
        IntMatrix {
            rows,
            cols,
            bit_width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: i32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    /// Submatrix copy, zero-padded when the range runs past the edge.
    pub fn slice_padded(
        &self,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
        bit_width: u8,
    ) -> IntMatrix {
        let mut out = IntMatrix::zeros(rows, cols, bit_width);
        for r in 0..rows {
            for c in 0..cols {
                if row0 + r < self.rows && col0 + c < self.cols {
                    out.set(r, c, self.get(row0 + r, col0 + c));
                }
            }
        }
        out
    }
}

/// Statically permutes a D x D weight tile for the DiP dataflow: output
/// column j is input column j rotated downward by j positions.
pub fn permute_weights(w: &IntMatrix, d: usize) -> Result<IntMatrix> {
    if w.rows != d || w.cols != d {
        return Err(Error::MatrixShape {
            expected: format!("{d}x{d}"),
            found: format!("{}x{}", w.rows, w.cols),
        });
    }
    let mut out = IntMatrix::zeros(d, d, w.bit_width);
    for j in 0..d {
        for i in 0..d {
            out.set((i + j) % d, j, w.get(i, j));
        }
    }
    Ok(out)
}

/// Inverse of [`permute_weights`]: rotates each column upward by its index.
pub fn unpermute_weights(w: &IntMatrix, d: usize) -> Result<IntMatrix> {
    if w.rows != d || w.cols != d {
        return Err(Error::MatrixShape {
            expected: format!("{d}x{d}"),
            found: format!("{}x{}", w.rows, w.cols),
        });
    }
    let mut out = IntMatrix::zeros(d, d, w.bit_width);
    for j in 0..d {
        for i in 0..d {
            out.set(i, j, w.get((i + j) % d, j));
        }
    }
    Ok(out)
}

/// One reconfigurable PE: 16 two-bit multiplier lanes in four groups of
/// four, each group with an internal accumulator.
///
/// A weight is decomposed into radix-4 digits (the top digit signed, the
/// rest unsigned); each lane multiplies the 8-bit activation by one 2-bit
/// digit and the group accumulators recombine the lane products with shifts.
fn pe_multiply(activation: i32, weight: i32, weight_bits: u8) -> i32 {
    debug_assert!(matches!(weight_bits, 2 | 4 | 8));
    let digits = (weight_bits / 2) as u32;
    let mut lanes = 0i32;
    let mut w = weight;
    for s in 0..digits {
        let digit = if s == digits - 1 {
            w // signed top digit, remaining two's-complement value
        } else {
            w & 0x3
        };
        lanes += (activation * digit) << (2 * s);
        w >>= 2;
    }
    lanes
}

/// Validates that every element of `w` fits the weight width of `mode`.
fn check_weight_width(w: &IntMatrix, mode: PrecisionMode) -> Result<()> {
    let bits = mode.weight_bits();
    let (lo, hi) = width_range(bits);
    for &v in w.data() {
        if v < lo || v > hi {
            return Err(Error::ElementOutOfRange { value: v, bits });
        }
    }
    Ok(())
}

/// Multiplies an M x D activation tile by R interleaved D x D weight tiles
/// through the permuted-weight diagonal dataflow.
///
/// The stationary PE at (i, j) holds the permuted weight, which is the
/// original element W[(i - j) mod D][j]; the activation element reaching it
/// travels the (i - j) mod D diagonal, and column j's products reduce to the
/// output element for that row. Output element widths are 32-bit.
pub fn core_matmul(
    a: &IntMatrix,
    w_tiles: &[IntMatrix],
    mode: PrecisionMode,
) -> Result<Vec<IntMatrix>> {
    let r = mode.acceleration_ratio() as usize;
    if w_tiles.len() != r {
        return Err(Error::TileCountMismatch {
            mode: mode.to_string(),
            expected: r,
            found: w_tiles.len(),
        });
    }
    let d = a.cols;
    let mut permuted = Vec::with_capacity(r);
    for w in w_tiles {
        check_weight_width(w, mode)?;
        permuted.push(permute_weights(w, d)?);
    }
    let weight_bits = mode.weight_bits();
    let mut outputs = vec![IntMatrix::zeros(a.rows, d, 32); r];
    for m in 0..a.rows {
        for j in 0..d {
            let mut accs = vec![0i32; r];
            for i in 0..d {
                // diagonal input movement: the element on diagonal
                // (i - j) mod D arrives at PE (i, j)
                let k = (i + d - j) % d;
                let act = a.get(m, k);
                for (t, wp) in permuted.iter().enumerate() {
                    accs[t] += pe_multiply(act, wp.get(i, j), weight_bits);
                }
            }
            for (t, acc) in accs.iter().enumerate() {
                outputs[t].set(m, j, *acc);
            }
        }
    }
    Ok(outputs)
}

/// Cycle count of one single-tile pass: weight load D, stream M rows,
/// pipeline P, drain D. Partial last row tiles are zero-padded, so M rounds
/// up to a multiple of D. The count is identical across precision modes.
pub fn core_cycle_count(m: u64, _mode: PrecisionMode, arch: &ArchConfig) -> u64 {
    let d = arch.core_dim;
    let mt = m.div_ceil(d);
    d * (mt + 1) + arch.pipeline_stages + d
}

/// Naive triple-loop integer GEMM, the independent reference for the
/// dataflow path. Kept deliberately simple.
pub fn naive_matmul(a: &IntMatrix, w: &IntMatrix) -> Result<IntMatrix> {
    if a.cols != w.rows {
        return Err(Error::MatrixShape {
            expected: format!("inner dims to match ({} vs {})", a.cols, w.rows),
            found: format!("{}x{} . {}x{}", a.rows, a.cols, w.rows, w.cols),
        });
    }
    let mut out = IntMatrix::zeros(a.rows, w.cols, 32);
    for i in 0..a.rows {
        for j in 0..w.cols {
            let mut acc = 0i32;
            for k in 0..a.cols {
                acc += a.get(i, k) * w.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}
