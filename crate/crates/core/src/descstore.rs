//! Global descriptor database with exact nearest-neighbour search.
//!
//! Rows are L2-normalized at ingestion so that ascending squared-L2 order is
//! identical to descending cosine similarity. Row `i` belongs to tile `i`.
//!
//! On disk the database is stored in the AVLD format (little-endian):
//!
//! | bytes | field                              |
//! |-------|------------------------------------|
//! | 4     | magic `"AVLD"`                     |
//! | 4     | version, `u32` = 1                 |
//! | 8     | row count, `u64`                   |
//! | 4     | dimension, `u32`                   |
//! | 4·n·d | `f32` values, row-major            |

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const AVLD_MAGIC: &[u8; 4] = b"AVLD";
pub const AVLD_VERSION: u32 = 1;
const AVLD_HEADER_LEN: usize = 20;

/// A fixed-dimension image descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor(pub Vec<f32>);

impl GlobalDescriptor {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

impl From<Vec<f32>> for GlobalDescriptor {
    fn from(v: Vec<f32>) -> Self {
        GlobalDescriptor(v)
    }
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub tile_id: usize,
    /// Squared L2 distance between normalized vectors.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDatabase {
    dim: usize,
    matrix: Vec<f32>,
}

/// Scales `v` to unit length; zero vectors stay zero.
pub fn l2_normalize(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

/// Squared L2 distance accumulated in `f64` over eight interleaved lanes
/// (fixed order, so results are reproducible).
pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let d = x[l] as f64 - y[l] as f64;
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ra.iter().zip(rb) {
        let d = x as f64 - y as f64;
        tail += d * d;
    }
    acc.iter().sum::<f64>() + tail
}

fn check_row(row: usize, v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            row,
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { row });
    }
    Ok(())
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.tile_id.cmp(&b.tile_id))
}

impl DescriptorDatabase {
    /// Stores the descriptors in input order, L2-normalized.
    pub fn build(descriptors: &[GlobalDescriptor]) -> Result<Self> {
        let first = descriptors
            .first()
            .ok_or_else(|| Error::Empty("descriptor list".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::Empty("descriptor dimension is zero".into()));
        }
        let mut matrix = Vec::with_capacity(descriptors.len() * dim);
        for (row, d) in descriptors.iter().enumerate() {
            check_row(row, d.as_slice(), dim)?;
            matrix.extend(l2_normalize(d.as_slice()));
        }
        Ok(Self { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.matrix.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.matrix.chunks_exact(self.dim)
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    /// Exact top-`n` search: ascending squared L2 from the normalized query,
    /// ties broken by ascending tile id. Returns `min(n, count)` hits.
    pub fn search(&self, query: &GlobalDescriptor, n: usize) -> Result<Vec<Neighbor>> {
        check_row(0, query.as_slice(), self.dim).map_err(|e| match e {
            Error::DimensionMismatch {
                expected, found, ..
            } => Error::InvalidParameter(format!(
                "query dimension {found} does not match database dimension {expected}"
            )),
            other => other,
        })?;
        if n == 0 {
            return Err(Error::InvalidParameter("search depth N must be >= 1".into()));
        }
        let q = l2_normalize(query.as_slice());
        let mut hits: Vec<Neighbor> = self
            .rows()
            .enumerate()
            .map(|(tile_id, row)| Neighbor {
                tile_id,
                distance: squared_l2(&q, row),
            })
            .collect();
        let n = n.min(hits.len());
        if n < hits.len() {
            hits.select_nth_unstable_by(n - 1, neighbor_order);
            hits.truncate(n);
        }
        hits.sort_unstable_by(neighbor_order);
        Ok(hits)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(AVLD_HEADER_LEN + self.matrix.len() * 4);
        out.extend_from_slice(AVLD_MAGIC);
        out.extend_from_slice(&AVLD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.matrix {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses AVLD bytes without renormalizing the stored rows.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let truncated = |expected: usize| Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        };
        if bytes.len() < 4 {
            return Err(truncated(AVLD_HEADER_LEN));
        }
        if &bytes[..4] != AVLD_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "AVLD".into(),
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        if bytes.len() < AVLD_HEADER_LEN {
            return Err(truncated(AVLD_HEADER_LEN));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != AVLD_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                expected: AVLD_VERSION,
                found: version,
            });
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let invalid = |message: &str| Error::InvalidFormat {
            path: path.to_path_buf(),
            message: message.into(),
        };
        if count == 0 || dim == 0 {
            return Err(invalid("count and dimension must be >= 1"));
        }
        let payload = (count as usize)
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| invalid("count * dim overflows"))?;
        let expected = AVLD_HEADER_LEN + payload;
        if bytes.len() < expected {
            return Err(truncated(expected));
        }
        if bytes.len() > expected {
            return Err(invalid("trailing bytes after the matrix"));
        }
        let matrix: Vec<f32> = bytes[AVLD_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for (row, r) in matrix.chunks_exact(dim).enumerate() {
            check_row(row, r, dim)?;
        }
        Ok(Self { dim, matrix })
    }

    /// Appends the rows of `other` (used to merge imported shards).
    pub fn concat(parts: Vec<DescriptorDatabase>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut acc = iter
            .next()
            .ok_or_else(|| Error::Empty("no descriptor files".into()))?;
        for part in iter {
            if part.dim != acc.dim {
                return Err(Error::DimensionMismatch {
                    row: acc.count(),
                    expected: acc.dim,
                    found: part.dim,
                });
            }
            acc.matrix.extend(part.matrix);
        }
        Ok(acc)
    }

    /// Rows as descriptors (normalized).
    pub fn descriptors(&self) -> Vec<GlobalDescriptor> {
        self.rows().map(|r| GlobalDescriptor(r.to_vec())).collect()
    }
}

pub fn save_database(db: &DescriptorDatabase, path: &Path) -> Result<()> {
    fs::write(path, db.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_database(path: &Path) -> Result<DescriptorDatabase> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DescriptorDatabase::from_bytes(&bytes, path)
}
