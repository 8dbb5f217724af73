use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Complete-case binary responses, `n` rows by `p` items.
#[derive(Debug)]
pub struct ResponseMatrix {
    n: usize,
    p: usize,
    data: Vec<u8>,
    patterns: OnceLock<PatternTable>,
    pair_counts: OnceLock<PairCounts>,
}

impl Clone for ResponseMatrix {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            p: self.p,
            data: self.data.clone(),
            patterns: OnceLock::new(),
            pair_counts: OnceLock::new(),
        }
    }
}

impl PartialEq for ResponseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.p == other.p && self.data == other.data
    }
}

/// Distinct response patterns with multiplicities, plus the map from each
/// observation back to its pattern.
#[derive(Debug, Clone)]
pub(crate) struct PatternTable {
    pub rows: Vec<Vec<u8>>,
    pub counts: Vec<f64>,
    pub row_pattern: Vec<usize>,
}

/// Counts of the four cells of each item pair `j < k`, indexed by
/// `2 * y_j + y_k`.
#[derive(Debug, Clone)]
pub(crate) struct PairCounts {
    pub cells: Vec<[f64; 4]>,
}

impl ResponseMatrix {
    /// Build from row-major 0/1 values.
    pub fn new(n: usize, p: usize, data: Vec<u8>) -> Result<Self> {
        if n < 1 {
            return Err(Error::Data("at least one observation is required".into()));
        }
        if p < 2 {
            return Err(Error::Data("at least two items are required".into()));
        }
        if data.len() != n * p {
            return Err(Error::Data(format!(
                "expected {} entries for a {n} x {p} matrix, got {}",
                n * p,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!(
                "non-binary value {} at row {}, item {}",
                data[pos],
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self::from_validated(n, p, data))
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Data("ragged rows".into()));
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub(crate) fn from_validated(n: usize, p: usize, data: Vec<u8>) -> Self {
        Self {
            n,
            p,
            data,
            patterns: OnceLock::new(),
            pair_counts: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn item_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.p];
        for i in 0..self.n {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v as f64;
            }
        }
        sums.iter().map(|s| s / self.n as f64).collect()
    }

    /// Items whose responses are all 0 or all 1 (zero-based).
    pub fn constant_items(&self) -> Vec<usize> {
        self.item_means()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0.0 || m == 1.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub(crate) fn patterns(&self) -> &PatternTable {
        self.patterns.get_or_init(|| {
            let mut index: HashMap<&[u8], usize> = HashMap::new();
            let mut rows = Vec::new();
            let mut counts: Vec<f64> = Vec::new();
            let mut row_pattern = Vec::with_capacity(self.n);
            for i in 0..self.n {
                let r = self.row(i);
                let k = *index.entry(r).or_insert_with(|| {
                    rows.push(r.to_vec());
                    counts.push(0.0);
                    rows.len() - 1
                });
                counts[k] += 1.0;
                row_pattern.push(k);
            }
            PatternTable {
                rows,
                counts,
                row_pattern,
            }
        })
    }

    pub(crate) fn pair_counts(&self) -> &PairCounts {
        self.pair_counts.get_or_init(|| {
            let p = self.p;
            let mut cells = vec![[0.0; 4]; p * (p - 1) / 2];
            let pat = self.patterns();
            for (row, &cnt) in pat.rows.iter().zip(&pat.counts) {
                let mut idx = 0;
                for j in 0..p {
                    for k in j + 1..p {
                        cells[idx][(2 * row[j] + row[k]) as usize] += cnt;
                        idx += 1;
                    }
                }
            }
            PairCounts { cells }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary() {
        let err = ResponseMatrix::new(2, 2, vec![0, 1, 2, 0]).unwrap_err();
        assert!(err.to_string().contains("row 2, item 1"));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ResponseMatrix::new(0, 2, vec![]).is_err());
        assert!(ResponseMatrix::new(1, 1, vec![1]).is_err());
        assert!(ResponseMatrix::new(2, 2, vec![1, 0, 1]).is_err());
    }

    #[test]
    fn patterns_compress_duplicates() {
        let m = ResponseMatrix::from_rows(&[vec![0, 1], vec![1, 1], vec![0, 1]]).unwrap();
        let t = m.patterns();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.counts, vec![2.0, 1.0]);
        assert_eq!(t.row_pattern, vec![0, 1, 0]);
        let pc = m.pair_counts();
        assert_eq!(pc.cells, vec![[0.0, 2.0, 0.0, 1.0]]);
    }

    #[test]
    fn constant_items_detected() {
        let m = ResponseMatrix::from_rows(&[vec![0, 1, 1], vec![1, 1, 0]]).unwrap();
        assert_eq!(m.constant_items(), vec![1]);
    }
}
