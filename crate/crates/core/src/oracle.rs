//! The only channel through which the completion algorithm sees entries of
//! `N`. Repeated observations of a cell are cached and cost nothing.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::GroundTruthInstance;
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Entry,
    Row,
    Column,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub kind: QueryKind,
    pub i: Option<usize>,
    pub j: Option<usize>,
    /// Unique-entry count after this query.
    pub unique_count: usize,
}

pub struct QueryOracle {
    source: DenseMatrix,
    observed: Vec<bool>,
    unique: usize,
    rng: ChaCha8Rng,
    log: Vec<QueryLogEntry>,
}

impl QueryOracle {
    pub fn new(source: DenseMatrix, rng_seed: u64) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::InvalidInput("oracle needs a non-empty matrix".into()));
        }
        if !source.is_finite() {
            return Err(Error::InvalidInput("oracle matrix has non-finite entries".into()));
        }
        let cells = source.rows() * source.cols();
        Ok(Self {
            source,
            observed: vec![false; cells],
            unique: 0,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            log: Vec::new(),
        })
    }

    /// An oracle over the observable matrix `N` of an instance.
    pub fn for_instance(inst: &GroundTruthInstance, rng_seed: u64) -> Result<Self> {
        Self::new(inst.observed().clone(), rng_seed)
    }

    pub fn n_rows(&self) -> usize {
        self.source.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.source.cols()
    }

    pub fn unique_query_count(&self) -> usize {
        self.unique
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        i < self.n_rows() && j < self.n_cols() && self.observed[i * self.n_cols() + j]
    }

    pub fn log(&self) -> &[QueryLogEntry] {
        &self.log
    }

    fn check(&self, i: Option<usize>, j: Option<usize>) -> Result<()> {
        if let Some(i) = i.filter(|&i| i >= self.n_rows()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_rows(),
            });
        }
        if let Some(j) = j.filter(|&j| j >= self.n_cols()) {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_cols(),
            });
        }
        Ok(())
    }

    fn observe(&mut self, i: usize, j: usize) -> f64 {
        let cell = i * self.n_cols() + j;
        if !self.observed[cell] {
            self.observed[cell] = true;
            self.unique += 1;
        }
        self.source.get(i, j)
    }

    fn record(&mut self, kind: QueryKind, i: Option<usize>, j: Option<usize>) {
        self.log.push(QueryLogEntry {
            kind,
            i,
            j,
            unique_count: self.unique,
        });
    }

    pub fn query_entry(&mut self, i: usize, j: usize) -> Result<f64> {
        self.check(Some(i), Some(j))?;
        let v = self.observe(i, j);
        self.record(QueryKind::Entry, Some(i), Some(j));
        Ok(v)
    }

    pub fn query_row(&mut self, i: usize) -> Result<Vec<f64>> {
        self.check(Some(i), None)?;
        let row = (0..self.n_cols()).map(|j| self.observe(i, j)).collect();
        self.record(QueryKind::Row, Some(i), None);
        Ok(row)
    }

    pub fn query_column(&mut self, j: usize) -> Result<Vec<f64>> {
        self.check(None, Some(j))?;
        let col = (0..self.n_rows()).map(|i| self.observe(i, j)).collect();
        self.record(QueryKind::Column, None, Some(j));
        Ok(col)
    }

    /// Queries every cell of `N[rows, cols]` (each logged as an entry query).
    pub fn query_submatrix(&mut self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.query_entry(i, j)?);
            }
        }
        Ok(out)
    }

    /// Uniform row index from the oracle-owned generator.
    pub fn draw_random_row(&mut self) -> usize {
        self.rng.random_range(0..self.n_rows())
    }

    /// Row-major observation mask.
    pub fn observed_mask(&self) -> Vec<Vec<bool>> {
        self.observed
            .chunks(self.n_cols())
            .map(|c| c.to_vec())
            .collect()
    }

    /// Writes the log as `kind,i,j,unique_count` lines (with a header).
    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_query_log(&self.log, writer)
    }
}

pub fn write_query_log<W: Write>(log: &[QueryLogEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_query_log<R: std::io::Read>(reader: R) -> Result<Vec<QueryLogEntry>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(seed: u64) -> QueryOracle {
        let m = DenseMatrix::from_rows(&[[1., 2., 3.], [4., 5., 6.], [7., 8., 9.], [1., 0., 1.]])
            .unwrap();
        QueryOracle::new(m, seed).unwrap()
    }

    #[test]
    fn entry_queries_are_cached() {
        let mut o = oracle(1);
        assert_eq!(o.query_entry(0, 0).unwrap(), 1.0);
        assert_eq!(o.unique_query_count(), 1);
        assert_eq!(o.query_entry(0, 0).unwrap(), 1.0);
        assert_eq!(o.unique_query_count(), 1);
        assert!(o.is_observed(0, 0));
        assert!(!o.is_observed(0, 1));
    }

    #[test]
    fn column_and_row_dedup() {
        let mut o = oracle(1);
        o.query_column(1).unwrap();
        assert_eq!(o.unique_query_count(), 4);

        let mut o = oracle(1);
        o.query_entry(2, 1).unwrap();
        o.query_column(1).unwrap();
        assert_eq!(o.unique_query_count(), 4);

        let mut o = oracle(1);
        o.query_row(2).unwrap();
        o.query_column(1).unwrap();
        assert_eq!(o.unique_query_count(), 3 + 4 - 1);
    }

    #[test]
    fn out_of_range_queries_fail() {
        let mut o = oracle(1);
        assert!(matches!(o.query_entry(4, 0), Err(Error::IndexOutOfRange { index: 4, len: 4 })));
        assert!(o.query_entry(0, 3).is_err());
        assert!(o.query_row(9).is_err());
        assert!(o.query_column(3).is_err());
        assert_eq!(o.unique_query_count(), 0);
    }

    #[test]
    fn draws_are_replayable_and_in_range() {
        let mut a = oracle(42);
        let mut b = oracle(42);
        let xs: Vec<usize> = (0..200).map(|_| a.draw_random_row()).collect();
        let ys: Vec<usize> = (0..200).map(|_| b.draw_random_row()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&i| i < 4));
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        let m = DenseMatrix::zeros(10, 1);
        let mut o = QueryOracle::new(m.scaled(0.0), 2024).unwrap();
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[o.draw_random_row()] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn log_counts_are_monotone_and_round_trip() {
        let mut o = oracle(3);
        o.query_entry(1, 1).unwrap();
        o.query_row(1).unwrap();
        o.query_entry(1, 1).unwrap();
        o.query_column(0).unwrap();
        let counts: Vec<usize> = o.log().iter().map(|e| e.unique_count).collect();
        assert_eq!(counts, vec![1, 3, 3, 6]);

        let mut buf = Vec::new();
        o.write_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kind,i,j,unique_count\nentry,1,1,1\nrow,1,,3\n"));
        assert_eq!(read_query_log(buf.as_slice()).unwrap(), o.log());
    }

    #[test]
    fn mask_matches_count() {
        let mut o = oracle(3);
        o.query_row(3).unwrap();
        o.query_entry(0, 2).unwrap();
        let marked: usize = o.observed_mask().iter().flatten().filter(|&&b| b).count();
        assert_eq!(marked, o.unique_query_count());
    }
}
