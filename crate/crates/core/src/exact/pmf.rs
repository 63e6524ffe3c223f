use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::report::fmt_real;
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

/// Joint pmf on `{i : sum i <= cap}` with the remaining mass lumped into `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPmf {
    pub times: Vec<u64>,
    pub t_obs: Option<u64>,
    pub cap: usize,
    /// serialized as a list of `[index, p]` pairs
    #[serde(serialize_with = "cells_as_pairs")]
    pub cells: BTreeMap<Vec<u32>, f64>,
    /// `1 - sum(cells)`: counts past the cap, plus any mass at infinity
    pub overflow: f64,
}

fn cells_as_pairs<S: Serializer>(cells: &BTreeMap<Vec<u32>, f64>, ser: S) -> Result<S::Ok, S::Error> {
    ser.collect_seq(cells.iter())
}

impl JointPmf {
    /// Reads cells from the series coefficients; the overflow closes the total to 1.
    pub fn from_series<S: Scalar>(times: Vec<u64>, t_obs: Option<u64>, series: &TruncatedSeries<S>) -> Self {
        let cells: BTreeMap<Vec<u32>, f64> =
            series.terms().into_iter().map(|(e, c)| (e, c.to_f64_lossy())).collect();
        Self::from_cells(times, t_obs, series.cap(), cells)
    }

    pub fn from_cells(times: Vec<u64>, t_obs: Option<u64>, cap: usize, cells: BTreeMap<Vec<u32>, f64>) -> Self {
        let total: f64 = cells.values().sum();
        Self { times, t_obs, cap, cells, overflow: 1.0 - total }
    }

    pub fn dim(&self) -> usize {
        self.cells.keys().next().map_or(self.times.len(), Vec::len)
    }

    pub fn get(&self, index: &[u32]) -> f64 {
        self.cells.get(index).copied().unwrap_or(0.0)
    }

    /// Mass on the explicit cells.
    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    /// Law of one coordinate on `0..=cap`, with the rest in the overflow.
    pub fn marginal(&self, coordinate: usize) -> JointPmf {
        let mut cells = BTreeMap::new();
        for (idx, &p) in &self.cells {
            *cells.entry(vec![idx[coordinate]]).or_insert(0.0) += p;
        }
        let times = self.times.get(coordinate).map(|&t| vec![t]).unwrap_or_default();
        JointPmf::from_cells(times, self.t_obs, self.cap, cells)
    }

    /// Total variation `1/2 sum |p - q|` over the union of cells and the overflow bucket.
    pub fn tv_distance(&self, other: &JointPmf) -> f64 {
        let mut acc = 0.0;
        for (idx, &p) in &self.cells {
            acc += (p - other.get(idx)).abs();
        }
        for (idx, &q) in &other.cells {
            if !self.cells.contains_key(idx) {
                acc += q.abs();
            }
        }
        0.5 * (acc + (self.overflow - other.overflow).abs())
    }

    /// CSV with one column per coordinate and a final `overflow` row.
    pub fn to_csv(&self) -> String {
        let names: Vec<String> = (0..self.dim()).map(|i| format!("i{}", i + 1)).collect();
        let mut out = format!("{},p\n", names.join(","));
        for (idx, &p) in &self.cells {
            let idx: Vec<String> = idx.iter().map(u32::to_string).collect();
            writeln!(out, "{},{}", idx.join(","), fmt_real(p)).expect("writing to a String");
        }
        let blanks = vec!["overflow"; self.dim()].join(",");
        writeln!(out, "{blanks},{}", fmt_real(self.overflow)).expect("writing to a String");
        out
    }
}
