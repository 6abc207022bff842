//! Clustering accuracy under the best one-to-one label matching, and
//! normalized mutual information.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Co-occurrence counts of predicted clusters (rows) and true classes
/// (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Size(format!(
                "{} predictions but {} ground-truth labels",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Size("no labels to compare".into()));
        }
        let rows = pred.iter().max().map_or(0, |m| m + 1);
        let cols = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

/// Fraction of points that agree under the best cluster-to-class matching.
/// The table is zero-padded to square when the label counts differ.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let rows = table.counts.len();
    let cols = table.counts.first().map_or(0, Vec::len);
    let k = rows.max(cols);
    let square = DMatrix::from_fn(k, k, |i, j| {
        if i < rows && j < cols {
            table.counts[i][j] as f64
        } else {
            0.0
        }
    });
    let assignment = hungarian(&square, true)?;
    let matched: u64 = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| table.counts[i][j])
        .sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural log). Two single-cluster partitions score 1; if exactly one is
/// single-cluster the score is 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let rs = table.row_sums();
    let cs = table.col_sums();
    let hp = entropy(&rs, n);
    let ht = entropy(&cs, n);
    let single_p = rs.iter().filter(|&&c| c > 0).count() <= 1;
    let single_t = cs.iter().filter(|&&c| c > 0).count() <= 1;
    match (single_p, single_t) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += (c / n) * (c * n / (rs[i] as f64 * cs[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

/// Optimal assignment on a square cost matrix: returns `a` with row `i`
/// matched to column `a[i]`, minimizing (or maximizing) the total.
///
/// Shortest-augmenting-path Hungarian method with potentials, `O(K^3)`.
pub fn hungarian(costs: &DMatrix<f64>, maximize: bool) -> Result<Vec<usize>> {
    if !costs.is_square() {
        return Err(Error::Size(format!(
            "cost matrix must be square, got {}x{}",
            costs.nrows(),
            costs.ncols()
        )));
    }
    if costs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("cost matrix contains non-finite entries".into()));
    }
    let k = costs.nrows();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cost = |i: usize, j: usize| if maximize { -costs[(i, j)] } else { costs[(i, j)] };

    // 1-based rows/columns; index 0 is the virtual start.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut matched_row = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[col0] = true;
            let i0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; k];
    for j in 1..=k {
        assignment[matched_row[j] - 1] = j - 1;
    }
    Ok(assignment)
}
