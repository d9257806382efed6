//! Maximum-weight bipartite matching with optional (unforced) matches.
//!
//! Rows are receivers and columns transmitters. Edges with nonpositive
//! weight never improve a matching and are ignored by both solvers, so a
//! row or column may stay unmatched.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("edge ({row}, {col}) is out of range or duplicated")]
    InvalidEdge { row: usize, col: usize },
    #[error("edge weight must be finite, got {0}")]
    NonFiniteWeight(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("auction did not terminate within {rounds} bids")]
    NonTermination { rounds: usize },
}

pub type Result<T> = std::result::Result<T, MatchingError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchingProblem {
    num_rows: usize,
    num_cols: usize,
    edges: Vec<Edge>,
}

impl MatchingProblem {
    pub fn new(num_rows: usize, num_cols: usize) -> Self {
        Self { num_rows, num_cols, edges: Vec::new() }
    }

    /// Builds a problem from a dense weight table; `None` marks a missing edge.
    pub fn from_dense(weights: &[Vec<Option<f64>>], num_cols: usize) -> Result<Self> {
        let mut p = Self::new(weights.len(), num_cols);
        for (row, ws) in weights.iter().enumerate() {
            for (col, w) in ws.iter().enumerate() {
                if let Some(w) = w {
                    p.add_edge(row, col, *w)?;
                }
            }
        }
        Ok(p)
    }

    pub fn add_edge(&mut self, row: usize, col: usize, weight: f64) -> Result<()> {
        if !weight.is_finite() {
            return Err(MatchingError::NonFiniteWeight(weight));
        }
        if row >= self.num_rows || col >= self.num_cols || self.edges.iter().any(|e| e.row == row && e.col == col) {
            return Err(MatchingError::InvalidEdge { row, col });
        }
        self.edges.push(Edge { row, col, weight });
        Ok(())
    }

    /// Like [`add_edge`](Self::add_edge) without the duplicate scan; callers guarantee uniqueness.
    pub(crate) fn push_unique_edge(&mut self, row: usize, col: usize, weight: f64) {
        debug_assert!(row < self.num_rows && col < self.num_cols && weight.is_finite());
        self.edges.push(Edge { row, col, weight });
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Positive edges relabelled onto the rows and columns that carry one.
    fn compress(&self) -> Compressed {
        let mut row_id = vec![usize::MAX; self.num_rows];
        let mut col_id = vec![usize::MAX; self.num_cols];
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut edges = Vec::new();
        for e in self.edges.iter().filter(|e| e.weight > 0.0) {
            if row_id[e.row] == usize::MAX {
                row_id[e.row] = rows.len();
                rows.push(e.row);
            }
            if col_id[e.col] == usize::MAX {
                col_id[e.col] = cols.len();
                cols.push(e.col);
            }
            edges.push((row_id[e.row], col_id[e.col], e.weight));
        }
        Compressed { rows, cols, edges }
    }
}

struct Compressed {
    rows: Vec<usize>,
    cols: Vec<usize>,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub value: f64,
}

impl Matching {
    fn from_pairs(p: &MatchingProblem, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let value = pairs
            .iter()
            .map(|&(r, c)| p.edges.iter().find(|e| e.row == r && e.col == c).map_or(0.0, |e| e.weight))
            .sum();
        Self { pairs, value }
    }

    pub fn col_of_row(&self, num_rows: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_rows];
        for &(r, c) in &self.pairs {
            out[r] = Some(c);
        }
        out
    }

    pub fn is_valid(&self, p: &MatchingProblem) -> bool {
        let mut rows = vec![false; p.num_rows];
        let mut cols = vec![false; p.num_cols];
        self.pairs.iter().all(|&(r, c)| {
            r < p.num_rows
                && c < p.num_cols
                && !std::mem::replace(&mut rows[r], true)
                && !std::mem::replace(&mut cols[c], true)
                && p.edges.iter().any(|e| e.row == r && e.col == c)
        })
    }
}

/// Exact maximum-weight matching via the shortest-augmenting-path Hungarian
/// method on the compressed positive-edge subgraph.
pub fn hungarian(p: &MatchingProblem) -> Matching {
    let c = p.compress();
    if c.edges.is_empty() {
        return Matching::default();
    }
    let transpose = c.rows.len() > c.cols.len();
    let (n, m) = if transpose { (c.cols.len(), c.rows.len()) } else { (c.rows.len(), c.cols.len()) };
    // cost 0 on absent edges doubles as "unmatched"
    let mut cost = vec![0.0; n * m];
    for &(r, col, w) in &c.edges {
        let (a, b) = if transpose { (col, r) } else { (r, col) };
        cost[a * m + b] = -w;
    }
    let assignment = min_cost_assignment(n, m, &cost);
    let pairs = assignment
        .into_iter()
        .enumerate()
        .filter(|&(a, b)| cost[a * m + b] < 0.0)
        .map(|(a, b)| if transpose { (c.rows[b], c.cols[a]) } else { (c.rows[a], c.cols[b]) })
        .collect();
    Matching::from_pairs(p, pairs)
}

/// Assigns each of `n ≤ m` rows to a distinct column minimizing total cost
/// (row-major `n × m`). Returns the column of each row.
fn min_cost_assignment(n: usize, m: usize, cost: &[f64]) -> Vec<usize> {
    // potentials and matches use 1-based indexing with column 0 as the root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut min_to = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut j0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                    if cur < min_to[j] {
                        min_to[j] = cur;
                        way[j] = j0;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

pub const DEFAULT_AUCTION_BIDS: usize = 50_000_000;

/// Auction algorithm with ε-scaling. The returned value is within `epsilon`
/// of the optimum.
pub fn auction(p: &MatchingProblem, epsilon: f64) -> Result<Matching> {
    auction_with_limit(p, epsilon, DEFAULT_AUCTION_BIDS)
}

/// [`auction`] with an explicit cap on the total number of bids.
///
/// The problem is made square: every row gets a private zero-value dummy
/// object and every column a dummy bidder that may take the column itself
/// or any row's dummy object, so every perfect assignment of the augmented
/// problem is a partial matching of the original one.
pub fn auction_with_limit(p: &MatchingProblem, epsilon: f64, max_bids: usize) -> Result<Matching> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(MatchingError::InvalidEpsilon(epsilon));
    }
    let c = p.compress();
    if c.edges.is_empty() {
        return Ok(Matching::default());
    }
    let (r, k) = (c.rows.len(), c.cols.len());
    let size = r + k;
    // objects: 0..k real columns, k..k+r row dummies
    let mut options: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
    for &(row, col, w) in &c.edges {
        options[row].push((col, w));
    }
    for (row, opts) in options.iter_mut().take(r).enumerate() {
        opts.push((k + row, 0.0));
    }
    for col in 0..k {
        let bidder = &mut options[r + col];
        bidder.push((col, 0.0));
        bidder.extend((0..r).map(|row| (k + row, 0.0)));
    }

    let max_w = c.edges.iter().fold(0.0f64, |a, e| a.max(e.2));
    let final_eps = epsilon / size as f64;
    let mut eps = (max_w / 4.0).max(final_eps);
    let mut price = vec![0.0; size];
    let mut owner = vec![usize::MAX; size];
    let mut assigned = vec![usize::MAX; size];
    let mut bids = 0usize;
    loop {
        owner.fill(usize::MAX);
        assigned.fill(usize::MAX);
        let mut queue: VecDeque<usize> = (0..size).collect();
        while let Some(bidder) = queue.pop_front() {
            bids += 1;
            if bids > max_bids {
                return Err(MatchingError::NonTermination { rounds: max_bids });
            }
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            let mut second = f64::NEG_INFINITY;
            for &(obj, w) in &options[bidder] {
                let net = w - price[obj];
                if net > best.1 {
                    second = best.1;
                    best = (obj, net);
                } else if net > second {
                    second = net;
                }
            }
            let (obj, value) = best;
            let increment = if second.is_finite() { value - second + eps } else { eps + max_w };
            price[obj] += increment;
            let previous = std::mem::replace(&mut owner[obj], bidder);
            assigned[bidder] = obj;
            if previous != usize::MAX {
                assigned[previous] = usize::MAX;
                queue.push_back(previous);
            }
        }
        if eps <= final_eps {
            break;
        }
        eps = (eps / 4.0).max(final_eps);
    }
    let pairs = (0..r).filter(|&row| assigned[row] < k).map(|row| (c.rows[row], c.cols[assigned[row]])).collect();
    Ok(Matching::from_pairs(p, pairs))
}
