//! Strength of connection, C-F splitting, near-kernel bookkeeping and
//! prolongation-pattern expansion.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::vector::SplitMix64;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Coarse,
    Fine,
}

/// Strong-coupling graph: the pattern of couplings deemed large enough to
/// interpolate through. Stored with unit values, diagonal excluded,
/// symmetrized by union.
#[derive(Debug, Clone)]
pub struct StrengthGraph {
    s: SparseMatrix,
    theta: f64,
}

impl StrengthGraph {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.s
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    /// Strong neighbors of node i.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.s.row_cols(i)
    }
}

/// Classical absolute-value strength test: (i, j) is strong when
/// |A(i,j)| >= theta * max_{k != i} |A(i,k)|, then symmetrized by union.
pub fn strength_of_connection(a: &SparseMatrix, theta: f64) -> Result<StrengthGraph> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(
            "strength of connection needs a square matrix".into(),
        ));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "strength threshold {theta} outside [0, 1)"
        )));
    }
    let n = a.nrows();
    let one_sided: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = a.row(i);
            let mut row_max = 0.0f64;
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    row_max = row_max.max(v.abs());
                }
            }
            if row_max == 0.0 {
                // Node with no off-diagonal couplings: empty strong set.
                return Vec::new();
            }
            let cut = theta * row_max;
            cols.iter()
                .zip(vals)
                .filter(|&(&j, &v)| j != i && v.abs() >= cut)
                .map(|(&j, _)| j)
                .collect()
        })
        .collect();
    // Symmetrize by union.
    let mut triplets = Vec::new();
    for (i, row) in one_sided.iter().enumerate() {
        for &j in row {
            triplets.push((i, j, 1.0));
            triplets.push((j, i, 1.0));
        }
    }
    let s = SparseMatrix::from_triplets(n, n, &triplets)?.to_pattern();
    Ok(StrengthGraph { s, theta })
}

/// Partition of the unknowns into COARSE and FINE nodes.
#[derive(Debug, Clone)]
pub struct CfSplitting {
    labels: Vec<Label>,
    f_list: Vec<usize>,
    c_list: Vec<usize>,
    fine_local: Vec<usize>,
    coarse_local: Vec<usize>,
}

impl CfSplitting {
    pub fn from_labels(labels: Vec<Label>) -> Self {
        let mut f_list = Vec::new();
        let mut c_list = Vec::new();
        let mut fine_local = vec![usize::MAX; labels.len()];
        let mut coarse_local = vec![usize::MAX; labels.len()];
        for (i, &l) in labels.iter().enumerate() {
            match l {
                Label::Fine => {
                    fine_local[i] = f_list.len();
                    f_list.push(i);
                }
                Label::Coarse => {
                    coarse_local[i] = c_list.len();
                    c_list.push(i);
                }
            }
        }
        CfSplitting {
            labels,
            f_list,
            c_list,
            fine_local,
            coarse_local,
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn is_coarse(&self, i: usize) -> bool {
        self.labels[i] == Label::Coarse
    }

    pub fn f_list(&self) -> &[usize] {
        &self.f_list
    }

    pub fn c_list(&self) -> &[usize] {
        &self.c_list
    }

    pub fn n_fine(&self) -> usize {
        self.f_list.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.c_list.len()
    }

    /// Position of fine node i in the F ordering.
    pub fn fine_local(&self, i: usize) -> usize {
        self.fine_local[i]
    }

    /// Position of coarse node i in the C ordering (its coarse-grid index).
    pub fn coarse_local(&self, i: usize) -> usize {
        self.coarse_local[i]
    }
}

/// PMIS C-F selection on the distance-1 strong graph. Node weights are
/// strong degree plus a uniform(0, 1) draw from the seeded generator; ties
/// break toward the lower index. The COARSE set is a maximal independent set.
pub fn cf_split_pmis(s: &StrengthGraph, seed: u64) -> CfSplitting {
    let n = s.n();
    let mut rng = SplitMix64::new(seed);
    let weights: Vec<f64> = (0..n)
        .map(|i| s.neighbors(i).len() as f64 + rng.next_f64())
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Undecided,
        Coarse,
        Fine,
    }
    let mut state = vec![State::Undecided; n];
    let mut undecided = n;
    while undecided > 0 {
        // Round 1: undecided nodes that dominate all their undecided strong
        // neighbors join the independent set.
        let winners: Vec<usize> = (0..n)
            .into_par_iter()
            .filter(|&i| {
                if state[i] != State::Undecided {
                    return false;
                }
                s.neighbors(i).iter().all(|&j| {
                    state[j] != State::Undecided
                        || weights[i] > weights[j]
                        || (weights[i] == weights[j] && i < j)
                })
            })
            .collect();
        for &i in &winners {
            state[i] = State::Coarse;
            undecided -= 1;
        }
        // Round 2: undecided neighbors of new coarse nodes become fine.
        let mut newly_fine = Vec::new();
        for &i in &winners {
            for &j in s.neighbors(i) {
                if state[j] == State::Undecided {
                    state[j] = State::Fine;
                    newly_fine.push(j);
                }
            }
        }
        undecided -= newly_fine.len();
        if winners.is_empty() && newly_fine.is_empty() {
            // Cannot happen on a finite graph with total weight order, but
            // guard against livelock anyway.
            for st in state.iter_mut() {
                if *st == State::Undecided {
                    *st = State::Coarse;
                }
            }
            break;
        }
    }
    let labels = state
        .into_iter()
        .map(|st| match st {
            State::Coarse => Label::Coarse,
            State::Fine => Label::Fine,
            State::Undecided => Label::Coarse,
        })
        .collect();
    CfSplitting::from_labels(labels)
}

/// Pattern of (S + I)^k * P0 restricted to F-rows; C-rows stay identity.
/// k = 0 returns the input pattern unchanged. The +I term keeps expansion
/// monotone: distance-k always contains distance-(k-1).
pub fn expand_pattern(
    s: &StrengthGraph,
    p0_pattern: &SparseMatrix,
    cf: &CfSplitting,
    k: usize,
) -> Result<SparseMatrix> {
    if p0_pattern.nrows() != s.n() {
        return Err(Error::DimensionMismatch(
            "pattern rows must match strength graph".into(),
        ));
    }
    let mut current = p0_pattern.to_pattern();
    for _ in 0..k {
        current = pattern_union_product(s, &current);
    }
    if k > 0 {
        // Reset C-rows to identity.
        let n = current.nrows();
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
            .map(|i| {
                if cf.is_coarse(i) {
                    (vec![cf.coarse_local(i)], vec![1.0])
                } else {
                    let cols = current.row_cols(i).to_vec();
                    let vals = vec![1.0; cols.len()];
                    (cols, vals)
                }
            })
            .collect();
        current = SparseMatrix::from_sorted_rows(n, current.ncols(), rows);
    }
    Ok(current)
}

/// Boolean product pattern((S + I) * P) with unit values.
fn pattern_union_product(s: &StrengthGraph, p: &SparseMatrix) -> SparseMatrix {
    let n = p.nrows();
    let ncols = p.ncols();
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![false; ncols],
            |seen, i| {
                let mut cols: Vec<usize> = Vec::new();
                let mut visit = |row: &[usize]| {
                    for &c in row {
                        if !seen[c] {
                            seen[c] = true;
                            cols.push(c);
                        }
                    }
                };
                visit(p.row_cols(i));
                for &j in s.matrix().row_cols(i) {
                    visit(p.row_cols(j));
                }
                cols.sort_unstable();
                for &c in &cols {
                    seen[c] = false;
                }
                let vals = vec![1.0; cols.len()];
                (cols, vals)
            },
        )
        .collect();
    SparseMatrix::from_sorted_rows(n, ncols, rows)
}

/// Dense block of near-kernel modes: V is n x m with linearly independent
/// columns (constants for diffusion, rigid-body modes for elasticity).
#[derive(Debug, Clone)]
pub struct NearKernel {
    v: DenseMatrix,
}

impl NearKernel {
    pub fn new(v: DenseMatrix) -> Self {
        NearKernel { v }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// Number of modes m.
    pub fn modes(&self) -> usize {
        self.v.ncols()
    }

    /// Row i of V as the length-m constraint right-hand side.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.v.row_vec(i)
    }

    /// Check column independence: sigma_min / sigma_max > 1e-12.
    pub fn check_independent(&self) -> Result<()> {
        let s = crate::dense::svd(&self.v)?;
        let smax = s.sigma.first().copied().unwrap_or(0.0);
        let smin = s.sigma.last().copied().unwrap_or(0.0);
        if smax == 0.0 || smin / smax <= 1e-12 {
            return Err(Error::KernelRankDeficient {
                sigma_min: smin,
                sigma_max: smax,
            });
        }
        Ok(())
    }

    /// Row-index views V_f = V(f_list, :) and V_c = V(c_list, :).
    pub fn split<'a>(&'a self, cf: &'a CfSplitting) -> (KernelView<'a>, KernelView<'a>) {
        (
            KernelView {
                v: &self.v,
                rows: cf.f_list(),
            },
            KernelView {
                v: &self.v,
                rows: cf.c_list(),
            },
        )
    }

    /// Gather the given global rows into a small dense block (rows x m).
    pub fn gather_rows(&self, rows: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), self.modes(), |i, j| self.v.get(rows[i], j))
    }
}

/// Borrowed row-permutation view of a near-kernel block.
#[derive(Debug, Clone, Copy)]
pub struct KernelView<'a> {
    v: &'a DenseMatrix,
    rows: &'a [usize],
}

impl<'a> KernelView<'a> {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.v.ncols()
    }

    pub fn get(&self, local_row: usize, col: usize) -> f64 {
        self.v.get(self.rows[local_row], col)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows.len(), self.v.ncols(), |i, j| self.get(i, j))
    }
}
