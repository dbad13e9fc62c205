//! Oracle checks for the numeric kernels: every quantity is recomputed
//! through an independent dense route and compared at tight tolerances.

#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use eminamg::coarsening::{CfSplitting, Label};
use eminamg::dense::{svd, DenseMatrix};
use eminamg::emin::{masked_spmm, EminOperator};
use eminamg::problems::{element_stiffness, gen_poisson};
use eminamg::solver::galerkin;
use eminamg::sparse::SparseMatrix;
use eminamg::tentative::Prolongation;
use eminamg::vector::SplitMix64;

/// Random symmetric diagonally dominant sparse matrix with full diagonal.
fn random_sdd(rng: &mut SplitMix64, n: usize, extra_per_row: usize) -> SparseMatrix {
    let mut triplets = Vec::new();
    let mut offdiag = vec![0.0f64; n];
    for i in 0..n {
        for _ in 0..extra_per_row {
            let j = (rng.next_u64() as usize) % n;
            if j == i {
                continue;
            }
            let v = rng.next_f64() * 2.0 - 1.0;
            triplets.push((i, j, v));
            triplets.push((j, i, v));
            offdiag[i] += v.abs();
            offdiag[j] += v.abs();
        }
    }
    for i in 0..n {
        triplets.push((i, i, offdiag[i] + 1.0 + rng.next_f64()));
    }
    SparseMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// Random prolongation over a random splitting: every F-row draws one to
/// three coarse columns.
fn random_prolongation(rng: &mut SplitMix64, n: usize) -> Prolongation {
    let labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.next_f64() < 0.4 {
                Label::Coarse
            } else {
                Label::Fine
            }
        })
        .collect();
    let labels = if !labels.contains(&Label::Coarse) {
        let mut l = labels;
        l[0] = Label::Coarse;
        l
    } else {
        labels
    };
    let cf = CfSplitting::from_labels(labels);
    let nc = cf.n_coarse();
    let mut triplets = Vec::new();
    let mut values = Vec::new();
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for i in 0..n {
        if cf.is_coarse(i) {
            rows.push((vec![cf.coarse_local(i)], vec![1.0]));
        } else {
            let want = 1 + (rng.next_u64() as usize) % 3.min(nc);
            let mut cols: Vec<usize> = (0..want).map(|_| (rng.next_u64() as usize) % nc).collect();
            cols.sort_unstable();
            cols.dedup();
            let vals: Vec<f64> = cols.iter().map(|_| rng.next_f64() * 2.0 - 1.0).collect();
            rows.push((cols, vals));
        }
    }
    for (i, (cols, vals)) in rows.iter().enumerate() {
        for &c in cols {
            triplets.push((i, c, 1.0));
        }
        values.extend_from_slice(vals);
    }
    let pattern = SparseMatrix::from_triplets(n, nc, &triplets).unwrap();
    Prolongation::from_parts(pattern, values, cf, vec![false; n]).unwrap()
}

#[test]
fn svd_matches_gram_eigenvalues() {
    // Singular values of B are the square roots of the eigenvalues of B B^T.
    let mut rng = SplitMix64::new(31);
    for trial in 0..5 {
        let b = DenseMatrix::from_fn(4, 6, |_, _| rng.next_f64() * 4.0 - 2.0);
        let f = svd(&b).unwrap();
        let bbt = b.matmul(&b.transpose()).unwrap();
        let mut ev = sym_eigenvalues(&bbt);
        ev.reverse();
        for (t, &lambda) in ev.iter().enumerate().take(4) {
            let expect = lambda.max(0.0).sqrt();
            assert!(
                (f.sigma[t] - expect).abs() <= 1e-10 * f.sigma[0].max(1.0),
                "trial {trial}: sigma[{t}] = {} vs sqrt(eig) = {expect}",
                f.sigma[t]
            );
        }
    }
}

#[test]
fn masked_product_matches_full_spmm_gather() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..10 {
        let a = random_sdd(&mut rng, 20, 3);
        let p = random_prolongation(&mut rng, 20);
        if p.ncols() < 1 {
            continue;
        }
        let masked = masked_spmm(&a, &p).unwrap();
        let full = a.spmm(&p.to_csr()).unwrap();
        let mut pos = 0usize;
        for &i in p.cf().f_list() {
            for &c in p.row_support(i) {
                let want = full.get(i, c).unwrap_or(0.0);
                assert_eq!(masked[pos].to_bits(), want.to_bits());
                pos += 1;
            }
        }
    }
}

#[test]
fn masked_product_bitwise_stable_across_thread_counts() {
    let mut rng = SplitMix64::new(13);
    let a = random_sdd(&mut rng, 64, 4);
    let p = random_prolongation(&mut rng, 64);
    let x = random_vec(&mut rng, 97);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| (masked_spmm(&a, &p).unwrap(), a.spmv(&x[..64]).unwrap()))
    };
    let (m1, v1) = run(1);
    let (m4, v4) = run(4);
    for (a_, b_) in m1.iter().zip(&m4) {
        assert_eq!(a_.to_bits(), b_.to_bits());
    }
    for (a_, b_) in v1.iter().zip(&v4) {
        assert_eq!(a_.to_bits(), b_.to_bits());
    }
}

#[test]
fn apply_k_matches_dense_submatrix_on_single_column() {
    // One coarse column: K is exactly the dense block A(I_1, I_1).
    let n = 12;
    let a = laplacian_1d(n);
    let labels: Vec<Label> = (0..n)
        .map(|i| if i == 0 { Label::Coarse } else { Label::Fine })
        .collect();
    let cf = CfSplitting::from_labels(labels);
    let support: Vec<usize> = (1..n).collect();
    let mut triplets = vec![(0usize, 0usize, 1.0f64)];
    for &i in &support {
        triplets.push((i, 0, 1.0));
    }
    let pattern = SparseMatrix::from_triplets(n, 1, &triplets).unwrap();
    let values = vec![1.0; pattern.nnz()];
    let p = Prolongation::from_parts(pattern, values, cf, vec![false; n]).unwrap();
    let op = EminOperator::new(&a, &p).unwrap();
    let mut rng = SplitMix64::new(3);
    let x = random_vec(&mut rng, support.len());
    let y = op.apply_k(&x).unwrap();
    let block = DenseMatrix::from_fn(support.len(), support.len(), |i, j| {
        a.get(support[i], support[j]).unwrap_or(0.0)
    });
    let oracle = block.matvec(&x).unwrap();
    assert!(max_abs_diff(&y, &oracle) <= 1e-10 * norm2(&oracle).max(1.0));
}

#[test]
fn apply_k_matches_assembled_k_on_random_instances() {
    let mut rng = SplitMix64::new(555);
    for _ in 0..8 {
        let n = 10 + (rng.next_u64() as usize) % 20; // n <= 30
        let a = random_sdd(&mut rng, n, 3);
        let p = random_prolongation(&mut rng, n);
        let op = EminOperator::new(&a, &p).unwrap();
        let kd = assemble_k(&a, &p);
        let x = random_vec(&mut rng, p.f_nnz());
        let y = op.apply_k(&x).unwrap();
        let oracle = kd.matvec(&x).unwrap();
        assert!(
            max_abs_diff(&y, &oracle) <= 1e-10 * norm2(&oracle).max(1.0),
            "masked K action deviates from the assembled block-diagonal K"
        );
    }
}

#[test]
fn rhs_matches_columnwise_saddle_assembly() {
    // Assemble f column-wise from the definition -A(I_c, node(c)), then
    // permute into row-major order and compare.
    let n = 10;
    let mut rng = SplitMix64::new(9);
    let a = random_sdd(&mut rng, n, 2);
    let p = random_prolongation(&mut rng, n);
    let cf = p.cf();
    let op = EminOperator::new(&a, &p).unwrap();
    let f = op.rhs_f();
    // Column-wise assembly.
    let mut by_position = std::collections::HashMap::new();
    for c in 0..p.ncols() {
        let node = cf.c_list()[c];
        for &i in cf.f_list() {
            if p.row_support(i).binary_search(&c).is_ok() {
                by_position.insert((i, c), -a.get(i, node).unwrap_or(0.0));
            }
        }
    }
    for (t, &(i, c)) in f_positions(&p).iter().enumerate() {
        let want = by_position[&(i, c)];
        assert_eq!(f[t], want, "f entry at row {i} column {c}");
    }
}

#[test]
fn assembled_hessian_diagonal_replicates_matrix_diagonal() {
    // Every diagonal entry of K at a position in fine row i equals A(i, i).
    let mut rng = SplitMix64::new(12);
    let a = random_sdd(&mut rng, 12, 3);
    let p = random_prolongation(&mut rng, 12);
    let kd = assemble_k(&a, &p);
    for (t, &(i, _c)) in f_positions(&p).iter().enumerate() {
        assert_eq!(kd.get(t, t), a.get(i, i).unwrap());
    }
}

#[test]
fn energy_matches_dense_triple_product() {
    let mut rng = SplitMix64::new(321);
    for _ in 0..6 {
        let n = 8 + (rng.next_u64() as usize) % 12;
        let a = random_sdd(&mut rng, n, 3);
        let p = random_prolongation(&mut rng, n);
        let e = eminamg::energy_of(&a, &p.to_csr()).unwrap();
        let ad = DenseMatrix::from_sparse(&a);
        let pd = DenseMatrix::from_sparse(&p.to_csr());
        let ptap = pd.transpose().matmul(&ad).unwrap().matmul(&pd).unwrap();
        let trace: f64 = (0..ptap.nrows()).map(|i| ptap.get(i, i)).sum();
        assert!(
            (e - trace).abs() <= 1e-10 * trace.abs().max(1.0),
            "energy {e} vs dense trace {trace}"
        );
    }
}

#[test]
fn poisson_matrices_are_positive_definite() {
    // Dense eigensolver oracle, n <= 400.
    for dims in [vec![20usize, 20], vec![5, 5, 5], vec![37]] {
        let (a, _) = gen_poisson(&dims).unwrap();
        assert!(a.nrows() <= 400);
        let ev = sym_eigenvalues(&DenseMatrix::from_sparse(&a));
        assert!(
            ev[0] > 0.0,
            "poisson {dims:?} has nonpositive eigenvalue {}",
            ev[0]
        );
    }
}

#[test]
fn element_stiffness_has_exactly_six_rigid_modes() {
    let ke = element_stiffness(1.0, 0.3, 0.5, 0.4, 0.7);
    // Symmetric.
    for i in 0..24 {
        for j in 0..24 {
            assert!((ke.get(i, j) - ke.get(j, i)).abs() <= 1e-12 * ke.max_abs());
        }
    }
    let ev = sym_eigenvalues(&ke);
    let scale = ev[23].abs();
    let near_zero = ev.iter().filter(|&&l| l.abs() <= 1e-9 * scale).count();
    assert_eq!(near_zero, 6, "eigenvalues: {ev:?}");
    assert!(
        ev[0] >= -1e-9 * scale,
        "element stiffness must be positive semidefinite"
    );
}

#[test]
fn galerkin_preserves_positive_definiteness() {
    let mut rng = SplitMix64::new(404);
    let n = 40;
    let a = laplacian_1d(n);
    // Full-column-rank P with identity C-block.
    let p = random_prolongation(&mut rng, n);
    let ac = galerkin(&a, &p.to_csr()).unwrap();
    let ev = sym_eigenvalues(&DenseMatrix::from_sparse(&ac));
    assert!(
        ev[0] > 0.0,
        "coarse operator lost positive definiteness: {})",
        ev[0]
    );
}

#[test]
fn qr_and_svd_rank_decisions_agree() {
    // The shared tolerance must route the same blocks to the same branch.
    let mut rng = SplitMix64::new(2024);
    for _ in 0..20 {
        let rank = 1 + (rng.next_u64() as usize) % 3;
        let n = 6;
        let m = 4;
        // Random matrix of known rank.
        let left = DenseMatrix::from_fn(n, rank, |_, _| rng.next_f64() - 0.5);
        let right = DenseMatrix::from_fn(rank, m, |_, _| rng.next_f64() - 0.5);
        let b = left.matmul(&right).unwrap();
        let qr_full = eminamg::qr_economy(&b).unwrap().is_full_rank();
        let svd_rank = svd(&b).unwrap().rank();
        assert_eq!(svd_rank, rank, "svd found wrong rank");
        assert_eq!(
            qr_full,
            svd_rank == m,
            "full-rank decisions disagree (qr_full {qr_full}, svd {svd_rank})"
        );
    }
}
