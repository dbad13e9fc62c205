//! Generated test problems: Dirichlet Poisson stencils on regular grids and
//! trilinear hexahedral (Q1) isotropic elasticity on the unit cube.

use crate::coarsening::NearKernel;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Dirichlet Laplacian on a regular grid of 1 to 3 dimensions: diagonal 2d,
/// -1 to each grid neighbor, boundary rows eliminated. The near kernel is the
/// constant vector.
pub fn gen_poisson(dims: &[usize]) -> Result<(SparseMatrix, NearKernel)> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::InvalidConfig(
            "poisson generator takes 1 to 3 dimensions".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidConfig(
            "grid dimensions must be positive".into(),
        ));
    }
    let mut full = [1usize; 3];
    full[..dims.len()].copy_from_slice(dims);
    let (nx, ny, nz) = (full[0], full[1], full[2]);
    let n = nx * ny * nz;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let diag = 2.0 * dims.len() as f64;
    let mut triplets = Vec::with_capacity(n * (1 + 2 * dims.len()));
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let me = idx(i, j, k);
                triplets.push((me, me, diag));
                if i > 0 {
                    triplets.push((me, idx(i - 1, j, k), -1.0));
                }
                if i + 1 < nx {
                    triplets.push((me, idx(i + 1, j, k), -1.0));
                }
                if j > 0 {
                    triplets.push((me, idx(i, j - 1, k), -1.0));
                }
                if j + 1 < ny {
                    triplets.push((me, idx(i, j + 1, k), -1.0));
                }
                if k > 0 {
                    triplets.push((me, idx(i, j, k - 1), -1.0));
                }
                if k + 1 < nz {
                    triplets.push((me, idx(i, j, k + 1), -1.0));
                }
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &triplets)?;
    let kernel = NearKernel::new(DenseMatrix::from_fn(n, 1, |_, _| 1.0));
    Ok((a, kernel))
}

/// Generated elasticity problem on the unit cube.
pub struct ElasticityCube {
    pub matrix: SparseMatrix,
    /// Six rigid-body modes evaluated at the free DOFs, columns normalized.
    pub kernel: NearKernel,
    /// Coordinates of every mesh node (constrained ones included).
    pub node_coords: Vec<[f64; 3]>,
    /// Free DOF list: position t holds the original DOF index of reduced row t.
    pub free_dofs: Vec<usize>,
    pub n_constrained: usize,
}

/// Q1 isotropic element stiffness for a brick of size hx x hy x hz,
/// integrated with 2x2x2 Gauss points. DOF order is (node, component).
pub fn element_stiffness(young: f64, poisson: f64, hx: f64, hy: f64, hz: f64) -> DenseMatrix {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    let mut d = DenseMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            d.set(i, j, if i == j { lambda + 2.0 * mu } else { lambda });
        }
    }
    for i in 3..6 {
        d.set(i, i, mu);
    }
    let g = 1.0 / 3.0f64.sqrt();
    let signs = [-1.0, 1.0];
    let det_j = hx * hy * hz / 8.0;
    let mut ke = DenseMatrix::zeros(24, 24);
    for &gx in &[-g, g] {
        for &gy in &[-g, g] {
            for &gz in &[-g, g] {
                // Shape gradients in physical coordinates.
                let mut grads = [[0.0f64; 3]; 8];
                for a in 0..8 {
                    let sx = signs[a & 1];
                    let sy = signs[(a >> 1) & 1];
                    let sz = signs[(a >> 2) & 1];
                    let dxi = sx * (1.0 + sy * gy) * (1.0 + sz * gz) / 8.0;
                    let deta = sy * (1.0 + sx * gx) * (1.0 + sz * gz) / 8.0;
                    let dzeta = sz * (1.0 + sx * gx) * (1.0 + sy * gy) / 8.0;
                    grads[a] = [dxi * 2.0 / hx, deta * 2.0 / hy, dzeta * 2.0 / hz];
                }
                let mut b = DenseMatrix::zeros(6, 24);
                for a in 0..8 {
                    let [dx, dy, dz] = grads[a];
                    let c = 3 * a;
                    b.set(0, c, dx);
                    b.set(1, c + 1, dy);
                    b.set(2, c + 2, dz);
                    b.set(3, c, dy);
                    b.set(3, c + 1, dx);
                    b.set(4, c + 1, dz);
                    b.set(4, c + 2, dy);
                    b.set(5, c, dz);
                    b.set(5, c + 2, dx);
                }
                let db = d.matmul(&b).expect("shapes fixed");
                for r in 0..24 {
                    for c in 0..24 {
                        let mut s = 0.0;
                        for q in 0..6 {
                            s += b.get(q, r) * db.get(q, c);
                        }
                        let v = ke.get(r, c) + s * det_j;
                        ke.set(r, c, v);
                    }
                }
            }
        }
    }
    ke
}

/// Assemble the elasticity cube with the default clamped patch: all
/// displacements prevented where x <= 0.125, y <= 0.125, z = 0.
///
/// Meshes coarser than 8 elements per axis put a single node inside the
/// patch; a one-point clamp leaves the rotations about it unconstrained and
/// the assembled matrix singular.
pub fn gen_elasticity_cube(
    nx: usize,
    ny: usize,
    nz: usize,
    young: f64,
    poisson: f64,
) -> Result<ElasticityCube> {
    gen_elasticity_cube_with_fixed(nx, ny, nz, young, poisson, |c| {
        c[0] <= 0.125 + 1e-12 && c[1] <= 0.125 + 1e-12 && c[2] <= 1e-12
    })
}

/// Elasticity cube with a caller-supplied clamp predicate over node
/// coordinates. Constrained DOFs are eliminated symmetrically.
pub fn gen_elasticity_cube_with_fixed(
    nx: usize,
    ny: usize,
    nz: usize,
    young: f64,
    poisson: f64,
    fixed: impl Fn(&[f64; 3]) -> bool,
) -> Result<ElasticityCube> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidConfig("degenerate element counts".into()));
    }
    if !(poisson > 0.0 && poisson < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "poisson ratio {poisson} outside (0, 0.5)"
        )));
    }
    if young <= 0.0 {
        return Err(Error::InvalidConfig(
            "young modulus must be positive".into(),
        ));
    }
    let (hx, hy, hz) = (1.0 / nx as f64, 1.0 / ny as f64, 1.0 / nz as f64);
    let nodes_x = nx + 1;
    let nodes_y = ny + 1;
    let nodes_z = nz + 1;
    let n_nodes = nodes_x * nodes_y * nodes_z;
    let node_id = |i: usize, j: usize, k: usize| i + nodes_x * (j + nodes_y * k);
    let mut node_coords = vec![[0.0f64; 3]; n_nodes];
    for k in 0..nodes_z {
        for j in 0..nodes_y {
            for i in 0..nodes_x {
                node_coords[node_id(i, j, k)] = [i as f64 * hx, j as f64 * hy, k as f64 * hz];
            }
        }
    }
    // Free/constrained DOF maps.
    let n_dofs = 3 * n_nodes;
    let mut dof_map = vec![usize::MAX; n_dofs];
    let mut free_dofs = Vec::new();
    for (node, coords) in node_coords.iter().enumerate() {
        if fixed(coords) {
            continue;
        }
        for c in 0..3 {
            dof_map[3 * node + c] = free_dofs.len();
            free_dofs.push(3 * node + c);
        }
    }
    let n_free = free_dofs.len();
    let n_constrained = n_dofs - n_free;
    if n_free == 0 {
        return Err(Error::InvalidConfig(
            "clamp predicate removed every DOF".into(),
        ));
    }
    let ke = element_stiffness(young, poisson, hx, hy, hz);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for ez in 0..nz {
        for ey in 0..ny {
            for ex in 0..nx {
                // Element nodes in the bit order used by element_stiffness.
                let mut dofs = [usize::MAX; 24];
                for a in 0..8 {
                    let ni = ex + (a & 1);
                    let nj = ey + ((a >> 1) & 1);
                    let nk = ez + ((a >> 2) & 1);
                    let node = node_id(ni, nj, nk);
                    for c in 0..3 {
                        dofs[3 * a + c] = 3 * node + c;
                    }
                }
                for (r, &dr) in dofs.iter().enumerate() {
                    let gr = dof_map[dr];
                    if gr == usize::MAX {
                        continue;
                    }
                    for (c, &dc) in dofs.iter().enumerate() {
                        let gc = dof_map[dc];
                        if gc == usize::MAX {
                            continue;
                        }
                        let v = ke.get(r, c);
                        if v != 0.0 {
                            triplets.push((gr, gc, v));
                        }
                    }
                }
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n_free, n_free, &triplets)?;
    let kernel = rigid_body_modes(&node_coords, &free_dofs);
    Ok(ElasticityCube {
        matrix,
        kernel,
        node_coords,
        free_dofs,
        n_constrained,
    })
}

/// Three translations and three rotations about the centroid, evaluated at
/// the free DOFs, each column scaled to unit norm.
pub fn rigid_body_modes(node_coords: &[[f64; 3]], free_dofs: &[usize]) -> NearKernel {
    let n = free_dofs.len();
    let mut centroid = [0.0f64; 3];
    for c in node_coords {
        for q in 0..3 {
            centroid[q] += c[q];
        }
    }
    for q in centroid.iter_mut() {
        *q /= node_coords.len() as f64;
    }
    let mut v = DenseMatrix::zeros(n, 6);
    for (row, &dof) in free_dofs.iter().enumerate() {
        let node = dof / 3;
        let comp = dof % 3;
        let d = [
            node_coords[node][0] - centroid[0],
            node_coords[node][1] - centroid[1],
            node_coords[node][2] - centroid[2],
        ];
        // Translations.
        v.set(row, comp, 1.0);
        // Rotations omega x d for omega = e_x, e_y, e_z.
        let rx = [0.0, -d[2], d[1]];
        let ry = [d[2], 0.0, -d[0]];
        let rz = [-d[1], d[0], 0.0];
        v.set(row, 3, rx[comp]);
        v.set(row, 4, ry[comp]);
        v.set(row, 5, rz[comp]);
    }
    for j in 0..6 {
        let norm: f64 = v.col(j).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in v.col_mut(j) {
                *x /= norm;
            }
        }
    }
    NearKernel::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_1d_row() {
        let (a, _) = gen_poisson(&[3]).unwrap();
        assert_eq!(a.get(1, 0), Some(-1.0));
        assert_eq!(a.get(1, 1), Some(2.0));
        assert_eq!(a.get(1, 2), Some(-1.0));
    }

    #[test]
    fn poisson_2d_row_sums() {
        let (a, _) = gen_poisson(&[3, 3]).unwrap();
        // Interior row sums to zero; Dirichlet-eliminated boundary rows are
        // strictly positive.
        for i in 0..9 {
            let (_, vals) = a.row(i);
            let sum: f64 = vals.iter().sum();
            if i == 4 {
                assert_eq!(sum, 0.0);
            } else {
                assert!(sum > 0.0, "boundary row {i} sums to {sum}");
            }
        }
        a.check_spd_symmetry().unwrap();
    }

    #[test]
    fn poisson_rejects_bad_dims() {
        assert!(gen_poisson(&[]).is_err());
        assert!(gen_poisson(&[4, 0]).is_err());
        assert!(gen_poisson(&[2, 2, 2, 2]).is_err());
    }

    #[test]
    fn free_element_annihilates_translations() {
        // Single unconstrained element: K u = 0 for a rigid translation.
        let cube = gen_elasticity_cube_with_fixed(1, 1, 1, 1.0, 0.3, |_| false).unwrap();
        let k = &cube.matrix;
        let scale = k.max_abs();
        for comp in 0..3 {
            let u: Vec<f64> = cube
                .free_dofs
                .iter()
                .map(|&d| if d % 3 == comp { 1.0 } else { 0.0 })
                .collect();
            let ku = k.spmv(&u).unwrap();
            let err = ku.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!(err <= 1e-9 * scale, "translation {comp}: {err:e}");
        }
    }

    #[test]
    fn free_mesh_annihilates_rotations() {
        let cube = gen_elasticity_cube_with_fixed(2, 2, 2, 1.0, 0.3, |_| false).unwrap();
        let k = &cube.matrix;
        let knorm = k.max_abs();
        for mode in 3..6 {
            let r: Vec<f64> = (0..cube.kernel.n())
                .map(|i| cube.kernel.matrix().get(i, mode))
                .collect();
            let kr = k.spmv(&r).unwrap();
            let num = kr.iter().map(|x| x * x).sum::<f64>().sqrt();
            let den = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(num <= 1e-8 * knorm * den, "rotation {mode}: {num:e}");
        }
    }

    #[test]
    fn clamped_cube_is_spd_structured() {
        let cube = gen_elasticity_cube(3, 3, 3, 1.0, 0.25).unwrap();
        assert!(cube.n_constrained > 0);
        cube.matrix.check_spd_symmetry().unwrap();
        assert_eq!(cube.kernel.modes(), 6);
        assert_eq!(cube.kernel.n(), cube.matrix.nrows());
        cube.kernel.check_independent().unwrap();
    }

    #[test]
    fn poisson_ratio_validated() {
        assert!(gen_elasticity_cube(2, 2, 2, 1.0, 0.5).is_err());
        assert!(gen_elasticity_cube(2, 2, 2, 1.0, -0.1).is_err());
        assert!(gen_elasticity_cube(0, 2, 2, 1.0, 0.3).is_err());
    }
}
