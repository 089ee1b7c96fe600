use nalgebra::{DMatrix, DVector};

use crate::algebra::{dense, FiniteOperator, SpaceRef};
use crate::error::{Error, Result};

/// Smallest singular value of the row-normalized terminal pairing block
/// accepted as a completeness certificate.
pub const COMPLETENESS_TOL: f64 = 1e-8;

/// Complete generalized Jordan set of `B` with respect to `A1`, together with
/// the dual set of `B*` with respect to `A1*`.
///
/// Chains are stored 0-based: `phi[i][j]` is the `(j+1)`-th element of chain
/// `i`. Only the first `l = min(n, m)` chains are paired; when `n > m` the
/// remaining kernel directions live in `extra_phi`, when `m > n` the unpaired
/// cokernel directions live in `extra_psi`.
#[derive(Debug, Clone)]
pub struct JordanStructure {
    b: FiniteOperator,
    a1: FiniteOperator,
    a1_adjoint: FiniteOperator,
    rank_tol: f64,
    n: usize,
    m: usize,
    phi: Vec<Vec<DVector<f64>>>,
    psi: Vec<Vec<DVector<f64>>>,
    extra_phi: Vec<DVector<f64>>,
    extra_gamma: Vec<DVector<f64>>,
    extra_psi: Vec<DVector<f64>>,
    extra_z: Vec<DVector<f64>>,
    completeness_sigma: f64,
}

struct Chain {
    elems: Vec<DVector<f64>>,
}

impl Chain {
    fn last(&self) -> &DVector<f64> {
        self.elems.last().expect("chains are never empty")
    }
}

/// Builds the chains `B phi^(1) = 0`, `B phi^(j) = A1 phi^(j-1)` for every
/// kernel direction, then the dual chains normalized so that
/// `<A1 phi_i^(j), psi_s^(t)> = delta_is delta_{j, p_s + 1 - t}`.
pub fn build_jordan_chains(
    b: &FiniteOperator,
    a1: &FiniteOperator,
    rank_tol: f64,
) -> Result<JordanStructure> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::Config(format!(
            "rank_tol must lie in (0, 1), got {rank_tol}"
        )));
    }
    if b.domain().dim() != a1.domain().dim() || b.codomain().dim() != a1.codomain().dim() {
        return Err(Error::Spec(
            "A1 must act between the same spaces as B".into(),
        ));
    }
    let e1 = b.domain().clone();
    let e2 = b.codomain().clone();
    let b_adj = b.adjoint();
    let a1_adj = a1.adjoint();

    let kernel = b.null_space_vecs(rank_tol);
    let cokernel = b_adj.null_space_vecs(rank_tol);
    let (n, m) = (kernel.len(), cokernel.len());
    let (d1, d2) = (e1.dim() as i64, e2.dim() as i64);
    if n as i64 - m as i64 != d1 - d2 {
        return Err(Error::Structural(format!(
            "kernel dimension {n} and cokernel dimension {m} are inconsistent with a \
             {d2}x{d1} operator; adjust rank_tol"
        )));
    }

    let norm_a = a1.norm().max(f64::MIN_POSITIVE);
    let norm_b = b.norm();
    let pair_tol = (rank_tol * 1e4).clamp(1e-7, 1e-2);
    let link_tol = (rank_tol * 1e2).clamp(1e-9, 1e-3);
    let b_ls = b.least_squares_inverse(rank_tol);

    let pairing = |v: &DVector<f64>| -> DVector<f64> {
        let av = a1.apply_vec(v);
        let gav = e2.lower(&av);
        DVector::from_iterator(m, cokernel.iter().map(|psi| psi.dot(&gav)))
    };

    let mut active: Vec<Chain> = kernel
        .iter()
        .map(|v| Chain {
            elems: vec![v.clone()],
        })
        .collect();
    let mut terminated: Vec<(Chain, DVector<f64>)> = Vec::new();
    let l = n.min(m);
    let max_steps = e1.dim() + 1;

    for step in 1..=max_steps {
        if active.is_empty() {
            break;
        }
        let max_p = terminated
            .iter()
            .map(|(c, _)| c.elems.len())
            .max()
            .unwrap_or(0);
        if n > m && terminated.len() == m && step > max_p + 1 {
            break;
        }
        if step == max_steps {
            if n > m && terminated.len() == m {
                break;
            }
            return Err(Error::Structural(format!(
                "chain growth exceeded dim E1 = {} without terminating",
                e1.dim()
            )));
        }

        // remove components along terminal rows of finished chains by adding
        // shifted copies of those chains
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(active.len());
        for chain in active.iter_mut() {
            let mut row = pairing(chain.last());
            if !terminated.is_empty() && m > 0 {
                let r = DMatrix::from_columns(
                    &terminated
                        .iter()
                        .map(|(_, r)| r.clone())
                        .collect::<Vec<_>>(),
                );
                let coeffs = solve_normal(&r, &row);
                row -= &r * &coeffs;
                let j = chain.elems.len();
                for ((tchain, _), c) in terminated.iter().zip(coeffs.iter()) {
                    let pt = tchain.elems.len();
                    for (r_idx, telem) in tchain.elems.iter().enumerate() {
                        let pos = j - pt + r_idx;
                        chain.elems[pos] -= telem * *c;
                    }
                }
            }
            rows.push(row);
        }

        let na = active.len();
        let (u, sigma) = left_rotation(&rows, m, na);
        let scale = norm_a
            * active
                .iter()
                .map(|c| e1.norm_vec(c.last()))
                .fold(0.0_f64, f64::max)
                .max(f64::MIN_POSITIVE);

        let old = std::mem::take(&mut active);
        for i in 0..na {
            let len = old[0].elems.len();
            let mut elems = vec![DVector::zeros(e1.dim()); len];
            let mut row = DVector::zeros(m);
            for (a, chain) in old.iter().enumerate() {
                let w = u[(a, i)];
                if w == 0.0 {
                    continue;
                }
                for (e, src) in elems.iter_mut().zip(&chain.elems) {
                    *e += src * w;
                }
                row += &rows[a] * w;
            }
            let rotated = Chain { elems };
            if sigma[i] > pair_tol * scale {
                terminated.push((rotated, row));
            } else {
                active.push(rotated);
            }
        }

        for chain in active.iter_mut() {
            let rhs = a1.apply_vec(chain.last());
            let next = b_ls.apply_vec(&rhs);
            let resid = e2.norm_vec(&(b.apply_vec(&next) - &rhs));
            let tol = link_tol * (norm_b * e1.norm_vec(&next) + e2.norm_vec(&rhs)).max(1e-300);
            if resid > tol {
                return Err(Error::Structural(format!(
                    "chain extension at step {step} is inconsistent (residual {resid:.3e})"
                )));
            }
            chain.elems.push(next);
        }
    }

    if terminated.len() < l {
        let chain = terminated.len();
        return Err(Error::IncompleteJordanSet {
            chain,
            detail: format!(
                "only {} of {} chains terminate with an independent pairing",
                terminated.len(),
                l
            ),
        });
    }

    // descending length, stable in null-space order
    terminated.sort_by(|a, b| b.0.elems.len().cmp(&a.0.elems.len()));
    let phi: Vec<Vec<DVector<f64>>> = terminated.into_iter().map(|(c, _)| c.elems).collect();
    let extra_phi: Vec<DVector<f64>> = if n > m {
        active.iter().map(|c| c.elems[0].clone()).collect()
    } else {
        Vec::new()
    };

    // terminal pairing block against the raw cokernel basis
    let t = DMatrix::from_fn(l, m, |i, s| {
        let gav = e2.lower(&a1.apply_vec(phi[i].last().unwrap()));
        cokernel[s].dot(&gav)
    });
    let completeness_sigma = normalized_min_singular(&t);
    if l > 0 && completeness_sigma < COMPLETENESS_TOL {
        let weakest = (0..l)
            .min_by(|&a, &b| {
                t.row(a)
                    .norm()
                    .partial_cmp(&t.row(b).norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        return Err(Error::IncompleteJordanSet {
            chain: weakest,
            detail: format!(
                "terminal pairing block is singular (normalized sigma_min {completeness_sigma:.3e})"
            ),
        });
    }

    let psi_basis = if m > 0 {
        DMatrix::from_columns(&cokernel)
    } else {
        DMatrix::zeros(e2.dim(), 0)
    };
    let b_adj_ls = b_adj.least_squares_inverse(rank_tol);
    let t_pinv = if l > 0 {
        let ttt = &t * t.transpose();
        t.transpose()
            * ttt
                .try_inverse()
                .ok_or_else(|| Error::IncompleteJordanSet {
                    chain: 0,
                    detail: "terminal pairing block is singular".into(),
                })?
    } else {
        DMatrix::zeros(m, 0)
    };
    let terminal_pairings = |v: &DVector<f64>| -> DVector<f64> {
        let gv = e2.lower(v);
        DVector::from_iterator(
            l,
            phi.iter()
                .map(|ch| a1.apply_vec(ch.last().unwrap()).dot(&gv)),
        )
    };

    let mut psi: Vec<Vec<DVector<f64>>> = Vec::with_capacity(l);
    for s in 0..l {
        let mut e = DVector::zeros(l);
        e[s] = 1.0;
        let first = &psi_basis * (&t_pinv * e);
        let mut chain = vec![first];
        let p = phi[s].len();
        for step in 1..p {
            let rhs = a1_adj.apply_vec(chain.last().unwrap());
            let part = b_adj_ls.apply_vec(&rhs);
            let resid = e1.norm_vec(&(b_adj.apply_vec(&part) - &rhs));
            let tol = link_tol * (norm_b * e2.norm_vec(&part) + e1.norm_vec(&rhs)).max(1e-300);
            if resid > tol {
                return Err(Error::Structural(format!(
                    "dual chain {s} cannot be extended to length {} (residual {resid:.3e}); \
                     primal and dual chain lengths differ",
                    step + 1
                )));
            }
            let d = -(&t_pinv * terminal_pairings(&part));
            chain.push(part + &psi_basis * d);
        }
        psi.push(chain);
    }

    let extra_psi: Vec<DVector<f64>> = if m > n {
        let coeffs = left_null_columns(&t, m);
        coeffs.iter().map(|c| &psi_basis * c).collect()
    } else {
        Vec::new()
    };

    let mut js = JordanStructure {
        b: b.clone(),
        a1: a1.clone(),
        a1_adjoint: a1_adj,
        rank_tol,
        n,
        m,
        phi,
        psi,
        extra_phi,
        extra_gamma: Vec::new(),
        extra_psi,
        extra_z: Vec::new(),
        completeness_sigma,
    };
    js.extra_gamma = js.biorthogonal_complement(&e1, &js.phi_flat(), &js.extra_phi)?;
    js.extra_z = js.biorthogonal_complement(&e2, &js.psi_flat(), &js.extra_psi)?;
    Ok(js)
}

/// Least-squares coefficients `c` minimizing `|row - R c|`.
fn solve_normal(r: &DMatrix<f64>, row: &DVector<f64>) -> DVector<f64> {
    let rtr = r.transpose() * r;
    match rtr.clone().try_inverse() {
        Some(inv) => inv * (r.transpose() * row),
        None => dense::pseudo_inverse(&rtr, 1e-14) * (r.transpose() * row),
    }
}

/// Orthogonal `na x na` rotation `U` and singular values (padded with zeros)
/// of the matrix whose rows are `rows`.
fn left_rotation(rows: &[DVector<f64>], m: usize, na: usize) -> (DMatrix<f64>, Vec<f64>) {
    let width = m.max(na);
    let mut mat = DMatrix::zeros(na, width);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            mat[(i, j)] = *v;
        }
    }
    let svd = dense::svd(&mat);
    (svd.u, svd.sigma.into_iter().chain(std::iter::repeat(0.0)).take(na).collect())
}

fn normalized_min_singular(t: &DMatrix<f64>) -> f64 {
    if t.nrows() == 0 {
        return 1.0;
    }
    let mut tn = t.clone();
    for mut row in tn.row_iter_mut() {
        let nrm = row.norm();
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    dense::singular_values(&tn)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of `{c in R^m : T c = 0}`.
fn left_null_columns(t: &DMatrix<f64>, m: usize) -> Vec<DVector<f64>> {
    let l = t.nrows();
    if l == 0 {
        return (0..m)
            .map(|i| {
                let mut e = DVector::zeros(m);
                e[i] = 1.0;
                e
            })
            .collect();
    }
    let mut padded = DMatrix::zeros(m, m);
    padded.view_mut((0, 0), (l, m)).copy_from(t);
    let vt = dense::svd(&padded).v.transpose();
    (l..m)
        .map(|i| crate::algebra::sign_fixed(vt.row(i).transpose()))
        .collect()
}

impl JordanStructure {
    /// Vectors `g_r` with `<w, g_r> = 0` for every `w` in `fixed` and
    /// `<extra_q, g_r> = delta_qr`: minimum-norm solution of the Gram system.
    fn biorthogonal_complement(
        &self,
        space: &SpaceRef,
        fixed: &[DVector<f64>],
        extra: &[DVector<f64>],
    ) -> Result<Vec<DVector<f64>>> {
        if extra.is_empty() {
            return Ok(Vec::new());
        }
        let cols: Vec<DVector<f64>> = fixed.iter().chain(extra.iter()).cloned().collect();
        let w = DMatrix::from_columns(&cols);
        let gw = space.gram() * &w;
        let gram = w.transpose() * &gw;
        let inv = gram.try_inverse().ok_or_else(|| {
            Error::Structural("chain elements and extra kernel directions are dependent".into())
        })?;
        let k = fixed.len();
        Ok((0..extra.len())
            .map(|r| {
                let mut e = DVector::zeros(cols.len());
                e[k + r] = 1.0;
                &w * (&inv * e)
            })
            .collect())
    }

    pub fn b(&self) -> &FiniteOperator {
        &self.b
    }

    pub fn a1(&self) -> &FiniteOperator {
        &self.a1
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn e1(&self) -> &SpaceRef {
        self.b.domain()
    }

    pub fn e2(&self) -> &SpaceRef {
        self.b.codomain()
    }

    /// `dim N(B)`
    pub fn n(&self) -> usize {
        self.n
    }

    /// `dim N(B*)`
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.n.min(self.m)
    }

    /// Index `n - m`.
    pub fn nu(&self) -> i64 {
        self.n as i64 - self.m as i64
    }

    /// Root number: total length of the paired chains.
    pub fn k(&self) -> usize {
        self.phi.iter().map(Vec::len).sum()
    }

    pub fn chain_lengths(&self) -> Vec<usize> {
        self.phi.iter().map(Vec::len).collect()
    }

    /// `B` has a bounded inverse.
    pub fn is_regular(&self) -> bool {
        self.n == 0 && self.m == 0
    }

    pub fn completeness_sigma(&self) -> f64 {
        self.completeness_sigma
    }

    pub fn phi(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.phi[i][j]
    }

    pub fn psi(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.psi[i][j]
    }

    /// `gamma_i^(j) = A1* psi_i^(p_i + 1 - j)` (0-based `j`).
    pub fn gamma(&self, i: usize, j: usize) -> DVector<f64> {
        let p = self.psi[i].len();
        self.a1_adjoint.apply_vec(&self.psi[i][p - 1 - j])
    }

    /// `z_i^(j) = A1 phi_i^(p_i + 1 - j)` (0-based `j`).
    pub fn z(&self, i: usize, j: usize) -> DVector<f64> {
        let p = self.phi[i].len();
        self.a1.apply_vec(&self.phi[i][p - 1 - j])
    }

    /// Flat index of `(chain, position)` in the root-number ordering.
    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        self.phi[..i].iter().map(Vec::len).sum::<usize>() + j
    }

    /// `(chain, position)` pairs in flat order.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.phi
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..c.len()).map(move |j| (i, j)))
            .collect()
    }

    pub fn phi_flat(&self) -> Vec<DVector<f64>> {
        self.phi.iter().flatten().cloned().collect()
    }

    pub fn psi_flat(&self) -> Vec<DVector<f64>> {
        self.psi.iter().flatten().cloned().collect()
    }

    pub fn gamma_flat(&self) -> Vec<DVector<f64>> {
        self.index_pairs()
            .into_iter()
            .map(|(i, j)| self.gamma(i, j))
            .collect()
    }

    pub fn z_flat(&self) -> Vec<DVector<f64>> {
        self.index_pairs()
            .into_iter()
            .map(|(i, j)| self.z(i, j))
            .collect()
    }

    /// Kernel directions `phi_{m+1..n}` outside the paired chains.
    pub fn extra_phi(&self) -> &[DVector<f64>] {
        &self.extra_phi
    }

    pub fn extra_gamma(&self) -> &[DVector<f64>] {
        &self.extra_gamma
    }

    /// Cokernel directions `psi_{n+1..m}` outside the paired chains.
    pub fn extra_psi(&self) -> &[DVector<f64>] {
        &self.extra_psi
    }

    pub fn extra_z(&self) -> &[DVector<f64>] {
        &self.extra_z
    }

    /// Largest scaled residual of `B phi^(1) = 0`, `B phi^(j) = A1 phi^(j-1)`
    /// and of the dual relations.
    pub fn link_residual(&self) -> f64 {
        let e1 = self.e1();
        let e2 = self.e2();
        let nb = self.b.norm();
        let na = self.a1.norm();
        let b_adj = self.b.adjoint();
        let mut worst = 0.0_f64;
        for chain in &self.phi {
            for (j, el) in chain.iter().enumerate() {
                let lhs = self.b.apply_vec(el);
                let (rhs, prev) = if j == 0 {
                    (DVector::zeros(e2.dim()), 0.0)
                } else {
                    (self.a1.apply_vec(&chain[j - 1]), e1.norm_vec(&chain[j - 1]))
                };
                let scale = (nb * e1.norm_vec(el) + na * prev).max(f64::MIN_POSITIVE);
                worst = worst.max(e2.norm_vec(&(lhs - rhs)) / scale);
            }
        }
        for chain in &self.psi {
            for (j, el) in chain.iter().enumerate() {
                let lhs = b_adj.apply_vec(el);
                let (rhs, prev) = if j == 0 {
                    (DVector::zeros(e1.dim()), 0.0)
                } else {
                    (
                        self.a1_adjoint.apply_vec(&chain[j - 1]),
                        e2.norm_vec(&chain[j - 1]),
                    )
                };
                let scale = (nb * e2.norm_vec(el) + na * prev).max(f64::MIN_POSITIVE);
                worst = worst.max(e1.norm_vec(&(lhs - rhs)) / scale);
            }
        }
        worst
    }

    /// Largest deviation of `<phi_a, gamma_b>` and `<z_a, psi_b>` from the
    /// identity over flat indices.
    pub fn biorthogonality_defect(&self) -> f64 {
        let phis = self.phi_flat();
        let gammas = self.gamma_flat();
        let zs = self.z_flat();
        let psis = self.psi_flat();
        let mut worst = 0.0_f64;
        for a in 0..phis.len() {
            for b in 0..phis.len() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((self.e1().inner_vec(&phis[a], &gammas[b]) - target).abs());
                worst = worst.max((self.e2().inner_vec(&zs[a], &psis[b]) - target).abs());
            }
        }
        worst
    }

    /// `P_k = sum <., gamma_i^(j)> phi_i^(j)` as a matrix on E1.
    pub fn pk_matrix(&self) -> DMatrix<f64> {
        rank_sum(
            self.e1(),
            &self.phi_flat(),
            &self.gamma_flat(),
            self.e1().dim(),
        )
    }

    /// `Q_k = sum <., psi_i^(j)> z_i^(j)` as a matrix on E2.
    pub fn qk_matrix(&self) -> DMatrix<f64> {
        rank_sum(self.e2(), &self.z_flat(), &self.psi_flat(), self.e2().dim())
    }
}

/// `sum_r targets_r <., functionals_r>` over `space`.
pub(crate) fn rank_sum(
    space: &SpaceRef,
    targets: &[DVector<f64>],
    functionals: &[DVector<f64>],
    dim: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(targets.first().map_or(dim, |t| t.len()), dim);
    for (t, f) in targets.iter().zip(functionals) {
        let row = space.lower(f).transpose();
        m += t * row;
    }
    m
}
