//! Temporal signal subspace and the null-space projector `I − V Vᴴ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{KTSlice2D, C64};

/// Orthonormal basis of the rank-r temporal signal subspace, stored (T, r) row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalProjector {
    basis: Vec<C64>,
    n_time: usize,
    rank: usize,
    /// True when the data had fewer than `rank` non-negligible components and
    /// the basis was completed with arbitrary orthonormal directions.
    pub rank_deficient: bool,
}

impl TemporalProjector {
    pub fn from_basis(basis: Vec<C64>, n_time: usize, rank: usize) -> Result<Self> {
        if basis.len() != n_time * rank {
            return Err(Error::Shape(format!("basis has {} entries, expected {n_time}x{rank}", basis.len())));
        }
        Ok(Self { basis, n_time, rank, rank_deficient: false })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn basis(&self) -> &[C64] {
        &self.basis
    }

    /// `(I − V Vᴴ) v` for one temporal signal.
    pub fn null_apply(&self, v: &[C64], out: &mut [C64]) {
        let (t, r) = (self.n_time, self.rank);
        out.copy_from_slice(v);
        for c in 0..r {
            let coef: C64 = (0..t).map(|i| self.basis[i * r + c].conj() * v[i]).sum();
            for i in 0..t {
                out[i] -= self.basis[i * r + c] * coef;
            }
        }
    }
}

/// Leading r-dimensional subspace spanned by the temporal signals (rows) of a
/// (PE, TIME) image, from the eigendecomposition of Σ_n s_n s_nᴴ.
pub fn estimate_temporal_subspace(x0: &KTSlice2D, rank: usize) -> Result<TemporalProjector> {
    if x0.is_multicoil() {
        return Err(Error::Axis("temporal subspace needs a (PE, TIME) image".into()));
    }
    let (n, t) = (x0.n_pe(), x0.n_time());
    if rank < 1 || rank >= t {
        return Err(Error::Config(format!("temporal rank {rank} must satisfy 1 <= r < T = {t}")));
    }
    let data = x0.data();
    let gram = DMatrix::<C64>::from_fn(t, t, |a, b| (0..n).map(|p| data[p * t + a] * data[p * t + b].conj()).sum());
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..t).collect();
    // descending; ties broken by index for determinism
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kept = eig.eigenvalues[order[rank - 1]];
    let rank_deficient = top == 0.0 || kept <= 1e-12 * top;
    let mut basis = Vec::with_capacity(t * rank);
    for i in 0..t {
        for &c in &order[..rank] {
            basis.push(eig.eigenvectors[(i, c)]);
        }
    }
    Ok(TemporalProjector { basis, n_time: t, rank, rank_deficient })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BUpdateMode {
    /// `v − (2λ1/μ1)·P v`, the iteration as written.
    #[default]
    Verbatim,
    /// `(μ1 I + 2λ1 P)⁻¹ μ1 v`, the exact sub-problem minimizer.
    Exact,
}

/// Temporal low-rank update applied to every temporal signal of a (PE, TIME) image.
pub fn b_update(x: &[C64], proj: &TemporalProjector, lambda1: f64, mu1: f64, mode: BUpdateMode) -> Vec<C64> {
    let t = proj.n_time;
    let c = match mode {
        BUpdateMode::Verbatim => 2.0 * lambda1 / mu1,
        // P is a projector, so (μ1 + 2λ1 P)⁻¹ μ1 = I − 2λ1/(μ1 + 2λ1) P
        BUpdateMode::Exact => 2.0 * lambda1 / (mu1 + 2.0 * lambda1),
    };
    let mut out = vec![C64::new(0.0, 0.0); x.len()];
    let mut null = vec![C64::new(0.0, 0.0); t];
    for (src, dst) in x.chunks_exact(t).zip(out.chunks_exact_mut(t)) {
        proj.null_apply(src, &mut null);
        for i in 0..t {
            dst[i] = src[i] - null[i] * c;
        }
    }
    out
}
