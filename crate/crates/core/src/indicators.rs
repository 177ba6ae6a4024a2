//! Residual-based indicators.
//!
//! For block `K_i` and family `j` the residual `R_{j,i}(v) = (f, v) - a_DG(u_H, v)`
//! is evaluated on the snapshot functions of the family, measured in the
//! dual of the family norm, and scaled by the first inactive eigenvalue.

use rayon::prelude::*;

use crate::dense;
use crate::error::{invalid, Result};
use crate::solve::Discretization;
use crate::spectral::{BlockSpace, Family, OfflineSpaces, OfflineState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicator {
    pub block: usize,
    pub family: Family,
    /// `‖R_{j,i}‖²` in the dual family norm.
    pub dual_norm2: f64,
    /// `λ_{j,l+1}`, or `None` when the spectrum is exhausted.
    pub lambda_next: Option<f64>,
    /// `‖R‖² / λ_{l+1}`; zero for exhausted spectra.
    pub eta2: f64,
}

impl Indicator {
    /// `S = λ_{l+1}^{-1/2} ‖R‖`.
    pub fn s(&self) -> f64 {
        match self.lambda_next {
            Some(l) if l > 0.0 => self.dual_norm2.sqrt() / l.sqrt(),
            _ => 0.0,
        }
    }
}

/// Indicators sorted by descending `η²` (ties by block, then family).
#[derive(Debug, Clone, Default)]
pub struct IndicatorSet {
    pub entries: Vec<Indicator>,
}

impl IndicatorSet {
    pub fn new(mut entries: Vec<Indicator>) -> Self {
        entries.sort_by(|a, b| {
            b.eta2
                .total_cmp(&a.eta2)
                .then(a.block.cmp(&b.block))
                .then(a.family.cmp(&b.family))
        });
        Self { entries }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.eta2).sum()
    }

    pub fn eta2(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eta2).collect()
    }
}

fn block_slice<'a>(disc: &Discretization, v: &'a [f64], block: usize) -> &'a [f64] {
    let npb = disc.grid().nodes_per_block();
    &v[block * npb..(block + 1) * npb]
}

/// `r_k = R_{j,i}(ψ_k)` over the snapshot functions of the family, given
/// the fine residual `ρ = b - S u_H`.
pub fn residual_components(disc: &Discretization, space: &BlockSpace, family: Family, rho: &[f64]) -> Vec<f64> {
    let rb = block_slice(disc, rho, space.block);
    match family {
        Family::One => dense::mat_t_vec(space.snapshot.basis.as_ref(), rb),
        Family::Two => disc.dg().block(space.block).interior().iter().map(|&n| rb[n]).collect(),
    }
}

/// Dual norm `‖R‖ = sup_v |R(v)| / ‖v‖`, computed as `sqrt(rᵀ G⁻¹ r)`.
pub fn residual_dual_norm(space: &BlockSpace, family: Family, r: &[f64]) -> Result<f64> {
    let s = space
        .gram_solver(family)
        .ok_or_else(|| invalid("family spectrum was not computed"))?;
    Ok(s.inverse_quadratic(r).max(0.0).sqrt())
}

/// Indicators for every block and requested family.
pub fn compute_indicators(
    disc: &Discretization,
    spaces: &OfflineSpaces,
    state: &OfflineState,
    rho: &[f64],
    families: &[Family],
) -> Result<IndicatorSet> {
    let entries: Vec<Indicator> = (0..spaces.num_blocks())
        .into_par_iter()
        .map(|i| {
            let space = spaces.block(i);
            families
                .iter()
                .filter(|f| space.eigen(**f).is_some())
                .map(|&fam| {
                    let r = residual_components(disc, space, fam, rho);
                    let d = residual_dual_norm(space, fam, &r)?;
                    let eig = space.eigen(fam).unwrap();
                    let next = state.frontier(i, fam);
                    let lambda_next = eig.values.get(next).copied();
                    let eta2 = match lambda_next {
                        Some(l) if l > 0.0 => d * d / l,
                        _ => 0.0,
                    };
                    Ok(Indicator {
                        block: i,
                        family: fam,
                        dual_norm2: d * d,
                        lambda_next,
                        eta2,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(IndicatorSet::new(entries))
}

/// `ζ² = R(v_l)² / ‖v_l‖²` for candidate eigenfunctions `v_l` of one block.
pub fn zeta_correlations(
    disc: &Discretization,
    space: &BlockSpace,
    family: Family,
    rho: &[f64],
    candidates: &[usize],
) -> Result<Vec<f64>> {
    let eig = space
        .eigen(family)
        .ok_or_else(|| invalid("family spectrum was not computed"))?;
    let gram = space.gram(family).unwrap();
    let r = residual_components(disc, space, family, rho);
    candidates
        .iter()
        .map(|&l| {
            if l >= eig.len() {
                return Err(crate::error::Error::OutOfRange { index: l, len: eig.len() });
            }
            let x = dense::col_vec(eig.coeffs.as_ref(), l);
            let num = dense::dot(&x, &r);
            let den = dense::quadratic(gram.as_ref(), &x);
            Ok(if den > 0.0 { num * num / den } else { 0.0 })
        })
        .collect()
}

/// Per-block energy error `‖u_h - u_H‖_{a,K_i}` with interior-edge terms
/// shared equally between the two neighbors, so that the squares sum to
/// the global `a_DG` energy of the difference.
pub fn exact_local_indicator(disc: &Discretization, u_h: &[f64], u_coarse: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = u_h.iter().zip(u_coarse).map(|(a, b)| a - b).collect();
    disc.dg().local_energy(&e).into_iter().map(|v| v.max(0.0).sqrt()).collect()
}
