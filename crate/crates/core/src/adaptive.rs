//! Enrichment loops: residual-driven adaptive enrichment (optionally with
//! basis removal), basis pursuit, uniform enrichment, and enrichment driven
//! by the exact local error.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::indicators::{compute_indicators, exact_local_indicator, zeta_correlations, IndicatorSet};
use crate::solve::{Discretization, Solution};
use crate::spectral::{Family, OfflineSpaces, OfflineState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Adaptive,
    Removal,
    Pursuit,
    Uniform,
    Exact,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Adaptive,
        Strategy::Removal,
        Strategy::Pursuit,
        Strategy::Uniform,
        Strategy::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::Removal => "removal",
            Strategy::Pursuit => "pursuit",
            Strategy::Uniform => "uniform",
            Strategy::Exact => "exact",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| invalid(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilySet {
    V1,
    V1V2,
}

impl FamilySet {
    pub fn families(self) -> &'static [Family] {
        match self {
            FamilySet::V1 => &[Family::One],
            FamilySet::V1V2 => &[Family::One, Family::Two],
        }
    }
}

impl FromStr for FamilySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(FamilySet::V1),
            "v1v2" | "v1+v2" => Ok(FamilySet::V1V2),
            _ => Err(invalid(format!("unknown family set `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub strategy: Strategy,
    /// Marking fraction for Dörfler marking, threshold ratio for pursuit.
    pub theta: f64,
    /// Target eigenvalue ratio for choosing how many functions to add.
    pub delta0: f64,
    /// Removal tolerance.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_dof: Option<usize>,
    pub l1: usize,
    pub l2: usize,
    pub families: FamilySet,
    pub uniform_increment: usize,
    /// Record wall time; off by default so histories are reproducible.
    pub record_time: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Adaptive,
            theta: 0.4,
            delta0: 0.75,
            epsilon: 1e-12,
            max_iterations: 10,
            max_dof: None,
            l1: 4,
            l2: 0,
            families: FamilySet::V1,
            uniform_increment: 4,
            record_time: false,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(invalid(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(invalid(format!("delta0 must lie in (0, 1), got {}", self.delta0)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(invalid("epsilon must be nonnegative"));
        }
        if self.l1 == 0 {
            return Err(invalid("at least one family-1 function per block is required"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        if self.strategy == Strategy::Uniform && self.uniform_increment == 0 {
            return Err(invalid("uniform increment must be positive"));
        }
        Ok(())
    }

    fn enabled(&self) -> &'static [Family] {
        match self.strategy {
            Strategy::Uniform | Strategy::Exact => &[Family::One],
            _ => self.families.families(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub m: usize,
    pub strategy: Strategy,
    pub dof: usize,
    pub e2: f64,
    pub ea: f64,
    pub e2_snap: Option<f64>,
    pub ea_snap: Option<f64>,
    pub sum_eta2: f64,
    pub k_marked: usize,
    pub n_added: usize,
    pub n_removed: usize,
    pub seconds: f64,
    pub converged: bool,
}

/// Smallest `k` with `θ Σ η² ≤ Σ_{J≤k} η²` for a descending list; zero
/// when every entry vanishes.
pub fn dorfler_mark(eta2_desc: &[f64], theta: f64) -> usize {
    let total: f64 = eta2_desc.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let target = theta * total;
    let mut acc = 0.0;
    for (k, &v) in eta2_desc.iter().enumerate() {
        acc += v;
        if acc >= target {
            return k + 1;
        }
    }
    eta2_desc.len()
}

/// Smallest `s ≥ 1` with `λ_{l+s+1} ≥ λ_{l+1} / δ₀` (zero-based:
/// `values[l + s] ≥ values[l] / δ₀`), or every remaining index when no
/// such `s` exists.
pub fn choose_s(values: &[f64], l: usize, delta0: f64) -> usize {
    if l >= values.len() {
        return 0;
    }
    let target = values[l] / delta0;
    (1..values.len() - l)
        .find(|&s| values[l + s] >= target)
        .unwrap_or(values.len() - l)
}

/// Drop active functions whose coefficient satisfies
/// `α² < ε Σ_block α²`. Family-1 index 0 is never removed.
pub fn remove_basis(state: &OfflineState, solution: &Solution, epsilon: f64) -> (OfflineState, usize) {
    let mut totals = vec![0.0; state.num_blocks()];
    for ((i, _, _), a) in solution.layout.iter().zip(&solution.coefficients) {
        totals[*i] += a * a;
    }
    let mut next = state.clone();
    let mut removed = 0;
    for (&(i, fam, k), a) in solution.layout.iter().zip(&solution.coefficients) {
        if fam == Family::One && k == 0 {
            continue;
        }
        if a * a < epsilon * totals[i] && next.remove(i, fam, k) {
            removed += 1;
        }
    }
    (next, removed)
}

/// Grow every block's family-1 prefix by `k_u`, clamped at the spectrum.
pub fn uniform_step(spaces: &OfflineSpaces, state: &OfflineState, k_u: usize) -> (OfflineState, usize) {
    let mut next = state.clone();
    let mut added = 0;
    for i in 0..spaces.num_blocks() {
        let len = spaces.block(i).spectrum_len(Family::One);
        let f = state.frontier(i, Family::One);
        for k in f..(f + k_u).min(len) {
            if next.insert(i, Family::One, k) {
                added += 1;
            }
        }
    }
    (next, added)
}

fn enrich(spaces: &OfflineSpaces, state: &mut OfflineState, block: usize, family: Family, delta0: f64) -> usize {
    let eig = match spaces.block(block).eigen(family) {
        Some(e) => e,
        None => return 0,
    };
    let l = state.frontier(block, family);
    let s = choose_s(&eig.values, l, delta0);
    (l..l + s).filter(|&k| state.insert(block, family, k)).count()
}

/// Outcome of one enrichment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: OfflineState,
    pub k_marked: usize,
    pub n_added: usize,
    pub n_removed: usize,
    pub converged: bool,
}

/// Residual-driven step: mark `(block, family)` pairs by Dörfler marking
/// on `η²` and add eigenfunctions by the `s` rule.
pub fn adaptive_step(spaces: &OfflineSpaces, state: &OfflineState, indicators: &IndicatorSet, config: &AdaptiveConfig) -> Step {
    let k = dorfler_mark(&indicators.eta2(), config.theta);
    let mut next = state.clone();
    let mut added = 0;
    for e in &indicators.entries[..k] {
        added += enrich(spaces, &mut next, e.block, e.family, config.delta0);
    }
    Step {
        state: next,
        k_marked: k,
        n_added: added,
        n_removed: 0,
        converged: k == 0 || added == 0,
    }
}

/// Pursuit step: rank inactive eigenfunctions by their correlation with
/// the residual and add all within `θ` of the best one.
pub fn pursuit_step(
    disc: &Discretization,
    spaces: &OfflineSpaces,
    state: &OfflineState,
    rho: &[f64],
    families: &[Family],
    theta: f64,
) -> Result<Step> {
    let per_block: Vec<Vec<(f64, usize, Family, usize)>> = (0..spaces.num_blocks())
        .into_par_iter()
        .map(|i| {
            let space = spaces.block(i);
            let mut out = Vec::new();
            for &fam in families {
                let len = space.spectrum_len(fam);
                let cands: Vec<usize> = (0..len).filter(|&k| !state.contains(i, fam, k)).collect();
                if cands.is_empty() {
                    continue;
                }
                let z = zeta_correlations(disc, space, fam, rho, &cands)?;
                out.extend(cands.into_iter().zip(z).map(|(k, z2)| (z2, i, fam, k)));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<_> = per_block.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let best = all.first().map_or(0.0, |c| c.0);
    let mut next = state.clone();
    if best <= 0.0 {
        return Ok(Step {
            state: next,
            k_marked: 0,
            n_added: 0,
            n_removed: 0,
            converged: true,
        });
    }
    // ζ ≥ θ ζ₁  ⇔  ζ² ≥ θ² ζ₁²
    let cut = theta * theta * best;
    let mut added = 0;
    for &(z2, i, fam, k) in &all {
        if z2 < cut {
            break;
        }
        if next.insert(i, fam, k) {
            added += 1;
        }
    }
    Ok(Step {
        state: next,
        k_marked: added,
        n_added: added,
        n_removed: 0,
        converged: false,
    })
}

/// Step driven by the exact local errors, family 1 only.
pub fn exact_step(spaces: &OfflineSpaces, state: &OfflineState, local: &[f64], config: &AdaptiveConfig) -> Step {
    let mut order: Vec<(f64, usize)> = local.iter().map(|v| v * v).zip(0..).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let vals: Vec<f64> = order.iter().map(|o| o.0).collect();
    let k = dorfler_mark(&vals, config.theta);
    let mut next = state.clone();
    let mut added = 0;
    for &(_, i) in &order[..k] {
        added += enrich(spaces, &mut next, i, Family::One, config.delta0);
    }
    Step {
        state: next,
        k_marked: k,
        n_added: added,
        n_removed: 0,
        converged: k == 0 || added == 0,
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ConvergenceRecord>,
    /// The last state that was solved.
    pub final_state: OfflineState,
    pub final_solution: Solution,
    /// Indicators of every iteration.
    pub indicators: Vec<IndicatorSet>,
}

/// Run one strategy, measuring errors against the fine solution
/// `reference` and optionally against a snapshot solution.
pub fn run_strategy(
    disc: &Discretization,
    spaces: &OfflineSpaces,
    config: &AdaptiveConfig,
    reference: &Solution,
    snapshot: Option<&Solution>,
) -> Result<RunOutput> {
    let l2 = if config.families == FamilySet::V1V2 { config.l2 } else { 0 };
    let state = OfflineState::initial(spaces, config.l1, l2);
    run_from(disc, spaces, config, state, reference, snapshot)
}

/// Relative size of `Σ η²` below which the residual is rounding noise.
const RESIDUAL_FLOOR: f64 = 1e-20;

/// Like [`run_strategy`] but starting from an explicit state.
pub fn run_from(
    disc: &Discretization,
    spaces: &OfflineSpaces,
    config: &AdaptiveConfig,
    mut state: OfflineState,
    reference: &Solution,
    snapshot: Option<&Solution>,
) -> Result<RunOutput> {
    config.validate()?;
    if config.families == FamilySet::V1V2 && !spaces.options.family2 && config.strategy != Strategy::Uniform {
        return Err(invalid("family 2 requested but its spectrum was not computed"));
    }
    let families = config.enabled();
    let mut records = Vec::new();
    let mut logs = Vec::new();
    let mut last: Option<(OfflineState, Solution)> = None;
    let mut prev_removal: Option<(usize, f64)> = None;
    let mut eta0: Option<f64> = None;
    let mut visited: HashSet<Vec<[Vec<usize>; 2]>> = HashSet::new();

    for m in 0..config.max_iterations {
        let t0 = Instant::now();
        let u = disc.solve_coarse(spaces, &state)?;
        let (e2, ea) = disc.relative_errors(&u.fine, &reference.fine)?;
        let (e2_snap, ea_snap) = match snapshot {
            Some(s) => {
                let (a, b) = disc.relative_errors(&u.fine, &s.fine)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        if let Some((removed, ea_prev)) = prev_removal {
            if removed > 0 && ea > 1.1 * ea_prev {
                log::warn!("iteration {m}: energy error grew from {ea_prev:.3e} to {ea:.3e} after removing {removed} functions");
            }
        }
        let rho = disc.residual(&u.fine);
        let ind = compute_indicators(disc, spaces, &state, &rho, families)?;

        let mut step = match config.strategy {
            Strategy::Adaptive | Strategy::Removal => adaptive_step(spaces, &state, &ind, config),
            Strategy::Uniform => {
                let (next, added) = uniform_step(spaces, &state, config.uniform_increment);
                Step {
                    state: next,
                    k_marked: spaces.num_blocks(),
                    n_added: added,
                    n_removed: 0,
                    converged: added == 0,
                }
            }
            Strategy::Exact => {
                let local = exact_local_indicator(disc, &reference.fine, &u.fine);
                exact_step(spaces, &state, &local, config)
            }
            Strategy::Pursuit => pursuit_step(disc, spaces, &state, &rho, families, config.theta)?,
        };
        if matches!(config.strategy, Strategy::Removal | Strategy::Pursuit) {
            let (pruned, n) = remove_basis(&step.state, &u, config.epsilon);
            step.state = pruned;
            step.n_removed = n;
            if config.strategy == Strategy::Pursuit {
                step.converged = step.n_added == 0 && n == 0;
            }
        }
        let eta2 = ind.total();
        let first = *eta0.get_or_insert(eta2);
        if eta2 <= RESIDUAL_FLOOR * first {
            step.converged = true;
        }
        visited.insert(state.sets().to_vec());
        if !step.converged && visited.contains(step.state.sets()) {
            // add/remove passes can cycle between states already solved
            log::debug!("iteration {m}: next state was already visited; stopping");
            step.converged = true;
        }

        let seconds = if config.record_time { t0.elapsed().as_secs_f64() } else { 0.0 };
        log::info!(
            "[{}] m={m} dof={} e2={e2:.4e} ea={ea:.4e} eta2={:.4e} marked={} +{} -{}",
            config.strategy,
            state.dof(),
            ind.total(),
            step.k_marked,
            step.n_added,
            step.n_removed
        );
        records.push(ConvergenceRecord {
            m,
            strategy: config.strategy,
            dof: state.dof(),
            e2,
            ea,
            e2_snap,
            ea_snap,
            sum_eta2: ind.total(),
            k_marked: step.k_marked,
            n_added: step.n_added,
            n_removed: step.n_removed,
            seconds,
            converged: step.converged,
        });
        logs.push(ind);
        prev_removal = Some((step.n_removed, ea));
        let budget_hit = config.max_dof.is_some_and(|d| step.state.dof() > d);
        let done = step.converged || budget_hit;
        last = Some((state, u));
        if done {
            break;
        }
        state = step.state;
    }
    let (final_state, final_solution) = last.expect("at least one iteration");
    Ok(RunOutput {
        records,
        final_state,
        final_solution,
        indicators: logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dorfler_examples() {
        assert_eq!(dorfler_mark(&[4.0, 3.0, 2.0, 1.0], 0.4), 1);
        assert_eq!(dorfler_mark(&[4.0, 3.0, 2.0, 1.0], 0.7), 2);
        assert_eq!(dorfler_mark(&[0.0, 0.0], 0.5), 0);
        assert_eq!(dorfler_mark(&[], 0.5), 0);
    }

    #[test]
    fn choose_s_examples() {
        let v = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(choose_s(&v, 1, 0.5), 1);
        let geo: Vec<f64> = (0..10).map(|k| 3f64.powi(k)).collect();
        for l in 0..9 {
            assert_eq!(choose_s(&geo, l, 0.75), 1);
        }
        let flat = [1.0, 2.0, 2.0, 2.0, 2.0];
        assert_eq!(choose_s(&flat, 1, 0.75), 4);
        assert_eq!(choose_s(&flat, 5, 0.75), 0);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdaptiveConfig::default().validate().is_ok());
        let bad = AdaptiveConfig {
            theta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdaptiveConfig {
            delta0: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
