//! Layered content: deterministic composition of child labels into parents,
//! per-layer entropy bookkeeping and the spatiotemporal loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{inverted_update, InferenceTrace, TraceStep, UpdateSpec, Verdict, PERSISTENCE};
use crate::error::{Error, Result};
use crate::prob::{
    check_same, conditional_entropy, entropy, entropy_of, kl_of, Alphabet, Direction, Dist, Joint, Kernel,
};

pub const DEFAULT_DRIFT_BOUND: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "table", rename_all = "snake_case")]
pub enum Composition {
    Identity,
    /// Child labels joined without a separator.
    Concat,
    /// Most frequent child label; ties go to the smallest label.
    Majority,
    /// Explicit map keyed by the comma-joined child labels.
    Table(BTreeMap<String, String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub level: usize,
    pub arity: usize,
    pub compose: Composition,
    pub lambda_space: f64,
}

impl LayerSpec {
    pub fn new(level: usize, arity: usize, compose: Composition, lambda_space: f64) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidArgument("arity must be at least 1".into()));
        }
        if compose == Composition::Identity && arity != 1 {
            return Err(Error::InvalidArgument(format!("identity composition needs arity 1, got {arity}")));
        }
        Ok(Self { level, arity, compose, lambda_space })
    }

    /// Parent labels reachable from `child` labels, in order of first
    /// appearance over the lexicographic child product. Fails if the
    /// composition is not total.
    pub fn parent_alphabet(&self, child: &Alphabet) -> Result<Alphabet> {
        let n = child.size();
        let mut seen = Vec::new();
        let mut idx = vec![0usize; self.arity];
        loop {
            let labels: Vec<&str> = idx.iter().map(|&i| child.label(i)).collect();
            let p = compose_layer(&labels, self)?;
            if !seen.contains(&p) {
                seen.push(p);
            }
            let mut k = self.arity;
            loop {
                if k == 0 {
                    return Alphabet::new(seen);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

pub fn compose_layer(children: &[&str], spec: &LayerSpec) -> Result<String> {
    if children.len() != spec.arity {
        return Err(Error::ArityMismatch { expected: spec.arity, actual: children.len() });
    }
    match &spec.compose {
        Composition::Identity => Ok(children[0].to_string()),
        Composition::Concat => Ok(children.concat()),
        Composition::Majority => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for c in children {
                *counts.entry(c).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            Ok(counts.into_iter().find(|&(_, n)| n == top).map(|(l, _)| l.to_string()).unwrap_or_default())
        }
        Composition::Table(map) => {
            let key = children.join(",");
            map.get(&key)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("composition table has no entry for ({key})")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub parent: f64,
    pub child_sum: f64,
    pub satisfied: bool,
}

impl LayerCheck {
    fn new(parent: f64, child_sum: f64) -> Self {
        Self { parent, child_sum, satisfied: parent < child_sum }
    }
}

/// `H(Ψ_ℓ|Φ_ℓ)` against `Σ_i H(Ψ_{ℓ−1}^{(i)}|Φ_{ℓ−1}^{(i)})`; joints have
/// content rows and context columns.
pub fn layer_entropy_check(parent: &Joint, children: &[Joint]) -> LayerCheck {
    let child_sum = children.iter().map(|j| conditional_entropy(j, Direction::ColGivenRow)).sum();
    LayerCheck::new(conditional_entropy(parent, Direction::ColGivenRow), child_sum)
}

/// One level of the tower. Level 1 holds the independently updated units;
/// higher levels are recomposed from the level below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub spec: LayerSpec,
    /// `p(Ψ_ℓ | Φ_ℓ)`; its source alphabet is the level's content alphabet.
    pub context: Kernel,
    pub drift_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    /// Number of level-1 units.
    pub units: usize,
    /// Inverted update applied by every level-1 unit.
    pub update: UpdateSpec,
    pub levels: Vec<Level>,
    pub lambda_temp: f64,
}

impl Hierarchy {
    /// Checks alphabets chain across levels and unit counts divide evenly.
    pub fn validate(&self) -> Result<Vec<usize>> {
        let first = self.levels.first().ok_or_else(|| Error::InvalidArgument("hierarchy needs a level".into()))?;
        check_same(&self.update.candidates, first.context.from_alphabet(), "level 1 candidates")?;
        let mut units = vec![self.units];
        for w in self.levels.windows(2) {
            let (child, parent) = (&w[0], &w[1]);
            let reach = parent.spec.parent_alphabet(child.context.from_alphabet())?;
            for l in reach.labels() {
                parent.context.from_alphabet().require(l)?;
            }
            let below = units[units.len() - 1];
            if below % parent.spec.arity != 0 {
                return Err(Error::ArityMismatch { expected: parent.spec.arity, actual: below });
            }
            units.push(below / parent.spec.arity);
        }
        Ok(units)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub t: usize,
    pub level: usize,
    pub unit: usize,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentCheck {
    pub t: usize,
    pub level: usize,
    pub unit: usize,
    pub check: LayerCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyRun {
    /// One aggregated trace per level: labels joined by `|`, objective and
    /// conditional entropy summed over the level's units.
    pub traces: Vec<InferenceTrace>,
    /// Labels of every unit at every level after the last step.
    pub fixed_points: Vec<Vec<String>>,
    pub checks: Vec<ParentCheck>,
    pub drift: Vec<DriftEvent>,
    /// Per level: summed conditional entropy never increased.
    pub monotone: Vec<bool>,
}

impl HierarchyRun {
    pub fn all_checks_satisfied(&self) -> bool {
        self.checks.iter().all(|c| c.check.satisfied)
    }

    pub fn converged(&self) -> bool {
        self.traces.iter().all(|t| t.verdict.is_converged())
    }
}

fn recompose(h: &Hierarchy, base: &[String]) -> Result<Vec<Vec<String>>> {
    let mut tower = vec![base.to_vec()];
    for level in &h.levels[1..] {
        let below = &tower[tower.len() - 1];
        let parents = below
            .chunks(level.spec.arity)
            .map(|c| compose_layer(&c.iter().map(String::as_str).collect::<Vec<_>>(), &level.spec))
            .collect::<Result<Vec<_>>>()?;
        tower.push(parents);
    }
    Ok(tower)
}

/// Runs the tower for up to `max_t` steps: every level-1 unit takes one
/// inverted update, then parents are recomposed bottom-up. Stops once no
/// label has changed for [`PERSISTENCE`] steps. KL drift above a level's
/// bound is recorded, not fatal.
pub fn hierarchical_run(h: &Hierarchy, starts: &[String], max_t: usize) -> Result<HierarchyRun> {
    if max_t == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    h.validate()?;
    if starts.len() != h.units {
        return Err(Error::DimensionMismatch { expected: h.units, actual: starts.len(), context: "level 1 starts".into() });
    }
    let entropies: Vec<Vec<f64>> = h.levels.iter().map(|l| l.context.row_entropies()).collect();
    let index = |lvl: usize, label: &str| h.levels[lvl].context.from_alphabet().require(label);

    let mut tower = recompose(h, starts)?;
    let mut steps: Vec<Vec<TraceStep>> = vec![Vec::new(); h.levels.len()];
    let mut checks = Vec::new();
    let mut drift = Vec::new();
    let mut stable = vec![0usize; h.levels.len()];
    let mut settled_at: Vec<Option<usize>> = vec![None; h.levels.len()];

    let record = |t: usize, tower: &[Vec<String>], prev: Option<&[Vec<String>]>, steps: &mut Vec<Vec<TraceStep>>, checks: &mut Vec<ParentCheck>, drift: &mut Vec<DriftEvent>| -> Result<()> {
        for (lvl, labels) in tower.iter().enumerate() {
            let mut h_sum = 0.0;
            let mut kl_sum = 0.0;
            for (unit, l) in labels.iter().enumerate() {
                let i = index(lvl, l)?;
                h_sum += entropies[lvl][i];
                if let Some(p) = prev {
                    let j = index(lvl, &p[lvl][unit])?;
                    let kl = if i == j {
                        0.0
                    } else {
                        kl_of(h.levels[lvl].context.row(i), h.levels[lvl].context.row(j)).unwrap_or(f64::INFINITY)
                    };
                    kl_sum += kl;
                    if kl > h.levels[lvl].drift_bound {
                        drift.push(DriftEvent { t, level: lvl + 1, unit, kl });
                    }
                }
            }
            if lvl > 0 {
                let arity = h.levels[lvl].spec.arity;
                for (unit, l) in labels.iter().enumerate() {
                    let parent = entropies[lvl][index(lvl, l)?];
                    let child_sum = tower[lvl - 1][unit * arity..(unit + 1) * arity]
                        .iter()
                        .map(|c| Ok(entropies[lvl - 1][index(lvl - 1, c)?]))
                        .sum::<Result<f64>>()?;
                    checks.push(ParentCheck { t, level: lvl + 1, unit, check: LayerCheck::new(parent, child_sum) });
                }
            }
            let alphabet = h.levels[lvl].context.from_alphabet();
            let mut state = vec![0.0; alphabet.size()];
            for l in labels {
                state[index(lvl, l)?] += 1.0 / labels.len() as f64;
            }
            steps[lvl].push(TraceStep {
                t,
                state,
                label: Some(labels.join("|")),
                objective: h_sum,
                cond_entropy: h_sum,
                kl_step: kl_sum,
                variance: 0.0,
            });
        }
        Ok(())
    };

    record(0, &tower, None, &mut steps, &mut checks, &mut drift)?;
    for t in 1..=max_t {
        let base = tower[0]
            .iter()
            .map(|l| inverted_update(l, &h.levels[0].context, &h.update))
            .collect::<Result<Vec<_>>>()?;
        let next = recompose(h, &base)?;
        record(t, &next, Some(&tower), &mut steps, &mut checks, &mut drift)?;
        for lvl in 0..next.len() {
            if next[lvl] == tower[lvl] {
                stable[lvl] += 1;
                if stable[lvl] >= PERSISTENCE && settled_at[lvl].is_none() {
                    settled_at[lvl] = Some(t + 1 - PERSISTENCE);
                }
            } else {
                stable[lvl] = 0;
                settled_at[lvl] = None;
            }
        }
        tower = next;
        if settled_at.iter().all(Option::is_some) {
            break;
        }
    }
    let monotone = steps
        .iter()
        .map(|s| s.windows(2).all(|w| w[1].cond_entropy <= w[0].cond_entropy + 1e-12))
        .collect();
    let traces = steps
        .into_iter()
        .zip(&settled_at)
        .enumerate()
        .map(|(lvl, (steps, at))| InferenceTrace {
            alphabet: Some(h.levels[lvl].context.from_alphabet().clone()),
            steps,
            verdict: at.map_or(Verdict::Diverged, |at| Verdict::Converged { at }),
        })
        .collect();
    Ok(HierarchyRun { traces, fixed_points: tower, checks, drift, monotone })
}

/// Contexts `{0,1}` flipped with probability `noise[φ]` for content `φ ∈ {0,1}`.
pub fn bit_flip_kernel(noise: [f64; 2]) -> Result<Kernel> {
    let bits = Alphabet::new(["0", "1"])?;
    Kernel::new(bits.clone(), bits, vec![vec![1.0 - noise[0], noise[0]], vec![noise[1], 1.0 - noise[1]]])
}

/// Pair contexts for two bit contents whose flips share one uniform draw
/// (comonotone noise): a child with flip rate `ε` flips iff `U < ε`.
pub fn comonotone_pair_kernel(noise: [f64; 2]) -> Result<Kernel> {
    let pairs = Alphabet::new(["00", "01", "10", "11"])?;
    let rows = (0..4)
        .map(|code| {
            let phi = [code >> 1, code & 1];
            let eps = [noise[phi[0]], noise[phi[1]]];
            // breakpoints of U split [0,1) into intervals with fixed flip sets
            let mut cuts = [0.0, eps[0], eps[1], 1.0];
            cuts.sort_by(f64::total_cmp);
            let mut row = vec![0.0; 4];
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let psi: Vec<usize> = (0..2).map(|i| phi[i] ^ usize::from(mid < eps[i])).collect();
                row[psi[0] * 2 + psi[1]] += w[1] - w[0];
            }
            row
        })
        .collect();
    Kernel::new(pairs.clone(), pairs, rows)
}

/// Two bit units under a concatenating parent with comonotone shared noise.
pub fn redundant_bit_tower(noise: [f64; 2], lambda: f64, regularizer: crate::dynamics::Regularizer) -> Result<Hierarchy> {
    let bits = Alphabet::new(["0", "1"])?;
    Ok(Hierarchy {
        units: 2,
        update: UpdateSpec::new(bits, lambda, regularizer)?,
        levels: vec![
            Level {
                spec: LayerSpec::new(1, 1, Composition::Identity, 1.0)?,
                context: bit_flip_kernel(noise)?,
                drift_bound: DEFAULT_DRIFT_BOUND,
            },
            Level {
                spec: LayerSpec::new(2, 2, Composition::Concat, 1.0)?,
                context: comonotone_pair_kernel(noise)?,
                drift_bound: DEFAULT_DRIFT_BOUND,
            },
        ],
        lambda_temp: 1.0,
    })
}

/// Inputs for one `(t, ℓ)` addend of the spatiotemporal loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSlice {
    pub t: usize,
    pub level: usize,
    /// `p(Ψ_ℓ | Φ_ℓ^{(t)})`.
    pub context: Dist,
    /// `q(Z_t | Ψ)`, one row per context symbol.
    pub temporal_recognition: Kernel,
    /// `p(Z_t | Φ_ℓ^{(t)})`.
    pub temporal_prior: Dist,
    /// `q(Z_ℓ | Φ_ℓ^{(t)})`.
    pub spatial_recognition: Dist,
    /// `p(Z_ℓ | Φ_{ℓ−1}^{(t)})`.
    pub spatial_prior: Dist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub t: usize,
    pub level: usize,
    pub cond_entropy: f64,
    pub temporal_kl: f64,
    pub spatial_kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: Vec<LossTerm>,
}

impl LossBreakdown {
    /// Re-adds the exported components with the given weights.
    pub fn recompute(&self, lambda_temp: f64, lambda_space: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.cond_entropy + lambda_temp * t.temporal_kl + lambda_space * t.spatial_kl)
            .sum()
    }
}

/// `Σ_{t,ℓ} [H(Ψ|Φ) + λ_temp E_ψ KL(q(Z_t|ψ) ‖ p(Z_t|Φ)) + λ_space KL(q(Z_ℓ|Φ) ‖ p(Z_ℓ|Φ_{ℓ−1}))]`,
/// the temporal KL averaged over `ψ ∼ p(Ψ|Φ)`.
pub fn spatiotemporal_loss(slices: &[LossSlice], lambda_temp: f64, lambda_space: f64) -> Result<LossBreakdown> {
    let undefined = |s: &LossSlice, e: Error| Error::LossTermUndefined { t: s.t, level: s.level, detail: e.to_string() };
    let mut terms = Vec::with_capacity(slices.len());
    for s in slices {
        check_same(s.context.alphabet(), s.temporal_recognition.from_alphabet(), "temporal recognition source")
            .map_err(|e| undefined(s, e))?;
        let mut temporal_kl = 0.0;
        for (psi, &w) in s.context.probs().iter().enumerate() {
            if w > 0.0 {
                temporal_kl += w * kl_of(s.temporal_recognition.row(psi), s.temporal_prior.probs()).map_err(|e| undefined(s, e))?;
            }
        }
        let spatial_kl = kl_of(s.spatial_recognition.probs(), s.spatial_prior.probs()).map_err(|e| undefined(s, e))?;
        terms.push(LossTerm { t: s.t, level: s.level, cond_entropy: entropy(&s.context), temporal_kl, spatial_kl });
    }
    let mut out = LossBreakdown { total: 0.0, terms };
    out.total = out.recompute(lambda_temp, lambda_space);
    Ok(out)
}

/// Recursion is required iff the context entropy strictly exceeds the flat budget.
pub fn recursion_threshold(context_entropy: f64, flat_budget: f64) -> bool {
    context_entropy > flat_budget
}

/// Flat budget of a single-layer code with `code_size` symbols, `ln(code_size)`.
pub fn flat_budget(code_size: usize) -> f64 {
    (code_size as f64).ln()
}

const EXHAUSTIVE_MAX_CONTEXTS: usize = 12;

/// Least `H(Ψ|Φ)` achievable by a single-layer code `Φ = f(Ψ)` with at most
/// `code_size` symbols, found exhaustively. Deterministic codes suffice
/// since `H(Ψ|Φ) = H(Ψ) − I(Ψ;Φ) ≥ H(Ψ) − H(Φ)`.
pub fn flat_code_residual(context: &Dist, code_size: usize) -> Result<f64> {
    if code_size == 0 {
        return Err(Error::InvalidArgument("code size must be positive".into()));
    }
    let p = context.probs();
    let n = p.len();
    let h = entropy(context);
    let uniform = p.iter().all(|&v| (v - p[0]).abs() < 1e-12);
    let best = if uniform {
        // only group sizes matter: search partitions of n into ≤ code_size parts
        let mut best = 0.0f64;
        let mut parts = Vec::new();
        partitions(n, n, code_size, &mut parts, &mut |ps| {
            let probs: Vec<f64> = ps.iter().map(|&k| k as f64 / n as f64).collect();
            best = best.max(entropy_of(&probs));
        });
        best
    } else {
        if n > EXHAUSTIVE_MAX_CONTEXTS {
            return Err(Error::InstanceTooLarge(format!("{n} non-uniform contexts")));
        }
        let mut best = 0.0f64;
        let mut assign = vec![0usize; n];
        set_partitions(p, 0, 0, code_size, &mut assign, &mut vec![0.0; code_size], &mut best);
        best
    };
    Ok((h - best).max(0.0))
}

fn partitions(rest: usize, max: usize, slots: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if rest == 0 {
        visit(cur);
        return;
    }
    if slots == 0 {
        return;
    }
    for k in (1..=max.min(rest)).rev() {
        cur.push(k);
        partitions(rest - k, k, slots - 1, cur, visit);
        cur.pop();
    }
}

/// Restricted-growth enumeration of assignments of contexts to code symbols.
fn set_partitions(p: &[f64], i: usize, used: usize, k: usize, assign: &mut [usize], mass: &mut Vec<f64>, best: &mut f64) {
    if i == p.len() {
        *best = best.max(entropy_of(&mass[..used]));
        return;
    }
    for c in 0..(used + 1).min(k) {
        assign[i] = c;
        mass[c] += p[i];
        set_partitions(p, i + 1, used.max(c + 1), k, assign, mass, best);
        mass[c] -= p[i];
    }
}

/// `H(Ψ|Φ)` of a two-layer code: each context index `i` is split into child
/// labels `(i / m, i % m)` with `m = child_code_size`, and the parent
/// concatenates them.
pub fn pair_code_residual(context: &Dist, child_code_size: usize) -> Result<f64> {
    let n = context.len();
    let m = child_code_size;
    if m * m < n {
        return Err(Error::InvalidArgument(format!("{m}x{m} pair codes cannot cover {n} contexts")));
    }
    let digits = Alphabet::indexed("c", m)?;
    let spec = LayerSpec::new(2, 2, Composition::Concat, 1.0)?;
    let parent_alphabet = spec.parent_alphabet(&digits)?;
    let mut table = vec![0.0; parent_alphabet.size() * n];
    for (i, &w) in context.probs().iter().enumerate() {
        let parent = compose_layer(&[digits.label(i / m), digits.label(i % m)], &spec)?;
        table[parent_alphabet.require(&parent)? * n + i] = w;
    }
    let joint = Joint::new(parent_alphabet, context.alphabet().clone(), table)?;
    Ok(conditional_entropy(&joint, Direction::ColGivenRow))
}
