//! Fixed-point inference engines and their convergence diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{
    argmax, argmin, check_same, dist_variance, entropy_of, kl_of, Alphabet, Dist, Embedding, Kernel,
};
use crate::transport::{ot_divergence, CostMatrix};

/// Consecutive small steps required before declaring convergence.
pub const PERSISTENCE: usize = 10;
pub const STATE_TOL: f64 = 1e-9;
pub const VARIANCE_CUT: f64 = 1e-8;
pub const KL_STEP_CUT: f64 = 1e-10;
/// Oscillation amplitude below which no period is reported.
pub const MIN_AMPLITUDE: f64 = 1e-3;
/// Normalized autocorrelation a lag must reach to count as a period.
pub const PERIOD_CORRELATION: f64 = 0.5;
const MIN_LAG: usize = 2;
const MAX_LAG: usize = 8;
/// Steps inspected when classifying a run that hit `max_t`.
const TAIL: usize = 64;
const BLOWUP: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    /// Probability vector, or coordinates for vector-valued iterations.
    pub state: Vec<f64>,
    pub label: Option<String>,
    pub objective: f64,
    /// NaN when the run has no conditional entropy.
    pub cond_entropy: f64,
    /// KL between successive states, or the step norm for vector runs.
    pub kl_step: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Converged { at: usize },
    Diverged,
    LimitCycle { period: usize },
}

impl Verdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Converged { at } => write!(f, "converged({at})"),
            Verdict::Diverged => write!(f, "diverged"),
            Verdict::LimitCycle { period } => write!(f, "limit_cycle({period})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    /// Labels of the state vector, when it is a distribution.
    pub alphabet: Option<Alphabet>,
    pub steps: Vec<TraceStep>,
    pub verdict: Verdict,
}

impl InferenceTrace {
    pub fn last(&self) -> &TraceStep {
        self.steps.last().expect("traces are never empty")
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dominant period among lags 2..=8 of a vector sequence, if any.
///
/// The autocorrelation at each lag is normalized by the sequence variance; a
/// lag qualifies when it reaches [`PERIOD_CORRELATION`] and the RMS amplitude
/// exceeds [`MIN_AMPLITUDE`]. The best lag is reduced to its smallest
/// qualifying divisor.
pub fn detect_period(states: &[Vec<f64>]) -> Option<usize> {
    let n = states.len();
    if n < 2 * MAX_LAG {
        return None;
    }
    let dim = states[0].len();
    let mut mean = vec![0.0; dim];
    for s in states {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let dev: Vec<Vec<f64>> = states
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let var = dev.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64;
    if var.sqrt() <= MIN_AMPLITUDE {
        return None;
    }
    let corr: Vec<f64> = (MIN_LAG..=MAX_LAG)
        .map(|lag| {
            let c: f64 = (0..n - lag)
                .map(|t| dev[t].iter().zip(&dev[t + lag]).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>()
                / (n - lag) as f64;
            c / var
        })
        .collect();
    let r = |lag: usize| corr[lag - MIN_LAG];
    let best = (MIN_LAG..=MAX_LAG).fold(MIN_LAG, |b, lag| if r(lag) > r(b) + 1e-12 { lag } else { b });
    if r(best) < PERIOD_CORRELATION {
        return None;
    }
    // multiples of the true period correlate as well; report the fundamental
    (MIN_LAG..=best).find(|&lag| best % lag == 0 && r(lag) >= PERIOD_CORRELATION)
}

/// Iterates `v ← update(v)` until the step norm stays below `tol` for
/// [`PERSISTENCE`] steps, or `max_t` updates have been made.
///
/// A run that does not settle is classified from its last steps: a growing
/// norm means `Diverged`, a periodic tail means `LimitCycle`, anything else
/// `Diverged`.
pub fn bootstrap_iterate<F>(mut update: F, v0: Vec<f64>, max_t: usize, tol: f64) -> InferenceTrace
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut steps = vec![TraceStep {
        t: 0,
        objective: norm(&v0),
        state: v0,
        label: None,
        cond_entropy: f64::NAN,
        kl_step: 0.0,
        variance: f64::NAN,
    }];
    let mut quiet = 0;
    for t in 1..=max_t {
        let prev = &steps[steps.len() - 1].state;
        let next = update(prev);
        let step = distance(prev, &next);
        let size = norm(&next);
        steps.push(TraceStep {
            t,
            objective: size,
            state: next,
            label: None,
            cond_entropy: f64::NAN,
            kl_step: step,
            variance: f64::NAN,
        });
        if !size.is_finite() || size > BLOWUP {
            return InferenceTrace { alphabet: None, steps, verdict: Verdict::Diverged };
        }
        quiet = if step < tol { quiet + 1 } else { 0 };
        if quiet >= PERSISTENCE {
            let at = t + 1 - PERSISTENCE;
            return InferenceTrace { alphabet: None, steps, verdict: Verdict::Converged { at } };
        }
    }
    let verdict = classify_tail(&steps);
    InferenceTrace { alphabet: None, steps, verdict }
}

fn classify_tail(steps: &[TraceStep]) -> Verdict {
    let tail = &steps[steps.len().saturating_sub(TAIL)..];
    let first = tail[0].objective;
    let last = tail[tail.len() - 1].objective;
    if last > 1.5 * first.max(1e-300) && last > MIN_AMPLITUDE {
        return Verdict::Diverged;
    }
    let states: Vec<Vec<f64>> = tail.iter().map(|s| s.state.clone()).collect();
    match detect_period(&states) {
        Some(period) => Verdict::LimitCycle { period },
        None => Verdict::Diverged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub gamma_hat: f64,
    pub sample_pairs: usize,
    /// Sampled pairs discarded because both points coincided.
    pub degenerate_pairs: usize,
}

/// Largest observed `‖F(x₁) − F(x₂)‖ / ‖x₁ − x₂‖` over `n_pairs` sampled pairs.
pub fn contraction_estimate<F, S>(update: F, mut sampler: S, n_pairs: usize, seed: u64) -> Result<ContractionEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    if n_pairs < 100 {
        return Err(Error::InvalidArgument(format!(
            "contraction estimate needs at least 100 pairs, got {n_pairs}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma_hat: f64 = 0.0;
    let mut degenerate_pairs = 0;
    for _ in 0..n_pairs {
        let a = sampler(&mut rng);
        let b = sampler(&mut rng);
        let d = distance(&a, &b);
        if d == 0.0 {
            degenerate_pairs += 1;
            continue;
        }
        gamma_hat = gamma_hat.max(distance(&update(&a), &update(&b)) / d);
    }
    Ok(ContractionEstimate {
        gamma_hat,
        sample_pairs: n_pairs - degenerate_pairs,
        degenerate_pairs,
    })
}

fn log_normalize(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - m).exp() }).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Exact minimizer of `Σ_s Ψ'(s) h(s) + λ KL(Ψ' ‖ Ψ)` over the simplex:
/// `Ψ'(s) ∝ Ψ(s) exp(−h(s)/λ)`.
pub fn temporal_update(psi: &Dist, per_structure_entropy: &[f64], lambda: f64) -> Result<Dist> {
    if per_structure_entropy.len() != psi.len() {
        return Err(Error::DimensionMismatch {
            expected: psi.len(),
            actual: per_structure_entropy.len(),
            context: "per-structure entropies".into(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if per_structure_entropy.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidArgument("per-structure entropies must be finite".into()));
    }
    let logits: Vec<f64> = psi
        .probs()
        .iter()
        .zip(per_structure_entropy)
        .map(|(&p, &h)| if p > 0.0 { p.ln() - h / lambda } else { f64::NEG_INFINITY })
        .collect();
    Dist::new(psi.alphabet().clone(), log_normalize(&logits))
}

/// The proximal objective minimized by [`temporal_update`].
pub fn temporal_objective(candidate: &Dist, previous: &Dist, per_structure_entropy: &[f64], lambda: f64) -> Result<f64> {
    let linear: f64 = candidate.probs().iter().zip(per_structure_entropy).map(|(p, h)| p * h).sum();
    Ok(linear + lambda * kl_of(candidate.probs(), previous.probs())?)
}

/// Repeated [`temporal_update`] from `psi0`; stops early once the delta
/// criteria of [`delta_diagnostics`] hold.
pub fn run_temporal(
    psi0: &Dist,
    per_structure_entropy: &[f64],
    lambda: f64,
    max_t: usize,
    embedding: &Embedding,
) -> Result<InferenceTrace> {
    let expected = |d: &Dist| d.probs().iter().zip(per_structure_entropy).map(|(p, h)| p * h).sum::<f64>();
    let mut cur = psi0.clone();
    let mut steps = vec![TraceStep {
        t: 0,
        state: cur.probs().to_vec(),
        label: Some(cur.alphabet().label(cur.argmax()).to_string()),
        objective: expected(&cur),
        cond_entropy: expected(&cur),
        kl_step: 0.0,
        variance: dist_variance(&cur, embedding)?,
    }];
    let mut quiet = 0;
    let mut verdict = None;
    for t in 1..=max_t {
        let next = temporal_update(&cur, per_structure_entropy, lambda)?;
        let kl_step = kl_of(next.probs(), cur.probs())?;
        let variance = dist_variance(&next, embedding)?;
        steps.push(TraceStep {
            t,
            state: next.probs().to_vec(),
            label: Some(next.alphabet().label(next.argmax()).to_string()),
            objective: expected(&next),
            cond_entropy: expected(&next),
            kl_step,
            variance,
        });
        cur = next;
        quiet = if variance < VARIANCE_CUT && kl_step < KL_STEP_CUT { quiet + 1 } else { 0 };
        if quiet >= PERSISTENCE {
            verdict = Some(Verdict::Converged { at: t + 1 - PERSISTENCE });
            break;
        }
    }
    let verdict = verdict.unwrap_or_else(|| {
        let states: Vec<Vec<f64>> = steps[steps.len().saturating_sub(TAIL)..].iter().map(|s| s.state.clone()).collect();
        detect_period(&states).map_or(Verdict::Diverged, |period| Verdict::LimitCycle { period })
    });
    Ok(InferenceTrace {
        alphabet: Some(psi0.alphabet().clone()),
        steps,
        verdict,
    })
}

/// Proximal term of the inverted update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    KlProx,
    OtProx { cost: CostMatrix, reg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateSpec {
    pub candidates: Alphabet,
    pub lambda: f64,
    pub regularizer: Regularizer,
}

impl UpdateSpec {
    pub fn new(candidates: Alphabet, lambda: f64, regularizer: Regularizer) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(Self { candidates, lambda, regularizer })
    }
}

/// `H(Ψ|φ) + λ D(p(Ψ|φ), p(Ψ|φ_t))` for every candidate φ. The proximal term
/// of the current candidate is zero; a KL term violating absolute continuity
/// makes its candidate unreachable (`+∞`).
pub fn inverted_objectives(current: usize, psi_kernel: &Kernel, spec: &UpdateSpec) -> Result<Vec<f64>> {
    check_same(&spec.candidates, psi_kernel.from_alphabet(), "candidates vs context kernel")?;
    let base = psi_kernel.row_dist(current);
    let entropies = psi_kernel.row_entropies();
    (0..psi_kernel.from_size())
        .map(|phi| {
            let h = entropies[phi];
            if phi == current || spec.lambda == 0.0 {
                return Ok(h);
            }
            let d = match &spec.regularizer {
                Regularizer::KlProx => match kl_of(psi_kernel.row(phi), base.probs()) {
                    Ok(d) => d,
                    Err(Error::AbsoluteContinuityViolation { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                },
                Regularizer::OtProx { cost, reg } => ot_divergence(&psi_kernel.row_dist(phi), &base, cost, *reg)?,
            };
            Ok(h + spec.lambda * d)
        })
        .collect()
}

/// `argmin_φ [H(Ψ|φ) + λ D(p(Ψ|φ), p(Ψ|φ_t))]` by enumeration; ties go to
/// the earliest candidate.
pub fn inverted_update(phi_t: &str, psi_kernel: &Kernel, spec: &UpdateSpec) -> Result<String> {
    let current = spec.candidates.require(phi_t)?;
    let scores = inverted_objectives(current, psi_kernel, spec)?;
    Ok(spec.candidates.label(argmin(&scores)).to_string())
}

fn label_step(t: usize, idx: usize, alphabet: &Alphabet, h: f64, kl: f64) -> TraceStep {
    let mut state = vec![0.0; alphabet.size()];
    state[idx] = 1.0;
    TraceStep {
        t,
        state,
        label: Some(alphabet.label(idx).to_string()),
        objective: h,
        cond_entropy: h,
        kl_step: kl,
        variance: 0.0,
    }
}

/// Iterates a label-valued update until it repeats its input
/// [`PERSISTENCE`] times or `max_t` is reached. The trace objective is
/// `H(Ψ|φ_t)`.
fn run_labels<F>(start: &str, psi_kernel: &Kernel, max_t: usize, mut update: F) -> Result<InferenceTrace>
where
    F: FnMut(&str) -> Result<String>,
{
    let alphabet = psi_kernel.from_alphabet().clone();
    let entropies = psi_kernel.row_entropies();
    let mut idx = alphabet.require(start)?;
    let mut steps = vec![label_step(0, idx, &alphabet, entropies[idx], 0.0)];
    let mut quiet = 0;
    for t in 1..=max_t {
        let next = alphabet.require(&update(alphabet.label(idx))?)?;
        let kl = if next == idx {
            0.0
        } else {
            kl_of(psi_kernel.row(next), psi_kernel.row(idx)).unwrap_or(f64::INFINITY)
        };
        quiet = if next == idx { quiet + 1 } else { 0 };
        idx = next;
        steps.push(label_step(t, idx, &alphabet, entropies[idx], kl));
        if quiet >= PERSISTENCE {
            return Ok(InferenceTrace {
                alphabet: Some(alphabet),
                steps,
                verdict: Verdict::Converged { at: t + 1 - PERSISTENCE },
            });
        }
    }
    let states: Vec<Vec<f64>> = steps[steps.len().saturating_sub(TAIL)..].iter().map(|s| s.state.clone()).collect();
    let verdict = detect_period(&states).map_or(Verdict::Diverged, |period| Verdict::LimitCycle { period });
    Ok(InferenceTrace { alphabet: Some(alphabet), steps, verdict })
}

/// Trajectory of [`inverted_update`] from `start`.
pub fn run_inverted(start: &str, psi_kernel: &Kernel, spec: &UpdateSpec, max_t: usize) -> Result<InferenceTrace> {
    run_labels(start, psi_kernel, max_t, |phi| inverted_update(phi, psi_kernel, spec))
}

/// Kernels of the half cycle `Φ → Z → Ψ̂ → Ẑ → Φ'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfCycle {
    pub z_given_phi: Kernel,
    pub psi_given_z: Kernel,
    pub z_given_psi: Kernel,
    pub phi_given_z: Kernel,
}

impl HalfCycle {
    pub fn new(z_given_phi: Kernel, psi_given_z: Kernel, z_given_psi: Kernel, phi_given_z: Kernel) -> Result<Self> {
        check_same(z_given_phi.to_alphabet(), psi_given_z.from_alphabet(), "generative latent")?;
        check_same(psi_given_z.to_alphabet(), z_given_psi.from_alphabet(), "context alphabet")?;
        check_same(z_given_psi.to_alphabet(), phi_given_z.from_alphabet(), "recognition latent")?;
        check_same(phi_given_z.to_alphabet(), z_given_phi.from_alphabet(), "content alphabet")?;
        Ok(Self { z_given_phi, psi_given_z, z_given_psi, phi_given_z })
    }

    pub fn contents(&self) -> &Alphabet {
        self.z_given_phi.from_alphabet()
    }

    /// Generative context kernel `p(Ψ|Φ)`.
    pub fn context_kernel(&self) -> Result<Kernel> {
        self.z_given_phi.compose(&self.psi_given_z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HalfCycleMode {
    Expected,
    Sampled { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HalfCycleOutcome {
    pub next: String,
    /// Predicted context distribution `p(Ψ̂|φ_t)`.
    pub prediction: Dist,
    /// Distribution over `Φ'` the returned label was taken from.
    pub reconstruction: Dist,
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One sweep `Φ → Z → Ψ̂ → Ẑ → Φ'`.
///
/// `Expected` composes the generative kernels exactly to obtain the
/// predicted context distribution, takes its mode as the point prediction
/// and returns the mode of the recognition composition `q(Φ'|ψ̂)`. `Sampled`
/// draws every stage instead and reports the singleton reconstruction.
pub fn half_cycle_step(phi_t: &str, cycle: &HalfCycle, mode: HalfCycleMode) -> Result<HalfCycleOutcome> {
    let phi = cycle.contents().require(phi_t)?;
    let z_row = cycle.z_given_phi.row_dist(phi);
    let prediction = crate::prob::pushforward(&z_row, &cycle.psi_given_z)?;
    let contents = cycle.contents().clone();
    match mode {
        HalfCycleMode::Expected => {
            let psi_hat = prediction.argmax();
            let zhat = cycle.z_given_psi.row_dist(psi_hat);
            let reconstruction = crate::prob::pushforward(&zhat, &cycle.phi_given_z)?;
            Ok(HalfCycleOutcome {
                next: contents.label(reconstruction.argmax()).to_string(),
                prediction,
                reconstruction,
            })
        }
        HalfCycleMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = sample(&mut rng, z_row.probs());
            let psi = sample(&mut rng, cycle.psi_given_z.row(z));
            let zhat = sample(&mut rng, cycle.z_given_psi.row(psi));
            let next = sample(&mut rng, cycle.phi_given_z.row(zhat));
            Ok(HalfCycleOutcome {
                next: contents.label(next).to_string(),
                prediction,
                reconstruction: Dist::point(contents, next),
            })
        }
    }
}

/// Iterated [`half_cycle_step`]; sampled mode advances the seed each step.
pub fn run_half_cycle(start: &str, cycle: &HalfCycle, mode: HalfCycleMode, max_t: usize) -> Result<InferenceTrace> {
    let ctx = cycle.context_kernel()?;
    let mut step = 0u64;
    run_labels(start, &ctx, max_t, |phi| {
        let m = match mode {
            HalfCycleMode::Expected => mode,
            HalfCycleMode::Sampled { seed } => HalfCycleMode::Sampled { seed: seed.wrapping_add(step) },
        };
        step += 1;
        Ok(half_cycle_step(phi, cycle, m)?.next)
    })
}

/// Contexts made of `D` conditionally independent bits:
/// `p(ψ|φ) = Π_d θ_{φ,d}^{ψ_d} (1 − θ_{φ,d})^{1−ψ_d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizedContext {
    pub contents: Alphabet,
    /// `θ[φ][d] = p(bit d = 1 | φ)`, strictly inside (0, 1).
    pub theta: Vec<Vec<f64>>,
}

impl FactorizedContext {
    pub fn new(contents: Alphabet, theta: Vec<Vec<f64>>) -> Result<Self> {
        if theta.len() != contents.size() {
            return Err(Error::DimensionMismatch {
                expected: contents.size(),
                actual: theta.len(),
                context: "factorized context rows".into(),
            });
        }
        let bits = theta.first().map_or(0, Vec::len);
        for r in &theta {
            if r.len() != bits {
                return Err(Error::DimensionMismatch { expected: bits, actual: r.len(), context: "factorized context bits".into() });
            }
            if let Some((index, &value)) = r.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        Ok(Self { contents, theta })
    }

    pub fn bits(&self) -> usize {
        self.theta[0].len()
    }

    /// `H(Ψ|φ)` as a sum of per-bit entropies.
    pub fn cond_entropy(&self, phi: usize) -> f64 {
        self.theta[phi].iter().map(|&p| entropy_of(&[p, 1.0 - p])).sum()
    }

    fn log_lik(&self, phi: usize, bits: &[bool]) -> f64 {
        self.theta[phi]
            .iter()
            .zip(bits)
            .map(|(&p, &b)| if b { p.ln() } else { (1.0 - p).ln() })
            .sum()
    }

    /// One factorized half cycle: predict each bit's mode, then pick the
    /// content most likely to have produced that prediction (uniform prior).
    pub fn half_cycle_step(&self, phi: usize) -> usize {
        let predicted: Vec<bool> = self.theta[phi].iter().map(|&p| p > 0.5).collect();
        let scores: Vec<f64> = (0..self.contents.size()).map(|c| self.log_lik(c, &predicted)).collect();
        argmax(&scores)
    }

    /// Iterates [`Self::half_cycle_step`] to a fixed point (or `max_t`).
    pub fn run_half_cycle(&self, start: usize, max_t: usize) -> (usize, usize) {
        let mut cur = start;
        for t in 1..=max_t {
            let next = self.half_cycle_step(cur);
            if next == cur {
                return (cur, t);
            }
            cur = next;
        }
        (cur, max_t)
    }

    /// Exhaustive inference over all `2^D` contexts under a uniform content
    /// prior: every posterior `p(φ|ψ)` is formed, giving the exact `H(Ψ|φ)`
    /// per content, `H(Φ|Ψ)` and the entropy argmin.
    pub fn exhaustive(&self) -> Result<ExhaustiveInference> {
        let d = self.bits();
        if d > 24 {
            return Err(Error::InstanceTooLarge(format!("2^{d} contexts")));
        }
        let k = self.contents.size();
        let prior = 1.0 / k as f64;
        let mut cond_entropies = vec![0.0; k];
        let mut posterior_entropy = 0.0;
        let mut bits = vec![false; d];
        let mut lik = vec![0.0; k];
        for code in 0..(1u64 << d) {
            for (b, slot) in bits.iter_mut().enumerate() {
                *slot = code >> b & 1 == 1;
            }
            let mut evidence = 0.0;
            for (phi, l) in lik.iter_mut().enumerate() {
                *l = self.log_lik(phi, &bits).exp();
                evidence += prior * *l;
            }
            for phi in 0..k {
                cond_entropies[phi] -= lik[phi] * lik[phi].ln();
                let post = prior * lik[phi] / evidence;
                if post > 0.0 {
                    posterior_entropy -= evidence * post * post.ln();
                }
            }
        }
        let best = argmin(&cond_entropies);
        Ok(ExhaustiveInference { cond_entropies, posterior_entropy, best })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustiveInference {
    /// `H(Ψ|φ)` for every content.
    pub cond_entropies: Vec<f64>,
    /// `H(Φ|Ψ)` under the uniform content prior.
    pub posterior_entropy: f64,
    pub best: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaDiagnostics {
    pub converged: bool,
    pub final_variance: f64,
    pub entropy_monotone: bool,
    pub period: Option<usize>,
}

/// Delta-convergence summary of a trace. With an embedding and a labelled
/// trace the final variance is recomputed under that embedding.
pub fn delta_diagnostics(trace: &InferenceTrace, embedding: Option<&Embedding>) -> Result<DeltaDiagnostics> {
    let last = trace.last();
    let final_variance = match (embedding, &trace.alphabet) {
        (Some(e), Some(a)) => dist_variance(&Dist::new(a.clone(), last.state.clone())?, e)?,
        _ => last.variance,
    };
    let window = &trace.steps[trace.steps.len().saturating_sub(PERSISTENCE)..];
    let converged = final_variance < VARIANCE_CUT
        && window.iter().all(|s| s.kl_step < KL_STEP_CUT && (s.variance.is_nan() || s.variance < VARIANCE_CUT));
    let entropies: Vec<f64> = trace.steps.iter().map(|s| s.cond_entropy).filter(|h| !h.is_nan()).collect();
    let entropy_monotone = entropies.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let states: Vec<Vec<f64>> = trace.steps[trace.steps.len().saturating_sub(TAIL)..].iter().map(|s| s.state.clone()).collect();
    Ok(DeltaDiagnostics {
        converged,
        final_variance,
        entropy_monotone,
        period: detect_period(&states),
    })
}

/// Cross-entropy `−Σ_ψ c(ψ) ln p(ψ|φ)` of a context under a candidate row.
pub fn context_cross_entropy(context: &[f64], row: &[f64]) -> f64 {
    context
        .iter()
        .zip(row)
        .filter(|(&c, _)| c > 0.0)
        .map(|(&c, &p)| if p > 0.0 { -c * p.ln() } else { f64::INFINITY })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbsResult {
    pub phi_star: String,
    /// Mean cross-entropy of the contexts under each candidate.
    pub scores: Vec<f64>,
    /// Posterior over candidates for each context.
    pub bindings: Vec<Dist>,
}

/// Structure before specificity: choose the candidate minimizing the mean
/// `H(Ψ_i|φ)` over all contexts, then bind each context to a posterior over
/// candidates, `p(φ|Ψ_i) ∝ Σ_ψ Ψ_i(ψ) p(ψ|φ)` under a uniform prior.
pub fn sbs_two_stage(contexts: &[Dist], psi_kernel: &Kernel, candidates: &Alphabet) -> Result<SbsResult> {
    if contexts.is_empty() {
        return Err(Error::InvalidArgument("at least one context is required".into()));
    }
    check_same(candidates, psi_kernel.from_alphabet(), "candidates vs context kernel")?;
    for c in contexts {
        check_same(c.alphabet(), psi_kernel.to_alphabet(), "context alphabet")?;
    }
    let n = contexts.len() as f64;
    let scores: Vec<f64> = (0..candidates.size())
        .map(|phi| contexts.iter().map(|c| context_cross_entropy(c.probs(), psi_kernel.row(phi))).sum::<f64>() / n)
        .collect();
    let phi_star = candidates.label(argmin(&scores)).to_string();
    let bindings = contexts
        .iter()
        .map(|c| {
            let lik: Vec<f64> = (0..candidates.size())
                .map(|phi| c.probs().iter().zip(psi_kernel.row(phi)).map(|(a, b)| a * b).sum())
                .collect();
            let s: f64 = lik.iter().sum();
            if s <= 0.0 {
                return Ok(Dist::uniform(candidates.clone()));
            }
            Dist::new(candidates.clone(), lik.into_iter().map(|v| v / s).collect())
        })
        .collect::<Result<_>>()?;
    Ok(SbsResult { phi_star, scores, bindings })
}

/// Linear map `x ↦ A x` for a row-major square matrix.
pub fn linear_map(matrix: Vec<Vec<f64>>) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x| matrix.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// `radius · R(ω)` in the plane.
pub fn scaled_rotation(radius: f64, omega: f64) -> Vec<Vec<f64>> {
    let (s, c) = omega.sin_cos();
    vec![vec![radius * c, -radius * s], vec![radius * s, radius * c]]
}
