//! Symbol-emergence signaling game.
//!
//! Each agent keeps, per message slot, a table of counts `n(φ_i, z_i)` that
//! serves both roles: the listener decodes with the smoothed `p(φ_i|z_i)`,
//! and the speaker's code (meaning → symbol) is re-chosen after every round
//! by a proximal argmin against those conditionals.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{argmax, argmin, entropy_of, mutual_information, Alphabet, Dist, Joint, Kernel};
use crate::transport::total_variation;

/// Factored meaning space with a prior over the product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub factors: Vec<Alphabet>,
    /// Prior over meanings, labels joined by `,`.
    pub prior: Dist,
}

impl World {
    pub fn uniform(factors: Vec<Alphabet>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("a world needs at least one factor".into()));
        }
        let labels = product_labels(&factors);
        let prior = Dist::uniform(Alphabet::new(labels)?);
        Ok(Self { factors, prior })
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    /// Factor indices of meaning `m` (row-major over the factors).
    pub fn meaning(&self, mut m: usize) -> Vec<usize> {
        let mut out = vec![0; self.k()];
        for (i, f) in self.factors.iter().enumerate().rev() {
            out[i] = m % f.size();
            m /= f.size();
        }
        out
    }

    pub fn meaning_index(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.factors).fold(0, |acc, (&p, f)| acc * f.size() + p)
    }

    /// Marginal prior of one factor.
    pub fn factor_prior(&self, slot: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.factors[slot].size()];
        for (m, &p) in self.prior.probs().iter().enumerate() {
            out[self.meaning(m)[slot]] += p;
        }
        out
    }
}

fn product_labels(parts: &[Alphabet]) -> Vec<String> {
    parts.iter().fold(vec![String::new()], |acc, a| {
        acc.iter()
            .flat_map(|p| a.labels().iter().map(move |l| if p.is_empty() { l.clone() } else { format!("{p},{l}") }))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub vocab: Vec<Alphabet>,
    /// `counts[slot][meaning][symbol]`.
    pub counts: Vec<Vec<Vec<f64>>>,
    /// `code[slot][meaning]` is the symbol the speaker emits.
    pub code: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl AgentState {
    /// Empty counts and a random code.
    pub fn fresh(world: &World, vocab: Vec<Alphabet>, alpha: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_vocab(world, &vocab)?;
        let code = world
            .factors
            .iter()
            .zip(&vocab)
            .map(|(f, v)| (0..f.size()).map(|_| rng.gen_range(0..v.size())).collect())
            .collect();
        Ok(Self { counts: zero_counts(world, &vocab), vocab, code, alpha })
    }

    /// A given code with `weight` counts on each of its pairs.
    pub fn with_code(world: &World, vocab: Vec<Alphabet>, alpha: f64, code: Vec<Vec<usize>>, weight: f64) -> Result<Self> {
        check_vocab(world, &vocab)?;
        let mut counts = zero_counts(world, &vocab);
        for (slot, c) in code.iter().enumerate() {
            if c.len() != world.factors[slot].size() || c.iter().any(|&z| z >= vocab[slot].size()) {
                return Err(Error::InvalidArgument(format!("code for slot {slot} does not fit its factor/vocabulary")));
            }
            for (phi, &z) in c.iter().enumerate() {
                counts[slot][phi][z] = weight;
            }
        }
        Ok(Self { vocab, counts, code, alpha })
    }

    pub fn slots(&self) -> usize {
        self.counts.len()
    }

    /// Smoothed `p(φ_i | z_i)`; column `z` of the count table normalized.
    pub fn decoder_row(&self, slot: usize, z: usize) -> Vec<f64> {
        let col: Vec<f64> = self.counts[slot].iter().map(|r| r[z] + self.alpha).collect();
        let s: f64 = col.iter().sum();
        col.into_iter().map(|v| v / s).collect()
    }

    /// Smoothed `p(z_i | φ_i)`.
    pub fn encoder_row(&self, slot: usize, phi: usize) -> Vec<f64> {
        let row: Vec<f64> = self.counts[slot][phi].iter().map(|v| v + self.alpha).collect();
        let s: f64 = row.iter().sum();
        row.into_iter().map(|v| v / s).collect()
    }

    pub fn decoder(&self, world: &World, slot: usize) -> Result<Kernel> {
        let rows = (0..self.vocab[slot].size()).map(|z| self.decoder_row(slot, z)).collect();
        Kernel::new(self.vocab[slot].clone(), world.factors[slot].clone(), rows)
    }

    pub fn encoder(&self, world: &World, slot: usize) -> Result<Kernel> {
        let rows = (0..world.factors[slot].size()).map(|phi| self.encoder_row(slot, phi)).collect();
        Kernel::new(world.factors[slot].clone(), self.vocab[slot].clone(), rows)
    }

    /// Posterior-argmax decoding of one slot.
    pub fn decode(&self, slot: usize, z: usize) -> usize {
        argmax(&self.decoder_row(slot, z))
    }

    /// Listener's reconstruction distribution: the product of per-slot
    /// posteriors.
    pub fn reconstruction(&self, world: &World, message: &[usize]) -> Result<Dist> {
        let rows: Vec<Vec<f64>> = message.iter().enumerate().map(|(i, &z)| self.decoder_row(i, z)).collect();
        let probs = (0..world.prior.len())
            .map(|m| world.meaning(m).iter().enumerate().map(|(i, &phi)| rows[i][phi]).product())
            .collect();
        Dist::new(world.prior.alphabet().clone(), probs)
    }

    /// Per slot, the meaning → symbol map.
    pub fn codebook(&self, world: &World) -> Vec<BTreeMap<String, String>> {
        self.code
            .iter()
            .enumerate()
            .map(|(slot, c)| {
                c.iter()
                    .enumerate()
                    .map(|(phi, &z)| (world.factors[slot].label(phi).to_string(), self.vocab[slot].label(z).to_string()))
                    .collect()
            })
            .collect()
    }

    /// The code is injective and every emitted symbol decodes back to its meaning.
    pub fn slot_is_bijective(&self, slot: usize) -> bool {
        let c = &self.code[slot];
        let mut seen = vec![false; self.vocab[slot].size()];
        for (phi, &z) in c.iter().enumerate() {
            if seen[z] || self.decode(slot, z) != phi {
                return false;
            }
            seen[z] = true;
        }
        true
    }

    fn reinforce(&mut self, slot: usize, phi: usize, z: usize, eta: f64, inhibition: f64) {
        let table = &mut self.counts[slot];
        for (m, row) in table.iter_mut().enumerate() {
            for (s, v) in row.iter_mut().enumerate() {
                if (m == phi) != (s == z) {
                    *v *= 1.0 - inhibition;
                }
            }
        }
        table[phi][z] += eta;
    }
}

fn check_vocab(world: &World, vocab: &[Alphabet]) -> Result<()> {
    if vocab.len() != world.k() {
        return Err(Error::DimensionMismatch { expected: world.k(), actual: vocab.len(), context: "slot vocabularies".into() });
    }
    Ok(())
}

fn zero_counts(world: &World, vocab: &[Alphabet]) -> Vec<Vec<Vec<f64>>> {
    world.factors.iter().zip(vocab).map(|(f, v)| vec![vec![0.0; v.size()]; f.size()]).collect()
}

/// Per-meaning scores of candidate symbols:
/// `−ln p(φ|z) + λ TV(p(·|z), p(·|z_t(φ)))`, with no proximal cost for
/// keeping the current symbol.
pub fn slot_scores(agent: &AgentState, slot: usize, lambda: f64) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..agent.vocab[slot].size()).map(|z| agent.decoder_row(slot, z)).collect();
    agent.code[slot]
        .iter()
        .enumerate()
        .map(|(phi, &cur)| {
            rows.iter()
                .enumerate()
                .map(|(z, r)| {
                    let fit = -r[phi].ln();
                    if z == cur {
                        fit
                    } else {
                        fit + lambda * total_variation(r, &rows[cur])
                    }
                })
                .collect()
        })
        .collect()
}

/// `Σ_φ p(φ) [−ln p(φ|c(φ))]`, the slot objective of the current code.
pub fn slot_objective(agent: &AgentState, world: &World, slot: usize) -> f64 {
    world
        .factor_prior(slot)
        .iter()
        .zip(&agent.code[slot])
        .enumerate()
        .map(|(phi, (&w, &z))| -w * agent.decoder_row(slot, z)[phi].ln())
        .sum()
}

/// Re-chooses every meaning's symbol in `slot` as the exact argmin of
/// [`slot_scores`]; ties go to the lowest symbol.
pub fn slot_update(agent: &mut AgentState, slot: usize, lambda: f64) -> Result<&[usize]> {
    let total: f64 = agent.counts[slot].iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::EmptySlot(slot));
    }
    if lambda.is_finite() {
        let scores = slot_scores(agent, slot, lambda);
        agent.code[slot] = scores.iter().map(|s| argmin(s)).collect();
    }
    Ok(&agent.code[slot])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub lambda: f64,
    /// Count added per rewarded round.
    pub eta: f64,
    pub alpha: f64,
    /// Multiplicative decay of entries conflicting with a rewarded pair.
    pub inhibition: f64,
    pub eps_start: f64,
    pub eps_end: f64,
}

impl Default for GameParams {
    fn default() -> Self {
        Self { lambda: 0.5, eta: 1.0, alpha: 0.1, inhibition: 0.1, eps_start: 0.2, eps_end: 0.01 }
    }
}

impl GameParams {
    /// Linear decay from `eps_start` to `eps_end` over the first half of the rounds.
    pub fn epsilon(&self, round: usize, rounds: usize) -> f64 {
        let half = (rounds / 2).max(1) as f64;
        let f = (round as f64 / half).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub speaker: usize,
    pub listener: usize,
    pub meaning: Vec<usize>,
    pub message: Vec<usize>,
    pub reconstruction: Vec<usize>,
    pub reward: bool,
    /// Whether the round would have succeeded without exploration.
    pub greedy_reward: bool,
    pub slot_correct: Vec<bool>,
}

/// One round: a meaning is drawn, encoded slot by slot (each choice explores
/// with probability `epsilon`) and decoded by posterior argmax. On success
/// both parties reinforce the used pairs and re-run [`slot_update`].
#[allow(clippy::too_many_arguments)]
pub fn communication_round(
    agents: &mut [AgentState],
    speaker: usize,
    listener: usize,
    world: &World,
    params: &GameParams,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RoundOutcome> {
    if speaker == listener || speaker >= agents.len() || listener >= agents.len() {
        return Err(Error::InvalidArgument(format!("bad pair ({speaker}, {listener})")));
    }
    let m = sample_index(rng, world.prior.probs());
    let meaning = world.meaning(m);
    let k = world.k();
    let (s, l) = (&agents[speaker], &agents[listener]);
    let greedy_msg: Vec<usize> = (0..k).map(|i| s.code[i][meaning[i]]).collect();
    let message: Vec<usize> = (0..k)
        .map(|i| if rng.gen::<f64>() < epsilon { rng.gen_range(0..s.vocab[i].size()) } else { greedy_msg[i] })
        .collect();
    let reconstruction: Vec<usize> = (0..k)
        .map(|i| {
            if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..world.factors[i].size())
            } else {
                l.decode(i, message[i])
            }
        })
        .collect();
    let greedy_reward = (0..k).all(|i| l.decode(i, greedy_msg[i]) == meaning[i]);
    let slot_correct: Vec<bool> = (0..k).map(|i| reconstruction[i] == meaning[i]).collect();
    let reward = slot_correct.iter().all(|&c| c);
    if reward {
        for who in [speaker, listener] {
            for i in 0..k {
                agents[who].reinforce(i, meaning[i], message[i], params.eta, params.inhibition);
                slot_update(&mut agents[who], i, params.lambda)?;
            }
        }
    }
    Ok(RoundOutcome { speaker, listener, meaning, message, reconstruction, reward, greedy_reward, slot_correct })
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationMetrics {
    /// Expected greedy success over ordered pairs and the meaning prior.
    pub accuracy: f64,
    /// `I(Φ;Z)` of the smoothed encoders, averaged over agents.
    pub mi_nats: f64,
    /// `H(φ_i|z_i)` per slot, averaged over agents.
    pub slot_entropy: Vec<f64>,
    pub deltaness: f64,
    pub compositionality: f64,
    /// Mean over ordered pairs of `I_s(Φ;Z) + λ Σ_i mean_z TV(p_s(φ_i|z), p_l(φ_i|z))`.
    pub objective: f64,
    /// Mean over ordered pairs of `I(Φ; Φ̂_l)`.
    pub relevance: f64,
}

/// Joint of meanings and messages under the agent's smoothed encoders.
pub fn message_joint(agent: &AgentState, world: &World) -> Result<Joint> {
    let msgs = Alphabet::new(product_labels(&agent.vocab))?;
    let sizes: Vec<usize> = agent.vocab.iter().map(Alphabet::size).collect();
    let n_msg = msgs.size();
    let mut table = vec![0.0; world.prior.len() * n_msg];
    for (m, &pm) in world.prior.probs().iter().enumerate() {
        let parts = world.meaning(m);
        for code in 0..n_msg {
            let mut rest = code;
            let mut p = pm;
            for i in (0..sizes.len()).rev() {
                p *= agent.encoder_row(i, parts[i])[rest % sizes[i]];
                rest /= sizes[i];
            }
            table[m * n_msg + code] = p;
        }
    }
    Joint::new(world.prior.alphabet().clone(), msgs, table)
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|s| (0..n).filter(move |&l| l != s).map(move |l| (s, l))).collect()
}

pub fn population_metrics(agents: &[AgentState], world: &World, lambda: f64) -> Result<PopulationMetrics> {
    if agents.len() < 2 {
        return Err(Error::InvalidArgument("metrics need at least one agent pair".into()));
    }
    let k = world.k();
    let ps = pairs(agents.len());
    let mut accuracy = 0.0;
    let mut relevance = 0.0;
    let mut objective = 0.0;
    let mis: Vec<f64> = agents.iter().map(|a| Ok(mutual_information(&message_joint(a, world)?))).collect::<Result<_>>()?;
    for &(s, l) in &ps {
        let (sp, li) = (&agents[s], &agents[l]);
        for (m, &pm) in world.prior.probs().iter().enumerate() {
            let parts = world.meaning(m);
            if (0..k).all(|i| li.decode(i, sp.code[i][parts[i]]) == parts[i]) {
                accuracy += pm;
            }
        }
        // meaning → reconstruction under the speaker's smoothed encoder
        let n = world.prior.len();
        let mut table = vec![0.0; n * n];
        for (m, &pm) in world.prior.probs().iter().enumerate() {
            let parts = world.meaning(m);
            let per_slot: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let mut out = vec![0.0; world.factors[i].size()];
                    for (z, &q) in sp.encoder_row(i, parts[i]).iter().enumerate() {
                        out[li.decode(i, z)] += q;
                    }
                    out
                })
                .collect();
            for r in 0..n {
                let rp = world.meaning(r);
                table[m * n + r] = pm * (0..k).map(|i| per_slot[i][rp[i]]).product::<f64>();
            }
        }
        let j = Joint::new(world.prior.alphabet().clone(), world.prior.alphabet().clone(), table)?;
        relevance += mutual_information(&j);
        let mut ot = 0.0;
        for i in 0..k {
            let v = sp.vocab[i].size();
            ot += (0..v).map(|z| total_variation(&sp.decoder_row(i, z), &li.decoder_row(i, z))).sum::<f64>() / v as f64;
        }
        objective += mis[s] + lambda * ot;
    }
    let np = ps.len() as f64;
    let na = agents.len() as f64;
    let slot_entropy = (0..k)
        .map(|i| {
            let prior = world.factor_prior(i);
            agents
                .iter()
                .map(|a| {
                    let v = a.vocab[i].size();
                    let mut pz = vec![0.0; v];
                    let mut h_joint = Vec::with_capacity(prior.len() * v);
                    for (phi, &w) in prior.iter().enumerate() {
                        for (z, &q) in a.encoder_row(i, phi).iter().enumerate() {
                            pz[z] += w * q;
                            h_joint.push(w * q);
                        }
                    }
                    (entropy_of(&h_joint) - entropy_of(&pz)).max(0.0)
                })
                .sum::<f64>()
                / na
        })
        .collect();
    let deltaness = agents
        .iter()
        .flat_map(|a| {
            (0..k).map(move |i| {
                (0..a.vocab[i].size())
                    .map(|z| a.decoder_row(i, z).into_iter().fold(0.0, f64::max))
                    .fold(0.0, f64::max)
            })
        })
        .fold(f64::INFINITY, f64::min);
    let bijective = agents.iter().flat_map(|a| (0..k).map(move |i| a.slot_is_bijective(i))).filter(|&b| b).count();
    Ok(PopulationMetrics {
        accuracy: accuracy / np,
        mi_nats: mis.iter().sum::<f64>() / na,
        slot_entropy,
        deltaness,
        compositionality: bijective as f64 / (na * k as f64),
        objective: objective / np,
        relevance: relevance / np,
    })
}

/// Greedy success rate over `rounds` simulated rounds without learning.
pub fn evaluate(agents: &[AgentState], world: &World, rounds: usize, rng: &mut ChaCha8Rng) -> f64 {
    let ps = pairs(agents.len());
    let mut ok = 0;
    for _ in 0..rounds {
        let &(s, l) = ps.choose(rng).expect("at least one pair");
        let parts = world.meaning(sample_index(rng, world.prior.probs()));
        if (0..world.k()).all(|i| agents[l].decode(i, agents[s].code[i][parts[i]]) == parts[i]) {
            ok += 1;
        }
    }
    ok as f64 / rounds as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentInit {
    Fresh,
    /// Every agent starts with the identity code, preloaded with `weight` counts.
    Solved { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergenceConfig {
    pub factors: Vec<Vec<String>>,
    pub vocab: Vec<usize>,
    pub n_agents: usize,
    pub rounds: usize,
    pub params: GameParams,
    pub init: AgentInit,
    pub window: usize,
    pub threshold: f64,
    pub metrics_every: usize,
}

impl EmergenceConfig {
    /// The 3 colors × 3 shapes world with 3 symbols per slot.
    pub fn toy_language() -> Self {
        Self {
            factors: vec![
                vec!["red".into(), "blue".into(), "green".into()],
                vec!["circle".into(), "square".into(), "triangle".into()],
            ],
            vocab: vec![3, 3],
            n_agents: 2,
            rounds: 20_000,
            params: GameParams::default(),
            init: AgentInit::Fresh,
            window: 500,
            threshold: 0.99,
            metrics_every: 100,
        }
    }

    pub fn world(&self) -> Result<World> {
        World::uniform(self.factors.iter().map(|f| Alphabet::new(f.clone())).collect::<Result<_>>()?)
    }

    fn vocab_alphabets(&self) -> Result<Vec<Alphabet>> {
        self.vocab
            .iter()
            .enumerate()
            .map(|(i, &n)| Alphabet::new((0..n).map(|z| symbol_label(i, z))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::InvalidArgument("n_agents must be at least 2".into()));
        }
        if self.vocab.len() != self.factors.len() {
            return Err(Error::DimensionMismatch { expected: self.factors.len(), actual: self.vocab.len(), context: "vocab sizes per slot".into() });
        }
        if self.window == 0 || self.metrics_every == 0 {
            return Err(Error::InvalidArgument("window and metrics_every must be positive".into()));
        }
        if let AgentInit::Solved { .. } = self.init {
            if self.vocab.iter().zip(&self.factors).any(|(&v, f)| v < f.len()) {
                return Err(Error::InvalidArgument("solved initialization needs vocab >= factor size".into()));
            }
        }
        self.world()?;
        self.vocab_alphabets()?;
        Ok(())
    }
}

/// Symbols are letters per slot: `a`, `b`, … (with the slot index appended
/// beyond 26).
fn symbol_label(_slot: usize, z: usize) -> String {
    let letters = b"abcdefghijklmnopqrstuvwxyz";
    if z < letters.len() {
        (letters[z] as char).to_string()
    } else {
        format!("s{z}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub accuracy: f64,
    pub mi_nats: f64,
    pub deltaness: f64,
    pub compositionality: f64,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GameVerdict {
    /// First round of the first window that met the threshold.
    Solved { round: usize },
    Unsolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergenceRun {
    pub seed: u64,
    pub series: Vec<MetricsRow>,
    pub verdict: GameVerdict,
    pub rounds_played: usize,
    /// `codebooks[agent][slot]`: meaning label → symbol.
    pub codebooks: Vec<Vec<BTreeMap<String, String>>>,
    pub final_metrics: PopulationMetrics,
    pub agents: Vec<AgentState>,
}

fn row(round: usize, m: &PopulationMetrics) -> MetricsRow {
    MetricsRow {
        round,
        accuracy: m.accuracy,
        mi_nats: m.mi_nats,
        deltaness: m.deltaness,
        compositionality: m.compositionality,
        objective: m.objective,
    }
}

/// Plays one seeded game. The run is solved once greedy success over the
/// last `window` rounds reaches `threshold` with every slot bijective; play
/// stops there.
pub fn run_emergence(cfg: &EmergenceConfig, seed: u64) -> Result<EmergenceRun> {
    cfg.validate()?;
    let world = cfg.world()?;
    let vocab = cfg.vocab_alphabets()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = (0..cfg.n_agents)
        .map(|_| match cfg.init {
            AgentInit::Fresh => AgentState::fresh(&world, vocab.clone(), cfg.params.alpha, &mut rng),
            AgentInit::Solved { weight } => {
                let code = world.factors.iter().map(|f| (0..f.size()).collect()).collect();
                AgentState::with_code(&world, vocab.clone(), cfg.params.alpha, code, weight)
            }
        })
        .collect::<Result<_>>()?;
    let ps = pairs(cfg.n_agents);
    let mut series = vec![row(0, &population_metrics(&agents, &world, cfg.params.lambda)?)];
    let mut window = std::collections::VecDeque::with_capacity(cfg.window);
    let mut hits = 0usize;
    let mut verdict = GameVerdict::Unsolved;
    let mut played = 0;
    for round in 0..cfg.rounds {
        let (s, l) = *ps.choose(&mut rng).expect("pairs");
        let eps = cfg.params.epsilon(round, cfg.rounds);
        let out = communication_round(&mut agents, s, l, &world, &cfg.params, eps, &mut rng)?;
        played = round + 1;
        window.push_back(out.greedy_reward);
        hits += usize::from(out.greedy_reward);
        if window.len() > cfg.window {
            hits -= usize::from(window.pop_front().unwrap_or(false));
        }
        if played % cfg.metrics_every == 0 {
            series.push(row(played, &population_metrics(&agents, &world, cfg.params.lambda)?));
        }
        if window.len() == cfg.window
            && hits as f64 >= cfg.threshold * cfg.window as f64
            && agents.iter().all(|a| (0..world.k()).all(|i| a.slot_is_bijective(i)))
        {
            verdict = GameVerdict::Solved { round: played - cfg.window };
            break;
        }
    }
    let final_metrics = population_metrics(&agents, &world, cfg.params.lambda)?;
    if series.last().map(|r| r.round) != Some(played) {
        series.push(row(played, &final_metrics));
    }
    Ok(EmergenceRun {
        seed,
        series,
        verdict,
        rounds_played: played,
        codebooks: agents.iter().map(|a| a.codebook(&world)).collect(),
        final_metrics,
        agents,
    })
}

/// Independent games for every seed, returned in seed order.
pub fn run_emergence_seeds(cfg: &EmergenceConfig, seeds: &[u64]) -> Result<Vec<EmergenceRun>> {
    seeds.par_iter().map(|&s| run_emergence(cfg, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (World, Vec<Alphabet>) {
        let cfg = EmergenceConfig::toy_language();
        (cfg.world().unwrap(), cfg.vocab_alphabets().unwrap())
    }

    #[test]
    fn solved_population_stays_solved() {
        let (w, v) = toy();
        let code = vec![vec![2, 0, 1], vec![1, 2, 0]];
        let mut agents = vec![
            AgentState::with_code(&w, v.clone(), 0.1, code.clone(), 10.0).unwrap(),
            AgentState::with_code(&w, v, 0.1, code.clone(), 10.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = GameParams::default();
        for r in 0..200 {
            let out = communication_round(&mut agents, r % 2, 1 - r % 2, &w, &p, 0.0, &mut rng).unwrap();
            assert!(out.reward && out.greedy_reward);
        }
        assert_eq!(agents[0].code, code);
        let m = population_metrics(&agents, &w, 0.5).unwrap();
        assert!((m.accuracy - 1.0).abs() < 1e-12);
        assert_eq!(m.compositionality, 1.0);
    }

    #[test]
    fn degenerate_world_is_trivially_solved() {
        let w = World::uniform(vec![Alphabet::new(["only"]).unwrap()]).unwrap();
        let v = vec![Alphabet::new(["a", "b"]).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agents = vec![
            AgentState::fresh(&w, v.clone(), 0.1, &mut rng).unwrap(),
            AgentState::fresh(&w, v, 0.1, &mut rng).unwrap(),
        ];
        let out = communication_round(&mut agents, 0, 1, &w, &GameParams::default(), 0.0, &mut rng).unwrap();
        assert!(out.reward);
    }

    #[test]
    fn slot_update_limits() {
        let (w, v) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = AgentState::fresh(&w, v.clone(), 0.1, &mut rng).unwrap();
        assert!(matches!(slot_update(&mut a, 0, 0.5), Err(Error::EmptySlot(0))));
        let perm = AgentState::with_code(&w, v, 0.1, vec![vec![1, 2, 0], vec![0, 1, 2]], 5.0).unwrap();
        let mut b = perm.clone();
        slot_update(&mut b, 0, 0.5).unwrap();
        assert_eq!(b.code, perm.code);
        a.counts[0][0][2] = 4.0;
        let before = a.code.clone();
        slot_update(&mut a, 0, f64::INFINITY).unwrap();
        assert_eq!(a.code, before);
    }

    #[test]
    fn reconstruction_factorizes() {
        let (w, v) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = AgentState::fresh(&w, v, 0.1, &mut rng).unwrap();
        for slot in 0..2 {
            for phi in 0..3 {
                for z in 0..3 {
                    a.counts[slot][phi][z] = rng.gen_range(0.0..3.0);
                }
            }
        }
        let msg = [1, 2];
        let r = a.reconstruction(&w, &msg).unwrap();
        let best = w.meaning(r.argmax());
        assert_eq!(best, vec![a.decode(0, 1), a.decode(1, 2)]);
    }

    #[test]
    fn untrained_accuracy_is_chance() {
        let (w, v) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agents: Vec<_> = (0..2).map(|_| AgentState::fresh(&w, v.clone(), 0.1, &mut rng).unwrap()).collect();
        let m = population_metrics(&agents, &w, 0.5).unwrap();
        assert!((m.accuracy - 1.0 / 9.0).abs() < 0.05);
        assert!((evaluate(&agents, &w, 2000, &mut rng) - 1.0 / 9.0).abs() < 0.05);
    }
}
