use ccup_core::agents::{
    evaluate, message_joint, population_metrics, run_emergence, run_emergence_seeds, slot_objective, slot_update,
    AgentInit, AgentState, EmergenceConfig, GameParams, GameVerdict, World,
};
use ccup_core::prob::{mutual_information, Alphabet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn world(sizes: &[usize]) -> World {
    World::uniform(sizes.iter().enumerate().map(|(i, &n)| Alphabet::indexed(&format!("f{i}_"), n).unwrap()).collect())
        .unwrap()
}

fn vocab(sizes: &[usize]) -> Vec<Alphabet> {
    sizes.iter().enumerate().map(|(i, &n)| Alphabet::indexed(&format!("z{i}_"), n).unwrap()).collect()
}

/// An agent with random counts and a random code.
fn random_agent(w: &World, sizes: &[usize], v: &[usize], rng: &mut ChaCha8Rng) -> AgentState {
    let mut a = AgentState::fresh(w, vocab(v), 0.1, rng).unwrap();
    for (slot, table) in a.counts.iter_mut().enumerate() {
        for row in table.iter_mut().take(sizes[slot]) {
            for c in row.iter_mut() {
                *c = if rng.gen_bool(0.6) { rng.gen_range(0.0..5.0) } else { 0.0 };
            }
        }
        table[0][0] += 1.0;
    }
    a
}

fn decoder_col(counts: &[Vec<f64>], alpha: f64, z: usize) -> Vec<f64> {
    let col: Vec<f64> = counts.iter().map(|r| r[z] + alpha).collect();
    let s: f64 = col.iter().sum();
    col.iter().map(|c| c / s).collect()
}

/// Full-code objective `Σ_φ [−ln p(φ|c'(φ)) + λ TV(p(·|c'(φ)), p(·|c(φ)))]`.
fn code_cost(counts: &[Vec<f64>], alpha: f64, cur: &[usize], cand: &[usize], lambda: f64) -> f64 {
    cand.iter()
        .enumerate()
        .map(|(phi, &z)| {
            let r = decoder_col(counts, alpha, z);
            let c = decoder_col(counts, alpha, cur[phi]);
            let tv: f64 = r.iter().zip(&c).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            -r[phi].ln() + lambda * tv
        })
        .sum()
}

#[test]
fn slot_update_matches_exhaustive_code_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let n = rng.gen_range(2..=3);
        let v = rng.gen_range(2..=4);
        let w = world(&[n]);
        let mut a = random_agent(&w, &[n], &[v], &mut rng);
        let lambda = [0.0, 0.3, 1.0, 5.0][trial % 4];
        let cur = a.code[0].clone();
        let mut best = (f64::INFINITY, Vec::new());
        for idx in 0..v.pow(n as u32) {
            let cand: Vec<usize> = (0..n).map(|i| idx / v.pow(i as u32) % v).collect();
            let c = code_cost(&a.counts[0], a.alpha, &cur, &cand, lambda);
            if c < best.0 - 1e-12 {
                best = (c, cand);
            }
        }
        let got = slot_update(&mut a, 0, lambda).unwrap().to_vec();
        let got_cost = code_cost(&a.counts[0], a.alpha, &cur, &got, lambda);
        assert!((got_cost - best.0).abs() < 1e-12, "trial {trial}: {got:?} costs {got_cost}, best {:?} {}", best.1, best.0);
    }
}

#[test]
fn slot_update_never_raises_the_slot_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let w = world(&[3, 2]);
        let mut a = random_agent(&w, &[3, 2], &[3, 3], &mut rng);
        let lambda = rng.gen_range(0.0..3.0);
        for slot in 0..2 {
            let before = slot_objective(&a, &w, slot);
            slot_update(&mut a, slot, lambda).unwrap();
            assert!(slot_objective(&a, &w, slot) <= before + 1e-12);
        }
    }
}

#[test]
fn infinite_lambda_freezes_the_code_and_empty_slots_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let w = world(&[3]);
    let mut a = random_agent(&w, &[3], &[3], &mut rng);
    let code = a.code.clone();
    slot_update(&mut a, 0, f64::INFINITY).unwrap();
    assert_eq!(a.code, code);
    let mut empty = AgentState::fresh(&w, vocab(&[3]), 0.1, &mut rng).unwrap();
    assert!(slot_update(&mut empty, 0, 0.5).is_err());
}

#[test]
fn message_mutual_information_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let sizes = [2, 3];
    let v = [3, 2];
    let w = world(&sizes);
    let a = random_agent(&w, &sizes, &v, &mut rng);
    let enc = |slot: usize, phi: usize| {
        let r: Vec<f64> = a.counts[slot][phi].iter().map(|c| c + a.alpha).collect();
        let s: f64 = r.iter().sum();
        r.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    // p(m, z0, z1) = p(m) q0(z0|m0) q1(z1|m1), uniform over the 6 meanings
    let pm = 1.0 / 6.0;
    let mut joint = vec![vec![0.0; v[0] * v[1]]; 6];
    for (m, row) in joint.iter_mut().enumerate() {
        let (m0, m1) = (m / 3, m % 3);
        for z0 in 0..v[0] {
            for z1 in 0..v[1] {
                row[z0 * v[1] + z1] = pm * enc(0, m0)[z0] * enc(1, m1)[z1];
            }
        }
    }
    let pz: Vec<f64> = (0..v[0] * v[1]).map(|c| joint.iter().map(|r| r[c]).sum()).collect();
    let mut mi = 0.0;
    for row in &joint {
        for (c, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pm * pz[c])).ln();
            }
        }
    }
    let got = mutual_information(&message_joint(&a, &w).unwrap());
    assert!((got - mi).abs() < 1e-12, "{got} vs {mi}");
}

#[test]
fn simulated_accuracy_agrees_with_exact_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let sizes = [3, 3];
        let w = world(&sizes);
        let agents: Vec<AgentState> = (0..3).map(|_| random_agent(&w, &sizes, &[3, 3], &mut rng)).collect();
        let exact = population_metrics(&agents, &w, 0.5).unwrap().accuracy;
        let sim = evaluate(&agents, &w, 10_000, &mut rng);
        assert!((exact - sim).abs() <= 0.02, "exact {exact}, simulated {sim}");
    }
}

fn binary_game() -> EmergenceConfig {
    EmergenceConfig {
        factors: vec![vec!["yes".into(), "no".into()]],
        vocab: vec![2],
        n_agents: 2,
        rounds: 2000,
        params: GameParams::default(),
        init: AgentInit::Fresh,
        window: 200,
        threshold: 0.99,
        metrics_every: 100,
    }
}

#[test]
fn binary_game_is_solved_quickly() {
    let seeds: Vec<u64> = (0..50).collect();
    let runs = run_emergence_seeds(&binary_game(), &seeds).unwrap();
    let solved = runs.iter().filter(|r| matches!(r.verdict, GameVerdict::Solved { .. })).count();
    assert!(solved * 100 >= 95 * seeds.len(), "{solved}/50 solved");
}

#[test]
fn solved_games_end_with_peaked_decoders() {
    let cfg = EmergenceConfig { rounds: 5000, ..EmergenceConfig::toy_language() };
    let bound = 1.0 - cfg.params.alpha * 3.0;
    let mut solved = 0;
    for seed in 0..8 {
        let run = run_emergence(&cfg, seed).unwrap();
        if let GameVerdict::Solved { .. } = run.verdict {
            solved += 1;
            assert!(run.final_metrics.deltaness >= bound, "seed {seed}: {}", run.final_metrics.deltaness);
            assert_eq!(run.final_metrics.compositionality, 1.0);
        }
    }
    assert!(solved >= 6, "only {solved}/8 solved");
}

#[test]
fn preloaded_identity_code_is_solved_from_the_start() {
    let cfg = EmergenceConfig { init: AgentInit::Solved { weight: 20.0 }, ..EmergenceConfig::toy_language() };
    let run = run_emergence(&cfg, 3).unwrap();
    assert_eq!(run.verdict, GameVerdict::Solved { round: 0 });
    assert_eq!(run.rounds_played, cfg.window);
    assert!((run.series[0].accuracy - 1.0).abs() < 1e-12);
    for book in &run.codebooks {
        assert_eq!(book[0]["red"], "a");
        assert_eq!(book[1]["triangle"], "c");
    }
}

#[test]
fn runs_replay_exactly() {
    let cfg = EmergenceConfig { rounds: 1500, ..EmergenceConfig::toy_language() };
    assert_eq!(run_emergence(&cfg, 21).unwrap(), run_emergence(&cfg, 21).unwrap());
}
