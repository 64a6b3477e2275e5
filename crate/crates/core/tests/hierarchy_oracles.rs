use ccup_core::dynamics::Regularizer;
use ccup_core::hierarchy::{
    bit_flip_kernel, comonotone_pair_kernel, flat_code_residual, hierarchical_run, layer_entropy_check,
    pair_code_residual, redundant_bit_tower, spatiotemporal_loss, LossSlice,
};
use ccup_core::prob::{Alphabet, Dist, Joint, Kernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ab(p: &str, n: usize) -> Alphabet {
    Alphabet::indexed(p, n).unwrap()
}

fn h(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[test]
fn comonotone_pairs_have_flip_marginals_and_shared_flips() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..50 {
        let noise = [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)];
        let pair = comonotone_pair_kernel(noise).unwrap();
        let single = bit_flip_kernel(noise).unwrap();
        for code in 0..4 {
            let phi = [code >> 1, code & 1];
            let row = pair.row(code);
            // first child flips when its bit differs
            let first: f64 = (0..4).filter(|&c| c >> 1 != phi[0]).map(|c| row[c]).sum();
            let second: f64 = (0..4).filter(|&c| c & 1 != phi[1]).map(|c| row[c]).sum();
            assert!((first - single.row(phi[0])[1 - phi[0]]).abs() < 1e-12);
            assert!((second - single.row(phi[1])[1 - phi[1]]).abs() < 1e-12);
            let both = row[(1 - phi[0]) * 2 + (1 - phi[1])];
            assert!((both - noise[phi[0]].min(noise[phi[1]])).abs() < 1e-12);
        }
    }
}

#[test]
fn parent_entropy_is_strictly_below_children_only_with_shared_noise() {
    let bits = Alphabet::new(["0", "1"]).unwrap();
    let noise = [0.1, 0.3];
    let child = Joint::from_prior_kernel(&Dist::uniform(bits.clone()), &bit_flip_kernel(noise).unwrap()).unwrap();
    let pairs = Alphabet::new(["00", "01", "10", "11"]).unwrap();
    let shared = Joint::from_prior_kernel(&Dist::uniform(pairs.clone()), &comonotone_pair_kernel(noise).unwrap()).unwrap();
    assert!(layer_entropy_check(&shared, &[child.clone(), child.clone()]).satisfied);

    // independent flips: the product kernel, built here from the child rows
    let single = bit_flip_kernel(noise).unwrap();
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|code| {
            let (a, b) = (single.row(code >> 1), single.row(code & 1));
            (0..4).map(|c| a[c >> 1] * b[c & 1]).collect()
        })
        .collect();
    let indep = Kernel::new(pairs.clone(), pairs.clone(), rows).unwrap();
    let j = Joint::from_prior_kernel(&Dist::uniform(pairs), &indep).unwrap();
    let check = layer_entropy_check(&j, &[child.clone(), child]);
    assert!((check.parent - check.child_sum).abs() < 1e-12);
    assert!(!check.satisfied);
}

#[test]
fn tower_settles_on_the_quiet_bits() {
    let tower = redundant_bit_tower([0.05, 0.3], 0.1, Regularizer::KlProx).unwrap();
    for start in [["0", "0"], ["0", "1"], ["1", "0"], ["1", "1"]] {
        let starts: Vec<String> = start.iter().map(|s| s.to_string()).collect();
        let run = hierarchical_run(&tower, &starts, 50).unwrap();
        assert!(run.converged());
        assert_eq!(run.fixed_points, vec![vec!["0".to_string(), "0".to_string()], vec!["00".to_string()]]);
        assert!(run.all_checks_satisfied());
        assert!(run.monotone.iter().all(|&m| m));
        assert_eq!(run, hierarchical_run(&tower, &starts, 50).unwrap());
    }
    assert!(hierarchical_run(&tower, &["0".to_string()], 10).is_err());
}

/// Least residual entropy over every map from contexts onto `k` symbols.
fn brute_flat_residual(p: &[f64], k: usize) -> f64 {
    let n = p.len();
    let mut best = f64::INFINITY;
    for code in 0..k.pow(n as u32) {
        let mut mass = vec![0.0; k];
        for (i, &w) in p.iter().enumerate() {
            mass[code / k.pow(i as u32) % k] += w;
        }
        best = best.min(h(p) - h(&mass));
    }
    best
}

#[test]
fn flat_residual_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..30 {
        let n = rng.gen_range(2..=7);
        let k = rng.gen_range(1..=4);
        let p = simplex(&mut rng, n);
        let got = flat_code_residual(&Dist::new(ab("psi", n), p.clone()).unwrap(), k).unwrap();
        assert!((got - brute_flat_residual(&p, k)).abs() < 1e-12);
    }
    for (n, k) in [(9, 3), (7, 4), (8, 3)] {
        let p = vec![1.0 / n as f64; n];
        let got = flat_code_residual(&Dist::uniform(ab("psi", n)), k).unwrap();
        assert!((got - brute_flat_residual(&p, k)).abs() < 1e-12, "n={n} k={k}");
    }
}

#[test]
fn pair_codes_resolve_what_flat_codes_cannot() {
    let ctx = Dist::uniform(ab("psi", 9));
    assert!(pair_code_residual(&ctx, 3).unwrap().abs() < 1e-12);
    assert!((flat_code_residual(&ctx, 3).unwrap() - 3f64.ln()).abs() < 1e-12);
    assert!(pair_code_residual(&ctx, 2).is_err());
}

#[test]
fn loss_adds_entropy_and_weighted_divergences() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let (psi, z) = (ab("psi", 3), ab("z", 2));
    let slices: Vec<LossSlice> = (0..4)
        .map(|t| LossSlice {
            t,
            level: 1 + t % 2,
            context: Dist::new(psi.clone(), simplex(&mut rng, 3)).unwrap(),
            temporal_recognition: Kernel::new(psi.clone(), z.clone(), (0..3).map(|_| simplex(&mut rng, 2)).collect()).unwrap(),
            temporal_prior: Dist::new(z.clone(), simplex(&mut rng, 2)).unwrap(),
            spatial_recognition: Dist::new(z.clone(), simplex(&mut rng, 2)).unwrap(),
            spatial_prior: Dist::new(z.clone(), simplex(&mut rng, 2)).unwrap(),
        })
        .collect();
    let kl = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
    let (lt, ls) = (0.7, 1.3);
    let want: f64 = slices
        .iter()
        .map(|s| {
            let temporal: f64 = s
                .context
                .probs()
                .iter()
                .enumerate()
                .map(|(i, w)| w * kl(s.temporal_recognition.row(i), s.temporal_prior.probs()))
                .sum();
            h(s.context.probs()) + lt * temporal + ls * kl(s.spatial_recognition.probs(), s.spatial_prior.probs())
        })
        .sum();
    let got = spatiotemporal_loss(&slices, lt, ls).unwrap();
    assert!((got.total - want).abs() < 1e-12);
    assert!((got.recompute(lt, ls) - got.total).abs() < 1e-15);
    assert_eq!(got.terms.len(), 4);
}
