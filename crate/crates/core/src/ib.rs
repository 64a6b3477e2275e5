//! Discrete information bottleneck.
//!
//! The encoder `q(z|x)` is found by the self-consistent alternation
//! `q(z) ← Σ p(x) q(z|x)`, `q(y|z) ← Σ p(x,y) q(z|x) / q(z)`,
//! `q(z|x) ∝ q(z) exp(−β KL(p(y|x) ‖ q(y|z)))`, which never increases
//! `I(X;Z) − β I(Z;Y)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{argmax, check_same, entropy_of, kl_of, mutual_information, Alphabet, Dist, Joint, Kernel};

pub const DEFAULT_MAX_ITER: usize = 5_000;
pub const DEFAULT_TOL: f64 = 1e-12;
/// Independent starts tried for a seeded initialization.
const SEEDED_STARTS: u64 = 8;
/// Extra weight on the chosen cluster of a near-hard start.
const HARD_START_WEIGHT: f64 = 20.0;
/// Bisection steps between bracketing grid points in [`constrained_ib`].
const REFINE_STEPS: usize = 40;
/// Iteration budget multiplier for sweep points that stall near a bifurcation.
const SWEEP_RETRY_FACTOR: usize = 10;
/// Slack on the relevance floor.
const FLOOR_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum Init {
    Kernel(Kernel),
    Seed(u64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IBSolution {
    /// `q(z | source)`.
    pub encoder: Kernel,
    /// `I(source; Z)`.
    pub compression: f64,
    /// `I(Z; target)`.
    pub relevance: f64,
    pub beta: f64,
    pub iterations: usize,
    /// `I(X;Z) − β I(Z;Y)` after every update.
    pub objective_history: Vec<f64>,
}

impl IBSolution {
    pub fn objective(&self) -> f64 {
        self.compression - self.beta * self.relevance
    }

    /// Most likely cluster per source symbol (lowest index on ties).
    pub fn hard_assignment(&self) -> Vec<usize> {
        self.encoder.rows().iter().map(|r| argmax(r)).collect()
    }
}

/// Geometric grid of `n` points spanning `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| lo * (r * k as f64).exp()).collect()
}

/// The default sweep: 24 points in `[1e-3, 1e3]`.
pub fn default_beta_grid() -> Vec<f64> {
    geometric_grid(1e-3, 1e3, 24)
}

/// `(I(X;Z), I(Z;Y))` for an encoder on the rows of `joint`.
pub fn ib_point(joint: &Joint, encoder: &Kernel) -> Result<(f64, f64)> {
    check_same(joint.row_alphabet(), encoder.from_alphabet(), "IB encoder source")?;
    let px = joint.row_marginal();
    let xz = Joint::from_prior_kernel(&px, encoder)?;
    let (nz, ny) = (encoder.to_size(), joint.col_alphabet().size());
    let mut zy = vec![0.0; nz * ny];
    for x in 0..px.len() {
        for (z, &q) in encoder.row(x).iter().enumerate() {
            for (y, &p) in joint.row(x).iter().enumerate() {
                zy[z * ny + y] += q * p;
            }
        }
    }
    let zy = Joint::new(encoder.to_alphabet().clone(), joint.col_alphabet().clone(), zy)?;
    Ok((mutual_information(&xz), mutual_information(&zy)))
}

struct Problem {
    px: Vec<f64>,
    /// `p(y|x)`, rows with zero mass left as zeros.
    py_x: Vec<Vec<f64>>,
    pxy: Vec<Vec<f64>>,
}

impl Problem {
    fn new(joint: &Joint) -> Self {
        let n = joint.row_alphabet().size();
        let px: Vec<f64> = joint.row_marginal().probs().to_vec();
        let pxy: Vec<Vec<f64>> = (0..n).map(|x| joint.row(x).to_vec()).collect();
        let py_x = pxy
            .iter()
            .zip(&px)
            .map(|(r, &p)| if p > 0.0 { r.iter().map(|v| v / p).collect() } else { vec![0.0; r.len()] })
            .collect();
        Self { px, py_x, pxy }
    }

    /// Marginal and decoder induced by an encoder.
    fn decoder(&self, enc: &[Vec<f64>], nz: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let ny = self.pxy[0].len();
        let mut qz = vec![0.0; nz];
        let mut qyz = vec![vec![0.0; ny]; nz];
        for (x, row) in enc.iter().enumerate() {
            for (z, &q) in row.iter().enumerate() {
                qz[z] += self.px[x] * q;
                for (y, &p) in self.pxy[x].iter().enumerate() {
                    qyz[z][y] += q * p;
                }
            }
        }
        for (z, r) in qyz.iter_mut().enumerate() {
            if qz[z] > 0.0 {
                r.iter_mut().for_each(|v| *v /= qz[z]);
            }
        }
        (qz, qyz)
    }

    fn objective(&self, enc: &[Vec<f64>], beta: f64) -> f64 {
        let (qz, qyz) = self.decoder(enc, enc[0].len());
        let mut ixz = 0.0;
        for (x, row) in enc.iter().enumerate() {
            for (z, &q) in row.iter().enumerate() {
                if q > 0.0 && self.px[x] > 0.0 {
                    ixz += self.px[x] * q * (q / qz[z]).ln();
                }
            }
        }
        let py: Vec<f64> = (0..self.pxy[0].len())
            .map(|y| self.pxy.iter().map(|r| r[y]).sum())
            .collect();
        let hy = entropy_of(&py);
        let hy_z: f64 = qz.iter().zip(&qyz).map(|(&w, r)| w * entropy_of(r)).sum();
        ixz.max(0.0) - beta * (hy - hy_z).max(0.0)
    }

    /// One encoder update computed in the log domain.
    fn step(&self, enc: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
        let nz = enc[0].len();
        let (qz, qyz) = self.decoder(enc, nz);
        self.py_x
            .iter()
            .map(|pyx| {
                let logits: Vec<f64> = (0..nz)
                    .map(|z| {
                        if qz[z] <= 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        match kl_of(pyx, &qyz[z]) {
                            Ok(d) => qz[z].ln() - beta * d,
                            Err(_) => f64::NEG_INFINITY,
                        }
                    })
                    .collect();
                softmax(&logits)
            })
            .collect()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return vec![1.0 / logits.len() as f64; logits.len()];
    }
    let w: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Starts for a seeded run. Even starts perturb uniform; start 0 leans
/// source `x` toward cluster `x mod |Z|` so that every cluster can stay
/// occupied. Odd starts are near-hard partitions (start 1 the same `x mod |Z|`
/// one), which reach informative basins the soft starts miss when the
/// trivial encoder is still locally stable.
fn seeded_encoder(n: usize, nz: usize, seed: u64, start: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(start));
    let hard = start % 2 == 1;
    (0..n)
        .map(|x| {
            let mut r: Vec<f64> = (0..nz).map(|_| 1.0 + 0.5 * rng.gen::<f64>()).collect();
            if start == 0 {
                r[x % nz] += 1.0;
            } else if hard {
                let z = if start == 1 { x % nz } else { rng.gen_range(0..nz) };
                r[z] += HARD_START_WEIGHT;
            }
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

fn iterate(
    problem: &Problem,
    mut enc: Vec<Vec<f64>>,
    beta: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<Vec<f64>>, Vec<f64>, usize, f64) {
    let mut history = vec![problem.objective(&enc, beta)];
    let mut delta = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        enc = problem.step(&enc, beta);
        let obj = problem.objective(&enc, beta);
        delta = (history[history.len() - 1] - obj).abs();
        history.push(obj);
        if delta < tol {
            break;
        }
    }
    (enc, history, it, delta)
}

/// Self-consistent IB fixed point with `|Z| = z_size`.
///
/// Rows of `joint` are the source, columns the target. A seeded start tries
/// several perturbed encoders and keeps the lowest objective.
pub fn ib_fixed_point(
    joint: &Joint,
    z_size: usize,
    beta: f64,
    init: &Init,
    max_iter: usize,
    tol: f64,
) -> Result<IBSolution> {
    if z_size == 0 {
        return Err(Error::InvalidArgument("z_size must be at least 1".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let n = joint.row_alphabet().size();
    let problem = Problem::new(joint);
    let starts: Vec<Vec<Vec<f64>>> = match init {
        Init::Kernel(k) => {
            check_same(joint.row_alphabet(), k.from_alphabet(), "IB initial encoder")?;
            if k.to_size() != z_size {
                return Err(Error::DimensionMismatch {
                    expected: z_size,
                    actual: k.to_size(),
                    context: "IB initial encoder width".into(),
                });
            }
            vec![k.rows().to_vec()]
        }
        Init::Seed(s) => (0..SEEDED_STARTS).map(|k| seeded_encoder(n, z_size, *s, k)).collect(),
    };
    // A stalled start only matters if it is still below every converged one;
    // the objective never increases, so otherwise it cannot win.
    let mut best: Option<(Vec<Vec<f64>>, Vec<f64>, usize)> = None;
    let mut stalled: Option<(usize, f64, f64)> = None;
    for start in starts {
        let (enc, hist, it, delta) = iterate(&problem, start, beta, max_iter, tol);
        let last = hist[hist.len() - 1];
        if delta >= tol {
            if stalled.is_none_or(|(_, _, o)| last < o) {
                stalled = Some((it, delta, last));
            }
            continue;
        }
        let better = best.as_ref().is_none_or(|(_, h, _)| last < h[h.len() - 1] - 1e-12);
        if better {
            best = Some((enc, hist, it));
        }
    }
    if let Some((iterations, residual, obj)) = stalled {
        if best.as_ref().is_none_or(|(_, h, _)| obj < h[h.len() - 1]) {
            return Err(Error::NonConvergence { iterations, residual });
        }
    }
    let (enc, objective_history, iterations) = best.expect("at least one start");
    let encoder = Kernel::new(joint.row_alphabet().clone(), Alphabet::indexed("z", z_size)?, enc)?;
    let (compression, relevance) = ib_point(joint, &encoder)?;
    Ok(IBSolution {
        encoder,
        compression,
        relevance,
        beta,
        iterations,
        objective_history,
    })
}

/// Solutions at every grid point, in grid order.
pub fn beta_sweep(joint: &Joint, z_size: usize, beta_grid: &[f64], seed: u64) -> Result<Vec<IBSolution>> {
    beta_grid.par_iter().map(|&b| seeded_with_retry(joint, z_size, b, seed)).collect()
}

fn seeded_with_retry(joint: &Joint, z_size: usize, beta: f64, seed: u64) -> Result<IBSolution> {
    let init = Init::Seed(seed);
    match ib_fixed_point(joint, z_size, beta, &init, DEFAULT_MAX_ITER, DEFAULT_TOL) {
        // critical slowing down near a cluster bifurcation
        Err(Error::NonConvergence { .. }) => {
            ib_fixed_point(joint, z_size, beta, &init, SWEEP_RETRY_FACTOR * DEFAULT_MAX_ITER, DEFAULT_TOL)
        }
        other => other,
    }
}

/// Least-compression solution with `relevance ≥ floor`.
///
/// The grid is swept first; the answer is then sharpened by bisection in
/// `ln β` between the feasible grid point and its infeasible neighbour.
pub fn constrained_ib(
    joint: &Joint,
    z_size: usize,
    relevance_floor: f64,
    beta_grid: &[f64],
    seed: u64,
) -> Result<IBSolution> {
    let mut grid = beta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let sweep = beta_sweep(joint, z_size, &grid, seed)?;
    let feasible = |s: &IBSolution| s.relevance >= relevance_floor - FLOOR_TOL;
    let mut best: Option<usize> = None;
    for (k, s) in sweep.iter().enumerate() {
        if feasible(s) && best.is_none_or(|b| s.compression < sweep[b].compression) {
            best = Some(k);
        }
    }
    let Some(k) = best else {
        return Err(Error::Infeasible(format!(
            "no beta in the grid reaches relevance {relevance_floor}"
        )));
    };
    let mut chosen = sweep[k].clone();
    if k > 0 && !feasible(&sweep[k - 1]) {
        let (mut lo, mut hi) = (grid[k - 1].ln(), grid[k].ln());
        for _ in 0..REFINE_STEPS {
            let mid = 0.5 * (lo + hi);
            let s = seeded_with_retry(joint, z_size, mid.exp(), seed)?;
            if feasible(&s) {
                hi = mid;
                if s.compression < chosen.compression {
                    chosen = s;
                }
            } else {
                lo = mid;
            }
        }
    }
    Ok(chosen)
}

/// `E_{ψ∼psi_dist}[ E_{q(z|ψ)}[−ln p(ψ|z)] + KL(q(·|ψ) ‖ p(·|φ)) ]`.
pub fn variational_free_energy(
    recognition: &Kernel,
    likelihood: &Kernel,
    prior: &Kernel,
    phi: &str,
    psi_dist: &Dist,
) -> Result<f64> {
    check_same(recognition.from_alphabet(), psi_dist.alphabet(), "recognition source")?;
    check_same(recognition.to_alphabet(), likelihood.from_alphabet(), "recognition vs likelihood latent")?;
    check_same(likelihood.to_alphabet(), psi_dist.alphabet(), "likelihood target")?;
    check_same(prior.to_alphabet(), recognition.to_alphabet(), "prior latent")?;
    let prior_row = prior.row_of(phi)?;
    let mut total = 0.0;
    for (psi, &w) in psi_dist.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let q = recognition.row(psi);
        let mut energy = 0.0;
        for (z, &qz) in q.iter().enumerate() {
            if qz == 0.0 {
                continue;
            }
            let lik = likelihood.row(z)[psi];
            if lik <= 0.0 {
                return Err(Error::ZeroLikelihood {
                    psi: psi_dist.alphabet().label(psi).to_string(),
                    z: recognition.to_alphabet().label(z).to_string(),
                });
            }
            energy -= qz * lik.ln();
        }
        total += w * (energy + kl_of(q, prior_row.probs())?);
    }
    Ok(total)
}
