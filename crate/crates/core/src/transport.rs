//! Entropic optimal transport between finite distributions.
//!
//! [`sinkhorn`] runs stabilized (log-domain) Sinkhorn scaling on the dual
//! potentials, so regularization strengths of 0.01 against unit costs stay
//! finite. [`exact_ot`] solves the unregularized problem as a min-cost flow
//! with successive shortest paths on integer-scaled masses and serves as the
//! reference for every entropic cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Alphabet, Dist, Embedding};

pub const DEFAULT_REG: f64 = 0.05;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const NEWTON_MAX_ITER: usize = 50;
/// Final-stage iterations between stall checks.
const STALL_WINDOW: usize = 200;
/// Marginal error below which a stalled solve is accepted and rounded onto the marginals.
const STALL_FLOOR: f64 = 1e-6;

/// Largest side accepted by [`exact_ot`].
pub const EXACT_MAX_SIDE: usize = 32;

/// Ground cost `c(row, col)`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    rows: Alphabet,
    cols: Alphabet,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: Alphabet, cols: Alphabet, costs: Vec<f64>) -> Result<Self> {
        let expected = rows.size() * cols.size();
        if costs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: costs.len(),
                context: "cost matrix".into(),
            });
        }
        for (index, &value) in costs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cost entry {index} is {value}; costs must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { rows, cols, costs })
    }

    pub fn from_rows(rows: Alphabet, cols: Alphabet, data: Vec<Vec<f64>>) -> Result<Self> {
        if data.len() != rows.size() || data.iter().any(|r| r.len() != cols.size()) {
            return Err(Error::DimensionMismatch {
                expected: rows.size() * cols.size(),
                actual: data.iter().map(Vec::len).sum(),
                context: "cost matrix rows".into(),
            });
        }
        Self::new(rows, cols, data.into_iter().flatten().collect())
    }

    /// 1 off the diagonal, 0 on it.
    pub fn zero_one(alphabet: &Alphabet) -> Self {
        let n = alphabet.size();
        let costs = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
            .collect();
        Self {
            rows: alphabet.clone(),
            cols: alphabet.clone(),
            costs,
        }
    }

    /// L1 distance between embedded coordinates.
    pub fn grid_l1(alphabet: &Alphabet, embedding: &Embedding) -> Result<Self> {
        let pts: Vec<&[f64]> = alphabet
            .labels()
            .iter()
            .map(|l| {
                embedding
                    .get(l)
                    .ok_or_else(|| Error::MissingEmbedding(l.clone()))
            })
            .collect::<Result<_>>()?;
        let costs = pts
            .iter()
            .flat_map(|a| {
                pts.iter()
                    .map(move |b| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum())
            })
            .collect();
        Self::new(alphabet.clone(), alphabet.clone(), costs)
    }

    pub fn row_alphabet(&self) -> &Alphabet {
        &self.rows
    }

    pub fn col_alphabet(&self) -> &Alphabet {
        &self.cols
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols.size() + j]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.rows.size();
        n == self.cols.size()
            && (0..n).all(|i| (0..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn check(&self, mu: &Dist, nu: &Dist) -> Result<()> {
        if mu.alphabet() != &self.rows || nu.alphabet() != &self.cols {
            return Err(Error::AlphabetMismatch(
                "transport marginals do not match the cost matrix".into(),
            ));
        }
        Ok(())
    }
}

/// Coupling returned by [`sinkhorn`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling.
    pub plan: Vec<f64>,
    /// `Σ plan ∘ c`.
    pub cost: f64,
    pub reg_strength: f64,
    pub iterations_used: usize,
    /// Final ℓ1 marginal error.
    pub residual: f64,
    /// ℓ1 row-marginal error after each full iteration.
    pub residual_history: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.plan.chunks(self.cols) {
            for (a, v) in s.iter_mut().zip(r) {
                *a += v;
            }
        }
        s
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One row/column scaling pass at strength `eps`; returns the ℓ1 row error.
fn sinkhorn_sweep(
    f: &mut [f64],
    g: &mut [f64],
    cost: &[Vec<f64>],
    log_a: &[f64],
    log_b: &[f64],
    eps: f64,
) -> f64 {
    for (a, fi) in f.iter_mut().enumerate() {
        *fi = eps * log_a[a] - eps * log_sum_exp(g.iter().zip(&cost[a]).map(|(gj, c)| (gj - c) / eps));
    }
    for (b, gj) in g.iter_mut().enumerate() {
        *gj = eps * log_b[b] - eps * log_sum_exp(f.iter().zip(cost).map(|(fi, ci)| (fi - ci[b]) / eps));
    }
    f.iter()
        .zip(cost)
        .zip(log_a)
        .map(|((fi, ci), la)| {
            let row: f64 = g.iter().zip(ci).map(|(gj, c)| ((fi + gj - c) / eps).exp()).sum();
            (row - la.exp()).abs()
        })
        .sum()
}

fn marginal_gap(f: &[f64], g: &[f64], cost: &[Vec<f64>], a: &[f64], b: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let plan: Vec<Vec<f64>> = f
        .iter()
        .zip(cost)
        .map(|(fi, ci)| g.iter().zip(ci).map(|(gj, c)| ((fi + gj - c) / eps).exp()).collect())
        .collect();
    let dr = plan.iter().zip(a).map(|(r, a)| a - r.iter().sum::<f64>()).collect();
    let dc = (0..g.len())
        .map(|j| b[j] - plan.iter().map(|r| r[j]).sum::<f64>())
        .collect();
    (dr, dc, plan)
}

/// Newton iterations on the dual with the last column potential pinned.
/// Sinkhorn mixes slowly when the Gibbs kernel is close to block diagonal
/// (e.g. 0/1 costs at small reg); Newton converges in a handful of steps.
/// Returns the ℓ1 marginal error reached.
fn newton_polish(
    f: &mut [f64],
    g: &mut [f64],
    cost: &[Vec<f64>],
    log_a: &[f64],
    log_b: &[f64],
    eps: f64,
    tol: f64,
) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let a: Vec<f64> = log_a.iter().map(|v| v.exp()).collect();
    let b: Vec<f64> = log_b.iter().map(|v| v.exp()).collect();
    let (n, m) = (f.len(), g.len());
    let gap = |dr: &[f64], dc: &[f64]| dr.iter().chain(dc).map(|v| v.abs()).sum::<f64>();
    let (mut dr, mut dc, mut plan) = marginal_gap(f, g, cost, &a, &b, eps);
    let mut err = gap(&dr, &dc);
    for _ in 0..NEWTON_MAX_ITER {
        if err < tol || m == 0 {
            break;
        }
        let k = n + m - 1;
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            hess[(i, i)] = a[i] - dr[i];
            for j in 0..m - 1 {
                hess[(i, n + j)] = plan[i][j];
                hess[(n + j, i)] = plan[i][j];
            }
        }
        for j in 0..m - 1 {
            hess[(n + j, n + j)] = b[j] - dc[j];
        }
        let grad = DVector::from_iterator(k, dr.iter().chain(&dc[..m - 1]).copied());
        let Some(step) = hess.clone().cholesky().map(|c| c.solve(&grad)).or_else(|| hess.lu().solve(&grad))
        else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let nf: Vec<f64> = f.iter().enumerate().map(|(i, v)| v + t * eps * step[i]).collect();
            let mut ng = g.to_vec();
            for j in 0..m - 1 {
                ng[j] += t * eps * step[n + j];
            }
            let (ndr, ndc, nplan) = marginal_gap(&nf, &ng, cost, &a, &b, eps);
            let nerr = gap(&ndr, &ndc);
            if nerr.is_finite() && nerr < err {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                (dr, dc, plan, err) = (ndr, ndc, nplan, nerr);
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    err
}

/// Entropic OT: `argmin_γ ⟨γ, c⟩ − reg·H(γ)` over couplings of `mu` and `nu`.
///
/// Terminates once the ℓ1 row-marginal error drops below `tol` (columns are
/// exact after every half-step). The regularization is annealed from the cost
/// scale down to `reg`; `residual_history` covers the final Sinkhorn stage only
/// and `iterations_used` counts all stages. If the final stage stalls, a few
/// dual Newton steps finish the solve. The plan is then rounded onto the exact
/// marginals, and `residual` reports the error after rounding. Zero-mass
/// symbols are carried as empty rows/columns.
pub fn sinkhorn(
    mu: &Dist,
    nu: &Dist,
    c: &CostMatrix,
    reg: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    c.check(mu, nu)?;
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(Error::InvalidArgument(format!("reg must be positive, got {reg}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let cmax = c.costs().iter().copied().fold(0.0, f64::max);
    if !(cmax / reg).is_finite() {
        return Err(Error::NumericalUnderflow(format!(
            "cost scale {cmax} over reg {reg} overflows"
        )));
    }

    let (n, m) = (mu.len(), nu.len());
    let rows: Vec<usize> = (0..n).filter(|&i| mu.probs()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| nu.probs()[j] > 0.0).collect();
    let log_a: Vec<f64> = rows.iter().map(|&i| mu.probs()[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| nu.probs()[j].ln()).collect();
    let cmat: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| c.get(i, j)).collect())
        .collect();

    // dual potentials in cost units, warm-started across a geometric
    // schedule of regularization strengths ending at `reg`
    let mut f = vec![0.0; rows.len()];
    let mut g = vec![0.0; cols.len()];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut eps = reg.max(cmax);
    let mut stall_ref = f64::INFINITY;

    loop {
        let last = eps <= reg;
        let stage_tol = if last { tol } else { tol.max(1e-3) };
        loop {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            residual = sinkhorn_sweep(&mut f, &mut g, &cmat, &log_a, &log_b, eps);
            if !residual.is_finite() || f.iter().chain(&g).any(|v| !v.is_finite()) {
                return Err(Error::NumericalUnderflow(format!(
                    "non-finite Sinkhorn potentials at reg {eps}"
                )));
            }
            if last {
                history.push(residual);
                let k = history.len();
                if k % STALL_WINDOW == 0 {
                    if residual > 0.9 * stall_ref {
                        break;
                    }
                    stall_ref = residual;
                }
            }
            if residual < stage_tol {
                break;
            }
        }
        if last || iterations >= max_iter {
            break;
        }
        eps = (eps * 0.5).max(reg);
    }
    if residual >= tol {
        residual = newton_polish(&mut f, &mut g, &cmat, &log_a, &log_b, reg, tol).min(residual);
    }
    if residual >= tol && residual >= STALL_FLOOR {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }

    let mut plan = vec![0.0; n * m];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[i * m + j] = ((f[a] + g[b] - cmat[a][b]) / reg).exp();
        }
    }
    round_to_marginals(&mut plan, mu.probs(), nu.probs());
    let cost: f64 = plan.iter().zip(c.costs()).map(|(p, c)| p * c).sum();
    let rounded = TransportPlan {
        rows: n,
        cols: m,
        plan,
        cost,
        reg_strength: reg,
        iterations_used: iterations,
        residual: 0.0,
        residual_history: Vec::new(),
    };
    let residual = marginal_error(&rounded, mu.probs(), nu.probs());
    Ok(TransportPlan {
        residual,
        residual_history: history,
        ..rounded
    })
}

/// ℓ1 error of both marginals.
pub fn marginal_error(plan: &TransportPlan, mu: &[f64], nu: &[f64]) -> f64 {
    let r: f64 = plan.row_sums().iter().zip(mu).map(|(a, b)| (a - b).abs()).sum();
    let c: f64 = plan.col_sums().iter().zip(nu).map(|(a, b)| (a - b).abs()).sum();
    r + c
}

/// Projects a near-feasible coupling onto the transport polytope: shrink rows
/// and columns that overshoot, then spread the remaining deficit as a rank-one
/// correction.
fn round_to_marginals(plan: &mut [f64], mu: &[f64], nu: &[f64]) {
    let m = nu.len();
    for (row, &a) in plan.chunks_mut(m).zip(mu) {
        let s: f64 = row.iter().sum();
        if s > a && s > 0.0 {
            let k = a / s;
            row.iter_mut().for_each(|v| *v *= k);
        }
    }
    let mut col = vec![0.0; m];
    for row in plan.chunks(m) {
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    let shrink: Vec<f64> = col
        .iter()
        .zip(nu)
        .map(|(&s, &b)| if s > b && s > 0.0 { b / s } else { 1.0 })
        .collect();
    for row in plan.chunks_mut(m) {
        for (v, k) in row.iter_mut().zip(&shrink) {
            *v *= k;
        }
    }
    let row_def: Vec<f64> = plan
        .chunks(m)
        .zip(mu)
        .map(|(r, &a)| (a - r.iter().sum::<f64>()).max(0.0))
        .collect();
    let mut col_def = nu.to_vec();
    for row in plan.chunks(m) {
        for (d, v) in col_def.iter_mut().zip(row) {
            *d -= v;
        }
    }
    col_def.iter_mut().for_each(|d| *d = d.max(0.0));
    let total: f64 = row_def.iter().sum();
    if total > 0.0 {
        for (row, &dr) in plan.chunks_mut(m).zip(&row_def) {
            for (v, &dc) in row.iter_mut().zip(&col_def) {
                *v += dr * dc / total;
            }
        }
    }
}

/// Unregularized optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactPlan {
    pub rows: usize,
    pub cols: usize,
    pub plan: Vec<f64>,
    pub cost: f64,
}

/// Mass scale for the integer flow problem.
const FLOW_SCALE: i64 = 1 << 40;

/// Largest-remainder rounding of `probs * FLOW_SCALE` to integers summing to the scale.
fn integer_masses(probs: &[f64]) -> Vec<i64> {
    let scaled: Vec<f64> = probs.iter().map(|p| p * FLOW_SCALE as f64).collect();
    let mut out: Vec<i64> = scaled.iter().map(|v| v.floor() as i64).collect();
    let mut deficit = FLOW_SCALE - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut k = 0;
    while deficit != 0 {
        let i = order[k % order.len()];
        if deficit > 0 {
            out[i] += 1;
            deficit -= 1;
        } else if out[i] > 0 {
            out[i] -= 1;
            deficit += 1;
        }
        k += 1;
    }
    out
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Bellman-Ford over the residual graph; returns the predecessor edge per node.
    fn shortest_path(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                        dist[edge.to] = dist[u] + edge.cost;
                        pred[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (dist, pred)
    }
}

/// Exact optimal transport by successive shortest augmenting paths.
pub fn exact_ot(mu: &Dist, nu: &Dist, c: &CostMatrix) -> Result<ExactPlan> {
    c.check(mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    if n > EXACT_MAX_SIDE || m > EXACT_MAX_SIDE {
        return Err(Error::InstanceTooLarge(format!(
            "{n}x{m} exceeds the {EXACT_MAX_SIDE}x{EXACT_MAX_SIDE} exact solver limit"
        )));
    }
    let a = integer_masses(mu.probs());
    let b = integer_masses(nu.probs());
    let source = 0;
    let sink = n + m + 1;
    let mut g = FlowGraph::new(n + m + 2);
    for (i, &ai) in a.iter().enumerate() {
        g.add(source, 1 + i, ai, 0.0);
    }
    for (j, &bj) in b.iter().enumerate() {
        g.add(1 + n + j, sink, bj, 0.0);
    }
    let mut cell = vec![0usize; n * m];
    for i in 0..n {
        for j in 0..m {
            cell[i * m + j] = g.add(1 + i, 1 + n + j, FLOW_SCALE, c.get(i, j));
        }
    }

    let mut sent = 0i64;
    let mut rounds = 0usize;
    while sent < FLOW_SCALE {
        rounds += 1;
        if rounds > 100 * (n + m + 2) * (n + m + 2) {
            return Err(Error::NonConvergence {
                iterations: rounds,
                residual: (FLOW_SCALE - sent) as f64 / FLOW_SCALE as f64,
            });
        }
        let (dist, pred) = g.shortest_path(source);
        if dist[sink] == f64::INFINITY {
            return Err(Error::Infeasible("marginals cannot be matched".into()));
        }
        let mut push = FLOW_SCALE - sent;
        let mut v = sink;
        while let Some(e) = pred[v] {
            push = push.min(g.edges[e].cap);
            v = g.edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = pred[v] {
            g.edges[e].cap -= push;
            g.edges[e ^ 1].cap += push;
            v = g.edges[e ^ 1].to;
        }
        sent += push;
    }

    let mut plan = vec![0.0; n * m];
    let mut cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let flow = g.edges[cell[i * m + j] ^ 1].cap;
            let v = flow as f64 / FLOW_SCALE as f64;
            plan[i * m + j] = v;
            cost += v * c.get(i, j);
        }
    }
    Ok(ExactPlan {
        rows: n,
        cols: m,
        plan,
        cost,
    })
}

/// Entropic transport cost between two distributions on one alphabet.
pub fn ot_divergence(p: &Dist, q: &Dist, c: &CostMatrix, reg: f64) -> Result<f64> {
    if p.alphabet() != q.alphabet() {
        return Err(Error::AlphabetMismatch("ot_divergence operands".into()));
    }
    Ok(sinkhorn(p, q, c, reg, DEFAULT_MAX_ITER, DEFAULT_TOL)?.cost.max(0.0))
}

/// `½‖p − q‖₁`: the exact transport cost under the 0/1 ground cost.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
