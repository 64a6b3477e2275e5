//! Exact information measures over finite, labeled distributions.
//!
//! Everything here is in nats with the convention `0 · ln 0 = 0`. Values are
//! validated at construction: a probability vector must be nonnegative and sum
//! to one within [`VALID_TOL`]; vectors that miss by less than [`RENORM_TOL`]
//! are renormalized, anything further off is rejected.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum-to-one tolerance accepted without touching the values.
pub const VALID_TOL: f64 = 1e-9;
/// Largest deviation that is silently renormalized.
pub const RENORM_TOL: f64 = 1e-6;

/// Ordered set of distinct symbol labels.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyAlphabet);
        }
        let mut seen = std::collections::HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// `prefix0, prefix1, ...` with `n` entries.
    pub fn indexed(prefix: &str, n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("{prefix}{i}")))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.labels).finish()
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Alphabet::new(v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.labels
    }
}

pub(crate) fn check_same(a: &Alphabet, b: &Alphabet, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::AlphabetMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.labels(),
            b.labels()
        )));
    }
    Ok(())
}

/// Validates a probability vector, renormalizing small deviations.
pub(crate) fn normalized(mut probs: Vec<f64>, context: &str) -> Result<Vec<f64>> {
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev >= RENORM_TOL {
        return Err(Error::NotNormalized {
            sum,
            context: context.to_string(),
        });
    }
    if dev > VALID_TOL {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(probs)
}

/// Probability vector over an alphabet.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistRepr", into = "DistRepr")]
pub struct Dist {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistRepr {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl TryFrom<DistRepr> for Dist {
    type Error = Error;
    fn try_from(r: DistRepr) -> Result<Self> {
        Dist::new(Alphabet::new(r.labels)?, r.probs)
    }
}

impl From<Dist> for DistRepr {
    fn from(d: Dist) -> Self {
        DistRepr {
            labels: d.alphabet.labels,
            probs: d.probs,
        }
    }
}

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (l, p) in self.alphabet.labels().iter().zip(&self.probs) {
            m.entry(l, p);
        }
        m.finish()
    }
}

impl Dist {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.size(),
                actual: probs.len(),
                context: "distribution length".into(),
            });
        }
        let probs = normalized(probs, "distribution")?;
        Ok(Self { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.size();
        Self {
            alphabet,
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Single-atom distribution.
    pub fn point(alphabet: Alphabet, index: usize) -> Self {
        let mut probs = vec![0.0; alphabet.size()];
        probs[index] = 1.0;
        Self { alphabet, probs }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, label: &str) -> Result<f64> {
        Ok(self.probs[self.alphabet.require(label)?])
    }

    /// Index of the largest mass; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn is_point_mass(&self) -> bool {
        self.probs.iter().filter(|&&p| p > 0.0).count() == 1
    }
}

/// Lowest index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Lowest index attaining the minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Joint distribution table over `row × col`, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Joint {
    rows: Alphabet,
    cols: Alphabet,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<MatrixRepr> for Joint {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        Joint::from_rows(
            Alphabet::new(r.row_labels)?,
            Alphabet::new(r.col_labels)?,
            r.probs,
        )
    }
}

impl From<Joint> for MatrixRepr {
    fn from(j: Joint) -> Self {
        let m = j.cols.size();
        MatrixRepr {
            probs: j.table.chunks(m).map(<[f64]>::to_vec).collect(),
            row_labels: j.rows.labels,
            col_labels: j.cols.labels,
        }
    }
}

impl fmt::Debug for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Joint")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("table", &self.table)
            .finish()
    }
}

fn flatten_rows(rows: Vec<Vec<f64>>, n: usize, m: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: rows.len(),
            context: format!("{what} row count"),
        });
    }
    let mut flat = Vec::with_capacity(n * m);
    for r in rows {
        if r.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: r.len(),
                context: format!("{what} row length"),
            });
        }
        flat.extend(r);
    }
    Ok(flat)
}

impl Joint {
    /// Row-major table of `rows.size() * cols.size()` entries.
    pub fn new(rows: Alphabet, cols: Alphabet, table: Vec<f64>) -> Result<Self> {
        let expected = rows.size() * cols.size();
        if table.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: table.len(),
                context: "joint table".into(),
            });
        }
        let table = normalized(table, "joint")?;
        Ok(Self { rows, cols, table })
    }

    pub fn from_rows(rows: Alphabet, cols: Alphabet, data: Vec<Vec<f64>>) -> Result<Self> {
        let flat = flatten_rows(data, rows.size(), cols.size(), "joint")?;
        Self::new(rows, cols, flat)
    }

    /// Independent product `p(x) q(y)`.
    pub fn product(row: &Dist, col: &Dist) -> Self {
        let table = row
            .probs()
            .iter()
            .flat_map(|&a| col.probs().iter().map(move |&b| a * b))
            .collect();
        Self {
            rows: row.alphabet().clone(),
            cols: col.alphabet().clone(),
            table,
        }
    }

    /// `p(x, y) = prior(x) k(y|x)`.
    pub fn from_prior_kernel(prior: &Dist, kernel: &Kernel) -> Result<Self> {
        check_same(prior.alphabet(), kernel.from_alphabet(), "prior vs kernel source")?;
        let m = kernel.to_size();
        let mut table = Vec::with_capacity(prior.len() * m);
        for (i, &p) in prior.probs().iter().enumerate() {
            table.extend(kernel.row(i).iter().map(|&k| p * k));
        }
        Ok(Self {
            rows: prior.alphabet().clone(),
            cols: kernel.to_alphabet().clone(),
            table,
        })
    }

    pub fn row_alphabet(&self) -> &Alphabet {
        &self.rows
    }

    pub fn col_alphabet(&self) -> &Alphabet {
        &self.cols
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.cols.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.cols.size();
        &self.table[i * m..(i + 1) * m]
    }

    pub fn row_marginal(&self) -> Dist {
        let probs = self
            .table
            .chunks(self.cols.size())
            .map(|r| r.iter().sum())
            .collect();
        Dist {
            alphabet: self.rows.clone(),
            probs,
        }
    }

    pub fn col_marginal(&self) -> Dist {
        let m = self.cols.size();
        let mut probs = vec![0.0; m];
        for r in self.table.chunks(m) {
            for (acc, &v) in probs.iter_mut().zip(r) {
                *acc += v;
            }
        }
        Dist {
            alphabet: self.cols.clone(),
            probs,
        }
    }

    pub fn transpose(&self) -> Self {
        let (n, m) = (self.rows.size(), self.cols.size());
        let mut table = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                table[j * n + i] = self.table[i * m + j];
            }
        }
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            table,
        }
    }

    /// `H(X, Y)` over the whole table.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.table)
    }

    /// Conditional `p(col | row)`; rows with zero mass become uniform.
    pub fn col_given_row(&self) -> Kernel {
        let m = self.cols.size();
        let rows = self
            .table
            .chunks(m)
            .map(|r| {
                let s: f64 = r.iter().sum();
                if s > 0.0 {
                    r.iter().map(|v| v / s).collect()
                } else {
                    vec![1.0 / m as f64; m]
                }
            })
            .collect();
        Kernel {
            from: self.rows.clone(),
            to: self.cols.clone(),
            data: rows,
        }
    }
}

/// Row-stochastic conditional table `k(to | from)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct Kernel {
    from: Alphabet,
    to: Alphabet,
    data: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    from_labels: Vec<String>,
    to_labels: Vec<String>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<KernelRepr> for Kernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        Kernel::new(
            Alphabet::new(r.from_labels)?,
            Alphabet::new(r.to_labels)?,
            r.probs,
        )
    }
}

impl From<Kernel> for KernelRepr {
    fn from(k: Kernel) -> Self {
        KernelRepr {
            from_labels: k.from.labels,
            to_labels: k.to.labels,
            probs: k.data,
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("from", &self.from)
            .field("to", &self.to)
            .field("rows", &self.data)
            .finish()
    }
}

impl Kernel {
    pub fn new(from: Alphabet, to: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != from.size() {
            return Err(Error::DimensionMismatch {
                expected: from.size(),
                actual: rows.len(),
                context: "kernel row count".into(),
            });
        }
        let mut data = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != to.size() {
                return Err(Error::DimensionMismatch {
                    expected: to.size(),
                    actual: r.len(),
                    context: format!("kernel row {} length", from.label(i)),
                });
            }
            data.push(normalized(r, &format!("kernel row {}", from.label(i)))?);
        }
        Ok(Self { from, to, data })
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        let n = alphabet.size();
        let data = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            from: alphabet.clone(),
            to: alphabet,
            data,
        }
    }

    /// Deterministic map: row `i` puts all mass on `targets[i]`.
    pub fn deterministic(from: Alphabet, to: Alphabet, targets: &[usize]) -> Result<Self> {
        if targets.len() != from.size() {
            return Err(Error::DimensionMismatch {
                expected: from.size(),
                actual: targets.len(),
                context: "deterministic kernel targets".into(),
            });
        }
        let m = to.size();
        let mut data = Vec::with_capacity(targets.len());
        for &t in targets {
            if t >= m {
                return Err(Error::InvalidArgument(format!("target index {t} >= {m}")));
            }
            let mut r = vec![0.0; m];
            r[t] = 1.0;
            data.push(r);
        }
        Ok(Self { from, to, data })
    }

    /// Every row equal to `dist`.
    pub fn constant(from: Alphabet, dist: &Dist) -> Self {
        let data = vec![dist.probs().to_vec(); from.size()];
        Self {
            from,
            to: dist.alphabet().clone(),
            data,
        }
    }

    pub fn from_alphabet(&self) -> &Alphabet {
        &self.from
    }

    pub fn to_alphabet(&self) -> &Alphabet {
        &self.to
    }

    pub fn from_size(&self) -> usize {
        self.from.size()
    }

    pub fn to_size(&self) -> usize {
        self.to.size()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn row_dist(&self, i: usize) -> Dist {
        Dist {
            alphabet: self.to.clone(),
            probs: self.data[i].clone(),
        }
    }

    pub fn row_of(&self, label: &str) -> Result<Dist> {
        Ok(self.row_dist(self.from.require(label)?))
    }

    pub fn is_deterministic(&self) -> bool {
        self.data
            .iter()
            .all(|r| r.iter().filter(|&&v| v == 1.0).count() == 1)
    }

    /// `(self ∘ next)(c|a) = Σ_b self(b|a) next(c|b)`.
    pub fn compose(&self, next: &Kernel) -> Result<Kernel> {
        check_same(&self.to, &next.from, "kernel composition")?;
        let data = self
            .data
            .iter()
            .map(|r| mix_rows(r, &next.data, next.to_size()))
            .collect();
        Ok(Kernel {
            from: self.from.clone(),
            to: next.to.clone(),
            data,
        })
    }

    /// Entropy of each row, `H(to | from = i)`.
    pub fn row_entropies(&self) -> Vec<f64> {
        self.data.iter().map(|r| entropy_of(r)).collect()
    }
}

fn mix_rows(weights: &[f64], rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (&w, r) in weights.iter().zip(rows) {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(r) {
            *o += w * v;
        }
    }
    out
}

/// `-Σ p ln p` for a raw vector, with `0 ln 0 = 0`.
pub fn entropy_of(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

pub fn entropy(d: &Dist) -> f64 {
    entropy_of(d.probs())
}

/// Which variable is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ColGivenRow,
    RowGivenCol,
}

/// `H(Y|X) = H(X,Y) - H(X)`, clamped at zero against round-off.
pub fn conditional_entropy(j: &Joint, direction: Direction) -> f64 {
    let given = match direction {
        Direction::ColGivenRow => j.row_marginal(),
        Direction::RowGivenCol => j.col_marginal(),
    };
    (j.entropy() - entropy(&given)).max(0.0)
}

pub fn mutual_information(j: &Joint) -> f64 {
    let i = entropy(&j.row_marginal()) + entropy(&j.col_marginal()) - j.entropy();
    i.max(0.0)
}

/// `Σ p ln(p/q)` on raw vectors of equal length.
pub fn kl_of(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
            context: "KL arguments".into(),
        });
    }
    let mut acc = 0.0;
    for (index, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::AbsoluteContinuityViolation { index, p: a });
            }
            acc += a * (a / b).ln();
        }
    }
    Ok(acc.max(0.0))
}

pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    check_same(p.alphabet(), q.alphabet(), "KL divergence")?;
    kl_of(p.probs(), q.probs())
}

/// Law of `Y` when `X ~ prior` and `Y | X ~ k`.
pub fn pushforward(prior: &Dist, k: &Kernel) -> Result<Dist> {
    check_same(prior.alphabet(), k.from_alphabet(), "pushforward")?;
    let probs = mix_rows(prior.probs(), k.rows(), k.to_size());
    Ok(Dist {
        alphabet: k.to_alphabet().clone(),
        probs: normalized(probs, "pushforward")?,
    })
}

/// Posterior kernel `p(x | y) ∝ prior(x) k(y | x)`.
///
/// Every target symbol must be reachable under the prior.
pub fn bayes_invert(k: &Kernel, prior: &Dist) -> Result<Kernel> {
    let marginal = pushforward(prior, k)?;
    let (n, m) = (k.from_size(), k.to_size());
    let mut data = Vec::with_capacity(m);
    for y in 0..m {
        let py = marginal.probs()[y];
        if py <= 0.0 {
            return Err(Error::ZeroMarginal(k.to_alphabet().label(y).to_string()));
        }
        let raw: Vec<f64> = (0..n).map(|x| prior.probs()[x] * k.row(x)[y]).collect();
        let s: f64 = raw.iter().sum();
        data.push(raw.into_iter().map(|v| v / s).collect());
    }
    Ok(Kernel {
        from: k.to_alphabet().clone(),
        to: k.from_alphabet().clone(),
        data,
    })
}

/// Real-vector coordinates for labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding(BTreeMap<String, Vec<f64>>);

impl Embedding {
    pub fn new(map: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut dims = map.values().map(Vec::len);
        if let Some(d) = dims.next() {
            if dims.any(|x| x != d) {
                return Err(Error::RaggedEmbedding);
            }
        }
        Ok(Self(map))
    }

    /// Each label embedded at its alphabet index.
    pub fn indices(alphabet: &Alphabet) -> Self {
        Self(
            alphabet
                .labels()
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), vec![i as f64]))
                .collect(),
        )
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.0.get(label).map(Vec::as_slice)
    }
}

/// Trace of the covariance of the embedded random vector.
pub fn dist_variance(d: &Dist, embedding: &Embedding) -> Result<f64> {
    let points: Vec<&[f64]> = d
        .alphabet()
        .labels()
        .iter()
        .map(|l| {
            embedding
                .get(l)
                .ok_or_else(|| Error::MissingEmbedding(l.clone()))
        })
        .collect::<Result<_>>()?;
    let dim = points.first().map_or(0, |p| p.len());
    let mut mean = vec![0.0; dim];
    for (&p, x) in d.probs().iter().zip(&points) {
        for (m, &v) in mean.iter_mut().zip(x.iter()) {
            *m += p * v;
        }
    }
    let mut var = 0.0;
    for (&p, x) in d.probs().iter().zip(&points) {
        if p > 0.0 {
            var += p * x
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>();
        }
    }
    Ok(var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc(n: usize) -> Alphabet {
        Alphabet::indexed("s", n).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let u = Dist::uniform(abc(4));
        assert!((entropy(&u) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&Dist::point(abc(3), 1)), 0.0);
        let d = Dist::new(abc(3), vec![0.5, 0.25, 0.25]).unwrap();
        // independent evaluation of -Σ p ln p
        assert!((entropy(&d) - 1.039_720_770_839_917_9).abs() < 1e-12);
    }

    #[test]
    fn construction_tolerances() {
        assert!(Dist::new(abc(2), vec![0.5, 0.5 + 5e-7]).is_ok());
        let renormed = Dist::new(abc(2), vec![0.5, 0.5 + 5e-7]).unwrap();
        assert!((renormed.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            Dist::new(abc(2), vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            Dist::new(abc(2), vec![1.5, -0.5]),
            Err(Error::InvalidProbability { .. })
        ));
        assert!(matches!(
            Alphabet::new(["a", "a"]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            Alphabet::new(Vec::<String>::new()),
            Err(Error::EmptyAlphabet)
        ));
    }

    #[test]
    fn conditional_entropy_examples() {
        let a = Dist::new(abc(2), vec![0.3, 0.7]).unwrap();
        let b = Dist::new(abc(3), vec![0.2, 0.5, 0.3]).unwrap();
        let j = Joint::product(&a, &b);
        assert!((conditional_entropy(&j, Direction::ColGivenRow) - entropy(&b)).abs() < 1e-12);

        let perm = Kernel::deterministic(abc(3), abc(3), &[2, 0, 1]).unwrap();
        let j = Joint::from_prior_kernel(&Dist::uniform(abc(3)), &perm).unwrap();
        assert!(conditional_entropy(&j, Direction::ColGivenRow) < 1e-12);
        assert!(conditional_entropy(&j, Direction::RowGivenCol) < 1e-12);

        // 2x4 joint from kernel rows under a uniform row prior; chain rule by hand
        let k = Kernel::new(
            abc(2),
            abc(4),
            vec![vec![0.7, 0.1, 0.1, 0.1], vec![0.1, 0.1, 0.1, 0.7]],
        )
        .unwrap();
        let j = Joint::from_prior_kernel(&Dist::uniform(abc(2)), &k).unwrap();
        let row_h = 0.7f64.mul_add(-(0.7f64.ln()), -3.0 * 0.1 * 0.1f64.ln());
        assert!((conditional_entropy(&j, Direction::ColGivenRow) - row_h).abs() < 1e-12);
        assert!((conditional_entropy(&j, Direction::ColGivenRow) - 0.940_447_988_655_326_3).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_examples() {
        let a = Dist::new(abc(2), vec![0.3, 0.7]).unwrap();
        let j = Joint::product(&a, &a);
        assert!(mutual_information(&j) < 1e-12);
        let diag = Joint::from_prior_kernel(&Dist::uniform(abc(5)), &Kernel::identity(abc(5))).unwrap();
        assert!((mutual_information(&diag) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let p = Dist::new(abc(2), vec![0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let q = Dist::new(abc(2), vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(Error::AbsoluteContinuityViolation { index: 1, .. })
        ));
        let q = Dist::new(abc(2), vec![0.25, 0.75]).unwrap();
        assert!((kl_divergence(&p, &q).unwrap() - 0.143_841_036_225_890_4).abs() < 1e-12);
        let other = Dist::uniform(Alphabet::new(["x", "y"]).unwrap());
        assert!(matches!(
            kl_divergence(&p, &other),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn pushforward_and_inversion() {
        let d = Dist::new(abc(3), vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(pushforward(&d, &Kernel::identity(abc(3))).unwrap(), d);

        let perm = Kernel::deterministic(abc(3), abc(3), &[1, 2, 0]).unwrap();
        let inv = bayes_invert(&perm, &Dist::uniform(abc(3))).unwrap();
        let expected = Kernel::deterministic(abc(3), abc(3), &[2, 0, 1]).unwrap();
        assert_eq!(inv, expected);

        let squash = Kernel::deterministic(abc(3), abc(3), &[0, 0, 1]).unwrap();
        assert!(matches!(
            bayes_invert(&squash, &Dist::uniform(abc(3))),
            Err(Error::ZeroMarginal(l)) if l == "s2"
        ));
        let wrong = Dist::uniform(abc(2));
        assert!(matches!(
            pushforward(&wrong, &perm),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn variance_examples() {
        let emb = Embedding::indices(&abc(3));
        assert_eq!(dist_variance(&Dist::point(abc(3), 2), &emb).unwrap(), 0.0);
        let half = Dist::uniform(abc(2));
        assert!((dist_variance(&half, &Embedding::indices(&abc(2))).unwrap() - 0.25).abs() < 1e-15);
        let d = Dist::new(abc(3), vec![0.8, 0.1, 0.1]).unwrap();
        // mean 0.3, E[x^2] = 0.1 + 0.4 = 0.5, variance 0.5 - 0.09
        assert!((dist_variance(&d, &emb).unwrap() - 0.41).abs() < 1e-12);
        let partial = Embedding::indices(&abc(2));
        assert!(matches!(
            dist_variance(&d, &partial),
            Err(Error::MissingEmbedding(l)) if l == "s2"
        ));
    }

    #[test]
    fn json_shapes() {
        let d = Dist::new(Alphabet::new(["a", "b"]).unwrap(), vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"labels":["a","b"],"probs":[0.25,0.75]}"#);
        let back: Dist = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let bad: std::result::Result<Dist, _> =
            serde_json::from_str(r#"{"labels":["a","b"],"probs":[0.25,0.5]}"#);
        assert!(bad.is_err());
        let k: Kernel = serde_json::from_str(
            r#"{"from_labels":["x"],"to_labels":["a","b"],"probs":[[0.5,0.5]]}"#,
        )
        .unwrap();
        assert_eq!(k.row(0), &[0.5, 0.5]);
    }
}
