//! Capacity of discrete finite-state Markov channels with periodic feedback.
//!
//! The channel state `u_n` is a first-order ergodic Markov chain known to the
//! receiver. Every `T` uses the transmitter learns the current state, so use
//! `t` of a period (1-based) sees the state through the `(t-1)`-step law
//! `P_t(u|v)`. The capacity is
//! `(1/T) sum_t sum_v pi(v) max_q sum_u P_t(u|v) I(q; W_u)`,
//! and each inner maximization is a weighted Blahut–Arimoto problem.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of input files may deviate from unit sum by at most this much.
pub const INPUT_ROW_TOLERANCE: f64 = 1e-9;

/// Default bracket width (bits) at which Blahut–Arimoto stops.
pub const DEFAULT_BA_TOLERANCE: f64 = 1e-9;

/// Default Blahut–Arimoto iteration cap.
pub const DEFAULT_BA_MAX_ITERATIONS: usize = 100_000;

/// On-disk description of a finite-state Markov channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmcModel {
    pub states: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub input_alphabet: Vec<String>,
    pub output_alphabet: Vec<String>,
    pub channels: BTreeMap<String, Vec<Vec<f64>>>,
}

/// A validated, irreducible and aperiodic finite-state Markov channel.
///
/// `transition[(v, u)] = Pr(u_n = u | u_{n-1} = v)` and
/// `channels[u][(x, y)] = W_u(y | x)`; all rows sum to one.
#[derive(Debug, Clone)]
pub struct Fsmc {
    states: Vec<String>,
    input_alphabet: Vec<String>,
    output_alphabet: Vec<String>,
    transition: DMatrix<f64>,
    channels: Vec<DMatrix<f64>>,
    stationary: DVector<f64>,
}

impl Fsmc {
    /// Builds a channel with labels `0, 1, ...` for states and letters.
    pub fn new(transition: Vec<Vec<f64>>, channels: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let numbered = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let states = numbered(transition.len());
        let (nx, ny) = channels
            .first()
            .map(|w| (w.len(), w.first().map_or(0, Vec::len)))
            .unwrap_or((0, 0));
        if channels.len() != states.len() {
            return Err(Error::Model(format!(
                "{} states but {} channel matrices",
                states.len(),
                channels.len()
            )));
        }
        let model = FsmcModel {
            channels: states.iter().cloned().zip(channels).collect(),
            states,
            transition,
            input_alphabet: numbered(nx),
            output_alphabet: numbered(ny),
        };
        Self::from_model(model)
    }

    pub fn from_model(model: FsmcModel) -> Result<Self> {
        let FsmcModel {
            states,
            transition,
            input_alphabet,
            output_alphabet,
            mut channels,
        } = model;
        let n = states.len();
        if n == 0 {
            return Err(Error::Model("model has no states".into()));
        }
        ensure_distinct("state", &states)?;
        ensure_distinct("input letter", &input_alphabet)?;
        ensure_distinct("output letter", &output_alphabet)?;
        if input_alphabet.is_empty() || output_alphabet.is_empty() {
            return Err(Error::Model("input and output alphabets must be non-empty".into()));
        }
        let transition = stochastic_matrix("transition", &transition, n, n)?;

        let mut matrices = Vec::with_capacity(n);
        for label in &states {
            let rows = channels
                .remove(label)
                .ok_or_else(|| Error::Model(format!("no channel matrix for state {label:?}")))?;
            matrices.push(stochastic_matrix(
                &format!("channel {label:?}"),
                &rows,
                input_alphabet.len(),
                output_alphabet.len(),
            )?);
        }
        if let Some(extra) = channels.keys().next() {
            return Err(Error::Model(format!("channel given for unknown state {extra:?}")));
        }

        check_ergodic(&transition, &states)?;
        let stationary = solve_stationary(&transition)?;
        Ok(Self {
            states,
            input_alphabet,
            output_alphabet,
            transition,
            channels: matrices,
            stationary,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: FsmcModel =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("invalid model file: {e}")))?;
        Self::from_model(model)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn input_alphabet(&self) -> &[String] {
        &self.input_alphabet
    }

    pub fn output_alphabet(&self) -> &[String] {
        &self.output_alphabet
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn channels(&self) -> &[DMatrix<f64>] {
        &self.channels
    }

    pub fn stationary_distribution(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// `P_t(u|v)`: identity for `t = 1`, `transition^(t-1)` otherwise.
    pub fn t_step_law(&self, t: usize) -> Result<DMatrix<f64>> {
        if t == 0 {
            return Err(Error::Domain("subchannel index t must be at least 1".into()));
        }
        let n = self.num_states();
        let mut law = DMatrix::identity(n, n);
        let mut base = self.transition.clone();
        let mut exp = t - 1;
        while exp > 0 {
            if exp & 1 == 1 {
                law = normalize_rows(&law * &base);
            }
            base = normalize_rows(&base * &base);
            exp >>= 1;
        }
        Ok(law)
    }
}

/// Stationary law of a validated channel.
pub fn stationary_distribution(fsmc: &Fsmc) -> &DVector<f64> {
    fsmc.stationary_distribution()
}

/// `P_t(u|v)` of a validated channel.
pub fn t_step_law(fsmc: &Fsmc, t: usize) -> Result<DMatrix<f64>> {
    fsmc.t_step_law(t)
}

fn ensure_distinct(what: &str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for label in labels {
        if !seen.insert(label) {
            return Err(Error::Model(format!("duplicate {what} label {label:?}")));
        }
    }
    Ok(())
}

/// Checks shape, sign and unit row sums (within [`INPUT_ROW_TOLERANCE`]),
/// then renormalizes rows exactly.
fn stochastic_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::Model(format!("{name}: expected {nrows} rows, found {}", rows.len())));
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Model(format!(
                "{name}: row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        if let Some(bad) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Model(format!("{name}: row {i} has invalid entry {bad}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > INPUT_ROW_TOLERANCE {
            return Err(Error::Model(format!("{name}: row {i} sums to {sum}, not 1")));
        }
        for (j, &p) in row.iter().enumerate() {
            m[(i, j)] = p / sum;
        }
    }
    Ok(m)
}

fn normalize_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn describe(states: &[String], members: impl IntoIterator<Item = usize>) -> String {
    let names: Vec<&str> = members.into_iter().map(|i| states[i].as_str()).collect();
    format!("{{{}}}", names.join(", "))
}

fn reachable_from(transition: &DMatrix<f64>, start: usize) -> Vec<bool> {
    let n = transition.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if transition[(i, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rejects reducible or periodic chains, naming the offending class.
fn check_ergodic(transition: &DMatrix<f64>, states: &[String]) -> Result<()> {
    let n = transition.nrows();
    let reach: Vec<Vec<bool>> = (0..n).map(|i| reachable_from(transition, i)).collect();
    if reach.iter().any(|r| r.iter().any(|&b| !b)) {
        // A closed communicating class: one whose members reach only each other.
        let closed = (0..n)
            .find(|&i| (0..n).all(|j| !reach[i][j] || reach[j][i]))
            .expect("a finite chain has a closed class");
        let members: Vec<usize> = (0..n).filter(|&j| reach[closed][j] && reach[j][closed]).collect();
        let outside: Vec<usize> = (0..n).filter(|j| !members.contains(j)).collect();
        return Err(Error::Model(format!(
            "transition matrix is not irreducible: states {} form a closed class that never reaches {}",
            describe(states, members),
            describe(states, outside)
        )));
    }

    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    let mut period = 0usize;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if transition[(i, j)] <= 0.0 {
                continue;
            }
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            } else {
                period = gcd(period, (level[i] + 1).abs_diff(level[j]));
            }
        }
    }
    if period > 1 {
        let cyclic: Vec<String> = (0..period)
            .map(|r| describe(states, (0..n).filter(|&i| level[i] % period == r)))
            .collect();
        return Err(Error::Model(format!(
            "transition matrix is periodic with period {period}: cyclic classes {}",
            cyclic.join(" -> ")
        )));
    }
    Ok(())
}

fn solve_stationary(transition: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = transition.nrows();
    let mut system = transition.transpose() - DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    system.row_mut(n - 1).fill(1.0);
    rhs[n - 1] = 1.0;
    let mut pi = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular balance equations".into()))?;
    pi.apply(|p| *p = p.max(0.0));
    let total = pi.sum();
    Ok(pi / total)
}

/// Result of a weighted Blahut–Arimoto maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct BaSolution {
    /// Maximum of `sum_u w_u I(q; W_u)` in bits.
    pub value_bits: f64,
    /// Maximizing input law.
    pub input_law: Vec<f64>,
    /// Final width of the capacity bracket in bits.
    pub gap_bits: f64,
    pub iterations: usize,
}

/// Maximizes `sum_u weights[u] I(q; W_u)` over input laws `q`.
///
/// Iterates `q(x) <- q(x) exp(c(x))` with
/// `c(x) = sum_u w_u D(W_u(.|x) || q W_u)`, stopping once
/// `max_x c(x) - sum_x q(x) c(x)` (an upper minus a lower bound on the
/// optimum) falls below `tol` bits. States with zero weight are ignored.
pub fn weighted_ba(channels: &[DMatrix<f64>], weights: &[f64], tol: f64) -> Result<BaSolution> {
    weighted_ba_capped(channels, weights, tol, DEFAULT_BA_MAX_ITERATIONS)
}

pub fn weighted_ba_capped(
    channels: &[DMatrix<f64>],
    weights: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<BaSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if channels.is_empty() || channels.len() != weights.len() {
        return Err(Error::Model(format!(
            "{} channels but {} weights",
            channels.len(),
            weights.len()
        )));
    }
    let (nx, ny) = channels[0].shape();
    if nx == 0 || ny == 0 {
        return Err(Error::Model("channel matrices must be non-empty".into()));
    }
    for (u, w) in channels.iter().enumerate() {
        if w.shape() != (nx, ny) {
            return Err(Error::Model(format!("channel {u} has shape {:?}, expected {:?}", w.shape(), (nx, ny))));
        }
        for (x, row) in w.row_iter().enumerate() {
            let sum = row.sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > INPUT_ROW_TOLERANCE {
                return Err(Error::Model(format!("channel {u} row {x} is not a probability vector")));
            }
        }
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
        || (weights.iter().sum::<f64>() - 1.0).abs() > INPUT_ROW_TOLERANCE
    {
        return Err(Error::Model("weights are not a probability vector".into()));
    }

    let active: Vec<(f64, &DMatrix<f64>)> = weights
        .iter()
        .zip(channels)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| (*w, c))
        .collect();
    let tol_nats = tol * std::f64::consts::LN_2;
    let mut q = vec![1.0 / nx as f64; nx];
    let mut exponent = vec![0.0; nx];
    let mut output = vec![0.0; ny];

    for iteration in 1..=max_iterations {
        exponent.fill(0.0);
        for &(weight, w) in &active {
            output.fill(0.0);
            for x in 0..nx {
                for y in 0..ny {
                    output[y] += q[x] * w[(x, y)];
                }
            }
            for (x, c) in exponent.iter_mut().enumerate() {
                let mut divergence = 0.0;
                for y in 0..ny {
                    let p = w[(x, y)];
                    if p > 0.0 {
                        divergence += p * (p / output[y]).ln();
                    }
                }
                *c += weight * divergence;
            }
        }
        let lower: f64 = q.iter().zip(&exponent).map(|(a, b)| a * b).sum();
        let upper = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gap = upper - lower;
        if gap < tol_nats {
            return Ok(BaSolution {
                value_bits: lower / std::f64::consts::LN_2,
                input_law: q,
                gap_bits: gap / std::f64::consts::LN_2,
                iterations: iteration,
            });
        }
        for (qx, c) in q.iter_mut().zip(&exponent) {
            *qx *= (c - upper).exp();
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|qx| *qx /= total);
        if iteration == max_iterations {
            return Err(Error::Convergence {
                iterations: max_iterations,
                detail: format!(
                    "weighted Blahut-Arimoto bracket [{:.12e}, {:.12e}] bits still wider than {tol:e}",
                    lower / std::f64::consts::LN_2,
                    upper / std::f64::consts::LN_2
                ),
            });
        }
    }
    Err(Error::Config("iteration cap must be positive".into()))
}

/// Capacity of a finite-state Markov channel with feedback every `period` uses.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmcCapacityResult {
    pub capacity_bits: f64,
    /// `R_t = sum_v pi(v) max_q sum_u P_t(u|v) I(q; W_u)` for `t = 1..=T`.
    pub per_subchannel: Vec<f64>,
    /// `input_laws[t - 1][v]` is the optimal input law of subchannel `t`
    /// when state `v` was fed back.
    pub input_laws: Vec<Vec<Vec<f64>>>,
    /// Blahut–Arimoto iteration counts, indexed like `input_laws`.
    pub iterations: Vec<Vec<usize>>,
}

pub fn fsmc_capacity(fsmc: &Fsmc, period: usize, tol: f64) -> Result<FsmcCapacityResult> {
    if period == 0 {
        return Err(Error::Domain("period T must be at least 1".into()));
    }
    let n = fsmc.num_states();
    let mut laws = Vec::with_capacity(period);
    let mut law = DMatrix::identity(n, n);
    for _ in 0..period {
        laws.push(law.clone());
        law = normalize_rows(&law * fsmc.transition());
    }

    let cells: Vec<(usize, usize)> = (0..period).flat_map(|t| (0..n).map(move |v| (t, v))).collect();
    let solutions = cells
        .par_iter()
        .map(|&(t, v)| {
            let weights: Vec<f64> = laws[t].row(v).iter().copied().collect();
            weighted_ba(fsmc.channels(), &weights, tol)
        })
        .collect::<Result<Vec<_>>>()?;

    let pi = fsmc.stationary_distribution();
    let mut per_subchannel = Vec::with_capacity(period);
    let mut input_laws = Vec::with_capacity(period);
    let mut iterations = Vec::with_capacity(period);
    for row in solutions.chunks(n) {
        per_subchannel.push(row.iter().zip(pi.iter()).map(|(s, p)| p * s.value_bits).sum());
        input_laws.push(row.iter().map(|s| s.input_law.clone()).collect());
        iterations.push(row.iter().map(|s| s.iterations).collect());
    }
    let capacity_bits = per_subchannel.iter().sum::<f64>() / period as f64;
    Ok(FsmcCapacityResult {
        capacity_bits,
        per_subchannel,
        input_laws,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsc(p: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - p, p], vec![p, 1.0 - p]]
    }

    #[test]
    fn identity_chain_is_rejected_with_class() {
        let err = Fsmc::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![bsc(0.1), bsc(0.2)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("closed class") && msg.contains("{0}"), "{msg}");
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let err = Fsmc::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![bsc(0.1), bsc(0.2)]).unwrap_err();
        assert!(err.to_string().contains("period 2"), "{err}");
    }

    #[test]
    fn transient_state_names_closed_class() {
        let t = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]];
        let err = Fsmc::new(t, vec![bsc(0.1); 3]).unwrap_err();
        assert!(err.to_string().contains("{1, 2}"), "{err}");
    }

    #[test]
    fn strict_row_validation() {
        assert!(Fsmc::new(vec![vec![0.9, 0.1 + 1e-8], vec![0.5, 0.5]], vec![bsc(0.1); 2]).is_err());
        let ok = Fsmc::new(vec![vec![0.9, 0.1 + 1e-10], vec![0.5, 0.5]], vec![bsc(0.1); 2]).unwrap();
        assert!((ok.transition().row(0).sum() - 1.0).abs() < 1e-15);
        assert!(Fsmc::new(vec![vec![1.1, -0.1], vec![0.5, 0.5]], vec![bsc(0.1); 2]).is_err());
    }

    #[test]
    fn t_step_law_rejects_zero() {
        let f = Fsmc::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![bsc(0.1); 2]).unwrap();
        assert!(f.t_step_law(0).is_err());
        assert_eq!(f.t_step_law(1).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn ba_rejects_bad_input() {
        let w = vec![DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9])];
        assert!(weighted_ba(&w, &[0.5], 1e-9).is_err());
        assert!(weighted_ba(&w, &[1.0], 0.0).is_err());
        let bad = vec![DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.9])];
        assert!(weighted_ba(&bad, &[1.0], 1e-9).is_err());
    }

    #[test]
    fn ba_reports_cap() {
        let w = vec![DMatrix::from_row_slice(2, 3, &[0.7, 0.2, 0.1, 0.1, 0.3, 0.6])];
        match weighted_ba_capped(&w, &[1.0], 1e-12, 2) {
            Err(Error::Convergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("{other:?}"),
        }
    }
}
