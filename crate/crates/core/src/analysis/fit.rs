//! Maximum-likelihood calibration of the independence model.
//!
//! Per cell the two conversion probabilities have a closed-form estimate.
//! Across cells the product model `a = α_A·σ_B·δ_t`, `b = α_B·σ_A·δ_t` is fit
//! by cyclic coordinate ascent with a golden-section line search on each
//! coordinate.
//!
//! The product model has two scale degeneracies. `δ` of the first topic is
//! pinned to 1, and after fitting, assertiveness is rescaled so its maximum
//! is 1 (susceptibility absorbs the inverse factor). Neither changes the
//! likelihood.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{OutcomeCounts, OutcomeTally};
use crate::backend::synthetic::DEFAULT_EPSILON;
use crate::backend::{CellProbabilities, SyntheticParams};
use crate::error::{Error, Result};

/// Σ n_i ln p_i with `0 · ln 0 = 0`.
pub fn cell_log_likelihood(counts: &OutcomeCounts, dist: &[f64; 4]) -> f64 {
    counts
        .as_array()
        .iter()
        .zip(dist)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &p)| n as f64 * p.ln())
        .sum()
}

/// Closed-form MLE `(a, b)`: the fraction of dialogues in which each side
/// converted the other, bilateral outcomes counting for both.
pub fn cell_mle(tally: &OutcomeTally) -> Result<(f64, f64)> {
    let c = &tally.counts;
    let n = c.total();
    if n == 0 {
        return Err(Error::UndefinedProportion);
    }
    let n = n as f64;
    Ok((
        (c.a_convinces_b + c.bilateral_influence) as f64 / n,
        (c.b_convinces_a + c.bilateral_influence) as f64 / n,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub g: f64,
    pub degrees_of_freedom: u32,
}

/// Likelihood-ratio statistic `G = 2 Σ O ln(O/E)` of the counts against the
/// independence model at `(a, b)`. Four categories minus one constraint and
/// two fitted parameters leave one degree of freedom.
pub fn goodness_of_fit(tally: &OutcomeTally, a: f64, b: f64) -> Result<GoodnessOfFit> {
    let n = tally.counts.total();
    if n == 0 {
        return Err(Error::UndefinedProportion);
    }
    let dist = CellProbabilities::new(a, b)?.distribution();
    let g = tally
        .counts
        .as_array()
        .iter()
        .zip(dist)
        .filter(|(o, _)| **o > 0)
        .map(|(&o, p)| {
            let o = o as f64;
            let e = p * n as f64;
            if e > 0.0 {
                o * (o / e).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum::<f64>()
        * 2.0;
    Ok(GoodnessOfFit {
        g: g.max(0.0),
        degrees_of_freedom: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop once a full sweep improves the log-likelihood by less than this.
    pub convergence_delta: f64,
    pub epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            convergence_delta: 1e-9,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub pair: (u32, u32),
    pub topic: String,
    pub total: u64,
    pub mle_a: f64,
    pub mle_b: f64,
    /// G of the cell against its own MLE (tests independence).
    pub g_at_mle: f64,
    pub fitted_a: f64,
    pub fitted_b: f64,
    /// G of the cell against the trait-level fit.
    pub g_fitted: f64,
    pub degrees_of_freedom: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: SyntheticParams,
    pub log_likelihood: f64,
    pub cells: Vec<CellFit>,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the start and after every sweep.
    pub log_likelihood_trace: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Coord {
    Alpha(usize),
    Sigma(usize),
    Delta(usize),
}

struct Cell {
    a: usize,
    b: usize,
    topic: usize,
    counts: OutcomeCounts,
}

struct Model<'c> {
    cells: &'c [Cell],
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    eps: f64,
}

impl Model<'_> {
    fn probs(&self, cell: &Cell) -> (f64, f64) {
        let d = self.delta[cell.topic];
        let clamp = |x: f64| x.clamp(self.eps, 1.0 - self.eps);
        (
            clamp(self.alpha[cell.a] * self.sigma[cell.b] * d),
            clamp(self.alpha[cell.b] * self.sigma[cell.a] * d),
        )
    }

    fn cell_ll(&self, cell: &Cell) -> f64 {
        let (a, b) = self.probs(cell);
        let c = &cell.counts;
        // same as Σ n_i ln p_i over the four outcomes, grouped by factor
        let ln = |n: u64, p: f64| if n == 0 { 0.0 } else { n as f64 * p.ln() };
        ln(c.a_convinces_b + c.bilateral_influence, a)
            + ln(c.b_convinces_a + c.mutual_resistance, 1.0 - a)
            + ln(c.b_convinces_a + c.bilateral_influence, b)
            + ln(c.a_convinces_b + c.mutual_resistance, 1.0 - b)
    }

    fn ll_over(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&i| self.cell_ll(&self.cells[i])).sum()
    }

    fn total_ll(&self) -> f64 {
        self.cells.iter().map(|c| self.cell_ll(c)).sum()
    }

    fn slot(&mut self, coord: Coord) -> &mut f64 {
        match coord {
            Coord::Alpha(i) => &mut self.alpha[i],
            Coord::Sigma(i) => &mut self.sigma[i],
            Coord::Delta(i) => &mut self.delta[i],
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search.
fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Fits assertiveness, susceptibility and topic difficulty to the tallies.
///
/// `topic_order` fixes which topic carries the gauge `δ = 1`: the first one
/// in that order that has data. Topics absent from `topic_order` follow in
/// name order.
pub fn fit_trait_parameters(tallies: &[OutcomeTally], topic_order: &[String], config: &FitConfig) -> Result<FitResult> {
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
    }
    let usable: Vec<&OutcomeTally> = tallies.iter().filter(|t| t.counts.total() > 0).collect();
    if usable.is_empty() {
        return Err(Error::MissingData("no non-empty tallies to fit".into()));
    }

    let agents: Vec<u32> = usable
        .iter()
        .flat_map(|t| [t.pair.0, t.pair.1])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let present: BTreeSet<&str> = usable.iter().map(|t| t.topic.as_str()).collect();
    let mut topics: Vec<String> = topic_order
        .iter()
        .filter(|t| present.contains(t.as_str()))
        .cloned()
        .collect();
    for t in &present {
        if !topics.iter().any(|x| x == t) {
            topics.push(t.to_string());
        }
    }

    let agent_idx = |id: u32| agents.binary_search(&id).expect("agent collected above");
    let topic_idx = |name: &str| topics.iter().position(|t| t == name).expect("topic collected above");

    // merge duplicate cells
    let mut merged: BTreeMap<(usize, usize, usize), OutcomeCounts> = BTreeMap::new();
    for t in &usable {
        merged
            .entry((agent_idx(t.pair.0), agent_idx(t.pair.1), topic_idx(&t.topic)))
            .or_default()
            .merge(&t.counts);
    }
    let cells: Vec<Cell> = merged
        .into_iter()
        .map(|((a, b, topic), counts)| Cell { a, b, topic, counts })
        .collect();

    let eps = config.epsilon;
    let mean_conversion = cells
        .iter()
        .map(|c| {
            let n = c.counts.total() as f64;
            (c.counts.a_convinces_b + c.counts.b_convinces_a + 2 * c.counts.bilateral_influence) as f64 / (2.0 * n)
        })
        .sum::<f64>()
        / cells.len() as f64;
    let start = mean_conversion.sqrt().clamp(0.05, 0.95);

    let mut model = Model {
        cells: &cells,
        alpha: vec![start; agents.len()],
        sigma: vec![start; agents.len()],
        delta: vec![1.0; topics.len()],
        eps,
    };

    // coordinate -> cells it appears in
    let mut coords: Vec<(Coord, Vec<usize>)> = Vec::new();
    for i in 0..agents.len() {
        let touching: Vec<usize> = (0..cells.len()).filter(|&k| cells[k].a == i || cells[k].b == i).collect();
        if !touching.is_empty() {
            coords.push((Coord::Alpha(i), touching.clone()));
            coords.push((Coord::Sigma(i), touching));
        }
    }
    for t in 1..topics.len() {
        let touching: Vec<usize> = (0..cells.len()).filter(|&k| cells[k].topic == t).collect();
        coords.push((Coord::Delta(t), touching));
    }

    let mut ll = model.total_ll();
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let before = ll;
        for (coord, touching) in &coords {
            let current = *model.slot(*coord);
            let old_part = model.ll_over(touching);
            let best = golden_section_max(
                |x| {
                    *model.slot(*coord) = x;
                    model.ll_over(touching)
                },
                eps,
                1.0 - eps,
                1e-10,
            );
            *model.slot(*coord) = best;
            if model.ll_over(touching) < old_part {
                *model.slot(*coord) = current;
            }
        }
        ll = model.total_ll();
        trace.push(ll);
        if ll - before < config.convergence_delta {
            converged = true;
            break;
        }
    }

    // scale gauge: max assertiveness = 1
    let max_alpha = model.alpha.iter().cloned().fold(0.0, f64::max);
    if max_alpha > 0.0 {
        for x in &mut model.alpha {
            *x /= max_alpha;
        }
        for x in &mut model.sigma {
            *x *= max_alpha;
        }
    }
    let log_likelihood = model.total_ll();

    let mut cell_fits = Vec::with_capacity(cells.len());
    for cell in &cells {
        let tally = OutcomeTally::new((agents[cell.a], agents[cell.b]), topics[cell.topic].clone(), cell.counts);
        let (mle_a, mle_b) = cell_mle(&tally)?;
        let (fitted_a, fitted_b) = model.probs(cell);
        cell_fits.push(CellFit {
            pair: tally.pair,
            topic: tally.topic.clone(),
            total: tally.total,
            mle_a,
            mle_b,
            g_at_mle: goodness_of_fit(&tally, mle_a, mle_b)?.g,
            fitted_a,
            fitted_b,
            g_fitted: goodness_of_fit(&tally, fitted_a, fitted_b)?.g,
            degrees_of_freedom: 1,
        });
    }

    let params = SyntheticParams {
        assertiveness: agents.iter().copied().zip(model.alpha.iter().copied()).collect(),
        susceptibility: agents.iter().copied().zip(model.sigma.iter().copied()).collect(),
        topic_difficulty: topics.iter().cloned().zip(model.delta.iter().copied()).collect(),
        epsilon: eps,
    };
    Ok(FitResult {
        params,
        log_likelihood,
        cells: cell_fits,
        iterations,
        converged,
        log_likelihood_trace: trace,
    })
}
