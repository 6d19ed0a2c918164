//! Exact tabular pairwise chains over finite observation alphabets.
//!
//! These small models make every probability computable in closed form, so
//! they serve as ground truth for the neural filter's update rule. Three
//! independent routes to the filtered posterior live here:
//!
//! 1. [`enumerated_posteriors`]: raw summation of the joint law over all
//!    state prefixes, no recursion at all;
//! 2. [`recursive_posteriors`]: the forward recursion written literally in
//!    terms of conditional transition and emission factors;
//! 3. [`weight_filtered_posteriors`]: the exact weight function of
//!    [`ExactStepWeights`] pushed through the production posterior update.
//!
//! All three must agree wherever the observed sequence has positive
//! probability.

use super::{update_posterior_with_weights, FilterError, FilteredPosterior};
use rand::{Rng, RngExt};
use thiserror::Error;

/// Cap on the number of enumerated state prefixes per time step.
const MAX_ENUMERATION_PATHS: u128 = 1 << 24;

#[derive(Debug, Error)]
pub enum ExplicitError {
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("observed sequence has probability zero from step {step}")]
    DegenerateEvidence { step: usize },
    #[error("enumeration over {paths} state prefixes exceeds the cap")]
    TooLong { paths: u128 },
    #[error("symbol {symbol} out of range for alphabet of size {n_symbols}")]
    SymbolOutOfRange { symbol: usize, n_symbols: usize },
    #[error("empty observation sequence")]
    Empty,
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Fully tabulated pairwise chain: a joint initial law p(x_1, y_1) and a
/// joint transition kernel p(x_{t+1}, y_{t+1} | x_t, y_t).
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitPmc {
    pub n_states: usize,
    pub n_symbols: usize,
    /// p(x_1, y_1), indexed `x * n_symbols + y`; sums to 1.
    pub initial: Vec<f64>,
    /// p(x', y' | x, y), indexed `((x * n_symbols + y) * n_states + x') *
    /// n_symbols + y'`; each (x, y) slice sums to 1.
    pub transition: Vec<f64>,
}

impl ExplicitPmc {
    pub fn new(
        n_states: usize,
        n_symbols: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self, ExplicitError> {
        let model = Self {
            n_states,
            n_symbols,
            initial,
            transition,
        };
        model.validate()?;
        Ok(model)
    }

    /// Random chain with strictly positive entries, so every finite
    /// observation sequence has positive probability.
    pub fn random(n_states: usize, n_symbols: usize, rng: &mut impl Rng) -> Self {
        let initial = random_distribution(n_states * n_symbols, rng);
        let mut transition = Vec::with_capacity(n_states * n_symbols * n_states * n_symbols);
        for _ in 0..n_states * n_symbols {
            transition.extend(random_distribution(n_states * n_symbols, rng));
        }
        Self {
            n_states,
            n_symbols,
            initial,
            transition,
        }
    }

    /// Chain whose next pair (x', y') is independent of the current pair.
    pub fn independent(n_states: usize, n_symbols: usize, rng: &mut impl Rng) -> Self {
        let next = random_distribution(n_states * n_symbols, rng);
        let mut transition = Vec::with_capacity(n_states * n_symbols * next.len());
        for _ in 0..n_states * n_symbols {
            transition.extend(next.iter().copied());
        }
        Self {
            n_states,
            n_symbols,
            initial: random_distribution(n_states * n_symbols, rng),
            transition,
        }
    }

    /// Chain with every pair equally likely at all times.
    pub fn uniform(n_states: usize, n_symbols: usize) -> Self {
        let k = n_states * n_symbols;
        Self {
            n_states,
            n_symbols,
            initial: vec![1.0 / k as f64; k],
            transition: vec![1.0 / k as f64; k * k],
        }
    }

    pub fn validate(&self) -> Result<(), ExplicitError> {
        let k = self.n_states * self.n_symbols;
        if self.n_states == 0 || self.n_symbols == 0 {
            return Err(ExplicitError::InvalidTable(
                "state and symbol counts must be positive".into(),
            ));
        }
        if self.initial.len() != k || self.transition.len() != k * k {
            return Err(ExplicitError::InvalidTable(format!(
                "table sizes {}/{} do not match {k}/{}",
                self.initial.len(),
                self.transition.len(),
                k * k
            )));
        }
        check_distribution(&self.initial, "initial")?;
        for (i, row) in self.transition.chunks_exact(k).enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        Ok(())
    }

    #[inline]
    pub fn initial_prob(&self, x: usize, y: usize) -> f64 {
        self.initial[x * self.n_symbols + y]
    }

    #[inline]
    pub fn transition_prob(&self, x: usize, y: usize, x_next: usize, y_next: usize) -> f64 {
        let k = self.n_states * self.n_symbols;
        self.transition[(x * self.n_symbols + y) * k + x_next * self.n_symbols + y_next]
    }

    fn check_symbols(&self, observations: &[usize]) -> Result<(), ExplicitError> {
        if observations.is_empty() {
            return Err(ExplicitError::Empty);
        }
        for &y in observations {
            if y >= self.n_symbols {
                return Err(ExplicitError::SymbolOutOfRange {
                    symbol: y,
                    n_symbols: self.n_symbols,
                });
            }
        }
        Ok(())
    }

    /// Draws a latent path and its observations from the joint law.
    pub fn sample_path(&self, len: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        if len == 0 {
            return (states, symbols);
        }
        let first = sample_index(&self.initial, rng);
        states.push(first / self.n_symbols);
        symbols.push(first % self.n_symbols);
        let k = self.n_states * self.n_symbols;
        for _ in 1..len {
            let row_start =
                (states[states.len() - 1] * self.n_symbols + symbols[symbols.len() - 1]) * k;
            let pair = sample_index(&self.transition[row_start..row_start + k], rng);
            states.push(pair / self.n_symbols);
            symbols.push(pair % self.n_symbols);
        }
        (states, symbols)
    }
}

fn random_distribution(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

fn check_distribution(row: &[f64], what: &str) -> Result<(), ExplicitError> {
    for &p in row {
        if !(p.is_finite() && p >= 0.0) {
            return Err(ExplicitError::InvalidTable(format!("{what} has entry {p}")));
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ExplicitError::InvalidTable(format!("{what} sums to {sum}")));
    }
    Ok(())
}

fn sample_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Filtered posteriors by brute force: for each t, sums the joint density
/// of every state prefix x_{1:t} compatible with the observations. Costs
/// O(N^t) per step and is therefore only for small problems.
pub fn enumerated_posteriors(
    model: &ExplicitPmc,
    observations: &[usize],
) -> Result<Vec<FilteredPosterior>, ExplicitError> {
    model.validate()?;
    model.check_symbols(observations)?;
    let n = model.n_states;
    let paths = (n as u128).pow(observations.len() as u32);
    if paths > MAX_ENUMERATION_PATHS {
        return Err(ExplicitError::TooLong { paths });
    }
    let mut posteriors = Vec::with_capacity(observations.len());
    for t in 0..observations.len() {
        let mut unnorm = vec![0.0; n];
        let mut prefix = vec![0usize; t + 1];
        loop {
            let mut joint = model.initial_prob(prefix[0], observations[0]);
            for k in 1..=t {
                joint *= model.transition_prob(
                    prefix[k - 1],
                    observations[k - 1],
                    prefix[k],
                    observations[k],
                );
            }
            unnorm[prefix[t]] += joint;
            // Odometer over state prefixes of length t+1.
            let mut digit = 0;
            loop {
                if digit > t {
                    break;
                }
                prefix[digit] += 1;
                if prefix[digit] < n {
                    break;
                }
                prefix[digit] = 0;
                digit += 1;
            }
            if digit > t {
                break;
            }
        }
        let evidence: f64 = unnorm.iter().sum();
        if !(evidence.is_finite() && evidence > 0.0) {
            return Err(ExplicitError::DegenerateEvidence { step: t });
        }
        posteriors.push(FilteredPosterior::new(
            unnorm.iter().map(|p| p / evidence).collect(),
        )?);
    }
    Ok(posteriors)
}

/// Filtered posteriors by the forward recursion, written literally as a
/// product of the conditional next-state law and the conditional emission
/// law, each normalized step by step.
pub fn recursive_posteriors(
    model: &ExplicitPmc,
    observations: &[usize],
) -> Result<Vec<FilteredPosterior>, ExplicitError> {
    model.validate()?;
    model.check_symbols(observations)?;
    let n = model.n_states;
    let mut alpha: Vec<f64> = (0..n)
        .map(|x| model.initial_prob(x, observations[0]))
        .collect();
    let mut posteriors = Vec::with_capacity(observations.len());
    posteriors.push(normalize_step(&alpha, 0)?);
    alpha = posteriors[0].probs().to_vec();
    for t in 0..observations.len() - 1 {
        let (y, y_next) = (observations[t], observations[t + 1]);
        let mut next = vec![0.0; n];
        for x in 0..n {
            if alpha[x] == 0.0 {
                continue;
            }
            for x_next in 0..n {
                // p(x' | x, y) marginalizes the kernel over the next symbol.
                let state_law: f64 = (0..model.n_symbols)
                    .map(|yy| model.transition_prob(x, y, x_next, yy))
                    .sum();
                if state_law == 0.0 {
                    continue;
                }
                let emission = model.transition_prob(x, y, x_next, y_next) / state_law;
                next[x_next] += alpha[x] * state_law * emission;
            }
        }
        posteriors.push(normalize_step(&next, t + 1)?);
        alpha = posteriors[posteriors.len() - 1].probs().to_vec();
    }
    Ok(posteriors)
}

fn normalize_step(unnorm: &[f64], step: usize) -> Result<FilteredPosterior, ExplicitError> {
    let evidence: f64 = unnorm.iter().sum();
    if !(evidence.is_finite() && evidence > 0.0) {
        return Err(ExplicitError::DegenerateEvidence { step });
    }
    Ok(FilteredPosterior::new(
        unnorm.iter().map(|p| p / evidence).collect(),
    )?)
}

/// The exact transition weight function of a tabular chain, built from its
/// reference (time-1 style) conditionals:
///
/// ```text
/// w(x, x', y, y') = [p(x | y, y') / p(x | y)] · p(x' | x, y, y')
/// ```
///
/// Feeding these weights to the production posterior update reproduces the
/// exact filter, because the x-independent prefactor cancels in the
/// normalization.
#[derive(Debug, Clone)]
pub struct ExactStepWeights<'a> {
    model: &'a ExplicitPmc,
    /// q(y) = Σ_x p(x, y).
    symbol_marginal: Vec<f64>,
    /// s(x, y, y') = Σ_{x'} p(x', y' | x, y).
    next_symbol_given: Vec<f64>,
    /// j(x, y, y') = p(x, y) · s(x, y, y').
    pair_joint: Vec<f64>,
    /// m(y, y') = Σ_x j(x, y, y').
    pair_marginal: Vec<f64>,
}

impl<'a> ExactStepWeights<'a> {
    pub fn new(model: &'a ExplicitPmc) -> Result<Self, ExplicitError> {
        model.validate()?;
        let (n, a) = (model.n_states, model.n_symbols);
        let mut symbol_marginal = vec![0.0; a];
        for x in 0..n {
            for y in 0..a {
                symbol_marginal[y] += model.initial_prob(x, y);
            }
        }
        let mut next_symbol_given = vec![0.0; n * a * a];
        let mut pair_joint = vec![0.0; n * a * a];
        let mut pair_marginal = vec![0.0; a * a];
        for x in 0..n {
            for y in 0..a {
                for y_next in 0..a {
                    let s: f64 = (0..n)
                        .map(|xx| model.transition_prob(x, y, xx, y_next))
                        .sum();
                    let idx = (x * a + y) * a + y_next;
                    next_symbol_given[idx] = s;
                    pair_joint[idx] = model.initial_prob(x, y) * s;
                    pair_marginal[y * a + y_next] += pair_joint[idx];
                }
            }
        }
        Ok(Self {
            model,
            symbol_marginal,
            next_symbol_given,
            pair_joint,
            pair_marginal,
        })
    }

    /// p(x_1 | y_1) under the initial law.
    pub fn initial_posterior(&self, y: usize) -> Result<FilteredPosterior, ExplicitError> {
        let q = self.symbol_marginal[y];
        if q <= 0.0 {
            return Err(ExplicitError::DegenerateEvidence { step: 0 });
        }
        Ok(FilteredPosterior::new(
            (0..self.model.n_states)
                .map(|x| self.model.initial_prob(x, y) / q)
                .collect(),
        )?)
    }

    pub fn weight(
        &self,
        x: usize,
        x_next: usize,
        y: usize,
        y_next: usize,
    ) -> Result<f64, ExplicitError> {
        let a = self.model.n_symbols;
        let q = self.symbol_marginal[y];
        let m = self.pair_marginal[y * a + y_next];
        let idx = (x * a + y) * a + y_next;
        let s = self.next_symbol_given[idx];
        let state_given_symbol = self.model.initial_prob(x, y);
        if q <= 0.0 || m <= 0.0 || s <= 0.0 || state_given_symbol <= 0.0 {
            return Err(ExplicitError::DegenerateEvidence { step: 0 });
        }
        let state_given_pair = self.pair_joint[idx] / m;
        let next_state = self.model.transition_prob(x, y, x_next, y_next) / s;
        Ok(state_given_pair / (state_given_symbol / q) * next_state)
    }

    /// Row-major N×N weight matrix for one observed step.
    pub fn matrix(&self, y: usize, y_next: usize) -> Result<Vec<f64>, ExplicitError> {
        let n = self.model.n_states;
        let mut weights = Vec::with_capacity(n * n);
        for x in 0..n {
            for x_next in 0..n {
                weights.push(self.weight(x, x_next, y, y_next)?);
            }
        }
        Ok(weights)
    }
}

/// Filtered posteriors obtained by running the exact weight function
/// through the production posterior update, step by step.
pub fn weight_filtered_posteriors(
    model: &ExplicitPmc,
    observations: &[usize],
) -> Result<Vec<FilteredPosterior>, ExplicitError> {
    model.check_symbols(observations)?;
    let weights = ExactStepWeights::new(model)?;
    let mut posterior = weights.initial_posterior(observations[0])?;
    let mut posteriors = vec![posterior.clone()];
    for t in 0..observations.len() - 1 {
        let matrix = weights.matrix(observations[t], observations[t + 1])?;
        posterior = update_posterior_with_weights(&posterior, &matrix)?;
        posteriors.push(posterior.clone());
    }
    Ok(posteriors)
}

/// Classical hidden Markov model tables; convertible to the equivalent
/// pairwise chain for cross-checks against the standard forward filter.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmTables {
    pub n_states: usize,
    pub n_symbols: usize,
    /// π(x), length N.
    pub initial: Vec<f64>,
    /// a(x, x'), row-major N×N.
    pub transition: Vec<f64>,
    /// b(x, y), row-major N×A.
    pub emission: Vec<f64>,
}

impl HmmTables {
    pub fn random(n_states: usize, n_symbols: usize, rng: &mut impl Rng) -> Self {
        let initial = random_distribution(n_states, rng);
        let mut transition = Vec::with_capacity(n_states * n_states);
        let mut emission = Vec::with_capacity(n_states * n_symbols);
        for _ in 0..n_states {
            transition.extend(random_distribution(n_states, rng));
            emission.extend(random_distribution(n_symbols, rng));
        }
        Self {
            n_states,
            n_symbols,
            initial,
            transition,
            emission,
        }
    }

    /// Embeds the HMM as a pairwise chain:
    /// p(x_1, y_1) = π(x_1)·b(x_1, y_1) and
    /// p(x', y' | x, y) = a(x, x')·b(x', y').
    pub fn to_pairwise(&self) -> ExplicitPmc {
        let (n, a) = (self.n_states, self.n_symbols);
        let mut initial = vec![0.0; n * a];
        for x in 0..n {
            for y in 0..a {
                initial[x * a + y] = self.initial[x] * self.emission[x * a + y];
            }
        }
        let mut transition = vec![0.0; n * a * n * a];
        for x in 0..n {
            for y in 0..a {
                for x_next in 0..n {
                    for y_next in 0..a {
                        transition[(x * a + y) * n * a + x_next * a + y_next] =
                            self.transition[x * n + x_next] * self.emission[x_next * a + y_next];
                    }
                }
            }
        }
        ExplicitPmc {
            n_states: n,
            n_symbols: a,
            initial,
            transition,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[FilteredPosterior], b: &[FilteredPosterior]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .flat_map(|(pa, pb)| {
                pa.probs()
                    .iter()
                    .zip(pb.probs())
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Standard HMM forward filter, written directly from the textbook
    /// recursion so it shares nothing with the pairwise code paths.
    fn textbook_hmm_filter(hmm: &HmmTables, observations: &[usize]) -> Vec<Vec<f64>> {
        let (n, a) = (hmm.n_states, hmm.n_symbols);
        let mut alpha: Vec<f64> = (0..n)
            .map(|x| hmm.initial[x] * hmm.emission[x * a + observations[0]])
            .collect();
        let mut out = Vec::with_capacity(observations.len());
        let norm: f64 = alpha.iter().sum();
        out.push(alpha.iter().map(|v| v / norm).collect::<Vec<_>>());
        for &y in &observations[1..] {
            let mut next = vec![0.0; n];
            for x_next in 0..n {
                let mut acc = 0.0;
                for x in 0..n {
                    acc += alpha[x] * hmm.transition[x * n + x_next];
                }
                next[x_next] = acc * hmm.emission[x_next * a + y];
            }
            let norm: f64 = next.iter().sum();
            alpha = next.iter().map(|v| v / norm).collect();
            out.push(alpha.clone());
        }
        out
    }

    #[test]
    fn first_posterior_is_the_initial_row_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ExplicitPmc::random(3, 2, &mut rng);
        let posts = enumerated_posteriors(&model, &[1]).unwrap();
        let q: f64 = (0..3).map(|x| model.initial_prob(x, 1)).sum();
        for x in 0..3 {
            let expected = model.initial_prob(x, 1) / q;
            assert!((posts[0].probs()[x] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn recursion_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let n = rng.random_range(1..=3usize);
            let a = rng.random_range(2..=3usize);
            let model = ExplicitPmc::random(n, a, &mut rng);
            let (_, obs) = model.sample_path(7, &mut rng);
            let by_enum = enumerated_posteriors(&model, &obs).unwrap();
            let by_rec = recursive_posteriors(&model, &obs).unwrap();
            let diff = max_abs_diff(&by_enum, &by_rec);
            assert!(diff <= 1e-12, "trial {trial}: diff {diff}");
        }
    }

    #[test]
    fn weight_route_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = rng.random_range(1..=3usize);
            let a = rng.random_range(2..=3usize);
            let model = ExplicitPmc::random(n, a, &mut rng);
            let (_, obs) = model.sample_path(7, &mut rng);
            let by_enum = enumerated_posteriors(&model, &obs).unwrap();
            let by_weights = weight_filtered_posteriors(&model, &obs).unwrap();
            let diff = max_abs_diff(&by_enum, &by_weights);
            assert!(diff <= 1e-10, "trial {trial}: diff {diff}");
        }
    }

    #[test]
    fn independent_chain_forgets_its_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = ExplicitPmc::independent(3, 3, &mut rng);
        let a = enumerated_posteriors(&model, &[0, 1, 2]).unwrap();
        let b = enumerated_posteriors(&model, &[2, 0, 2]).unwrap();
        let diff: f64 = a[2]
            .probs()
            .iter()
            .zip(b[2].probs())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn uniform_chain_keeps_uniform_posteriors() {
        let model = ExplicitPmc::uniform(4, 2);
        let posts = enumerated_posteriors(&model, &[0, 1, 1, 0]).unwrap();
        for post in posts {
            for &p in post.probs() {
                assert!((p - 0.25).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hmm_embedding_matches_textbook_forward_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let hmm = HmmTables::random(3, 3, &mut rng);
            let model = hmm.to_pairwise();
            model.validate().unwrap();
            let (_, obs) = model.sample_path(8, &mut rng);
            let by_rec = recursive_posteriors(&model, &obs).unwrap();
            let reference = textbook_hmm_filter(&hmm, &obs);
            for (got, want) in by_rec.iter().zip(&reference) {
                for (g, w) in got.probs().iter().zip(want) {
                    assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn impossible_observation_reports_degenerate_evidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut model = ExplicitPmc::random(2, 2, &mut rng);
        // Make symbol 1 unreachable at time 1 and renormalize.
        for x in 0..2 {
            model.initial[x * 2 + 1] = 0.0;
        }
        let total: f64 = model.initial.iter().sum();
        for p in &mut model.initial {
            *p /= total;
        }
        assert!(matches!(
            enumerated_posteriors(&model, &[1, 0]),
            Err(ExplicitError::DegenerateEvidence { step: 0 })
        ));
    }

    #[test]
    fn validation_rejects_unnormalized_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = ExplicitPmc::random(2, 2, &mut rng);
        model.initial[0] += 0.5;
        assert!(matches!(
            model.validate(),
            Err(ExplicitError::InvalidTable(_))
        ));
    }

    #[test]
    fn sampled_paths_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = ExplicitPmc::random(3, 4, &mut rng);
        let (states, symbols) = model.sample_path(50, &mut rng);
        assert_eq!(states.len(), 50);
        assert_eq!(symbols.len(), 50);
        assert!(states.iter().all(|&x| x < 3));
        assert!(symbols.iter().all(|&y| y < 4));
    }

    #[test]
    fn enumeration_cap_guards_runaway_cost() {
        let model = ExplicitPmc::uniform(4, 2);
        let obs = vec![0usize; 20];
        assert!(matches!(
            enumerated_posteriors(&model, &obs),
            Err(ExplicitError::TooLong { .. })
        ));
    }
}
