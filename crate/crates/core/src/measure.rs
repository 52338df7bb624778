//! Probability vectors on a finite state space and the total variation metric.
//!
//! Total variation uses the mass-2 convention throughout the crate:
//! `tv(mu, nu) = sum_i |mu_i - nu_i| = 2 sup_A |mu(A) - nu(A)|`, so distances
//! lie in `[0, 2]`.

use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a [`Distribution`] at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability vector over `N >= 1` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates `probs` and renormalizes it by its sum.
    ///
    /// Entries must be finite and non-negative and must sum to one within
    /// [`NORMALIZATION_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no states".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "entry {} is {p}, expected a finite non-negative value",
                    i + 1
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self::normalize(probs, total))
    }

    /// Builds a distribution from non-negative weights of arbitrary positive
    /// total mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no states".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights have zero mass".into()));
        }
        Ok(Self::normalize(weights, total))
    }

    pub fn uniform(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidArgument("n_states must be at least 1".into()));
        }
        Ok(Self {
            probs: vec![1.0 / n_states as f64; n_states],
        })
    }

    /// Unit mass on `state` (0-based).
    pub fn vertex(n_states: usize, state: usize) -> Result<Self> {
        if state >= n_states {
            return Err(Error::InvalidArgument(format!(
                "state {state} out of range for {n_states} states"
            )));
        }
        let mut probs = vec![0.0; n_states];
        probs[state] = 1.0;
        Ok(Self { probs })
    }

    fn normalize(mut probs: Vec<f64>, total: f64) -> Self {
        for p in &mut probs {
            // also turns -0.0 into 0.0
            *p = (*p / total).max(0.0);
        }
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// True when all mass sits on a single state.
    pub fn is_vertex(&self) -> bool {
        self.probs.contains(&1.0)
    }

    /// Expectation of `values` (one per state) under this distribution.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        check_dims(self.n_states(), values.len())?;
        Ok(self.probs.iter().zip(values).map(|(p, v)| p * v).sum())
    }
}

impl Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// L1 distance between two equal-length rows. Callers check lengths.
pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Total variation distance in the mass-2 convention, in `[0, 2]`.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    check_dims(mu.n_states(), nu.n_states())?;
    Ok(l1(&mu.probs, &nu.probs))
}

/// All lattice points of the probability simplex with denominator
/// `resolution`.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    n_states: usize,
    resolution: usize,
    points: Vec<Distribution>,
}

impl SimplexGrid {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[Distribution] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Enumerates every composition of `resolution` into `n_states` parts,
/// divided by `resolution`. The grid has `C(resolution + n_states - 1,
/// n_states - 1)` points and always contains the simplex vertices.
pub fn simplex_grid(n_states: usize, resolution: usize) -> Result<SimplexGrid> {
    if n_states == 0 || resolution == 0 {
        return Err(Error::InvalidArgument(
            "simplex grid needs n_states >= 1 and resolution >= 1".into(),
        ));
    }
    let mut points = Vec::new();
    let mut parts = vec![0usize; n_states];
    compositions(resolution, 0, &mut parts, &mut |c| {
        let weights = c.iter().map(|&k| k as f64).collect();
        // weights sum to `resolution > 0`, so this cannot fail
        points.push(Distribution::from_weights(weights).expect("positive mass"));
    });
    Ok(SimplexGrid {
        n_states,
        resolution,
        points,
    })
}

fn compositions(
    remaining: usize,
    idx: usize,
    parts: &mut [usize],
    emit: &mut impl FnMut(&[usize]),
) {
    if idx + 1 == parts.len() {
        parts[idx] = remaining;
        emit(parts);
        return;
    }
    for k in (0..=remaining).rev() {
        parts[idx] = k;
        compositions(remaining - k, idx + 1, parts, emit);
    }
}

/// Draws `count` points uniformly from the simplex (flat Dirichlet) using a
/// ChaCha8 generator seeded with `seed`.
pub fn sample_dirichlet(n_states: usize, count: usize, seed: u64) -> Result<Vec<Distribution>> {
    if n_states == 0 {
        return Err(Error::InvalidArgument("n_states must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let weights: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
        if let Ok(d) = Distribution::from_weights(weights) {
            out.push(d);
        }
    }
    Ok(out)
}
