//! Measure-dependent transition kernels `mu -> P_mu`, the law flow
//! `mu_{n+1} = mu_n P_{mu_n}` and k-step composition along that flow.

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::measure::{check_dims, Distribution};

/// Tolerance on row sums of an evaluated kernel.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Negative entries no smaller than `-CLAMP_TOL` are treated as zero.
pub const CLAMP_TOL: f64 = 1e-12;
/// Tolerance on affine-kernel constraints at construction.
pub const AFFINE_TOL: f64 = 1e-12;

/// Row-stochastic `N x N` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates a row-major matrix. Entries in `[-CLAMP_TOL, 0)` are clamped
    /// to zero and every row is rescaled to unit sum; anything else outside
    /// the tolerances is an error naming the (1-based) row.
    pub fn new(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "matrix needs at least one state".into(),
            ));
        }
        check_dims(n * n, data.len())?;
        for (i, row) in data.chunks_mut(n).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonStochasticRow {
                        row: i + 1,
                        detail: format!("entry {} is not finite", j + 1),
                    });
                }
                if *v < 0.0 {
                    if *v < -CLAMP_TOL {
                        return Err(Error::NonStochasticRow {
                            row: i + 1,
                            detail: format!("entry {} is negative ({v})", j + 1),
                        });
                    }
                    *v = 0.0;
                }
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochasticRow {
                    row: i + 1,
                    detail: format!("row sums to {s}, expected 1"),
                });
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dims(n, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(n, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &StochasticMatrix) -> Result<StochasticMatrix> {
        check_dims(self.n, other.n)?;
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[l * n + j];
                }
            }
        }
        Ok(StochasticMatrix { n, data })
    }

    /// Row vector product `mu * self`.
    pub fn push_forward(&self, mu: &Distribution) -> Result<Distribution> {
        check_dims(self.n, mu.n_states())?;
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &p) in mu.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += p * v;
            }
        }
        Distribution::from_weights(out)
    }

    pub fn power(&self, k: usize) -> StochasticMatrix {
        (0..k).fold(StochasticMatrix::identity(self.n), |acc, _| {
            acc.matmul(self).expect("same dimension")
        })
    }
}

/// Kernel whose entries are affine in the measure:
/// `P_mu(i, j) = b_ij + sum_l c_ijl mu_l`.
///
/// Construction enforces unit base row sums, zero coefficient sums over `j`
/// (so row sums never depend on `mu`) and non-negativity at every vertex
/// measure, which by affinity gives non-negativity on the whole simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineKernel {
    n: usize,
    base: Vec<f64>,
    coeff: Vec<f64>,
}

impl AffineKernel {
    /// `base[i][j]` and `coeff[i][j][l]`, all 0-based. Error messages use
    /// 1-based state numbers.
    pub fn new(base: Vec<Vec<f64>>, coeff: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = base.len();
        if n == 0 {
            return Err(Error::InvalidKernel("kernel has no states".into()));
        }
        let mut flat_base = Vec::with_capacity(n * n);
        for (i, row) in base.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidKernel(format!(
                    "base row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            flat_base.extend_from_slice(row);
        }
        if coeff.len() != n {
            return Err(Error::InvalidKernel(format!(
                "coeff has {} rows, expected {n}",
                coeff.len()
            )));
        }
        let mut flat_coeff = Vec::with_capacity(n * n * n);
        for (i, plane) in coeff.iter().enumerate() {
            if plane.len() != n {
                return Err(Error::InvalidKernel(format!(
                    "coeff[{}] has {} entries, expected {n}",
                    i + 1,
                    plane.len()
                )));
            }
            for (j, cs) in plane.iter().enumerate() {
                if cs.len() != n {
                    return Err(Error::InvalidKernel(format!(
                        "coeff[{}][{}] has {} entries, expected {n}",
                        i + 1,
                        j + 1,
                        cs.len()
                    )));
                }
                flat_coeff.extend_from_slice(cs);
            }
        }
        let kernel = Self {
            n,
            base: flat_base,
            coeff: flat_coeff,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Kernel with a vanishing coefficient tensor, i.e. an ordinary
    /// (linear) Markov chain.
    pub fn measure_independent(base: Vec<Vec<f64>>) -> Result<Self> {
        let n = base.len();
        Self::new(base, vec![vec![vec![0.0; n]; n]; n])
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if let Some(v) = self.base.iter().chain(&self.coeff).find(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel(format!("non-finite entry {v}")));
        }
        for i in 0..n {
            let s: f64 = (0..n).map(|j| self.base(i, j)).sum();
            if (s - 1.0).abs() > AFFINE_TOL {
                return Err(Error::InvalidKernel(format!(
                    "base row {} sums to {s}, expected 1",
                    i + 1
                )));
            }
        }
        for i in 0..n {
            for l in 0..n {
                let s: f64 = (0..n).map(|j| self.coeff(i, j, l)).sum();
                if s.abs() > AFFINE_TOL {
                    return Err(Error::InvalidKernel(format!(
                        "coeff[{i1}][*][{l1}] sums to {s}, expected 0: row {i1} of P_mu would not sum \
                         to 1 for every mu (its sum would depend on mu through state {l1})",
                        i1 = i + 1,
                        l1 = l + 1
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = self.base(i, j) + self.coeff(i, j, l);
                    if v < -AFFINE_TOL {
                        return Err(Error::InvalidKernel(format!(
                            "entry ({}, {}) of P_mu is {v} < 0 at the vertex measure on state {}",
                            i + 1,
                            j + 1,
                            l + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn base(&self, i: usize, j: usize) -> f64 {
        self.base[i * self.n + j]
    }

    pub fn coeff(&self, i: usize, j: usize, l: usize) -> f64 {
        self.coeff[(i * self.n + j) * self.n + l]
    }

    pub fn base_rows(&self) -> Vec<Vec<f64>> {
        self.base.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn coeff_tensor(&self) -> Vec<Vec<Vec<f64>>> {
        self.coeff
            .chunks(self.n * self.n)
            .map(|plane| plane.chunks(self.n).map(<[f64]>::to_vec).collect())
            .collect()
    }

    pub fn is_measure_independent(&self) -> bool {
        self.coeff.iter().all(|&c| c == 0.0)
    }

    pub fn evaluate(&self, mu: &Distribution) -> Result<StochasticMatrix> {
        check_dims(self.n, mu.n_states())?;
        let n = self.n;
        let m = mu.probs();
        let mut data = self.base.clone();
        for (ij, entry) in data.iter_mut().enumerate() {
            let cs = &self.coeff[ij * n..(ij + 1) * n];
            *entry += cs.iter().zip(m).map(|(c, p)| c * p).sum::<f64>();
        }
        StochasticMatrix::new(n, data)
    }
}

type SharedFn = dyn Fn(&Distribution) -> Vec<f64> + Send + Sync;
type SerialFn = dyn FnMut(&Distribution) -> Vec<f64> + Send;

#[derive(Clone)]
enum Inner {
    Affine(Arc<AffineKernel>),
    Shared(Arc<SharedFn>),
    Serialized(Arc<Mutex<SerialFn>>),
}

/// A nonlinear transition kernel: either an [`AffineKernel`] or an opaque
/// evaluator returning a row-major `N x N` matrix for each measure.
///
/// Handles are cheap to clone and safe to share across threads. Evaluators
/// that are not reentrant go through [`KernelHandle::black_box_serialized`],
/// which funnels every call through a mutex.
#[derive(Clone)]
pub struct KernelHandle {
    n: usize,
    inner: Inner,
}

impl fmt::Debug for KernelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.inner {
            Inner::Affine(_) => "affine",
            Inner::Shared(_) => "black-box",
            Inner::Serialized(_) => "black-box (serialized)",
        };
        f.debug_struct("KernelHandle")
            .field("n_states", &self.n)
            .field("kind", &kind)
            .finish()
    }
}

impl From<AffineKernel> for KernelHandle {
    fn from(k: AffineKernel) -> Self {
        Self {
            n: k.n_states(),
            inner: Inner::Affine(Arc::new(k)),
        }
    }
}

impl KernelHandle {
    /// Wraps a pure, thread-safe evaluator.
    pub fn black_box<F>(n_states: usize, f: F) -> Self
    where
        F: Fn(&Distribution) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            n: n_states,
            inner: Inner::Shared(Arc::new(f)),
        }
    }

    /// Wraps an evaluator that must not be called concurrently.
    pub fn black_box_serialized<F>(n_states: usize, f: F) -> Self
    where
        F: FnMut(&Distribution) -> Vec<f64> + Send + 'static,
    {
        Self {
            n: n_states,
            inner: Inner::Serialized(Arc::new(Mutex::new(f))),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn as_affine(&self) -> Option<&AffineKernel> {
        match &self.inner {
            Inner::Affine(k) => Some(k),
            _ => None,
        }
    }

    /// The matrix `P_mu`.
    pub fn evaluate(&self, mu: &Distribution) -> Result<StochasticMatrix> {
        check_dims(self.n, mu.n_states())?;
        match &self.inner {
            Inner::Affine(k) => k.evaluate(mu),
            Inner::Shared(f) => StochasticMatrix::new(self.n, f(mu)),
            Inner::Serialized(f) => {
                let data = {
                    let mut guard = f.lock().unwrap_or_else(|e| e.into_inner());
                    guard(mu)
                };
                StochasticMatrix::new(self.n, data)
            }
        }
    }

    /// One step of the law flow, `mu P_mu`.
    pub fn step(&self, mu: &Distribution) -> Result<Distribution> {
        self.evaluate(mu)?.push_forward(mu)
    }

    /// `[mu_0, mu_1, ..., mu_n]`.
    pub fn law_flow(&self, mu0: &Distribution, n: usize) -> Result<Vec<Distribution>> {
        check_dims(self.n, mu0.n_states())?;
        let mut flow = Vec::with_capacity(n + 1);
        flow.push(mu0.clone());
        for t in 0..n {
            let next = self.step(&flow[t])?;
            flow.push(next);
        }
        Ok(flow)
    }

    /// `Q_mu = P_mu P_{mu_1} ... P_{mu_{k-1}}` with `mu_t` taken from the law
    /// flow started at `mu`.
    pub fn k_step_kernel(&self, mu: &Distribution, k: usize) -> Result<StochasticMatrix> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let first = self.evaluate(mu)?;
        let mut current = first.push_forward(mu)?;
        let mut q = first;
        for _ in 1..k {
            let p = self.evaluate(&current)?;
            current = p.push_forward(&current)?;
            q = q.matmul(&p)?;
        }
        Ok(q)
    }
}
