//! Single-worker dense reference solver.
//!
//! Evaluates the split step directly: a scalar-loop Taylor exponential for
//! the unitary half and a dense superoperator sum over explicit jump
//! matrices for the non-unitary half. The arithmetic here deliberately
//! shares no code with the distributed path (its own multiply, adjoint, and
//! series loops) so agreement between the two is a genuine cross-check.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Channel;
use crate::tensor::ComplexMatrix;

/// Largest dimension the dense reference will accept.
pub const DEFAULT_ORACLE_CAP: usize = 256;

/// Dense trajectory with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// `rho(t)` snapshots including the initial state.
    pub states: Vec<ComplexMatrix>,
    pub traces: Vec<f64>,
    pub herm_defects: Vec<f64>,
    /// Populations per excitation sector and step.
    pub sector_populations: Vec<Vec<f64>>,
}

fn zero(n: usize) -> Vec<Vec<Complex64>> {
    vec![vec![Complex64::new(0.0, 0.0); n]; n]
}

fn to_rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

fn from_rows(rows: &[Vec<Complex64>]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Textbook i-j-k product, independent of the block kernel.
fn mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let mut out = zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, row) in b.iter().enumerate() {
                acc += a[i][k] * row[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn dagger(a: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let mut out = zero(n);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

/// Truncated `exp(-i H dt)` via a plain scalar Taylor loop.
fn taylor_exponential(h: &[Vec<Complex64>], dt: f64, k_max: usize) -> Vec<Vec<Complex64>> {
    let n = h.len();
    let mut base = zero(n);
    for i in 0..n {
        for j in 0..n {
            base[i][j] = Complex64::new(0.0, -dt) * h[i][j];
        }
    }
    let mut out = zero(n);
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    let mut term = out.clone();
    for k in 1..=k_max {
        term = mul(&term, &base);
        let inv = Complex64::new(1.0 / (1..=k).map(|x| x as f64).product::<f64>(), 0.0);
        for i in 0..n {
            for j in 0..n {
                out[i][j] += inv * term[i][j];
            }
        }
    }
    out
}

/// Dense reference stepper with the propagator built once per run.
pub struct DenseOracle {
    l: Vec<Vec<Complex64>>,
    l_dag: Vec<Vec<Complex64>>,
    channels: Vec<Channel>,
    dt: f64,
    dim: usize,
}

impl DenseOracle {
    pub fn new(
        h: &ComplexMatrix,
        channels: &[Channel],
        dt: f64,
        k_max: usize,
        cap: usize,
    ) -> Result<Self> {
        let dim = h.rows();
        if dim > cap {
            return Err(Error::OracleCap { dim, cap });
        }
        for ch in channels {
            if ch.source >= dim || ch.target >= dim {
                return Err(Error::IndexOutOfRange {
                    index: ch.source.max(ch.target),
                    dim,
                });
            }
        }
        let hrows = to_rows(h);
        let l = taylor_exponential(&hrows, dt, k_max);
        let l_dag = dagger(&l);
        Ok(Self {
            l,
            l_dag,
            channels: channels.to_vec(),
            dt,
            dim,
        })
    }

    /// One split step: `rho_mid = L rho L^dag`, then the dense first-order
    /// channel sum applied to `rho_mid`.
    pub fn step(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let r = to_rows(rho);
        let mid = mul(&self.l, &mul(&r, &self.l_dag));
        let n = self.dim;

        let mut out = mid.clone();
        for ch in &self.channels {
            // jump matrix |target><source|
            let mut a = zero(n);
            a[ch.target][ch.source] = Complex64::new(1.0, 0.0);
            let a_dag = dagger(&a);

            let gd = Complex64::new(ch.gamma * self.dt, 0.0);
            let gpd = Complex64::new(ch.gamma_prime * self.dt, 0.0);
            let half = Complex64::new(0.5, 0.0);

            let a_mid_adag = mul(&a, &mul(&mid, &a_dag));
            let adag_a = mul(&a_dag, &a);
            let anti_loss_l = mul(&adag_a, &mid);
            let anti_loss_r = mul(&mid, &adag_a);

            let adag_mid_a = mul(&a_dag, &mul(&mid, &a));
            let a_adag = mul(&a, &a_dag);
            let anti_in_l = mul(&a_adag, &mid);
            let anti_in_r = mul(&mid, &a_adag);

            for i in 0..n {
                for j in 0..n {
                    out[i][j] += gd * (a_mid_adag[i][j] - half * (anti_loss_l[i][j] + anti_loss_r[i][j]))
                        + gpd
                            * (adag_mid_a[i][j] - half * (anti_in_l[i][j] + anti_in_r[i][j]));
                }
            }
        }
        from_rows(&out)
    }

    /// Run `steps` iterations recording diagnostics; `sector_of` maps a
    /// basis index to its excitation sector.
    pub fn run(
        &self,
        rho0: &ComplexMatrix,
        steps: usize,
        sector_of: &[usize],
    ) -> Result<OracleResult> {
        if rho0.rows() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "oracle_run",
                left: rho0.shape(),
                right: (self.dim, self.dim),
            });
        }
        let sectors = sector_of.iter().copied().max().map_or(1, |m| m + 1);
        let mut result = OracleResult {
            states: Vec::with_capacity(steps + 1),
            traces: Vec::with_capacity(steps + 1),
            herm_defects: Vec::with_capacity(steps + 1),
            sector_populations: Vec::with_capacity(steps + 1),
        };
        let mut rho = rho0.clone();
        for step in 0..=steps {
            if step > 0 {
                rho = self.step(&rho);
            }
            result.traces.push(rho.trace().re);
            result.herm_defects.push(rho.hermiticity_defect());
            let mut pops = vec![0.0; sectors];
            for (i, &s) in sector_of.iter().enumerate() {
                pops[s] += rho.get(i, i).re;
            }
            result.sector_populations.push(pops);
            result.states.push(rho.clone());
        }
        Ok(result)
    }
}

/// One-shot dense split step (builds the propagator each call).
pub fn dense_step(
    rho: &ComplexMatrix,
    h: &ComplexMatrix,
    channels: &[Channel],
    dt: f64,
    k_max: usize,
) -> Result<ComplexMatrix> {
    let oracle = DenseOracle::new(h, channels, dt, k_max, DEFAULT_ORACLE_CAP)?;
    Ok(oracle.step(rho))
}
