//! Sparse non-unitary updates: one point transfer plus row/column sweeps per
//! channel.
//!
//! For an elementary jump `|j><i|` the first-order step reduces to six
//! sub-updates, all reading the pre-step snapshot:
//! loss: `rho[j][j] += gamma*dt * old[i][i]`, row `i` and column `i` each
//! lose `gamma*dt/2` of their old value; influx mirrors this with
//! `gamma'*dt` from `j` back to `i`. Row and column sweeps only touch data
//! local to the owning processors; the point transfers are the sole
//! communication and connect diagonal grid positions.
//!
//! All channels of a step read the same snapshot, so their contributions are
//! additive and the application order is irrelevant.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{CommKind, DistributedMatrix, Grid};
use crate::model::Channel;
use crate::tensor::ComplexMatrix;

/// One channel with rates already scaled by the time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub gamma_dt: f64,
    pub gamma_prime_dt: f64,
}

/// Validated per-step channel list for a fixed matrix dimension.
#[derive(Debug, Clone)]
pub struct ChannelUpdatePlan {
    entries: Vec<PlanEntry>,
    dim: usize,
}

impl ChannelUpdatePlan {
    /// Scale model channels by `dt` and validate first-order Euler bounds:
    /// `0 < gamma*dt < 1` and `0 <= gamma'*dt < gamma*dt`.
    pub fn from_channels(channels: &[Channel], dt: f64, dim: usize) -> Result<Self> {
        let entries = channels
            .iter()
            .map(|ch| {
                let e = PlanEntry {
                    source: ch.source,
                    target: ch.target,
                    gamma_dt: ch.gamma * dt,
                    gamma_prime_dt: ch.gamma_prime * dt,
                };
                check_indices(&e, dim)?;
                if !(e.gamma_dt > 0.0 && e.gamma_dt < 1.0)
                    || e.gamma_prime_dt < 0.0
                    || e.gamma_prime_dt >= e.gamma_dt
                {
                    return Err(Error::InvalidRates {
                        gamma_dt: e.gamma_dt,
                        gamma_prime_dt: e.gamma_prime_dt,
                    });
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, dim })
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn check_indices(e: &PlanEntry, dim: usize) -> Result<()> {
    if e.source == e.target {
        return Err(Error::InvalidChannel {
            src: e.source,
            dst: e.target,
            dim,
            reason: "source and target coincide",
        });
    }
    for idx in [e.source, e.target] {
        if idx >= dim {
            return Err(Error::IndexOutOfRange { index: idx, dim });
        }
    }
    Ok(())
}

/// Apply a single channel update to the distributed density matrix.
pub fn apply_channel(
    rho: &mut DistributedMatrix,
    entry: &PlanEntry,
    grid: &mut Grid,
) -> Result<()> {
    check_indices(entry, rho.dim())?;
    apply_entries(rho, std::slice::from_ref(entry), grid)
}

/// Apply every channel of the plan against one shared snapshot.
pub fn apply_all_channels(
    rho: &mut DistributedMatrix,
    plan: &ChannelUpdatePlan,
    grid: &mut Grid,
) -> Result<()> {
    if plan.dim != rho.dim() {
        return Err(Error::ShapeMismatch {
            op: "apply_all_channels",
            left: (plan.dim, plan.dim),
            right: (rho.dim(), rho.dim()),
        });
    }
    apply_entries(rho, &plan.entries, grid)
}

fn apply_entries(
    rho: &mut DistributedMatrix,
    entries: &[PlanEntry],
    grid: &mut Grid,
) -> Result<()> {
    if rho.side() != grid.side() {
        return Err(Error::PartitionMismatch {
            op: "apply_all_channels",
            left: (rho.side(), rho.dim()),
            right: (grid.side(), rho.dim()),
        });
    }
    if entries.is_empty() {
        return Ok(());
    }
    assert!(rho.is_home_placed(), "density matrix must sit at home placement");

    let part = rho.partition().clone();
    let side = part.side();
    let diag_pos = |block: usize| block * side + block;
    let snapshot: Vec<ComplexMatrix> = rho.slots().iter().map(|s| s.data.clone()).collect();

    // send sub-phase: diagonal owners publish the old diagonal values that
    // remote channel endpoints need
    {
        let mut view: Vec<&ComplexMatrix> = snapshot.iter().collect();
        grid.phase(&mut view, |ctx, old| {
            let (br, bc) = ctx.coords();
            if br != bc {
                return;
            }
            let rows = part.range(br);
            for (ci, e) in entries.iter().enumerate() {
                let bi = part.block_of(e.source);
                let bj = part.block_of(e.target);
                if e.gamma_dt != 0.0 && bi == br && bj != br {
                    let local = e.source - rows.start;
                    let value = old.get(local, local);
                    ctx.send_scalar(diag_pos(bj), fwd_tag(ci), value, CommKind::Point);
                }
                if e.gamma_prime_dt != 0.0 && bj == br && bi != br {
                    let local = e.target - rows.start;
                    let value = old.get(local, local);
                    ctx.send_scalar(diag_pos(bi), rev_tag(ci), value, CommKind::Point);
                }
            }
        });
    }

    // apply sub-phase: drain incoming scalars, then run the six sub-updates
    // per channel in plan order, every read taken from the snapshot
    let mut work: Vec<(&mut ComplexMatrix, &ComplexMatrix)> = rho
        .slots_mut()
        .iter_mut()
        .map(|s| &mut s.data)
        .zip(snapshot.iter())
        .collect();
    grid.phase(&mut work, |ctx, (new, old)| {
        let (br, bc) = ctx.coords();
        let rows = part.range(br);
        let cols = part.range(bc);

        let mut inbound: HashMap<u64, Complex64> = HashMap::new();
        if br == bc {
            for (ci, e) in entries.iter().enumerate() {
                let bi = part.block_of(e.source);
                let bj = part.block_of(e.target);
                if e.gamma_dt != 0.0 && bj == br && bi != br {
                    let v = ctx.recv_scalar(diag_pos(bi), fwd_tag(ci));
                    inbound.insert(fwd_tag(ci), v);
                }
                if e.gamma_prime_dt != 0.0 && bi == br && bj != br {
                    let v = ctx.recv_scalar(diag_pos(bj), rev_tag(ci));
                    inbound.insert(rev_tag(ci), v);
                }
            }
        }

        ctx.time_mac(|| {
            for (ci, e) in entries.iter().enumerate() {
                let g_half = 0.5 * e.gamma_dt;
                let gp_half = 0.5 * e.gamma_prime_dt;

                // loss: row i and column i decay
                if e.gamma_dt != 0.0 {
                    subtract_row(new, old, &rows, e.source, g_half);
                    subtract_col(new, old, &cols, e.source, g_half);
                }
                // influx: row j and column j decay
                if e.gamma_prime_dt != 0.0 {
                    subtract_row(new, old, &rows, e.target, gp_half);
                    subtract_col(new, old, &cols, e.target, gp_half);
                }
                if br != bc {
                    continue;
                }
                // point gains live on diagonal blocks only
                if e.gamma_dt != 0.0 && rows.contains(&e.target) {
                    let old_ii = if rows.contains(&e.source) {
                        let local = e.source - rows.start;
                        old.get(local, local)
                    } else {
                        inbound[&fwd_tag(ci)]
                    };
                    let local = e.target - rows.start;
                    let gain = Complex64::new(e.gamma_dt, 0.0) * old_ii;
                    new.set(local, local, new.get(local, local) + gain);
                }
                if e.gamma_prime_dt != 0.0 && rows.contains(&e.source) {
                    let old_jj = if rows.contains(&e.target) {
                        let local = e.target - rows.start;
                        old.get(local, local)
                    } else {
                        inbound[&rev_tag(ci)]
                    };
                    let local = e.source - rows.start;
                    let gain = Complex64::new(e.gamma_prime_dt, 0.0) * old_jj;
                    new.set(local, local, new.get(local, local) + gain);
                }
            }
        });
    });
    Ok(())
}

fn fwd_tag(channel: usize) -> u64 {
    (channel as u64) << 1
}

fn rev_tag(channel: usize) -> u64 {
    ((channel as u64) << 1) | 1
}

fn subtract_row(
    new: &mut ComplexMatrix,
    old: &ComplexMatrix,
    rows: &std::ops::Range<usize>,
    global_row: usize,
    factor: f64,
) {
    if !rows.contains(&global_row) {
        return;
    }
    let local = global_row - rows.start;
    let f = Complex64::new(factor, 0.0);
    for (n, o) in new.row_mut(local).iter_mut().zip(old.row(local)) {
        *n -= f * o;
    }
}

fn subtract_col(
    new: &mut ComplexMatrix,
    old: &ComplexMatrix,
    cols: &std::ops::Range<usize>,
    global_col: usize,
    factor: f64,
) {
    if !cols.contains(&global_col) {
        return;
    }
    let local = global_col - cols.start;
    let f = Complex64::new(factor, 0.0);
    for r in 0..new.rows() {
        let v = new.get(r, local) - f * old.get(r, local);
        new.set(r, local, v);
    }
}

/// Exact scalar multiply/add count of the channel updates: each channel pair
/// costs two point operations plus four row/column sweeps of length `n`.
pub fn count_flops(plan: &ChannelUpdatePlan, n: usize) -> u64 {
    plan.len() as u64 * (4 * n as u64 + 2)
}
