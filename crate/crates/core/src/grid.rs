//! Logical processor grid with block placement, shift messaging, and
//! per-processor timing instrumentation.
//!
//! Workers are logical: they execute in lockstep phases driven by the
//! caller, optionally data-parallel via rayon (`parallel` feature). Every
//! exchange is split into a send sub-phase and a receive sub-phase with a
//! barrier between them, so receives never block and message delivery is
//! exactly-once and deterministic; payloads are copied on send to model a
//! real transport. Timers are wall-clock and per worker: `mac` around local
//! multiply-accumulate work, `comm` around send/receive plus payload copies.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{partition, reassemble, BlockPartition, ComplexMatrix, PlacedBlock};

/// How worker phases execute. `Parallel` falls back to sequential execution
/// when the `parallel` feature is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Classification of a communication event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommKind {
    /// Initial skew of blocks before the multiply rounds.
    Alignment,
    /// Cyclic block shift between multiply rounds.
    Shift,
    /// Single-element transfer between diagonal owners.
    Point,
}

/// One logged transfer between two grid positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub src: (usize, usize),
    pub dst: (usize, usize),
    /// Payload size in matrix elements.
    pub elements: usize,
    pub kind: CommKind,
}

/// Which part of the split step a phase belongs to, for timing breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Unitary,
    Dissipator,
    Other,
}

impl Section {
    fn idx(self) -> usize {
        match self {
            Section::Unitary => 0,
            Section::Dissipator => 1,
            Section::Other => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PhaseTimes {
    mac: Duration,
    comm: Duration,
    total: Duration,
}

#[derive(Debug)]
struct WorkerState {
    row: usize,
    col: usize,
    times: [PhaseTimes; 3],
    events: Vec<CommEvent>,
}

impl WorkerState {
    fn new(row: usize, col: usize) -> Self {
        Self {
            row,
            col,
            times: [PhaseTimes::default(); 3],
            events: Vec::new(),
        }
    }
}

enum Payload {
    Block {
        id: (usize, usize),
        data: ComplexMatrix,
    },
    Scalar(Complex64),
}

/// In-process message board: one inbox per destination worker, keyed by
/// (source worker, tag). Each key carries at most one in-flight message, so
/// delivery is exactly-once per channel pair and phase.
struct Transport {
    inboxes: Vec<Mutex<HashMap<(usize, u64), Payload>>>,
}

impl Transport {
    fn new(workers: usize) -> Self {
        Self {
            inboxes: (0..workers).map(|_| Mutex::new(HashMap::new())).collect(),
        }
    }

    fn send(&self, src: usize, dst: usize, tag: u64, payload: Payload) {
        let prev = self.inboxes[dst]
            .lock()
            .expect("transport lock")
            .insert((src, tag), payload);
        assert!(prev.is_none(), "duplicate in-flight message {src}->{dst} tag {tag}");
    }

    fn recv(&self, dst: usize, src: usize, tag: u64) -> Payload {
        self.inboxes[dst]
            .lock()
            .expect("transport lock")
            .remove(&(src, tag))
            .unwrap_or_else(|| panic!("missing message {src}->{dst} tag {tag}"))
    }
}

const TAG_MOVE: u64 = u64::MAX;

/// Per-worker handle passed to phase closures: local timers, event log, and
/// the message board.
pub struct WorkerCtx<'a> {
    state: &'a mut WorkerState,
    transport: &'a Transport,
    side: usize,
    section: Section,
}

impl WorkerCtx<'_> {
    pub fn coords(&self) -> (usize, usize) {
        (self.state.row, self.state.col)
    }

    pub fn index(&self) -> usize {
        self.state.row * self.side + self.state.col
    }

    /// Run `f` under the multiply-accumulate timer.
    pub fn time_mac<R>(&mut self, f: impl FnOnce() -> R) -> R {
        let t0 = Instant::now();
        let out = f();
        self.state.times[self.section.idx()].mac += t0.elapsed();
        out
    }

    fn coords_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.side, idx % self.side)
    }

    pub fn send_block(
        &mut self,
        dst: usize,
        id: (usize, usize),
        data: &ComplexMatrix,
        kind: CommKind,
    ) {
        debug_assert_ne!(dst, self.index(), "self-delivery skips the transport");
        let t0 = Instant::now();
        let payload = Payload::Block {
            id,
            data: data.clone(),
        };
        self.transport.send(self.index(), dst, TAG_MOVE, payload);
        self.state.times[self.section.idx()].comm += t0.elapsed();
        self.state.events.push(CommEvent {
            src: self.coords(),
            dst: self.coords_of(dst),
            elements: data.data().len(),
            kind,
        });
    }

    pub fn recv_block(&mut self, src: usize) -> ((usize, usize), ComplexMatrix) {
        let t0 = Instant::now();
        let payload = self.transport.recv(self.index(), src, TAG_MOVE);
        self.state.times[self.section.idx()].comm += t0.elapsed();
        match payload {
            Payload::Block { id, data } => (id, data),
            Payload::Scalar(_) => panic!("expected block payload"),
        }
    }

    pub fn send_scalar(&mut self, dst: usize, tag: u64, value: Complex64, kind: CommKind) {
        debug_assert_ne!(dst, self.index(), "self-delivery skips the transport");
        let t0 = Instant::now();
        self.transport.send(self.index(), dst, tag, Payload::Scalar(value));
        self.state.times[self.section.idx()].comm += t0.elapsed();
        self.state.events.push(CommEvent {
            src: self.coords(),
            dst: self.coords_of(dst),
            elements: 1,
            kind,
        });
    }

    pub fn recv_scalar(&mut self, src: usize, tag: u64) -> Complex64 {
        let t0 = Instant::now();
        let payload = self.transport.recv(self.index(), src, tag);
        self.state.times[self.section.idx()].comm += t0.elapsed();
        match payload {
            Payload::Scalar(v) => v,
            Payload::Block { .. } => panic!("expected scalar payload"),
        }
    }
}

/// A block held at one grid position, labelled with its home coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSlot {
    pub id: (usize, usize),
    pub data: ComplexMatrix,
}

/// Square matrix partitioned into blocks placed on the grid. Slot `k` lives
/// on the worker at position `(k / side, k % side)`; `id` names the block
/// currently held there (home coordinates), which Cannon shifts permute.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedMatrix {
    part: BlockPartition,
    slots: Vec<BlockSlot>,
}

impl DistributedMatrix {
    /// All-zero matrix with home placement.
    pub fn zeros(part: &BlockPartition) -> Self {
        let side = part.side();
        let mut slots = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                slots.push(BlockSlot {
                    id: (r, c),
                    data: ComplexMatrix::zeros(part.extent(r), part.extent(c)),
                });
            }
        }
        Self {
            part: part.clone(),
            slots,
        }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.part
    }

    pub fn dim(&self) -> usize {
        self.part.dim()
    }

    pub fn side(&self) -> usize {
        self.part.side()
    }

    pub fn slots(&self) -> &[BlockSlot] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [BlockSlot] {
        &mut self.slots
    }

    pub fn slot(&self, row: usize, col: usize) -> &BlockSlot {
        &self.slots[row * self.part.side() + col]
    }

    /// True when every block sits at its home position.
    pub fn is_home_placed(&self) -> bool {
        self.slots
            .iter()
            .enumerate()
            .all(|(k, s)| s.id == (k / self.part.side(), k % self.part.side()))
    }

    /// Global diagonal, read from wherever the diagonal blocks currently sit.
    pub fn diagonal(&self) -> Vec<Complex64> {
        let mut diag = vec![Complex64::new(0.0, 0.0); self.part.dim()];
        for s in &self.slots {
            if s.id.0 != s.id.1 {
                continue;
            }
            let range = self.part.range(s.id.0);
            for (k, g) in range.enumerate() {
                diag[g] = s.data.get(k, k);
            }
        }
        diag
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    /// Max |a_ij - conj(a_ji)| over the full matrix, computed blockwise.
    pub fn hermiticity_defect(&self) -> f64 {
        let by_id: HashMap<(usize, usize), usize> = self
            .slots
            .iter()
            .enumerate()
            .map(|(k, s)| (s.id, k))
            .collect();
        let mut worst = 0.0f64;
        for s in &self.slots {
            let (br, bc) = s.id;
            if br > bc {
                continue;
            }
            let mirror = &self.slots[by_id[&(bc, br)]].data;
            for i in 0..s.data.rows() {
                for j in 0..s.data.cols() {
                    let d = (s.data.get(i, j) - mirror.get(j, i).conj()).norm();
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
        worst
    }
}

/// Per-processor wall-clock breakdown of a run.
#[derive(Debug, Clone)]
pub struct ProcessorTiming {
    pub row: usize,
    pub col: usize,
    pub mac_time: f64,
    pub comm_time: f64,
    pub total_time: f64,
    pub unitary_mac: f64,
    pub unitary_comm: f64,
    pub dissipator_mac: f64,
    pub dissipator_comm: f64,
}

/// Timing report over the whole grid, serializable as one record per
/// processor.
#[derive(Debug, Clone)]
pub struct TimingReport {
    pub grid_side: usize,
    pub entries: Vec<ProcessorTiming>,
}

impl TimingReport {
    pub fn worker_count(&self) -> usize {
        self.entries.len()
    }

    pub fn total_mac(&self) -> f64 {
        self.entries.iter().map(|e| e.mac_time).sum()
    }

    pub fn total_comm(&self) -> f64 {
        self.entries.iter().map(|e| e.comm_time).sum()
    }

    pub fn mean_unitary_mac(&self) -> f64 {
        self.entries.iter().map(|e| e.unitary_mac).sum::<f64>() / self.entries.len() as f64
    }

    pub fn mean_dissipator_busy(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.dissipator_mac + e.dissipator_comm)
            .sum::<f64>()
            / self.entries.len() as f64
    }

    /// One record per processor: coords, then overall and per-section times.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# row\tcol\tmac_time\tcomm_time\ttotal_time\tunitary_mac\tunitary_comm\tdissipator_mac\tdissipator_comm"
        )?;
        for e in &self.entries {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.row,
                e.col,
                e.mac_time,
                e.comm_time,
                e.total_time,
                e.unitary_mac,
                e.unitary_comm,
                e.dissipator_mac,
                e.dissipator_comm
            )?;
        }
        Ok(())
    }
}

/// Direction of a cyclic block shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    Left,
    Up,
}

/// The logical processor grid: `side * side` workers, a message board, and
/// instrumentation.
pub struct Grid {
    side: usize,
    mode: ExecMode,
    section: Section,
    workers: Vec<WorkerState>,
    transport: Transport,
}

impl Grid {
    pub fn new(side: usize, mode: ExecMode) -> Result<Self> {
        if side == 0 {
            return Err(Error::EmptyGrid);
        }
        let workers = (0..side * side)
            .map(|k| WorkerState::new(k / side, k % side))
            .collect();
        Ok(Self {
            side,
            mode,
            section: Section::Other,
            workers,
            transport: Transport::new(side * side),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn worker_count(&self) -> usize {
        self.side * self.side
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    /// Tag subsequent phases for the timing breakdown.
    pub fn set_section(&mut self, section: Section) {
        self.section = section;
    }

    /// Drop accumulated timers and events.
    pub fn reset_instrumentation(&mut self) {
        for w in &mut self.workers {
            w.times = [PhaseTimes::default(); 3];
            w.events.clear();
        }
    }

    /// All logged communication events, in worker order.
    pub fn events(&self) -> Vec<CommEvent> {
        self.workers
            .iter()
            .flat_map(|w| w.events.iter().copied())
            .collect()
    }

    pub fn event_count(&self, kind: CommKind) -> usize {
        self.workers
            .iter()
            .flat_map(|w| &w.events)
            .filter(|e| e.kind == kind)
            .count()
    }

    /// Cut a dense square matrix into blocks at home placement.
    pub fn distribute(&self, m: &ComplexMatrix) -> Result<DistributedMatrix> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch {
                op: "distribute",
                left: m.shape(),
                right: (m.rows(), m.rows()),
            });
        }
        let part = BlockPartition::new(m.rows(), self.side)?;
        let blocks = partition(m, self.side)?;
        let slots = blocks
            .into_iter()
            .map(|b| BlockSlot {
                id: (b.row, b.col),
                data: b.matrix,
            })
            .collect();
        Ok(DistributedMatrix { part, slots })
    }

    /// Reassemble a dense matrix from the blocks, wherever they sit.
    pub fn collect(&self, dm: &DistributedMatrix) -> Result<ComplexMatrix> {
        let placed: Vec<PlacedBlock> = dm
            .slots
            .iter()
            .map(|s| PlacedBlock {
                row: s.id.0,
                col: s.id.1,
                matrix: s.data.clone(),
            })
            .collect();
        reassemble(&placed, &dm.part)
    }

    /// Run one lockstep phase: `f` once per worker, paired with its slot of
    /// `data`. Parallel when the grid mode and feature allow it. The caller
    /// observes a barrier at return.
    pub(crate) fn phase<T, F>(&mut self, data: &mut [T], f: F)
    where
        T: Send,
        F: Fn(&mut WorkerCtx<'_>, &mut T) + Sync,
    {
        assert_eq!(data.len(), self.workers.len());
        let side = self.side;
        let section = self.section;
        let transport = &self.transport;
        let exec = |w: &mut WorkerState, d: &mut T| {
            let t0 = Instant::now();
            {
                let mut ctx = WorkerCtx {
                    state: w,
                    transport,
                    side,
                    section,
                };
                f(&mut ctx, d);
            }
            w.times[section.idx()].total += t0.elapsed();
        };
        #[cfg(feature = "parallel")]
        if self.mode == ExecMode::Parallel {
            self.workers
                .par_iter_mut()
                .zip(data.par_iter_mut())
                .for_each(|(w, d)| exec(w, d));
            return;
        }
        self.workers
            .iter_mut()
            .zip(data.iter_mut())
            .for_each(|(w, d)| exec(w, d));
    }

    /// Move every block to `dest(position)`; `src` must be the inverse map.
    fn move_blocks(
        &mut self,
        m: &mut DistributedMatrix,
        kind: CommKind,
        dest: impl Fn(usize, usize) -> (usize, usize) + Sync,
        src: impl Fn(usize, usize) -> (usize, usize) + Sync,
    ) {
        let side = self.side;
        let pos_index = |rc: (usize, usize)| rc.0 * side + rc.1;
        // send sub-phase
        {
            let mut view: Vec<&BlockSlot> = m.slots.iter().collect();
            self.phase(&mut view, |ctx, slot| {
                let to = dest(ctx.coords().0, ctx.coords().1);
                if to != ctx.coords() {
                    ctx.send_block(pos_index(to), slot.id, &slot.data, kind);
                }
            });
        }
        // receive sub-phase (everything already delivered: no waiting)
        self.phase(&mut m.slots, |ctx, slot| {
            let from = src(ctx.coords().0, ctx.coords().1);
            if from != ctx.coords() {
                let (id, data) = ctx.recv_block(pos_index(from));
                slot.id = id;
                slot.data = data;
            }
        });
    }

    fn check_partition(&self, m: &DistributedMatrix, op: &'static str) -> Result<()> {
        if m.side() != self.side {
            return Err(Error::PartitionMismatch {
                op,
                left: (m.side(), m.dim()),
                right: (self.side, m.dim()),
            });
        }
        Ok(())
    }

    /// Skew blocks for the multiply rounds: the block at `(i, j)` moves left
    /// by `i` steps in `a` and up by `j` steps in `b`.
    pub fn initial_align(
        &mut self,
        a: &mut DistributedMatrix,
        b: &mut DistributedMatrix,
    ) -> Result<()> {
        self.check_partition(a, "initial_align")?;
        self.check_partition(b, "initial_align")?;
        let side = self.side;
        self.move_blocks(
            a,
            CommKind::Alignment,
            |i, j| (i, (j + side - i) % side),
            |i, j| (i, (j + i) % side),
        );
        self.move_blocks(
            b,
            CommKind::Alignment,
            |i, j| ((i + side - j) % side, j),
            |i, j| ((i + j) % side, j),
        );
        Ok(())
    }

    /// Shift every block one position left or up, cyclically.
    pub fn cyclic_shift(&mut self, dir: ShiftDirection, m: &mut DistributedMatrix) -> Result<()> {
        self.check_partition(m, "cyclic_shift")?;
        let side = self.side;
        match dir {
            ShiftDirection::Left => self.move_blocks(
                m,
                CommKind::Shift,
                |i, j| (i, (j + side - 1) % side),
                |i, j| (i, (j + 1) % side),
            ),
            ShiftDirection::Up => self.move_blocks(
                m,
                CommKind::Shift,
                |i, j| ((i + side - 1) % side, j),
                |i, j| ((i + 1) % side, j),
            ),
        }
        Ok(())
    }

    /// Deliver one diagonal element to the owner of another diagonal
    /// element. Logs a communication event only when the owners differ.
    pub fn point_transfer(
        &mut self,
        src: (usize, usize),
        dst: (usize, usize),
        value: Complex64,
        part: &BlockPartition,
    ) -> Result<Complex64> {
        if src.0 != src.1 {
            return Err(Error::NotDiagonal { index: src });
        }
        if dst.0 != dst.1 {
            return Err(Error::NotDiagonal { index: dst });
        }
        if part.side() != self.side {
            return Err(Error::PartitionMismatch {
                op: "point_transfer",
                left: (part.side(), part.dim()),
                right: (self.side, part.dim()),
            });
        }
        for idx in [src.0, dst.0] {
            if idx >= part.dim() {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    dim: part.dim(),
                });
            }
        }
        let bs = part.block_of(src.0);
        let bd = part.block_of(dst.0);
        if bs == bd {
            return Ok(value);
        }
        let ps = bs * self.side + bs;
        let pd = bd * self.side + bd;
        let section = self.section;
        {
            let sender = &mut self.workers[ps];
            let t0 = Instant::now();
            self.transport.send(ps, pd, TAG_MOVE, Payload::Scalar(value));
            sender.times[section.idx()].comm += t0.elapsed();
            sender.events.push(CommEvent {
                src: (bs, bs),
                dst: (bd, bd),
                elements: 1,
                kind: CommKind::Point,
            });
        }
        let receiver = &mut self.workers[pd];
        let t0 = Instant::now();
        let payload = self.transport.recv(pd, ps, TAG_MOVE);
        receiver.times[section.idx()].comm += t0.elapsed();
        match payload {
            Payload::Scalar(v) => Ok(v),
            Payload::Block { .. } => unreachable!("point transfer carries a scalar"),
        }
    }

    /// Snapshot the per-processor timers.
    pub fn collect_timing(&self) -> TimingReport {
        let entries = self
            .workers
            .iter()
            .map(|w| {
                let sum = |f: fn(&PhaseTimes) -> Duration| -> f64 {
                    w.times.iter().map(f).sum::<Duration>().as_secs_f64()
                };
                ProcessorTiming {
                    row: w.row,
                    col: w.col,
                    mac_time: sum(|t| t.mac),
                    comm_time: sum(|t| t.comm),
                    total_time: sum(|t| t.total),
                    unitary_mac: w.times[Section::Unitary.idx()].mac.as_secs_f64(),
                    unitary_comm: w.times[Section::Unitary.idx()].comm.as_secs_f64(),
                    dissipator_mac: w.times[Section::Dissipator.idx()].mac.as_secs_f64(),
                    dissipator_comm: w.times[Section::Dissipator.idx()].comm.as_secs_f64(),
                }
            })
            .collect();
        TimingReport {
            grid_side: self.side,
            entries,
        }
    }
}
