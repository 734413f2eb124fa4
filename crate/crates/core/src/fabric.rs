//! The X×Y array: PEs, the data NoC, the staggered instruction network, one
//! orchestrator per row, and the global cycle engine.
//!
//! Cycle `c` of [`FabricState::tick`]:
//! 1. messages scheduled for `c` land in the orchestrator message registers;
//! 2. the per-row scratchpad mover (SDDMM operand rows) advances;
//! 3. every orchestrator steps and drives PE(0, y)'s LOAD stage;
//! 4. every PE ticks on the link values committed in cycle `c - 1`;
//! 5. values leaving the array are matched against collector expectations.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isa::{Direction, Instruction, Opcode, Region};
use crate::microcode::{assemble, Lut, Program};
use crate::orchestrator::{
    orchestrator_step, program_conds, AddrParams, Cond, OrchMessage, OrchRegisters, RingSlot,
    StreamToken,
};
use crate::pe::{PeCounters, PeState, PortFrame, TickCtx, VecWord, LANES, PIPELINE_DEPTH, SPAD_ENTRIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FabricConfig {
    pub x_dim: usize,
    pub y_dim: usize,
    pub simd_width: usize,
    pub dmem_bytes: usize,
    pub spad_entries: usize,
    pub pipeline_depth: u64,
    pub offchip_bw_bytes_per_cycle: u64,
    /// Keep a per-cycle text event log.
    pub trace_log: bool,
    /// Keep every PE's LOAD-stage instruction sequence.
    pub record_traces: bool,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            x_dim: 8,
            y_dim: 8,
            simd_width: LANES,
            dmem_bytes: crate::isa::DMEM_BYTES as usize,
            spad_entries: SPAD_ENTRIES,
            pipeline_depth: PIPELINE_DEPTH,
            offchip_bw_bytes_per_cycle: 17,
            trace_log: false,
            record_traces: false,
        }
    }
}

impl FabricConfig {
    pub fn with_array(x_dim: usize, y_dim: usize) -> Self {
        FabricConfig {
            x_dim,
            y_dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.x_dim == 0 || self.y_dim == 0 {
            return bad("array dimensions must be positive");
        }
        if self.spad_entries == 0 || self.spad_entries > SPAD_ENTRIES {
            return bad("spad_entries must be in 1..=16");
        }
        if self.simd_width != LANES {
            return bad("only 4-lane SIMD is modelled");
        }
        if self.dmem_bytes != crate::isa::DMEM_BYTES as usize {
            return bad("only 4096-byte data memories are modelled");
        }
        if self.pipeline_depth != PIPELINE_DEPTH {
            return bad("only the 3-stage pipeline is modelled");
        }
        if self.offchip_bw_bytes_per_cycle == 0 {
            return bad("off-chip bandwidth must be positive");
        }
        Ok(())
    }

    pub fn pes(&self) -> usize {
        self.x_dim * self.y_dim
    }
}

/// Source of A-row vectors for the scratchpad mover:
/// `rows[rid][x * w + step]` is the vector PE column `x` needs at `step`.
#[derive(Debug, Clone, Default)]
pub struct RowSource {
    pub rows: Vec<Vec<VecWord>>,
}

/// Everything one kernel launch needs besides the preloaded memories.
#[derive(Debug, Clone)]
pub struct Launch {
    pub program: Program,
    pub params: AddrParams,
    pub streams: Vec<Vec<StreamToken>>,
    /// Entries per output row per PE row (N:M counter target).
    pub group: u32,
    /// Scratchpad ring rows (SDDMM); 0 disables the mover.
    pub ring_rows: usize,
    pub row_source: Option<RowSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SouthRecord {
    pub cycle: u64,
    pub col: usize,
    pub rid: u32,
    pub uid: u64,
    pub value: VecWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EastRecord {
    pub cycle: u64,
    pub row: usize,
    pub rid: u32,
    pub cid: u32,
    pub value: i32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricCounters {
    pub fsm_transitions: u64,
    pub psums_injected: u64,
    pub psums_merged: u64,
    pub psums_collected: u64,
    pub bypasses: u64,
    pub staggered_violations: u64,
    pub mover_writes: u64,
}

#[derive(Debug, Clone, Copy)]
struct Expect {
    cycle: u64,
    rid: u32,
    aux: u64,
}

#[derive(Debug, Clone)]
struct RowCtl {
    lut: Lut,
    conds: [Cond; 2],
    params: AddrParams,
    regs: Vec<OrchRegisters>,
    streams: Vec<VecDeque<StreamToken>>,
    pending_rows: Vec<VecDeque<u32>>,
    row_source: Option<RowSource>,
}

#[derive(Debug, Clone)]
pub struct FabricState {
    pub config: FabricConfig,
    pub cycle: u64,
    pub pes: Vec<PeState>,
    pub counters: FabricCounters,
    pub south_out: Vec<SouthRecord>,
    pub east_out: Vec<EastRecord>,
    /// Per-cycle event log, when enabled.
    pub trace_log: Option<String>,
    record_traces: bool,
    traces: Vec<Vec<(u64, Instruction)>>,
    links: Vec<PortFrame>,
    inst_in: Vec<Option<Instruction>>,
    msg_queue: Vec<VecDeque<(u64, OrchMessage)>>,
    south_expect: Vec<VecDeque<Expect>>,
    east_expect: Vec<VecDeque<Expect>>,
    issue_log: Vec<Vec<Option<Instruction>>>,
    issue_origin: u64,
    ctl: Option<RowCtl>,
    hold: bool,
    config_targets: Option<Vec<Vec<Option<usize>>>>,
    issuing: bool,
    next_uid: u64,
}

impl FabricState {
    pub fn new(config: FabricConfig) -> Result<Self> {
        config.validate()?;
        let n = config.pes();
        Ok(FabricState {
            cycle: 0,
            pes: vec![PeState::new(); n],
            counters: FabricCounters::default(),
            south_out: Vec::new(),
            east_out: Vec::new(),
            trace_log: config.trace_log.then(String::new),
            record_traces: config.record_traces,
            traces: vec![Vec::new(); n],
            links: vec![PortFrame::default(); n],
            inst_in: vec![None; n],
            msg_queue: vec![VecDeque::new(); config.y_dim],
            south_expect: vec![VecDeque::new(); config.x_dim],
            east_expect: vec![VecDeque::new(); config.y_dim],
            issue_log: vec![Vec::new(); config.y_dim],
            issue_origin: 0,
            ctl: None,
            hold: false,
            config_targets: None,
            issuing: false,
            next_uid: 1,
            config,
        })
    }

    pub fn enable_trace_log(&mut self) {
        self.trace_log = Some(String::new());
    }

    pub fn record_traces(&mut self, on: bool) {
        self.record_traces = on;
    }

    pub fn pe(&self, x: usize, y: usize) -> &PeState {
        &self.pes[y * self.config.x_dim + x]
    }

    pub fn pe_mut(&mut self, x: usize, y: usize) -> &mut PeState {
        let i = y * self.config.x_dim + x;
        &mut self.pes[i]
    }

    pub fn pe_counters(&self) -> PeCounters {
        let mut c = PeCounters::default();
        for pe in &self.pes {
            c += pe.counters;
        }
        c
    }

    /// Instruction sequence seen by PE (x, row) at LOAD, with cycle stamps.
    pub fn staggered_trace(&self, row: usize, x: usize) -> &[(u64, Instruction)] {
        &self.traces[row * self.config.x_dim + x]
    }

    pub fn orchestrator(&self, row: usize) -> Option<&OrchRegisters> {
        self.ctl.as_ref().map(|c| &c.regs[row])
    }

    fn log(&mut self, unit: &str, action: std::fmt::Arguments<'_>) {
        if let Some(t) = &mut self.trace_log {
            let _ = writeln!(t, "{} {} {}", self.cycle, unit, action);
        }
    }

    /// Installs a kernel launch on the (already preloaded) array.
    pub fn load(&mut self, launch: Launch) -> Result<()> {
        let y_dim = self.config.y_dim;
        if launch.streams.len() != y_dim {
            return Err(Error::Config(format!(
                "{} streams for {} rows",
                launch.streams.len(),
                y_dim
            )));
        }
        let lut = assemble(&launch.program)?;
        let conds = program_conds(&launch.program)?;
        let mut regs = Vec::with_capacity(y_dim);
        let mut pending_rows = Vec::with_capacity(y_dim);
        for s in &launch.streams {
            let mut r = OrchRegisters::new(self.config.spad_entries as u8);
            r.meta.group = launch.group.max(1);
            r.meta.steps = launch.params.w;
            r.meta.ring = vec![RingSlot::Free; launch.ring_rows];
            regs.push(r);
            let mut rows: VecDeque<u32> = VecDeque::new();
            if launch.ring_rows > 0 {
                for t in s.iter().filter(|t| t.tag == crate::orchestrator::TAG_NNZ) {
                    if rows.back() != Some(&t.rid) {
                        rows.push_back(t.rid);
                    }
                }
            }
            pending_rows.push(rows);
        }
        self.ctl = Some(RowCtl {
            lut,
            conds,
            params: launch.params,
            regs,
            streams: launch.streams.into_iter().map(VecDeque::from).collect(),
            pending_rows,
            row_source: launch.row_source,
        });
        self.issue_origin = self.cycle;
        self.issuing = true;
        for l in &mut self.issue_log {
            l.clear();
        }
        Ok(())
    }

    fn mover_step(&mut self) {
        let (x_dim, cycle) = (self.config.x_dim, self.cycle);
        let Some(ctl) = &mut self.ctl else { return };
        let Some(src) = &ctl.row_source else { return };
        let w = ctl.params.w;
        for y in 0..self.config.y_dim {
            let ring = &mut ctl.regs[y].meta.ring;
            for s in ring.iter_mut() {
                if matches!(*s, RingSlot::Draining { until } if until <= cycle) {
                    *s = RingSlot::Free;
                }
            }
            let slot = match ring.iter().position(|s| matches!(s, RingSlot::Filling { .. })) {
                Some(i) => Some(i),
                None => match (ring.iter().position(|s| *s == RingSlot::Free), ctl.pending_rows[y].pop_front()) {
                    (Some(i), Some(rid)) => {
                        ring[i] = RingSlot::Filling { rid, filled: 0 };
                        Some(i)
                    }
                    (_, Some(rid)) => {
                        ctl.pending_rows[y].push_front(rid);
                        None
                    }
                    _ => None,
                },
            };
            let Some(i) = slot else { continue };
            let RingSlot::Filling { rid, filled } = ring[i] else { unreachable!() };
            let entry = i * w as usize + filled as usize;
            for x in 0..x_dim {
                let v = src.rows[rid as usize][x * w as usize + filled as usize];
                let pe = &mut self.pes[y * x_dim + x];
                pe.spad[entry] = v;
                pe.counters.spad_writes += 1;
            }
            self.counters.mover_writes += x_dim as u64;
            ring[i] = if filled + 1 == w {
                RingSlot::Resident { rid }
            } else {
                RingSlot::Filling { rid, filled: filled + 1 }
            };
        }
    }

    fn orchestrators_step(&mut self) -> Result<()> {
        let (x_dim, y_dim, cycle) = (self.config.x_dim, self.config.y_dim, self.cycle);
        if !self.issuing {
            return Ok(());
        }
        let Some(mut ctl) = self.ctl.take() else { return Ok(()) };
        let mut result = Ok(());
        for y in 0..y_dim {
            let regs = &mut ctl.regs[y];
            regs.input = ctl.streams[y].front().copied();
            regs.msg = match self.msg_queue[y].front() {
                Some(&(at, m)) if at == cycle => {
                    self.msg_queue[y].pop_front();
                    Some(m)
                }
                Some(&(at, _)) if at < cycle => {
                    result = Err(Error::EdgeProtocol {
                        cycle,
                        detail: format!("message for row {y} missed its slot at {at}"),
                    });
                    break;
                }
                _ => None,
            };
            let had_msg = regs.msg;
            let out = match orchestrator_step(regs, &ctl.lut, &ctl.conds, &ctl.params) {
                Ok(o) => o,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            regs.msg = None;
            if out.consumed {
                ctl.streams[y].pop_front();
            }
            if out.transition {
                self.counters.fsm_transitions += 1;
            }
            if out.merged {
                self.counters.psums_merged += 1;
            }
            if let Some(rid) = out.released_row {
                if let Some(i) = regs.meta.resident_slot(rid) {
                    regs.meta.ring[i] = RingSlot::Draining {
                        until: cycle + PIPELINE_DEPTH * x_dim as u64,
                    };
                }
            }
            if let Some(mut m) = out.south {
                if had_msg.is_some_and(|h| h.uid == m.uid && m.uid != 0) {
                    self.counters.bypasses += 1;
                } else {
                    m.uid = self.next_uid;
                    self.next_uid += 1;
                    self.counters.psums_injected += 1;
                }
                if y + 1 < y_dim {
                    self.msg_queue[y + 1].push_back((cycle + PIPELINE_DEPTH, m));
                } else {
                    for (x, q) in self.south_expect.iter_mut().enumerate() {
                        q.push_back(Expect {
                            cycle: cycle + 2 + PIPELINE_DEPTH * x as u64,
                            rid: m.rid,
                            aux: m.uid,
                        });
                    }
                }
            }
            if out.inst.res.region() == Region::RouterPort(Direction::E) {
                let t = regs.input.expect("east result needs a token");
                self.east_expect[y].push_back(Expect {
                    cycle: cycle + PIPELINE_DEPTH * x_dim as u64 - 1,
                    rid: t.rid,
                    aux: t.cid as u64,
                });
            }
            if let Some(t) = &mut self.trace_log {
                let _ = writeln!(
                    t,
                    "{cycle} orch{y} lut={:#05x} state={} issue {}",
                    out.index,
                    regs.state,
                    describe(&out.inst)
                );
            }
            self.issue_log[y].push(Some(out.inst));
            self.inst_in[y * x_dim] = Some(out.inst);
        }
        self.ctl = Some(ctl);
        result
    }

    fn expected_issue(&self, y: usize, x: usize) -> Option<Instruction> {
        let lag = PIPELINE_DEPTH * x as u64;
        let rel = (self.cycle - self.issue_origin).checked_sub(lag)?;
        self.issue_log[y].get(rel as usize).copied().flatten()
    }

    /// Advances the whole array by one cycle.
    pub fn tick(&mut self) -> Result<()> {
        let (x_dim, y_dim, cycle) = (self.config.x_dim, self.config.y_dim, self.cycle);
        self.mover_step();
        self.orchestrators_step()?;

        let mut next_links = vec![PortFrame::default(); x_dim * y_dim];
        let mut next_inst = vec![None; x_dim * y_dim];
        let mut south_vals: Vec<Option<VecWord>> = vec![None; x_dim];
        let mut east_vals: Vec<Option<VecWord>> = vec![None; y_dim];
        let discard = self.config_targets.is_some();
        for y in 0..y_dim {
            for x in 0..x_dim {
                let i = y * x_dim + x;
                let ctx = TickCtx {
                    cycle,
                    x,
                    y,
                    west_tied_zero: x == 0,
                    reduce_east: x + 1 == x_dim,
                    hold: self.hold,
                    discard,
                };
                let ports = self.links[i];
                let incoming = self.inst_in[i].take();
                let out = self.pes[i].tick(incoming, &ports, &ctx)?;
                if !discard {
                    for d in Direction::ALL {
                        if ports.get(d).is_some() && !out.consumed[d.index()] {
                            return Err(Error::UnconsumedValue { cycle, x, y, dir: d });
                        }
                    }
                }
                if let (Some(targets), Some(inst)) = (&self.config_targets, out.loaded) {
                    let rel = (cycle - self.issue_origin) as i64 - (PIPELINE_DEPTH * x as u64) as i64;
                    if rel >= 0 && targets[y].get(rel as usize).copied().flatten() == Some(x) {
                        self.pes[i].held = Some(inst);
                    }
                }
                if !self.hold && !discard && self.ctl.is_some() && out.loaded != self.expected_issue(y, x) {
                    self.counters.staggered_violations += 1;
                }
                if let (Some(t), Some(inst)) = (&mut self.trace_log, out.loaded) {
                    let _ = writeln!(t, "{cycle} pe{x}.{y} load {}", crate::isa::format_trace_word(&inst));
                }
                if self.record_traces {
                    if let Some(inst) = out.loaded {
                        self.traces[i].push((cycle, inst));
                    }
                }
                if let Some(f) = out.forwarded {
                    if x + 1 < x_dim {
                        next_inst[i + 1] = Some(f);
                    }
                }
                for d in Direction::ALL {
                    let Some(v) = out.out.get(d) else { continue };
                    let edge = |detail: &str| Error::EdgeProtocol {
                        cycle,
                        detail: format!("PE ({x},{y}) drove {d:?} {detail}"),
                    };
                    match d {
                        Direction::E if x + 1 == x_dim => east_vals[y] = Some(v),
                        Direction::E => next_links[i + 1].set(Direction::W, v),
                        Direction::W if x == 0 => return Err(edge("off the west edge")),
                        Direction::W => next_links[i - 1].set(Direction::E, v),
                        Direction::S if y + 1 == y_dim => south_vals[x] = Some(v),
                        Direction::S => next_links[i + x_dim].set(Direction::N, v),
                        Direction::N if y == 0 => return Err(edge("off the north edge")),
                        Direction::N => next_links[i - x_dim].set(Direction::S, v),
                    }
                }
            }
        }
        self.collect(south_vals, east_vals)?;
        self.links = next_links;
        self.inst_in = next_inst;
        self.cycle += 1;
        Ok(())
    }

    fn collect(&mut self, south: Vec<Option<VecWord>>, east: Vec<Option<VecWord>>) -> Result<()> {
        let cycle = self.cycle;
        let take = |q: &mut VecDeque<Expect>, v: Option<VecWord>, what: String| -> Result<Option<Expect>> {
            let due = q.front().is_some_and(|e| e.cycle == cycle);
            if q.front().is_some_and(|e| e.cycle < cycle) {
                return Err(Error::EdgeProtocol { cycle, detail: format!("{what}: expected value never arrived") });
            }
            match (due, v) {
                (true, Some(_)) => Ok(q.pop_front()),
                (false, None) => Ok(None),
                (true, None) => Err(Error::EdgeProtocol { cycle, detail: format!("{what}: expected value missing") }),
                (false, Some(_)) => Err(Error::EdgeProtocol { cycle, detail: format!("{what}: unexpected value") }),
            }
        };
        for (x, v) in south.into_iter().enumerate() {
            if let Some(e) = take(&mut self.south_expect[x], v, format!("south collector {x}"))? {
                self.south_out.push(SouthRecord {
                    cycle,
                    col: x,
                    rid: e.rid,
                    uid: e.aux,
                    value: v.unwrap(),
                });
                if x == 0 {
                    self.counters.psums_collected += 1;
                }
            }
        }
        for (y, v) in east.into_iter().enumerate() {
            if let Some(e) = take(&mut self.east_expect[y], v, format!("east collector {y}"))? {
                self.east_out.push(EastRecord {
                    cycle,
                    row: y,
                    rid: e.rid,
                    cid: e.aux as u32,
                    value: v.unwrap().0[0],
                });
            }
        }
        Ok(())
    }

    /// True when no orchestrator has work left and nothing is in flight
    /// between rows.
    pub fn quiescent(&self) -> Result<bool> {
        let Some(ctl) = &self.ctl else { return Ok(true) };
        if self.msg_queue.iter().any(|q| !q.is_empty()) {
            return Ok(false);
        }
        for (y, regs) in ctl.regs.iter().enumerate() {
            if !ctl.streams[y].is_empty() || !ctl.pending_rows[y].is_empty() {
                return Ok(false);
            }
            let mut dry = regs.clone();
            dry.input = None;
            dry.msg = None;
            let out = orchestrator_step(&mut dry, &ctl.lut, &ctl.conds, &ctl.params)?;
            if !out.is_idle(regs.state) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Runs the loaded launch to completion and drains the pipelines.
    pub fn run_to_completion(&mut self, max_cycles: u64) -> Result<u64> {
        let start = self.cycle;
        while !self.quiescent()? {
            if self.cycle - start >= max_cycles {
                return Err(Error::Timeout(max_cycles));
            }
            self.tick()?;
        }
        self.issuing = false;
        for _ in 0..PIPELINE_DEPTH * self.config.x_dim as u64 {
            self.tick()?;
        }
        if let Some(e) = self.south_expect.iter().chain(&self.east_expect).find_map(|q| q.front()) {
            return Err(Error::EdgeProtocol {
                cycle: self.cycle,
                detail: format!("value for row {} still expected at {}", e.rid, e.cycle),
            });
        }
        if !self.pes.iter().all(PeState::pipeline_empty) {
            return Err(Error::EdgeProtocol {
                cycle: self.cycle,
                detail: "pipelines not drained".into(),
            });
        }
        Ok(self.cycle - start)
    }

    /// Loads one instruction into every PE for spatial (non-time-lapsed)
    /// execution. Instructions are sent east-most first, 3 cycles apart, so
    /// that every PE sees its own in LOAD in the same cycle; nothing is read
    /// or written while configuring. Returns the cycles spent.
    pub fn spatial_configure(&mut self, per_pe: &[Vec<Instruction>]) -> Result<u64> {
        let (x_dim, y_dim) = (self.config.x_dim, self.config.y_dim);
        if per_pe.len() != y_dim || per_pe.iter().any(|r| r.len() != x_dim) {
            return Err(Error::Config("need one instruction per PE".into()));
        }
        for inst in per_pe.iter().flatten() {
            inst.validate()?;
            if inst.op == Opcode::Hold {
                return Err(Error::InvalidInstruction("HOLD cannot be latched".into()));
            }
        }
        let slots = PIPELINE_DEPTH as usize * x_dim;
        let mut targets = vec![vec![None; slots]; y_dim];
        for t in targets.iter_mut() {
            for i in 0..x_dim {
                t[i * PIPELINE_DEPTH as usize] = Some(x_dim - 1 - i);
            }
        }
        self.ctl = None;
        self.hold = false;
        self.issue_origin = self.cycle;
        self.config_targets = Some(targets);
        let start = self.cycle;
        for step in 0..slots {
            for y in 0..y_dim {
                let inst = self.config_targets.as_ref().unwrap()[y][step].map(|x| per_pe[y][x]);
                self.inst_in[y * x_dim] = inst;
            }
            self.tick()?;
        }
        self.config_targets = None;
        for (i, pe) in self.pes.iter().enumerate() {
            if pe.held != Some(per_pe[i / x_dim][i % x_dim]) {
                return Err(Error::Config(format!("PE {i} did not latch its instruction")));
            }
        }
        self.hold = true;
        Ok(self.cycle - start)
    }

    /// Executes the latched instructions for `cycles` cycles with the row
    /// hold lines asserted.
    pub fn run_spatial(&mut self, cycles: u64) -> Result<()> {
        if !self.hold {
            return Err(Error::Config("array is not configured for spatial mode".into()));
        }
        for _ in 0..cycles {
            self.tick()?;
        }
        Ok(())
    }

    pub fn release_hold(&mut self) {
        self.hold = false;
    }

    pub fn log_event(&mut self, unit: &str, action: &str) {
        self.log(unit, format_args!("{action}"));
    }
}

fn describe(i: &Instruction) -> String {
    let mut s = format!("{} {:?} {:?} -> {:?}", i.op.mnemonic(), i.op1, i.op2, i.res);
    if i.op1 == crate::isa::Address::IMM || i.op2 == crate::isa::Address::IMM {
        let _ = write!(s, " imm={}", i.imm as i32);
    }
    if i.route != crate::isa::Route::None {
        let _ = write!(s, " route={:?}", i.route);
    }
    s
}
