//! One processing element: LOAD / COMPUTE / COMMIT pipeline, a 4-lane
//! vector ALU, byte-addressed data memory and a vector scratchpad.
//!
//! All operand reads (memories, registers, router inputs) happen at LOAD and
//! all writes at COMMIT. The single instruction sitting in COMPUTE forwards
//! its pending writes to the LOAD stage, so back-to-back accumulations see
//! each other's results.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isa::{Address, Direction, Instruction, Opcode, Region, Route, DMEM_BYTES};

/// SIMD width.
pub const LANES: usize = 4;
/// Scratchpad capacity in vector entries (64 B at INT8 granularity).
pub const SPAD_ENTRIES: usize = 16;
/// Bytes of scratchpad address space per entry.
pub const SPAD_ENTRY_BYTES: u16 = 4;
pub const PIPELINE_DEPTH: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct VecWord(pub [i32; LANES]);

impl VecWord {
    pub const ZERO: VecWord = VecWord([0; LANES]);

    pub fn splat(v: i32) -> VecWord {
        VecWord([v; LANES])
    }

    pub fn scalar(v: i32) -> VecWord {
        VecWord([v, 0, 0, 0])
    }

    pub fn lane_sum(self) -> i32 {
        self.0.iter().fold(0i32, |s, &l| s.wrapping_add(l))
    }

    pub fn scale(self, s: i32) -> VecWord {
        VecWord(self.0.map(|l| l.wrapping_mul(s)))
    }
}

impl Add for VecWord {
    type Output = VecWord;
    fn add(self, rhs: VecWord) -> VecWord {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = o.wrapping_add(r);
        }
        VecWord(out)
    }
}

impl Mul for VecWord {
    type Output = VecWord;
    fn mul(self, rhs: VecWord) -> VecWord {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = o.wrapping_mul(r);
        }
        VecWord(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Scalar(i32),
    Vector(VecWord),
}

impl Operand {
    fn as_vector(self) -> VecWord {
        match self {
            Operand::Scalar(s) => VecWord::scalar(s),
            Operand::Vector(v) => v,
        }
    }
}

/// Executes one opcode on already-fetched operands.
///
/// `acc` is the current value of the destination for the MAC opcodes and is
/// ignored otherwise.
pub fn vector_alu(op: Opcode, a: Operand, b: Operand, acc: VecWord) -> Result<Operand> {
    use Operand::*;
    let shape = |detail| Err(Error::OperandShape { op: op.mnemonic(), detail });
    match (op, a, b) {
        (Opcode::Svmac, Scalar(s), Vector(v)) => Ok(Vector(acc + v.scale(s))),
        (Opcode::Svmac, _, _) => shape("expects scalar op1 and vector op2"),
        (Opcode::Vvmac, Vector(x), Vector(y)) => Ok(Vector(acc + x * y)),
        (Opcode::Vvmac, _, _) => shape("expects two vectors"),
        (Opcode::Vvadd, Vector(x), Vector(y)) => Ok(Vector(x + y)),
        (Opcode::Vvadd, _, _) => shape("expects two vectors"),
        (Opcode::Vsum, Vector(x), _) => Ok(Scalar(x.lane_sum())),
        (Opcode::Vsum, _, _) => shape("expects a vector"),
        (Opcode::Nop | Opcode::Mov | Opcode::Hold, a, _) => Ok(a),
    }
}

/// Values present on the four router inputs (or outputs) in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PortFrame(pub [Option<VecWord>; 4]);

impl PortFrame {
    pub fn get(&self, d: Direction) -> Option<VecWord> {
        self.0[d.index()]
    }

    pub fn set(&mut self, d: Direction, v: VecWord) {
        self.0[d.index()] = Some(v);
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }
}

/// FIFO bookkeeping for the psum context window kept in the scratchpad.
///
/// Entries are identified by row id; `rid_start` is the oldest managed row
/// and rows are always consecutive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextQueue {
    pub rid_start: u32,
    pub head: u8,
    pub len: u8,
    pub capacity: u8,
}

impl ContextQueue {
    pub fn new(capacity: u8) -> Self {
        assert!(capacity as usize <= SPAD_ENTRIES);
        ContextQueue {
            rid_start: 0,
            head: 0,
            len: 0,
            capacity,
        }
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn slot(&self, i: u8) -> u8 {
        (self.head + i) % self.capacity.max(1)
    }

    /// Slot of the oldest entry.
    pub fn peek(&self) -> Result<u8> {
        if self.is_empty() {
            return Err(Error::BufferEmpty);
        }
        Ok(self.head)
    }

    /// Slot that the next push will occupy.
    pub fn tail(&self) -> u8 {
        self.slot(self.len)
    }

    pub fn is_managing(&self, rid: u32) -> bool {
        rid >= self.rid_start && rid < self.rid_start + self.len as u32
    }

    pub fn index_of(&self, rid: u32) -> Option<u8> {
        self.is_managing(rid)
            .then(|| self.slot((rid - self.rid_start) as u8))
    }

    pub fn push(&mut self) -> Result<u8> {
        if self.is_full() {
            return Err(Error::BufferFull);
        }
        let s = self.tail();
        self.len += 1;
        Ok(s)
    }

    /// Removes the oldest entry, returning its row id and slot.
    pub fn pop(&mut self) -> Result<(u32, u8)> {
        let s = self.peek()?;
        let rid = self.rid_start;
        self.head = self.slot(1);
        self.len -= 1;
        self.rid_start += 1;
        Ok((rid, s))
    }

    /// Pops the oldest entry and pushes a new one into the freed slot.
    pub fn swap(&mut self) -> Result<(u32, u8)> {
        let (rid, slot) = self.pop()?;
        let pushed = self.push()?;
        debug_assert_eq!(pushed, slot);
        Ok((rid, slot))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeCounters {
    pub instructions: u64,
    pub mac_ops: u64,
    pub active_lanes: u64,
    pub vsum_ops: u64,
    pub dmem_reads: u64,
    pub dmem_writes: u64,
    pub spad_reads: u64,
    pub spad_writes: u64,
    pub noc_transfers: u64,
}

impl std::ops::AddAssign for PeCounters {
    fn add_assign(&mut self, o: PeCounters) {
        self.instructions += o.instructions;
        self.mac_ops += o.mac_ops;
        self.active_lanes += o.active_lanes;
        self.vsum_ops += o.vsum_ops;
        self.dmem_reads += o.dmem_reads;
        self.dmem_writes += o.dmem_writes;
        self.spad_reads += o.spad_reads;
        self.spad_writes += o.spad_writes;
        self.noc_transfers += o.noc_transfers;
    }
}

/// Static per-PE context supplied by the fabric each tick.
#[derive(Debug, Clone, Copy, Default)]
pub struct TickCtx {
    pub cycle: u64,
    pub x: usize,
    pub y: usize,
    /// West input is the array edge and reads as zero.
    pub west_tied_zero: bool,
    /// Last column: east-bound results are reduced to a scalar.
    pub reduce_east: bool,
    /// Spatial-mode hold line asserted for this row.
    pub hold: bool,
    /// Configuration phase: nothing is read or written.
    pub discard: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TickOutput {
    pub out: PortFrame,
    pub forwarded: Option<Instruction>,
    /// Instruction that performed LOAD this cycle.
    pub loaded: Option<Instruction>,
    pub consumed: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Dmem(u16),
    Spad(u8),
    VReg(u8),
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    inst: Instruction,
    a: Operand,
    b: Operand,
    acc: VecWord,
    routed: Option<VecWord>,
    result: Option<Operand>,
    discard: bool,
}

#[derive(Debug, Clone)]
pub struct PeState {
    pub vregs: [VecWord; 4],
    pub dmem: Vec<u8>,
    pub spad: [VecWord; SPAD_ENTRIES],
    pub held: Option<Instruction>,
    pub counters: PeCounters,
    in_compute: Option<InFlight>,
    in_commit: Option<InFlight>,
}

impl Default for PeState {
    fn default() -> Self {
        PeState::new()
    }
}

impl PeState {
    pub fn new() -> Self {
        PeState {
            vregs: [VecWord::ZERO; 4],
            dmem: vec![0; DMEM_BYTES as usize],
            spad: [VecWord::ZERO; SPAD_ENTRIES],
            held: None,
            counters: PeCounters::default(),
            in_compute: None,
            in_commit: None,
        }
    }

    /// No instruction in COMPUTE or COMMIT.
    pub fn pipeline_empty(&self) -> bool {
        self.in_compute.is_none() && self.in_commit.is_none()
    }

    pub fn read_dmem_vec(&self, offset: u16) -> VecWord {
        let o = offset as usize;
        let mut v = [0i32; LANES];
        for (i, lane) in v.iter_mut().enumerate() {
            *lane = self.dmem[o + i] as i8 as i32;
        }
        VecWord(v)
    }

    pub fn write_dmem_vec(&mut self, offset: u16, v: VecWord) {
        let o = offset as usize;
        for (i, lane) in v.0.iter().enumerate() {
            self.dmem[o + i] = *lane as i8 as u8;
        }
    }

    /// Pushes `value` into the context window's next slot.
    pub fn spad_push(&mut self, q: &mut ContextQueue, value: VecWord) -> Result<u8> {
        let s = q.push()?;
        self.spad[s as usize] = value;
        Ok(s)
    }

    /// Pops the oldest psum of the context window.
    pub fn spad_pop(&mut self, q: &mut ContextQueue) -> Result<(u32, VecWord)> {
        let (rid, s) = q.pop()?;
        Ok((rid, self.spad[s as usize]))
    }

    pub fn spad_peek(&self, q: &ContextQueue) -> Result<VecWord> {
        Ok(self.spad[q.peek()? as usize])
    }

    fn loc_of(addr: Address) -> Result<Option<Loc>> {
        Ok(match addr.region() {
            Region::DataMemory(o) => {
                if o as usize + LANES > DMEM_BYTES as usize {
                    return Err(Error::InvalidInstruction(format!(
                        "vector access past end of data memory at {o}"
                    )));
                }
                Some(Loc::Dmem(o))
            }
            Region::Scratchpad(o) => Some(Loc::Spad((o / SPAD_ENTRY_BYTES) as u8)),
            Region::VReg(i) => Some(Loc::VReg(i)),
            _ => None,
        })
    }

    fn read_loc(&mut self, loc: Loc, fwd: &[(Loc, VecWord)]) -> VecWord {
        match loc {
            Loc::Dmem(_) => self.counters.dmem_reads += 1,
            Loc::Spad(_) => self.counters.spad_reads += 1,
            Loc::VReg(_) => {}
        }
        if let Some(&(_, v)) = fwd.iter().rev().find(|(l, _)| *l == loc) {
            return v;
        }
        match loc {
            Loc::Dmem(o) => self.read_dmem_vec(o),
            Loc::Spad(s) => self.spad[s as usize],
            Loc::VReg(i) => self.vregs[i as usize],
        }
    }

    fn write_loc(&mut self, loc: Loc, v: VecWord) {
        match loc {
            Loc::Dmem(o) => {
                self.counters.dmem_writes += 1;
                self.write_dmem_vec(o, v);
            }
            Loc::Spad(s) => {
                self.counters.spad_writes += 1;
                self.spad[s as usize] = v;
            }
            Loc::VReg(i) => self.vregs[i as usize] = v,
        }
    }

    /// Vector registers zeroed when a MOV/VVADD/VSUM reads them as a source
    /// without also targeting them.
    fn drained(inst: &Instruction) -> impl Iterator<Item = u8> + '_ {
        let drains = matches!(inst.op, Opcode::Mov | Opcode::Vvadd | Opcode::Vsum);
        [inst.op1, inst.op2]
            .into_iter()
            .filter(move |a| drains && *a != inst.res)
            .filter_map(|a| match a.region() {
                Region::VReg(i) => Some(i),
                _ => None,
            })
    }

    fn pending_writes(f: &InFlight) -> Vec<(Loc, VecWord)> {
        let mut w = Vec::new();
        if f.discard {
            return w;
        }
        for i in Self::drained(&f.inst) {
            w.push((Loc::VReg(i), VecWord::ZERO));
        }
        if let (Some(r), Ok(Some(loc))) = (f.result, Self::loc_of(f.inst.res)) {
            w.push((loc, r.as_vector()));
        }
        w
    }

    fn read_operand(
        &mut self,
        addr: Address,
        inst: &Instruction,
        ports: &PortFrame,
        ctx: &TickCtx,
        fwd: &[(Loc, VecWord)],
        consumed: &mut [bool; 4],
    ) -> Result<Operand> {
        if ctx.discard {
            return Ok(Operand::Vector(VecWord::ZERO));
        }
        Ok(match addr.region() {
            Region::Immediate => Operand::Scalar(inst.imm as i32),
            Region::Null => Operand::Vector(VecWord::ZERO),
            Region::RouterPort(d) => Operand::Vector(self.read_port(d, ports, ctx, consumed)?),
            Region::Invalid(_) => {
                return Err(Error::InvalidInstruction(format!("read from {addr:?}")));
            }
            _ => {
                let loc = Self::loc_of(addr)?.expect("storage region");
                Operand::Vector(self.read_loc(loc, fwd))
            }
        })
    }

    fn read_port(
        &self,
        d: Direction,
        ports: &PortFrame,
        ctx: &TickCtx,
        consumed: &mut [bool; 4],
    ) -> Result<VecWord> {
        if d == Direction::W && ctx.west_tied_zero {
            return Ok(VecWord::ZERO);
        }
        match ports.get(d) {
            Some(v) => {
                consumed[d.index()] = true;
                Ok(v)
            }
            None => Err(Error::RendezvousViolation {
                cycle: ctx.cycle,
                x: ctx.x,
                y: ctx.y,
                dir: d,
            }),
        }
    }

    /// Advances the pipeline by one cycle.
    ///
    /// `incoming` enters LOAD this cycle; `ports` are the values that
    /// neighbours committed last cycle.
    pub fn tick(
        &mut self,
        incoming: Option<Instruction>,
        ports: &PortFrame,
        ctx: &TickCtx,
    ) -> Result<TickOutput> {
        let mut out = TickOutput::default();

        // COMMIT
        if let Some(f) = self.in_commit.take() {
            if !f.discard {
                for i in Self::drained(&f.inst) {
                    self.vregs[i as usize] = VecWord::ZERO;
                }
                let drive = |d: Direction, v: VecWord, out: &mut TickOutput| {
                    if out.out.get(d).is_some() {
                        return Err(Error::RouterConflict {
                            cycle: ctx.cycle,
                            x: ctx.x,
                            y: ctx.y,
                            dir: d,
                        });
                    }
                    out.out.set(d, v);
                    Ok(())
                };
                if let Some(r) = f.result {
                    match f.inst.res.region() {
                        Region::RouterPort(d) => drive(d, r.as_vector(), &mut out)?,
                        _ => {
                            if let Some(loc) = Self::loc_of(f.inst.res)? {
                                self.write_loc(loc, r.as_vector());
                            }
                        }
                    }
                }
                if let Some(v) = f.routed {
                    drive(Direction::S, v, &mut out)?;
                }
                self.counters.noc_transfers += out.out.0.iter().flatten().count() as u64;
            }
            if !ctx.hold {
                out.forwarded = Some(f.inst);
            }
        }

        // COMPUTE
        let mut fwd = Vec::new();
        if let Some(mut f) = self.in_compute.take() {
            if !f.discard && f.inst.op != Opcode::Nop {
                let mut r = vector_alu(f.inst.op, f.a, f.b, f.acc)?;
                if f.inst.op.is_mac() {
                    self.counters.mac_ops += 1;
                    self.counters.active_lanes += LANES as u64;
                }
                if ctx.reduce_east && f.inst.res == Address::port(Direction::E) {
                    r = Operand::Scalar(r.as_vector().lane_sum());
                    self.counters.vsum_ops += 1;
                }
                if f.inst.op == Opcode::Vsum {
                    self.counters.vsum_ops += 1;
                }
                f.result = Some(r);
            }
            fwd = Self::pending_writes(&f);
            self.in_commit = Some(f);
        }

        // LOAD
        let inst = match (ctx.hold, self.held) {
            (true, Some(h)) => Some(h),
            _ => incoming,
        };
        if let Some(inst) = inst {
            let mut consumed = [false; 4];
            let a = self.read_operand(inst.op1, &inst, ports, ctx, &fwd, &mut consumed)?;
            let b = self.read_operand(inst.op2, &inst, ports, ctx, &fwd, &mut consumed)?;
            let acc = if inst.op.is_mac() && !ctx.discard {
                match Self::loc_of(inst.res)? {
                    Some(loc) => self.read_loc(loc, &fwd),
                    None => VecWord::ZERO,
                }
            } else {
                VecWord::ZERO
            };
            let routed = match (inst.route, ctx.discard) {
                (_, true) | (Route::None, _) => None,
                (Route::NorthToSouth, false) => {
                    Some(self.read_port(Direction::N, ports, ctx, &mut consumed)?)
                }
                (Route::Op2ToSouth, false) => Some(b.as_vector()),
            };
            if inst.op != Opcode::Nop && !ctx.discard {
                self.counters.instructions += 1;
            }
            out.consumed = consumed;
            out.loaded = Some(inst);
            self.in_compute = Some(InFlight {
                inst,
                a,
                b,
                acc,
                routed,
                result: None,
                discard: ctx.discard,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(pe: &mut PeState, insts: &[Option<Instruction>], ctx: TickCtx) -> Vec<TickOutput> {
        insts
            .iter()
            .enumerate()
            .map(|(c, i)| {
                let ctx = TickCtx {
                    cycle: c as u64,
                    ..ctx
                };
                pe.tick(*i, &PortFrame::default(), &ctx).unwrap()
            })
            .collect()
    }

    #[test]
    fn alu_examples() {
        let v = |a: [i32; 4]| Operand::Vector(VecWord(a));
        assert_eq!(
            vector_alu(Opcode::Svmac, Operand::Scalar(2), v([1, 2, 3, 4]), VecWord::ZERO).unwrap(),
            v([2, 4, 6, 8])
        );
        assert_eq!(
            vector_alu(Opcode::Vvadd, v([1, 1, 1, 1]), v([0, 0, 0, 0]), VecWord::ZERO).unwrap(),
            v([1, 1, 1, 1])
        );
        assert_eq!(
            vector_alu(Opcode::Vsum, v([3, -1, 4, 2]), v([0; 4]), VecWord::ZERO).unwrap(),
            Operand::Scalar(8)
        );
        assert!(matches!(
            vector_alu(Opcode::Svmac, v([1; 4]), v([1; 4]), VecWord::ZERO),
            Err(Error::OperandShape { .. })
        ));
    }

    #[test]
    fn nops_leave_state_untouched() {
        let mut pe = PeState::new();
        let before = (pe.vregs, pe.spad, pe.dmem.clone());
        let outs = run(
            &mut pe,
            &[Some(Instruction::nop()); 3]
                .into_iter()
                .chain([None, None, None])
                .collect::<Vec<_>>(),
            TickCtx::default(),
        );
        assert_eq!(before, (pe.vregs, pe.spad, pe.dmem.clone()));
        let fwd: Vec<usize> = outs
            .iter()
            .enumerate()
            .filter(|(_, o)| o.forwarded.is_some())
            .map(|(c, _)| c)
            .collect();
        // accepted at 0,1,2 -> leave after COMMIT at 2,3,4 -> next LOAD at 3,4,5
        assert_eq!(fwd, vec![2, 3, 4]);
        assert!(outs.iter().all(|o| o.out.is_empty()));
    }

    #[test]
    fn svmac_visible_after_commit() {
        let mut pe = PeState::new();
        pe.write_dmem_vec(0, VecWord([1, 0, 2, 1]));
        let i = Instruction::new(Opcode::Svmac, Address::IMM, Address::dmem(0), Address::vreg(0))
            .with_imm(5);
        let ctx = TickCtx::default();
        pe.tick(Some(i), &PortFrame::default(), &ctx).unwrap();
        pe.tick(None, &PortFrame::default(), &ctx).unwrap();
        assert_eq!(pe.vregs[0], VecWord::ZERO);
        pe.tick(None, &PortFrame::default(), &ctx).unwrap();
        assert_eq!(pe.vregs[0], VecWord([5, 0, 10, 5]));
    }

    #[test]
    fn back_to_back_accumulation_forwards() {
        let mut pe = PeState::new();
        pe.write_dmem_vec(0, VecWord([1, 2, 3, 4]));
        let mac = |s| {
            Some(
                Instruction::new(Opcode::Svmac, Address::IMM, Address::dmem(0), Address::vreg(0))
                    .with_imm(s),
            )
        };
        let drain = Some(Instruction::new(
            Opcode::Mov,
            Address::vreg(0),
            Address::NULL,
            Address::vreg(1),
        ));
        run(
            &mut pe,
            &[mac(1), mac(2), drain, mac(3), None, None, None],
            TickCtx::default(),
        );
        assert_eq!(pe.vregs[1], VecWord([3, 6, 9, 12]));
        // drained by the MOV, then re-accumulated from zero
        assert_eq!(pe.vregs[0], VecWord([3, 6, 9, 12]));
    }

    #[test]
    fn port_read_without_value_is_rendezvous_violation() {
        let mut pe = PeState::new();
        let i = Instruction::new(
            Opcode::Mov,
            Address::port(Direction::N),
            Address::NULL,
            Address::vreg(0),
        );
        let err = pe
            .tick(Some(i), &PortFrame::default(), &TickCtx::default())
            .unwrap_err();
        assert!(matches!(err, Error::RendezvousViolation { dir: Direction::N, .. }));
    }

    #[test]
    fn bypass_and_mov_south_conflict() {
        let mut pe = PeState::new();
        let i = Instruction::new(
            Opcode::Mov,
            Address::vreg(0),
            Address::NULL,
            Address::port(Direction::S),
        )
        .with_route(Route::NorthToSouth);
        let mut ports = PortFrame::default();
        ports.set(Direction::N, VecWord::splat(1));
        let ctx = TickCtx::default();
        pe.tick(Some(i), &ports, &ctx).unwrap();
        pe.tick(None, &PortFrame::default(), &ctx).unwrap();
        let err = pe.tick(None, &PortFrame::default(), &ctx).unwrap_err();
        assert!(matches!(err, Error::RouterConflict { dir: Direction::S, .. }));
    }

    #[test]
    fn context_queue_fifo() {
        let mut pe = PeState::new();
        let mut q = ContextQueue::new(16);
        for r in 0..3 {
            pe.spad_push(&mut q, VecWord::splat(r)).unwrap();
        }
        let (rid, v) = pe.spad_pop(&mut q).unwrap();
        assert_eq!((rid, v), (0, VecWord::splat(0)));
        assert_eq!(q.rid_start, 1);
        assert_eq!(pe.spad_peek(&q).unwrap(), VecWord::splat(1));
    }

    #[test]
    fn context_queue_bounds() {
        let mut q = ContextQueue::new(4);
        for _ in 0..4 {
            q.push().unwrap();
        }
        assert!(!q.is_managing(5));
        assert!(q.is_managing(3));
        assert_eq!(q.index_of(5), None);
        assert_eq!(q.pop().unwrap(), (0, 0));
        assert_eq!(q.index_of(4), None);

        let mut full = ContextQueue::new(16);
        for _ in 0..16 {
            full.push().unwrap();
        }
        assert_eq!(full.push(), Err(Error::BufferFull));
        let mut empty = ContextQueue::new(16);
        assert_eq!(empty.pop(), Err(Error::BufferEmpty));
    }

    proptest! {
        #[test]
        fn fifo_order(ops in proptest::collection::vec(any::<bool>(), 1..200)) {
            let mut q = ContextQueue::new(16);
            let mut pushed = Vec::new();
            let mut popped = Vec::new();
            let mut next = 0u32;
            for push in ops {
                if push && !q.is_full() {
                    q.push().unwrap();
                    pushed.push(next);
                    next += 1;
                } else if !q.is_empty() {
                    popped.push(q.pop().unwrap().0);
                }
            }
            prop_assert_eq!(&pushed[..popped.len()], &popped[..]);
        }

        #[test]
        fn alu_matches_scalar_reference(
            s in any::<i8>(),
            a in proptest::array::uniform4(any::<i8>()),
            b in proptest::array::uniform4(any::<i8>()),
            acc in proptest::array::uniform4(-1_000_000i32..1_000_000),
        ) {
            let va = VecWord(a.map(i32::from));
            let vb = VecWord(b.map(i32::from));
            let vacc = VecWord(acc);
            let sv = vector_alu(Opcode::Svmac, Operand::Scalar(s as i32), Operand::Vector(vb), vacc).unwrap();
            let vv = vector_alu(Opcode::Vvmac, Operand::Vector(va), Operand::Vector(vb), vacc).unwrap();
            let add = vector_alu(Opcode::Vvadd, Operand::Vector(va), Operand::Vector(vb), vacc).unwrap();
            let sum = vector_alu(Opcode::Vsum, Operand::Vector(vacc), Operand::Vector(vb), vacc).unwrap();
            let mut e_sv = [0i32; 4];
            let mut e_vv = [0i32; 4];
            let mut e_add = [0i32; 4];
            let mut e_sum = 0i64;
            for l in 0..4 {
                e_sv[l] = acc[l] + s as i32 * b[l] as i32;
                e_vv[l] = acc[l] + a[l] as i32 * b[l] as i32;
                e_add[l] = a[l] as i32 + b[l] as i32;
                e_sum += acc[l] as i64;
            }
            prop_assert_eq!(sv, Operand::Vector(VecWord(e_sv)));
            prop_assert_eq!(vv, Operand::Vector(VecWord(e_vv)));
            prop_assert_eq!(add, Operand::Vector(VecWord(e_add)));
            prop_assert_eq!(sum, Operand::Scalar(e_sum as i32));
        }
    }
}
