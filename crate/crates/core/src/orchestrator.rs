//! Per-row orchestrator: state register, statically wired condition unit,
//! and the LUT-driven instruction/message/next-state generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isa::{Address, Direction, Instruction};
use crate::microcode::{lut_index, AddrGen, Lut, LutEntry, MetaAction, OperandSel, PayloadSel};
use crate::pe::{ContextQueue, SPAD_ENTRY_BYTES};

pub const TAG_NONE: u8 = 0;
pub const TAG_NNZ: u8 = 1;
pub const TAG_ROWEND: u8 = 2;
pub const TAG_END: u8 = 3;

pub const MSG_NONE: u8 = 0;
pub const MSG_PSUM: u8 = 1;

/// One entry of a row's input metadata stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamToken {
    pub tag: u8,
    pub rid: u32,
    pub cid: u32,
    pub value: i32,
}

impl StreamToken {
    pub fn nnz(rid: u32, cid: u32, value: i32) -> Self {
        StreamToken { tag: TAG_NNZ, rid, cid, value }
    }

    pub fn row_end(rid: u32) -> Self {
        StreamToken { tag: TAG_ROWEND, rid, cid: 0, value: 0 }
    }

    pub fn end() -> Self {
        StreamToken { tag: TAG_END, rid: 0, cid: 0, value: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchMessage {
    pub id: u8,
    pub rid: u32,
    /// Simulator-side identity used for conservation checks.
    pub uid: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CondBits {
    pub cond0: bool,
    pub cond1: bool,
}

/// Predicates that can be wired to the two condition inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cond {
    False,
    IsManaging,
    MustEvict,
    GroupComplete,
    RowResident,
    StepDone,
}

impl Cond {
    pub fn from_name(name: &str) -> Result<Cond> {
        Ok(match name {
            "false" => Cond::False,
            "is_managing" => Cond::IsManaging,
            "must_evict" => Cond::MustEvict,
            "group_complete" => Cond::GroupComplete,
            "row_resident" => Cond::RowResident,
            "step_done" => Cond::StepDone,
            _ => return Err(Error::Config(format!("unknown condition {name}"))),
        })
    }
}

/// Occupancy of one A-row slot in the SDDMM scratchpad ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RingSlot {
    Free,
    Filling { rid: u32, filled: u32 },
    Resident { rid: u32 },
    /// Released; reusable once the last PE of the row has read it.
    Draining { until: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMeta {
    pub queue: ContextQueue,
    pub counter: u32,
    pub group: u32,
    pub latch_rid: u32,
    pub step: u32,
    pub steps: u32,
    pub ring: Vec<RingSlot>,
}

impl StateMeta {
    pub fn new(spad_entries: u8) -> Self {
        StateMeta {
            queue: ContextQueue::new(spad_entries),
            counter: 0,
            group: 1,
            latch_rid: 0,
            step: 0,
            steps: 1,
            ring: Vec::new(),
        }
    }

    pub fn resident_slot(&self, rid: u32) -> Option<usize> {
        self.ring
            .iter()
            .position(|s| *s == RingSlot::Resident { rid })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchRegisters {
    pub state: u8,
    pub meta: StateMeta,
    pub input: Option<StreamToken>,
    pub msg: Option<OrchMessage>,
}

impl OrchRegisters {
    pub fn new(spad_entries: u8) -> Self {
        OrchRegisters {
            state: 0,
            meta: StateMeta::new(spad_entries),
            input: None,
            msg: None,
        }
    }

    fn tag(&self) -> u8 {
        self.input.map_or(TAG_NONE, |t| t.tag)
    }

    fn msg_id(&self) -> u8 {
        self.msg.map_or(MSG_NONE, |m| m.id)
    }
}

/// Static address-generation parameters of one launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrParams {
    pub dmem_base: u16,
    /// Data-memory rows held per PE.
    pub h: u32,
    /// Vectors per row per PE.
    pub w: u32,
}

pub fn eval_conditions(regs: &OrchRegisters, conds: &[Cond; 2]) -> CondBits {
    let m = &regs.meta;
    let eval = |c: Cond| match c {
        Cond::False => false,
        Cond::IsManaging => regs.msg.is_some_and(|msg| m.queue.is_managing(msg.rid)),
        Cond::MustEvict => {
            m.queue.is_full() || (regs.tag() == TAG_END && !m.queue.is_empty())
        }
        Cond::GroupComplete => m.counter + 1 >= m.group,
        Cond::RowResident => regs
            .input
            .is_some_and(|t| m.resident_slot(t.rid).is_some()),
        Cond::StepDone => m.step >= m.steps,
    };
    CondBits {
        cond0: eval(conds[0]),
        cond1: eval(conds[1]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutput {
    pub inst: Instruction,
    pub south: Option<OrchMessage>,
    pub consumed: bool,
    pub entry: LutEntry,
    pub index: u16,
    pub transition: bool,
    /// A psum from the north was merged into the local window.
    pub merged: bool,
    pub released_row: Option<u32>,
}

impl StepOutput {
    /// The step changes nothing: NOP, no message, no register update.
    pub fn is_idle(&self, state: u8) -> bool {
        self.inst == Instruction::nop()
            && self.south.is_none()
            && !self.consumed
            && self.entry.meta == MetaAction::None
            && self.entry.next_state == state
    }
}

fn spad_addr(slot: u32) -> Address {
    Address::spad(slot as u16 * SPAD_ENTRY_BYTES)
}

fn resolve(
    sel: OperandSel,
    regs: &OrchRegisters,
    entry: &LutEntry,
    p: &AddrParams,
) -> Result<Address> {
    let m = &regs.meta;
    let token = || {
        regs.input
            .ok_or_else(|| Error::InvalidInstruction(format!("{} needs an input token", sel.name())))
    };
    Ok(match sel {
        OperandSel::Null => Address::NULL,
        OperandSel::Imm => Address::IMM,
        OperandSel::DmemGen => {
            let t = token()?;
            let row = t.cid % p.h;
            let vec = match entry.addr_gen {
                AddrGen::None | AddrGen::CidModH => row,
                AddrGen::CidStep => row * p.w + m.step,
            };
            Address::dmem(p.dmem_base + (vec * 4) as u16)
        }
        OperandSel::SpadHead => spad_addr(m.queue.peek()? as u32),
        OperandSel::SpadTail => spad_addr(m.queue.tail() as u32),
        OperandSel::SpadMsg => {
            let msg = regs
                .msg
                .ok_or_else(|| Error::InvalidInstruction("spad_msg without message".into()))?;
            let slot = m.queue.index_of(msg.rid).ok_or_else(|| {
                Error::InvalidInstruction(format!("row {} not in context window", msg.rid))
            })?;
            spad_addr(slot as u32)
        }
        OperandSel::SpadRowW => {
            let t = token()?;
            let slot = m.resident_slot(t.rid).ok_or_else(|| {
                Error::InvalidInstruction(format!("row {} not resident", t.rid))
            })?;
            spad_addr(slot as u32 * p.w + m.step)
        }
        OperandSel::VReg0 => Address::vreg(0),
        OperandSel::VReg1 => Address::vreg(1),
        OperandSel::VReg2 => Address::vreg(2),
        OperandSel::VReg3 => Address::vreg(3),
        OperandSel::PortN => Address::port(Direction::N),
        OperandSel::PortE => Address::port(Direction::E),
        OperandSel::PortS => Address::port(Direction::S),
        OperandSel::PortW => Address::port(Direction::W),
    })
}

/// One orchestrator cycle: look up the LUT for the current registers,
/// build the instruction and south message, then update the registers.
pub fn orchestrator_step(
    regs: &mut OrchRegisters,
    lut: &Lut,
    conds: &[Cond; 2],
    params: &AddrParams,
) -> Result<StepOutput> {
    let c = eval_conditions(regs, conds);
    let index = lut_index(regs.state, regs.tag(), regs.msg_id(), c.cond0, c.cond1);
    let entry = lut.lookup(index)?;

    let mut inst = Instruction::new(
        entry.opcode,
        resolve(entry.op1, regs, &entry, params)?,
        resolve(entry.op2, regs, &entry, params)?,
        resolve(entry.res, regs, &entry, params)?,
    )
    .with_route(entry.route);
    if entry.op1 == OperandSel::Imm || entry.op2 == OperandSel::Imm {
        inst = inst.with_imm(regs.input.map_or(0, |t| t.value) as u32);
    }
    inst.validate()?;

    let token_rid = regs.input.map(|t| t.rid);
    let no_token = || Error::InvalidInstruction("payload needs an input token".into());
    let south = if entry.msg_id != MSG_NONE {
        let (rid, uid) = match entry.payload {
            PayloadSel::MsgRid => {
                let m = regs.msg.ok_or_else(|| {
                    Error::InvalidInstruction("msg_rid payload without message".into())
                })?;
                (m.rid, m.uid)
            }
            PayloadSel::HeadRid => (regs.meta.queue.rid_start, 0),
            PayloadSel::TokenRid => (token_rid.ok_or_else(no_token)?, 0),
            PayloadSel::LatchRid => (regs.meta.latch_rid, 0),
            PayloadSel::None => (0, 0),
        };
        Some(OrchMessage {
            id: entry.msg_id,
            rid,
            uid,
        })
    } else {
        None
    };

    let m = &mut regs.meta;
    let mut released_row = None;
    match entry.meta {
        MetaAction::None => {}
        MetaAction::Push => {
            let rid = token_rid.ok_or_else(no_token)?;
            if m.queue.is_empty() {
                m.queue.rid_start = rid;
            } else if rid != m.queue.rid_start + m.queue.len as u32 {
                return Err(Error::MalformedStream(format!(
                    "row {rid} pushed out of order after {}",
                    m.queue.rid_start + m.queue.len as u32 - 1
                )));
            }
            m.queue.push()?;
        }
        MetaAction::Pop => {
            m.queue.pop()?;
        }
        MetaAction::Swap => {
            m.queue.swap()?;
            let rid = token_rid.ok_or_else(no_token)?;
            if rid != m.queue.rid_start + m.queue.len as u32 - 1 {
                return Err(Error::MalformedStream(format!("row {rid} pushed out of order")));
            }
        }
        MetaAction::CountInc => {
            m.counter += 1;
            m.latch_rid = token_rid.ok_or_else(no_token)?;
        }
        MetaAction::CountReset => {
            m.counter = 0;
            m.latch_rid = token_rid.ok_or_else(no_token)?;
        }
        MetaAction::StepInc => m.step += 1,
        MetaAction::StepReset => m.step = 0,
        MetaAction::ReleaseRow => released_row = Some(token_rid.ok_or_else(no_token)?),
    }

    let merged = entry.op1 == OperandSel::PortN && entry.res == OperandSel::SpadMsg;
    let transition = entry.next_state != regs.state;
    regs.state = entry.next_state;
    Ok(StepOutput {
        inst,
        south,
        consumed: entry.consume,
        entry,
        index,
        transition,
        merged,
        released_row,
    })
}

/// Builds the condition wiring declared by a program.
pub fn program_conds(p: &crate::microcode::Program) -> Result<[Cond; 2]> {
    Ok([Cond::from_name(&p.conds[0])?, Cond::from_name(&p.conds[1])?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Opcode, Route};
    use crate::microcode::{assemble, builtin_program};

    fn buffered() -> (Lut, [Cond; 2]) {
        let p = builtin_program("spmm_buffered").unwrap();
        (assemble(&p).unwrap(), program_conds(&p).unwrap())
    }

    fn regs_with_window(start: u32, len: u8) -> OrchRegisters {
        let mut r = OrchRegisters::new(16);
        r.meta.queue.rid_start = start;
        for _ in 0..len {
            r.meta.queue.push().unwrap();
        }
        r
    }

    fn psum(rid: u32) -> Option<OrchMessage> {
        Some(OrchMessage { id: MSG_PSUM, rid, uid: 7 })
    }

    const PARAMS: AddrParams = AddrParams { dmem_base: 0, h: 2, w: 1 };

    #[test]
    fn condition_examples() {
        let conds = [Cond::IsManaging, Cond::MustEvict];
        let mut r = regs_with_window(0, 4);
        r.msg = psum(1);
        assert!(eval_conditions(&r, &conds).cond0);
        r.msg = psum(5);
        assert!(!eval_conditions(&r, &conds).cond0);
        let full = regs_with_window(0, 16);
        assert!(eval_conditions(&full, &conds).cond1);
        assert!(!eval_conditions(&r, &conds).cond1);
    }

    #[test]
    fn nnz_generates_mac_on_cid_mod_h() {
        let (lut, conds) = buffered();
        let mut r = OrchRegisters::new(16);
        r.input = Some(StreamToken::nnz(4, 1, 3));
        let out = orchestrator_step(&mut r, &lut, &conds, &PARAMS).unwrap();
        assert_eq!(out.inst.op, Opcode::Svmac);
        assert_eq!(out.inst.op2, Address::dmem(4));
        assert_eq!(out.inst.imm, 3);
        assert!(out.consumed);
        assert_eq!(out.south, None);
    }

    #[test]
    fn row_end_with_full_window_flushes_oldest() {
        let (lut, conds) = buffered();
        let mut r = OrchRegisters::new(2);
        r.meta.queue.rid_start = 0;
        r.meta.queue.push().unwrap();
        r.meta.queue.push().unwrap();
        r.input = Some(StreamToken::row_end(2));
        let out = orchestrator_step(&mut r, &lut, &conds, &PARAMS).unwrap();
        assert_eq!(out.inst.op, Opcode::Mov);
        assert_eq!(out.inst.route, Route::Op2ToSouth);
        assert_eq!(out.south.map(|m| (m.id, m.rid)), Some((MSG_PSUM, 0)));
        assert_eq!(r.meta.queue.rid_start, 1);
        assert_eq!(r.meta.queue.len, 2);
    }

    #[test]
    fn unmanaged_psum_is_bypassed_while_mac_proceeds() {
        let (lut, conds) = buffered();
        let mut r = regs_with_window(0, 3);
        r.input = Some(StreamToken::nnz(3, 0, 1));
        r.msg = psum(5);
        let out = orchestrator_step(&mut r, &lut, &conds, &PARAMS).unwrap();
        assert_eq!(out.inst.op, Opcode::Svmac);
        assert_eq!(out.inst.route, Route::NorthToSouth);
        assert_eq!(out.south, psum(5));
        assert!(out.consumed);
    }

    #[test]
    fn managed_psum_accumulates_and_holds_token() {
        let (lut, conds) = buffered();
        let mut r = regs_with_window(0, 3);
        r.input = Some(StreamToken::nnz(3, 0, 1));
        r.msg = psum(1);
        let out = orchestrator_step(&mut r, &lut, &conds, &PARAMS).unwrap();
        assert_eq!(out.inst.op, Opcode::Vvadd);
        assert_eq!(out.inst.op1, Address::port(Direction::N));
        assert_eq!(out.inst.res, Address::spad(4));
        assert!(!out.consumed);
        assert!(out.merged);
        assert_eq!(out.south, None);
    }

    #[test]
    fn unreachable_entry_is_illegal() {
        let p = builtin_program("spmm_nm").unwrap();
        let lut = assemble(&p).unwrap();
        let conds = program_conds(&p).unwrap();
        let mut r = OrchRegisters::new(16);
        r.input = Some(StreamToken::row_end(0));
        assert!(matches!(
            orchestrator_step(&mut r, &lut, &conds, &PARAMS),
            Err(Error::IllegalTransition { .. })
        ));
    }
}
