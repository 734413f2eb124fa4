use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::program::Program;
use crate::error::{Error, Result};
use crate::isa::{Opcode, Route};

pub const LUT_ENTRIES: usize = 1024;

macro_rules! sel_enum {
    ($(#[$m:meta])* $name:ident { $($v:ident = $n:literal : $s:literal),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
        #[repr(u8)]
        pub enum $name {
            #[default]
            $($v = $n),*
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$v),*];

            pub fn from_u8(v: u8) -> Option<$name> {
                Self::ALL.iter().copied().find(|x| *x as u8 == v)
            }

            pub fn name(self) -> &'static str {
                match self { $($name::$v => $s),* }
            }

            pub fn from_name(s: &str) -> Option<$name> {
                Self::ALL.iter().copied().find(|x| x.name().eq_ignore_ascii_case(s))
            }
        }
    };
}

sel_enum!(
    /// Operand source/destination chosen by the orchestrator. Resolved to a
    /// concrete address using the current token and registers.
    OperandSel {
        Null = 0: "null",
        Imm = 1: "imm",
        DmemGen = 2: "dmem",
        SpadHead = 3: "spad_head",
        SpadTail = 4: "spad_tail",
        SpadMsg = 5: "spad_msg",
        SpadRowW = 6: "spad_row",
        VReg0 = 7: "v0",
        VReg1 = 8: "v1",
        VReg2 = 9: "v2",
        VReg3 = 10: "v3",
        PortN = 11: "n",
        PortE = 12: "e",
        PortS = 13: "s",
        PortW = 14: "w",
    }
);

sel_enum!(
    /// Data-memory address generation for `OperandSel::DmemGen`.
    AddrGen {
        None = 0: "none",
        CidModH = 1: "cid",
        CidStep = 2: "cid_step",
    }
);

sel_enum!(
    PayloadSel {
        None = 0: "none",
        MsgRid = 1: "msg_rid",
        HeadRid = 2: "head_rid",
        TokenRid = 3: "token_rid",
        LatchRid = 4: "latch_rid",
    }
);

sel_enum!(
    MetaAction {
        None = 0: "none",
        Push = 1: "push",
        Pop = 2: "pop",
        Swap = 3: "swap",
        CountInc = 4: "count_inc",
        CountReset = 5: "count_reset",
        StepInc = 6: "step_inc",
        StepReset = 7: "step_reset",
        ReleaseRow = 8: "release_row",
    }
);

/// One decoded LUT entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LutEntry {
    pub next_state: u8,
    pub opcode: Opcode,
    pub op1: OperandSel,
    pub op2: OperandSel,
    pub res: OperandSel,
    pub addr_gen: AddrGen,
    pub msg_id: u8,
    pub payload: PayloadSel,
    pub meta: MetaAction,
    pub valid: bool,
    pub route: Route,
    pub consume: bool,
}

const FIELDS: [(u32, u32); 12] = [
    (45, 3), // next_state
    (41, 4), // opcode
    (37, 4), // op1
    (33, 4), // op2
    (29, 4), // res
    (25, 4), // addr_gen
    (23, 2), // msg_id
    (20, 3), // payload
    (16, 4), // meta
    (15, 1), // valid
    (13, 2), // route
    (12, 1), // consume
];

impl LutEntry {
    pub fn encode(&self) -> u64 {
        let vals = [
            self.next_state as u64,
            self.opcode as u64,
            self.op1 as u64,
            self.op2 as u64,
            self.res as u64,
            self.addr_gen as u64,
            self.msg_id as u64,
            self.payload as u64,
            self.meta as u64,
            self.valid as u64,
            self.route as u64,
            self.consume as u64,
        ];
        FIELDS
            .iter()
            .zip(vals)
            .fold(0u64, |w, (&(lo, width), v)| {
                debug_assert!(v < 1 << width);
                w | (v & ((1 << width) - 1)) << lo
            })
    }

    pub fn decode(word: u64) -> Result<LutEntry> {
        let f = |i: usize| {
            let (lo, width) = FIELDS[i];
            ((word >> lo) & ((1 << width) - 1)) as u8
        };
        let bad = |what: &str| Error::Config(format!("LUT word {word:#014x}: bad {what}"));
        if word >> 48 != 0 || word & 0xfff != 0 {
            return Err(bad("reserved bits"));
        }
        Ok(LutEntry {
            next_state: f(0),
            opcode: Opcode::from_u8(f(1)).ok_or_else(|| bad("opcode"))?,
            op1: OperandSel::from_u8(f(2)).ok_or_else(|| bad("op1"))?,
            op2: OperandSel::from_u8(f(3)).ok_or_else(|| bad("op2"))?,
            res: OperandSel::from_u8(f(4)).ok_or_else(|| bad("res"))?,
            addr_gen: AddrGen::from_u8(f(5)).ok_or_else(|| bad("addr_gen"))?,
            msg_id: f(6),
            payload: PayloadSel::from_u8(f(7)).ok_or_else(|| bad("payload"))?,
            meta: MetaAction::from_u8(f(8)).ok_or_else(|| bad("meta"))?,
            valid: f(9) == 1,
            route: Route::from_u8(f(10)).ok_or_else(|| bad("route"))?,
            consume: f(11) == 1,
        })
    }
}

/// `state(3) | tag(3) | msg(2) | cond1 | cond0`.
pub fn lut_index(state: u8, tag: u8, msg: u8, cond0: bool, cond1: bool) -> u16 {
    debug_assert!(state < 8 && tag < 8 && msg < 4);
    (state as u16) << 7 | (tag as u16) << 4 | (msg as u16) << 2 | (cond1 as u16) << 1 | cond0 as u16
}

fn split_index(i: u16) -> (u8, u8, u8, bool, bool) {
    (
        (i >> 7) as u8 & 7,
        (i >> 4) as u8 & 7,
        (i >> 2) as u8 & 3,
        i & 1 == 1,
        i & 2 == 2,
    )
}

#[derive(Clone, PartialEq, Eq)]
pub struct Lut {
    pub words: Vec<u64>,
}

impl std::fmt::Debug for Lut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let valid = self.words.iter().filter(|w| (*w >> 15) & 1 == 1).count();
        write!(f, "Lut {{ {valid} valid entries }}")
    }
}

impl Lut {
    pub fn lookup(&self, index: u16) -> Result<LutEntry> {
        let e = LutEntry::decode(self.words[index as usize])?;
        if !e.valid {
            return Err(Error::IllegalTransition { index });
        }
        Ok(e)
    }

    pub fn from_words(words: Vec<u64>) -> Result<Lut> {
        if words.len() != LUT_ENTRIES {
            return Err(Error::BitstreamLength(words.len()));
        }
        for w in &words {
            LutEntry::decode(*w)?;
        }
        Ok(Lut { words })
    }
}

/// Compiles a program to a LUT, expanding wildcards. Two rules of equal
/// priority covering the same index are rejected.
pub fn assemble(p: &Program) -> Result<Lut> {
    let mut words = vec![0u64; LUT_ENTRIES];
    for (i, w) in words.iter_mut().enumerate() {
        let (s, t, m, c0, c1) = split_index(i as u16);
        if s as usize >= p.states.len() || t as usize >= p.tags.len() || m as usize >= p.msgs.len() {
            continue;
        }
        let mut best: Option<usize> = None;
        for (ri, r) in p.rules.iter().enumerate() {
            if !r.matches(s, t, m, c0, c1) {
                continue;
            }
            match best {
                None => best = Some(ri),
                Some(b) if p.rules[b].priority == r.priority => {
                    return Err(Error::AmbiguousRules {
                        first: p.rules[b].line,
                        second: r.line,
                        index: i as u16,
                    });
                }
                Some(b) if r.priority > p.rules[b].priority => best = Some(ri),
                Some(_) => {}
            }
        }
        if let Some(b) = best {
            *w = p.rules[b].entry_for(s).encode();
        }
    }
    Ok(Lut { words })
}

/// Evaluates the program rules directly, without a compiled table.
pub fn interpret_step(p: &Program, state: u8, tag: u8, msg: u8, cond0: bool, cond1: bool) -> Result<LutEntry> {
    let index = lut_index(state, tag, msg, cond0, cond1);
    if state as usize >= p.states.len() || tag as usize >= p.tags.len() || msg as usize >= p.msgs.len() {
        return Err(Error::IllegalTransition { index });
    }
    let mut order: Vec<&super::Rule> = p.rules.iter().collect();
    order.sort_by_key(|r| std::cmp::Reverse(r.priority));
    order
        .into_iter()
        .find(|r| r.matches(state, tag, msg, cond0, cond1))
        .map(|r| r.entry_for(state))
        .ok_or(Error::IllegalTransition { index })
}

/// Compares the compiled table against the interpreter on every index.
/// Returns the first mismatching index, if any.
pub fn verify_equivalence(p: &Program, lut: &Lut) -> Option<u16> {
    (0..LUT_ENTRIES as u16).find(|&i| {
        let (s, t, m, c0, c1) = split_index(i);
        let a = lut.lookup(i).ok();
        let b = interpret_step(p, s, t, m, c0, c1).ok();
        a != b
    })
}

pub fn write_bitstream<W: Write>(lut: &Lut, mut w: W) -> Result<()> {
    for word in &lut.words {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_bitstream<R: Read>(mut r: R) -> Result<Lut> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::BitstreamLength(bytes.len() / 8));
    }
    let words = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Lut::from_words(words)
}
