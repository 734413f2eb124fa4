//! Instruction word, opcodes and the unified address space.
//!
//! Data memory, scratchpad, router ports, vector registers and the immediate
//! slot all share one 16-bit address space:
//!
//! | raw range        | region                      |
//! |------------------|-----------------------------|
//! | `0x0000..=0x0FFF`| data memory, byte offset     |
//! | `0x1000..=0x103F`| scratchpad, byte offset      |
//! | `0x1100..=0x1103`| router port N, E, S, W       |
//! | `0x1200..=0x1203`| vector register 0..3         |
//! | `0x1300`         | immediate (streamed operand) |
//! | `0xFFFF`         | null (reads zero, writes dropped) |
//!
//! Everything else decodes to [`Region::Invalid`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DMEM_BYTES: u16 = 0x1000;
pub const SPAD_BYTES: u16 = 0x40;
const SPAD_BASE: u16 = 0x1000;
const PORT_BASE: u16 = 0x1100;
const VREG_BASE: u16 = 0x1200;
const IMM_ADDR: u16 = 0x1300;
const NULL_ADDR: u16 = 0xFFFF;

/// Number of vector registers per PE.
pub const NUM_VREGS: u8 = 4;

/// Hex digits per packed instruction in a trace dump.
pub const TRACE_HEX_DIGITS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    DataMemory(u16),
    Scratchpad(u16),
    RouterPort(Direction),
    VReg(u8),
    Immediate,
    Null,
    Invalid(u16),
}

impl Region {
    pub fn is_readable(self) -> bool {
        !matches!(self, Region::Invalid(_))
    }

    pub fn is_writable(self) -> bool {
        !matches!(self, Region::Invalid(_) | Region::Immediate)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Address(pub u16);

impl Address {
    pub const NULL: Address = Address(NULL_ADDR);
    pub const IMM: Address = Address(IMM_ADDR);

    pub fn dmem(offset: u16) -> Address {
        debug_assert!(offset < DMEM_BYTES);
        Address(offset)
    }

    pub fn spad(offset: u16) -> Address {
        debug_assert!(offset < SPAD_BYTES);
        Address(SPAD_BASE + offset)
    }

    pub fn port(dir: Direction) -> Address {
        Address(PORT_BASE + dir as u16)
    }

    pub fn vreg(idx: u8) -> Address {
        debug_assert!(idx < NUM_VREGS);
        Address(VREG_BASE + idx as u16)
    }

    /// Inverse of [`decode_address`]; `None` for `Region::Invalid`.
    pub fn encode(region: Region) -> Option<Address> {
        match region {
            Region::DataMemory(o) if o < DMEM_BYTES => Some(Address(o)),
            Region::Scratchpad(o) if o < SPAD_BYTES => Some(Address(SPAD_BASE + o)),
            Region::RouterPort(d) => Some(Address::port(d)),
            Region::VReg(i) if i < NUM_VREGS => Some(Address(VREG_BASE + i as u16)),
            Region::Immediate => Some(Address::IMM),
            Region::Null => Some(Address::NULL),
            _ => None,
        }
    }

    pub fn region(self) -> Region {
        decode_address(self)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.region() {
            Region::DataMemory(o) => write!(f, "dmem[{o}]"),
            Region::Scratchpad(o) => write!(f, "spad[{o}]"),
            Region::RouterPort(d) => write!(f, "port.{d:?}"),
            Region::VReg(i) => write!(f, "v{i}"),
            Region::Immediate => write!(f, "imm"),
            Region::Null => write!(f, "null"),
            Region::Invalid(raw) => write!(f, "invalid({raw:#06x})"),
        }
    }
}

/// Total decode of a raw address.
pub fn decode_address(addr: Address) -> Region {
    let raw = addr.0;
    match raw {
        0..=0x0FFF => Region::DataMemory(raw),
        0x1000..=0x103F => Region::Scratchpad(raw - SPAD_BASE),
        0x1100..=0x1103 => Region::RouterPort(Direction::ALL[(raw - PORT_BASE) as usize]),
        0x1200..=0x1203 => Region::VReg((raw - VREG_BASE) as u8),
        IMM_ADDR => Region::Immediate,
        NULL_ADDR => Region::Null,
        _ => Region::Invalid(raw),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    #[default]
    Nop = 0,
    /// Scalar (immediate) times vector, accumulated into `res`.
    Svmac = 1,
    /// Elementwise vector multiply, accumulated into `res`.
    Vvmac = 2,
    Vvadd = 3,
    /// Reduce the V lanes of `op1` to one scalar.
    Vsum = 4,
    Mov = 5,
    /// Spatial-mode hold signal: the PE executes its latched instruction.
    Hold = 6,
}

impl Opcode {
    pub const COUNT: u8 = 7;
    pub const ALL: [Opcode; 7] = [
        Opcode::Nop,
        Opcode::Svmac,
        Opcode::Vvmac,
        Opcode::Vvadd,
        Opcode::Vsum,
        Opcode::Mov,
        Opcode::Hold,
    ];

    pub fn from_u8(v: u8) -> Option<Opcode> {
        Opcode::ALL.get(v as usize).copied()
    }

    pub fn is_mac(self) -> bool {
        matches!(self, Opcode::Svmac | Opcode::Vvmac)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Nop => "NOP",
            Opcode::Svmac => "SVMAC",
            Opcode::Vvmac => "VVMAC",
            Opcode::Vvadd => "VVADD",
            Opcode::Vsum => "VSUM",
            Opcode::Mov => "MOV",
            Opcode::Hold => "HOLD",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|o| o.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// Side-band router action carried next to the datapath operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Route {
    #[default]
    None = 0,
    /// Latch the value on the N input at LOAD and drive it S at COMMIT.
    NorthToSouth = 1,
    /// Drive the value read for `op2` onto S at COMMIT.
    Op2ToSouth = 2,
}

impl Route {
    pub fn from_u8(v: u8) -> Option<Route> {
        match v {
            0 => Some(Route::None),
            1 => Some(Route::NorthToSouth),
            2 => Some(Route::Op2ToSouth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub op: Opcode,
    pub op1: Address,
    pub op2: Address,
    pub res: Address,
    /// Streamed operand, read through [`Address::IMM`].
    pub imm: u32,
    pub route: Route,
    pub valid: bool,
}

impl Default for Instruction {
    fn default() -> Self {
        Instruction::nop()
    }
}

impl Instruction {
    pub fn nop() -> Self {
        Instruction {
            op: Opcode::Nop,
            op1: Address::NULL,
            op2: Address::NULL,
            res: Address::NULL,
            imm: 0,
            route: Route::None,
            valid: true,
        }
    }

    pub fn new(op: Opcode, op1: Address, op2: Address, res: Address) -> Self {
        Instruction {
            op,
            op1,
            op2,
            res,
            ..Instruction::nop()
        }
    }

    pub fn with_imm(mut self, imm: u32) -> Self {
        self.imm = imm;
        self
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    /// Router directions read at LOAD.
    pub fn port_reads(&self) -> impl Iterator<Item = Direction> + '_ {
        let bypass = (self.route == Route::NorthToSouth).then_some(Direction::N);
        [self.op1, self.op2]
            .into_iter()
            .filter_map(|a| match a.region() {
                Region::RouterPort(d) => Some(d),
                _ => None,
            })
            .chain(bypass)
    }

    /// Router directions written at COMMIT, with multiplicity.
    pub fn port_writes(&self) -> impl Iterator<Item = Direction> + '_ {
        let res = match self.res.region() {
            Region::RouterPort(d) => Some(d),
            _ => None,
        };
        let routed = match self.route {
            Route::None => None,
            Route::NorthToSouth | Route::Op2ToSouth => Some(Direction::S),
        };
        res.into_iter().chain(routed)
    }

    /// True when the instruction reads and writes the same router direction.
    pub fn has_port_conflict(&self) -> bool {
        let writes: Vec<Direction> = self.port_writes().collect();
        self.port_reads().any(|r| writes.contains(&r))
    }

    /// Checks the static instruction invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInstruction(format!("{m}: {self:?}")));
        if !self.op1.region().is_readable() || !self.op2.region().is_readable() {
            return bad("unreadable source operand");
        }
        if !self.res.region().is_writable() {
            return bad("unwritable destination");
        }
        if self.has_port_conflict() {
            return bad("reads and writes the same router direction");
        }
        let mut writes: Vec<Direction> = self.port_writes().collect();
        writes.sort();
        if writes.windows(2).any(|w| w[0] == w[1]) {
            return bad("drives one router direction twice");
        }
        match self.op {
            Opcode::Svmac if self.op1.region() != Region::Immediate => {
                bad("SVMAC needs an immediate scalar in op1")
            }
            Opcode::Svmac | Opcode::Vvmac if self.op2.region() == Region::Immediate => {
                bad("MAC needs a vector op2")
            }
            Opcode::Vvmac | Opcode::Vvadd if self.op1.region() == Region::Immediate => {
                bad("vector op with scalar op1")
            }
            Opcode::Vsum if self.op1.region() == Region::Immediate => bad("VSUM of a scalar"),
            _ => Ok(()),
        }
    }
}

const OPCODE_MASK: u8 = 0x0F;
const ROUTE_SHIFT: u8 = 4;
const BUBBLE_BIT: u8 = 0x40;
const RESERVED_BIT: u8 = 0x80;

/// Packs into the 88-bit trace word:
/// `ctl(8) ‖ op1(16) ‖ op2(16) ‖ res(16) ‖ imm(32)`, where `ctl` holds the
/// opcode in bits 0..4, the route in bits 4..6 and an invalid marker in bit 6.
pub fn pack_instruction(inst: &Instruction) -> u128 {
    let mut ctl = inst.op as u8 | ((inst.route as u8) << ROUTE_SHIFT);
    if !inst.valid {
        ctl |= BUBBLE_BIT;
    }
    (ctl as u128) << 80
        | (inst.op1.0 as u128) << 64
        | (inst.op2.0 as u128) << 48
        | (inst.res.0 as u128) << 32
        | inst.imm as u128
}

pub fn unpack_instruction(word: u128) -> Result<Instruction> {
    if word >> 88 != 0 {
        return Err(Error::MalformedInstruction {
            word,
            reason: "bits above 88 set",
        });
    }
    let ctl = (word >> 80) as u8;
    let op = Opcode::from_u8(ctl & OPCODE_MASK).ok_or(Error::MalformedInstruction {
        word,
        reason: "opcode field exceeds opcode count",
    })?;
    if ctl & RESERVED_BIT != 0 {
        return Err(Error::MalformedInstruction {
            word,
            reason: "reserved control bit set",
        });
    }
    let route = Route::from_u8((ctl >> ROUTE_SHIFT) & 0x3).ok_or(Error::MalformedInstruction {
        word,
        reason: "unknown route",
    })?;
    Ok(Instruction {
        op,
        op1: Address((word >> 64) as u16),
        op2: Address((word >> 48) as u16),
        res: Address((word >> 32) as u16),
        imm: word as u32,
        route,
        valid: ctl & BUBBLE_BIT == 0,
    })
}

/// One lowercase hex word per line.
pub fn format_trace_word(inst: &Instruction) -> String {
    format!("{:0width$x}", pack_instruction(inst), width = TRACE_HEX_DIGITS)
}

pub fn parse_trace_word(line: &str) -> Result<Instruction> {
    let line = line.trim();
    if line.len() != TRACE_HEX_DIGITS {
        return Err(Error::MalformedInstruction {
            word: 0,
            reason: "trace line is not 22 hex digits",
        });
    }
    let word = u128::from_str_radix(line, 16).map_err(|_| Error::MalformedInstruction {
        word: 0,
        reason: "trace line is not hex",
    })?;
    unpack_instruction(word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_examples() {
        assert_eq!(decode_address(Address(0x0004)), Region::DataMemory(4));
        assert_eq!(decode_address(Address(0x1000)), Region::Scratchpad(0));
        assert_eq!(decode_address(Address(0x1102)), Region::RouterPort(Direction::S));
        assert_eq!(decode_address(Address(0x1203)), Region::VReg(3));
        assert_eq!(decode_address(Address(0x1300)), Region::Immediate);
        assert_eq!(decode_address(Address(0xFFFF)), Region::Null);
        assert_eq!(decode_address(Address(0x1040)), Region::Invalid(0x1040));
        assert_eq!(decode_address(Address(0x1104)), Region::Invalid(0x1104));
    }

    #[test]
    fn address_space_partition() {
        let mut counts = [0usize; 7];
        for raw in 0..=u16::MAX {
            let a = Address(raw);
            let r = decode_address(a);
            let slot = match r {
                Region::DataMemory(_) => 0,
                Region::Scratchpad(_) => 1,
                Region::RouterPort(_) => 2,
                Region::VReg(_) => 3,
                Region::Immediate => 4,
                Region::Null => 5,
                Region::Invalid(_) => 6,
            };
            counts[slot] += 1;
            if slot != 6 {
                assert_eq!(Address::encode(r), Some(a));
            }
        }
        assert_eq!(counts, [4096, 64, 4, 4, 1, 1, 65536 - 4096 - 64 - 10]);
    }

    #[test]
    fn nop_packs_to_zero_opcode() {
        let nop = Instruction::nop();
        let w = pack_instruction(&nop);
        assert_eq!((w >> 80) as u8, 0);
        assert_eq!(unpack_instruction(w).unwrap(), nop);
    }

    #[test]
    fn svmac_roundtrip() {
        let i = Instruction::new(Opcode::Svmac, Address::IMM, Address::dmem(8), Address::vreg(0))
            .with_imm(7);
        i.validate().unwrap();
        assert_eq!(unpack_instruction(pack_instruction(&i)).unwrap(), i);
        let line = format_trace_word(&i);
        assert_eq!(line.len(), 22);
        assert_eq!(parse_trace_word(&line).unwrap(), i);
    }

    #[test]
    fn bad_opcode_field() {
        let w = 0xFFu128 << 80;
        assert!(matches!(
            unpack_instruction(w),
            Err(Error::MalformedInstruction { .. })
        ));
    }

    #[test]
    fn conflict_rule() {
        let read_write_e = Instruction::new(
            Opcode::Mov,
            Address::port(Direction::E),
            Address::NULL,
            Address::port(Direction::E),
        );
        assert!(read_write_e.has_port_conflict());
        assert!(read_write_e.validate().is_err());
        let bypass_into_s =
            Instruction::new(Opcode::Mov, Address::vreg(0), Address::NULL, Address::port(Direction::S))
                .with_route(Route::NorthToSouth);
        assert!(bypass_into_s.validate().is_err());
        let ok = Instruction::new(
            Opcode::Vvadd,
            Address::port(Direction::W),
            Address::vreg(0),
            Address::port(Direction::E),
        );
        assert!(ok.validate().is_ok());
    }

    fn arb_region() -> impl Strategy<Value = Address> {
        prop_oneof![
            (0u16..DMEM_BYTES).prop_map(Address::dmem),
            (0u16..SPAD_BYTES).prop_map(Address::spad),
            (0usize..4).prop_map(|d| Address::port(Direction::ALL[d])),
            (0u8..4).prop_map(Address::vreg),
            Just(Address::NULL),
        ]
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (
            0u8..Opcode::COUNT,
            arb_region(),
            arb_region(),
            arb_region(),
            any::<u32>(),
            0u8..3,
            any::<bool>(),
        )
            .prop_map(|(op, a, b, r, imm, route, valid)| {
                let op = Opcode::from_u8(op).unwrap();
                let a = if op == Opcode::Svmac { Address::IMM } else { a };
                Instruction {
                    op,
                    op1: a,
                    op2: b,
                    res: r,
                    imm,
                    route: Route::from_u8(route).unwrap(),
                    valid,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn pack_roundtrip(i in arb_instruction()) {
            prop_assert_eq!(unpack_instruction(pack_instruction(&i)).unwrap(), i);
        }
    }
}
