//! Line-oriented FSM program text.
//!
//! ```text
//! # comment
//! program NAME
//! states IDLE RUN ...        (at most 8)
//! tags NONE NNZ ...          (at most 8, token tag ids in order)
//! msgs NONE PSUM ...         (at most 4)
//! cond0 NAME
//! cond1 NAME
//! STATE TAG MSG CC -> key=value ...
//! ```
//!
//! `CC` is two characters, cond0 then cond1, each `0`, `1` or `*`; STATE,
//! TAG and MSG accept `*`. Keys: `next op op1 op2 res addr msg payload meta
//! route consume prio`. Unspecified fields default to a NOP that stays in
//! the current state and consumes nothing.

use serde::{Deserialize, Serialize};

use super::lut::{AddrGen, LutEntry, MetaAction, OperandSel, PayloadSel};
use crate::error::{Error, Result};
use crate::isa::{Opcode, Route};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CondPattern(pub [Option<bool>; 2]);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub state: Option<u8>,
    pub tag: Option<u8>,
    pub msg: Option<u8>,
    pub cond: CondPattern,
    /// `None` keeps the current state.
    pub next: Option<u8>,
    pub action: LutEntry,
    pub priority: i32,
    pub line: usize,
}

impl Rule {
    pub fn matches(&self, state: u8, tag: u8, msg: u8, c0: bool, c1: bool) -> bool {
        let m = |p: Option<u8>, v: u8| p.is_none_or(|p| p == v);
        let c = |p: Option<bool>, v: bool| p.is_none_or(|p| p == v);
        m(self.state, state)
            && m(self.tag, tag)
            && m(self.msg, msg)
            && c(self.cond.0[0], c0)
            && c(self.cond.0[1], c1)
    }

    pub fn entry_for(&self, state: u8) -> LutEntry {
        LutEntry {
            next_state: self.next.unwrap_or(state),
            valid: true,
            ..self.action
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub states: Vec<String>,
    pub tags: Vec<String>,
    pub msgs: Vec<String>,
    pub conds: [String; 2],
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn state_id(&self, name: &str) -> Option<u8> {
        self.states.iter().position(|s| s == name).map(|i| i as u8)
    }

    pub fn msg_id(&self, name: &str) -> Option<u8> {
        self.msgs.iter().position(|s| s == name).map(|i| i as u8)
    }
}

fn lookup(list: &[String], tok: &str, what: &str, line: usize) -> Result<Option<u8>> {
    if tok == "*" {
        return Ok(None);
    }
    list.iter()
        .position(|s| s == tok)
        .map(|i| Some(i as u8))
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown {what} {tok}"),
        })
}

fn sel<T>(v: Option<T>, key: &str, val: &str, line: usize) -> Result<T> {
    v.ok_or_else(|| Error::Parse {
        line,
        msg: format!("bad value {val} for {key}"),
    })
}

pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Program {
        name: String::new(),
        states: Vec::new(),
        tags: Vec::new(),
        msgs: Vec::new(),
        conds: [String::from("false"), String::from("false")],
        rules: Vec::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line, msg };
        let mut words = body.split_whitespace();
        let head = words.next().unwrap();
        let rest: Vec<String> = words.map(str::to_string).collect();
        match head {
            "program" => p.name = rest.join(" "),
            "states" => {
                if rest.len() > 8 {
                    return Err(Error::TooManyStates(rest.len()));
                }
                p.states = rest;
            }
            "tags" => {
                if rest.len() > 8 {
                    return Err(Error::TooManyTags(rest.len()));
                }
                p.tags = rest;
            }
            "msgs" => {
                if rest.len() > 4 {
                    return Err(Error::TooManyMessages(rest.len()));
                }
                p.msgs = rest;
            }
            "cond0" | "cond1" => {
                let i = (head == "cond1") as usize;
                p.conds[i] = rest.first().cloned().ok_or_else(|| perr("missing name".into()))?;
            }
            _ => p.rules.push(parse_rule(&p, body, line)?),
        }
    }
    if p.states.is_empty() || p.tags.is_empty() || p.msgs.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "states, tags and msgs must all be declared".into(),
        });
    }
    Ok(p)
}

fn parse_rule(p: &Program, body: &str, line: usize) -> Result<Rule> {
    let perr = |msg: String| Error::Parse { line, msg };
    let (lhs, rhs) = body
        .split_once("->")
        .ok_or_else(|| perr(format!("expected rule, got `{body}`")))?;
    let pat: Vec<&str> = lhs.split_whitespace().collect();
    if pat.len() != 4 {
        return Err(perr("rule needs STATE TAG MSG CC".into()));
    }
    let cc: Vec<char> = pat[3].chars().collect();
    if cc.len() != 2 {
        return Err(perr(format!("condition pattern `{}` must be 2 chars", pat[3])));
    }
    let mut cond = CondPattern::default();
    for (i, c) in cc.iter().enumerate() {
        cond.0[i] = match c {
            '0' => Some(false),
            '1' => Some(true),
            '*' => None,
            _ => return Err(perr(format!("bad condition char {c}"))),
        };
    }
    let mut rule = Rule {
        state: lookup(&p.states, pat[0], "state", line)?,
        tag: lookup(&p.tags, pat[1], "tag", line)?,
        msg: lookup(&p.msgs, pat[2], "msg", line)?,
        cond,
        next: None,
        action: LutEntry::default(),
        priority: 0,
        line,
    };
    for kv in rhs.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| perr(format!("expected key=value, got `{kv}`")))?;
        let a = &mut rule.action;
        match k {
            "next" => {
                rule.next = lookup(&p.states, v, "state", line)?;
            }
            "op" => a.opcode = sel(Opcode::from_mnemonic(v), k, v, line)?,
            "op1" => a.op1 = sel(OperandSel::from_name(v), k, v, line)?,
            "op2" => a.op2 = sel(OperandSel::from_name(v), k, v, line)?,
            "res" => a.res = sel(OperandSel::from_name(v), k, v, line)?,
            "addr" => a.addr_gen = sel(AddrGen::from_name(v), k, v, line)?,
            "msg" => a.msg_id = sel(lookup(&p.msgs, v, "msg", line)?, k, v, line)?,
            "payload" => a.payload = sel(PayloadSel::from_name(v), k, v, line)?,
            "meta" => a.meta = sel(MetaAction::from_name(v), k, v, line)?,
            "route" => {
                a.route = match v {
                    "none" => Route::None,
                    "north" => Route::NorthToSouth,
                    "op2" => Route::Op2ToSouth,
                    _ => return Err(perr(format!("bad route {v}"))),
                }
            }
            "consume" => {
                a.consume = match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(perr(format!("bad consume {v}"))),
                }
            }
            "prio" => rule.priority = v.parse().map_err(|_| perr(format!("bad prio {v}")))?,
            _ => return Err(perr(format!("unknown key {k}"))),
        }
    }
    Ok(rule)
}
