//! Instruction subset, opcode tables and per-instruction encode/decode.

use std::fmt;

use super::leb128::{self, Reader};
use super::DecodeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum ValType {
    I32,
    I64,
    F32,
    F64,
    V128,
    FuncRef,
    ExternRef,
}

impl ValType {
    pub fn from_byte(b: u8) -> Option<ValType> {
        Some(match b {
            0x7f => ValType::I32,
            0x7e => ValType::I64,
            0x7d => ValType::F32,
            0x7c => ValType::F64,
            0x7b => ValType::V128,
            0x70 => ValType::FuncRef,
            0x6f => ValType::ExternRef,
            _ => return None,
        })
    }

    pub fn to_byte(self) -> u8 {
        match self {
            ValType::I32 => 0x7f,
            ValType::I64 => 0x7e,
            ValType::F32 => 0x7d,
            ValType::F64 => 0x7c,
            ValType::V128 => 0x7b,
            ValType::FuncRef => 0x70,
            ValType::ExternRef => 0x6f,
        }
    }

    pub fn is_int(self) -> bool {
        matches!(self, ValType::I32 | ValType::I64)
    }

    pub fn bits(self) -> Option<u32> {
        match self {
            ValType::I32 => Some(32),
            ValType::I64 => Some(64),
            _ => None,
        }
    }
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValType::I32 => "i32",
            ValType::I64 => "i64",
            ValType::F32 => "f32",
            ValType::F64 => "f64",
            ValType::V128 => "v128",
            ValType::FuncRef => "funcref",
            ValType::ExternRef => "externref",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockType {
    Empty,
    Value(ValType),
    /// Index into the type section (multi-value blocks).
    TypeIndex(u32),
}

/// Binary integer operators of the supported subset. Division and remainder
/// are decoded here but never synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
    Rotl,
    Rotr,
    Eq,
    Ne,
    LtS,
    LtU,
    GtS,
    GtU,
    LeS,
    LeU,
    GeS,
    GeU,
}

impl BinOp {
    pub const ALL: [BinOp; 25] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::DivS,
        BinOp::DivU,
        BinOp::RemS,
        BinOp::RemU,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::ShrS,
        BinOp::ShrU,
        BinOp::Rotl,
        BinOp::Rotr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::LtS,
        BinOp::LtU,
        BinOp::GtS,
        BinOp::GtU,
        BinOp::LeS,
        BinOp::LeU,
        BinOp::GeS,
        BinOp::GeU,
    ];

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq
                | BinOp::Ne
                | BinOp::LtS
                | BinOp::LtU
                | BinOp::GtS
                | BinOp::GtU
                | BinOp::LeS
                | BinOp::LeU
                | BinOp::GeS
                | BinOp::GeU
        )
    }

    /// div/rem can trap and are kept out of synthesized code.
    pub fn can_trap(self) -> bool {
        matches!(self, BinOp::DivS | BinOp::DivU | BinOp::RemS | BinOp::RemU)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Eq | BinOp::Ne)
    }

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::DivS => "div_s",
            BinOp::DivU => "div_u",
            BinOp::RemS => "rem_s",
            BinOp::RemU => "rem_u",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::ShrS => "shr_s",
            BinOp::ShrU => "shr_u",
            BinOp::Rotl => "rotl",
            BinOp::Rotr => "rotr",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::LtS => "lt_s",
            BinOp::LtU => "lt_u",
            BinOp::GtS => "gt_s",
            BinOp::GtU => "gt_u",
            BinOp::LeS => "le_s",
            BinOp::LeU => "le_u",
            BinOp::GeS => "ge_s",
            BinOp::GeU => "ge_u",
        }
    }

    fn opcode(self, wide: bool) -> u8 {
        let (cmp_base, arith_base) = if wide { (0x51u8, 0x7cu8) } else { (0x46u8, 0x6au8) };
        match self {
            BinOp::Eq => cmp_base,
            BinOp::Ne => cmp_base + 1,
            BinOp::LtS => cmp_base + 2,
            BinOp::LtU => cmp_base + 3,
            BinOp::GtS => cmp_base + 4,
            BinOp::GtU => cmp_base + 5,
            BinOp::LeS => cmp_base + 6,
            BinOp::LeU => cmp_base + 7,
            BinOp::GeS => cmp_base + 8,
            BinOp::GeU => cmp_base + 9,
            BinOp::Add => arith_base,
            BinOp::Sub => arith_base + 1,
            BinOp::Mul => arith_base + 2,
            BinOp::DivS => arith_base + 3,
            BinOp::DivU => arith_base + 4,
            BinOp::RemS => arith_base + 5,
            BinOp::RemU => arith_base + 6,
            BinOp::And => arith_base + 7,
            BinOp::Or => arith_base + 8,
            BinOp::Xor => arith_base + 9,
            BinOp::Shl => arith_base + 10,
            BinOp::ShrS => arith_base + 11,
            BinOp::ShrU => arith_base + 12,
            BinOp::Rotl => arith_base + 13,
            BinOp::Rotr => arith_base + 14,
        }
    }

    fn from_opcode(op: u8) -> Option<(ValType, BinOp)> {
        const CMP: [BinOp; 10] = [
            BinOp::Eq,
            BinOp::Ne,
            BinOp::LtS,
            BinOp::LtU,
            BinOp::GtS,
            BinOp::GtU,
            BinOp::LeS,
            BinOp::LeU,
            BinOp::GeS,
            BinOp::GeU,
        ];
        const ARITH: [BinOp; 15] = [
            BinOp::Add,
            BinOp::Sub,
            BinOp::Mul,
            BinOp::DivS,
            BinOp::DivU,
            BinOp::RemS,
            BinOp::RemU,
            BinOp::And,
            BinOp::Or,
            BinOp::Xor,
            BinOp::Shl,
            BinOp::ShrS,
            BinOp::ShrU,
            BinOp::Rotl,
            BinOp::Rotr,
        ];
        match op {
            0x46..=0x4f => Some((ValType::I32, CMP[(op - 0x46) as usize])),
            0x51..=0x5a => Some((ValType::I64, CMP[(op - 0x51) as usize])),
            0x6a..=0x78 => Some((ValType::I32, ARITH[(op - 0x6a) as usize])),
            0x7c..=0x8a => Some((ValType::I64, ARITH[(op - 0x7c) as usize])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Eqz,
    /// i64.extend_i32_s
    ExtendS,
    /// i64.extend_i32_u
    ExtendU,
    /// i32.wrap_i64
    Wrap,
}

impl UnOp {
    pub fn name(self) -> &'static str {
        match self {
            UnOp::Eqz => "eqz",
            UnOp::ExtendS => "extend_s",
            UnOp::ExtendU => "extend_u",
            UnOp::Wrap => "wrap",
        }
    }
}

/// How an instruction outside the subset moves the operand stack. Used by the
/// lifter's type tracking; the interpreter treats all of these as unsupported.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OtherEffect {
    Fixed {
        pops: Vec<ValType>,
        pushes: Vec<ValType>,
    },
    GlobalGet(u32),
    GlobalSet(u32),
    CallIndirect(u32),
    TypedSelect(ValType),
    /// unreachable and br_table make the rest of the block unreachable.
    Diverge {
        pops: Vec<ValType>,
    },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Unsupported {
    pub raw: Vec<u8>,
    pub effect: OtherEffect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    I32Const(i32),
    I64Const(i64),
    /// Binary integer op; the type is the operand type.
    Binary(ValType, BinOp),
    /// Unary integer op; the type is the operand type.
    Unary(ValType, UnOp),
    Select,
    Drop,
    Nop,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    Block(BlockType),
    Loop(BlockType),
    If(BlockType),
    Else,
    End,
    Br(u32),
    BrIf(u32),
    Return,
    Call(u32),
    Unsupported(Unsupported),
}

impl Instr {
    pub fn is_unsupported(&self) -> bool {
        matches!(self, Instr::Unsupported(_))
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Instr::I32Const(v) => {
                out.push(0x41);
                leb128::write_i32(out, *v);
            }
            Instr::I64Const(v) => {
                out.push(0x42);
                leb128::write_i64(out, *v);
            }
            Instr::Binary(ty, op) => out.push(op.opcode(*ty == ValType::I64)),
            Instr::Unary(ty, op) => out.push(match (ty, op) {
                (ValType::I64, UnOp::Eqz) => 0x50,
                (_, UnOp::Eqz) => 0x45,
                (_, UnOp::Wrap) => 0xa7,
                (_, UnOp::ExtendS) => 0xac,
                (_, UnOp::ExtendU) => 0xad,
            }),
            Instr::Select => out.push(0x1b),
            Instr::Drop => out.push(0x1a),
            Instr::Nop => out.push(0x01),
            Instr::LocalGet(i) => {
                out.push(0x20);
                leb128::write_u32(out, *i);
            }
            Instr::LocalSet(i) => {
                out.push(0x21);
                leb128::write_u32(out, *i);
            }
            Instr::LocalTee(i) => {
                out.push(0x22);
                leb128::write_u32(out, *i);
            }
            Instr::Block(bt) | Instr::Loop(bt) | Instr::If(bt) => {
                out.push(match self {
                    Instr::Block(_) => 0x02,
                    Instr::Loop(_) => 0x03,
                    _ => 0x04,
                });
                match bt {
                    BlockType::Empty => out.push(0x40),
                    BlockType::Value(t) => out.push(t.to_byte()),
                    BlockType::TypeIndex(i) => leb128::write_i64(out, *i as i64),
                }
            }
            Instr::Else => out.push(0x05),
            Instr::End => out.push(0x0b),
            Instr::Br(d) => {
                out.push(0x0c);
                leb128::write_u32(out, *d);
            }
            Instr::BrIf(d) => {
                out.push(0x0d);
                leb128::write_u32(out, *d);
            }
            Instr::Return => out.push(0x0f),
            Instr::Call(f) => {
                out.push(0x10);
                leb128::write_u32(out, *f);
            }
            Instr::Unsupported(u) => out.extend_from_slice(&u.raw),
        }
    }

    /// Decode one instruction. Opcodes outside the MVP (and the common
    /// post-MVP prefixes we can size) yield `UnknownOpcode`.
    /// Decode exactly one instruction from `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Instr, DecodeError> {
        let mut r = Reader::new(bytes, 0);
        let i = Instr::decode(&mut r)?;
        if !r.is_empty() {
            return Err(DecodeError::SectionSizeMismatch { offset: r.offset() });
        }
        Ok(i)
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Instr, DecodeError> {
        let start = r.position();
        let at = r.offset();
        let op = r.byte()?;
        if let Some((ty, bin)) = BinOp::from_opcode(op) {
            return Ok(Instr::Binary(ty, bin));
        }
        let instr = match op {
            0x41 => Instr::I32Const(r.i32()?),
            0x42 => Instr::I64Const(r.i64()?),
            0x45 => Instr::Unary(ValType::I32, UnOp::Eqz),
            0x50 => Instr::Unary(ValType::I64, UnOp::Eqz),
            0xa7 => Instr::Unary(ValType::I64, UnOp::Wrap),
            0xac => Instr::Unary(ValType::I32, UnOp::ExtendS),
            0xad => Instr::Unary(ValType::I32, UnOp::ExtendU),
            0x1b => Instr::Select,
            0x1a => Instr::Drop,
            0x01 => Instr::Nop,
            0x20 => Instr::LocalGet(r.u32()?),
            0x21 => Instr::LocalSet(r.u32()?),
            0x22 => Instr::LocalTee(r.u32()?),
            0x02 => Instr::Block(block_type(r)?),
            0x03 => Instr::Loop(block_type(r)?),
            0x04 => Instr::If(block_type(r)?),
            0x05 => Instr::Else,
            0x0b => Instr::End,
            0x0c => Instr::Br(r.u32()?),
            0x0d => Instr::BrIf(r.u32()?),
            0x0f => Instr::Return,
            0x10 => Instr::Call(r.u32()?),
            _ => {
                let effect = other(op, r, at)?;
                let raw = r.slice(start, r.position()).to_vec();
                return Ok(Instr::Unsupported(Unsupported { raw, effect }));
            }
        };
        Ok(instr)
    }
}

fn block_type(r: &mut Reader<'_>) -> Result<BlockType, DecodeError> {
    let at = r.offset();
    let v = r.s33()?;
    if v >= 0 {
        return Ok(BlockType::TypeIndex(v as u32));
    }
    match v {
        -64 => Ok(BlockType::Empty),
        _ => {
            let byte = (v & 0x7f) as u8;
            ValType::from_byte(byte)
                .map(BlockType::Value)
                .ok_or(DecodeError::UnknownOpcode { offset: at, opcode: byte })
        }
    }
}

fn fixed(pops: &[ValType], pushes: &[ValType]) -> OtherEffect {
    OtherEffect::Fixed { pops: pops.to_vec(), pushes: pushes.to_vec() }
}

fn memarg(r: &mut Reader<'_>) -> Result<(), DecodeError> {
    let align = r.u32()?;
    if align & 0x40 != 0 {
        // multi-memory: explicit memory index
        r.u32()?;
    }
    r.u64()?;
    Ok(())
}

/// Consume the immediates of an instruction outside the subset and report
/// its stack effect.
fn other(op: u8, r: &mut Reader<'_>, at: usize) -> Result<OtherEffect, DecodeError> {
    use ValType::*;
    let effect = match op {
        0x00 => OtherEffect::Diverge { pops: vec![] },
        0x0e => {
            let n = r.u32()?;
            for _ in 0..n {
                r.u32()?;
            }
            r.u32()?;
            OtherEffect::Diverge { pops: vec![I32] }
        }
        0x11 => {
            let ty = r.u32()?;
            r.u32()?;
            OtherEffect::CallIndirect(ty)
        }
        0x1c => {
            let n = r.u32()?;
            let mut ty = None;
            for _ in 0..n {
                ty = ValType::from_byte(r.byte()?);
            }
            match (n, ty) {
                (1, Some(t)) => OtherEffect::TypedSelect(t),
                _ => OtherEffect::Unknown,
            }
        }
        0x23 => OtherEffect::GlobalGet(r.u32()?),
        0x24 => OtherEffect::GlobalSet(r.u32()?),
        0x28..=0x35 => {
            memarg(r)?;
            let ty = match op {
                0x28 | 0x2c..=0x2f => I32,
                0x2a => F32,
                0x2b => F64,
                _ => I64,
            };
            fixed(&[I32], &[ty])
        }
        0x36..=0x3e => {
            memarg(r)?;
            let ty = match op {
                0x36 | 0x3a | 0x3b => I32,
                0x38 => F32,
                0x39 => F64,
                _ => I64,
            };
            fixed(&[I32, ty], &[])
        }
        0x3f => {
            r.u32()?;
            fixed(&[], &[I32])
        }
        0x40 => {
            r.u32()?;
            fixed(&[I32], &[I32])
        }
        0x43 => {
            r.bytes(4)?;
            fixed(&[], &[F32])
        }
        0x44 => {
            r.bytes(8)?;
            fixed(&[], &[F64])
        }
        0x5b..=0x60 => fixed(&[F32, F32], &[I32]),
        0x61..=0x66 => fixed(&[F64, F64], &[I32]),
        0x67..=0x69 => fixed(&[I32], &[I32]),
        0x79..=0x7b => fixed(&[I64], &[I64]),
        0x8b..=0x91 => fixed(&[F32], &[F32]),
        0x92..=0x98 => fixed(&[F32, F32], &[F32]),
        0x99..=0x9f => fixed(&[F64], &[F64]),
        0xa0..=0xa6 => fixed(&[F64, F64], &[F64]),
        0xa8 | 0xa9 => fixed(&[F32], &[I32]),
        0xaa | 0xab => fixed(&[F64], &[I32]),
        0xae | 0xaf => fixed(&[F32], &[I64]),
        0xb0 | 0xb1 => fixed(&[F64], &[I64]),
        0xb2 | 0xb3 => fixed(&[I32], &[F32]),
        0xb4 | 0xb5 => fixed(&[I64], &[F32]),
        0xb6 => fixed(&[F64], &[F32]),
        0xb7 | 0xb8 => fixed(&[I32], &[F64]),
        0xb9 | 0xba => fixed(&[I64], &[F64]),
        0xbb => fixed(&[F32], &[F64]),
        0xbc => fixed(&[F32], &[I32]),
        0xbd => fixed(&[F64], &[I64]),
        0xbe => fixed(&[I32], &[F32]),
        0xbf => fixed(&[I64], &[F64]),
        0xc0 | 0xc1 => fixed(&[I32], &[I32]),
        0xc2..=0xc4 => fixed(&[I64], &[I64]),
        0xfc => {
            let sub = r.u32()?;
            match sub {
                0 | 1 => fixed(&[F32], &[I32]),
                2 | 3 => fixed(&[F64], &[I32]),
                4 | 5 => fixed(&[F32], &[I64]),
                6 | 7 => fixed(&[F64], &[I64]),
                8 => {
                    r.u32()?;
                    r.u32()?;
                    fixed(&[I32, I32, I32], &[])
                }
                9 => {
                    r.u32()?;
                    fixed(&[], &[])
                }
                10 => {
                    r.u32()?;
                    r.u32()?;
                    fixed(&[I32, I32, I32], &[])
                }
                11 => {
                    r.u32()?;
                    fixed(&[I32, I32, I32], &[])
                }
                12 | 14 => {
                    r.u32()?;
                    r.u32()?;
                    fixed(&[I32, I32, I32], &[])
                }
                13 => {
                    r.u32()?;
                    fixed(&[], &[])
                }
                15..=17 => {
                    r.u32()?;
                    OtherEffect::Unknown
                }
                _ => return Err(DecodeError::UnknownOpcode { offset: at, opcode: op }),
            }
        }
        _ => return Err(DecodeError::UnknownOpcode { offset: at, opcode: op }),
    };
    Ok(effect)
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::I32Const(v) => write!(f, "i32.const {v}"),
            Instr::I64Const(v) => write!(f, "i64.const {v}"),
            Instr::Binary(t, op) => write!(f, "{t}.{}", op.name()),
            Instr::Unary(_, UnOp::Eqz) => f.write_str(match self {
                Instr::Unary(ValType::I64, _) => "i64.eqz",
                _ => "i32.eqz",
            }),
            Instr::Unary(_, UnOp::ExtendS) => f.write_str("i64.extend_i32_s"),
            Instr::Unary(_, UnOp::ExtendU) => f.write_str("i64.extend_i32_u"),
            Instr::Unary(_, UnOp::Wrap) => f.write_str("i32.wrap_i64"),
            Instr::Select => f.write_str("select"),
            Instr::Drop => f.write_str("drop"),
            Instr::Nop => f.write_str("nop"),
            Instr::LocalGet(i) => write!(f, "local.get {i}"),
            Instr::LocalSet(i) => write!(f, "local.set {i}"),
            Instr::LocalTee(i) => write!(f, "local.tee {i}"),
            Instr::Block(_) => f.write_str("block"),
            Instr::Loop(_) => f.write_str("loop"),
            Instr::If(_) => f.write_str("if"),
            Instr::Else => f.write_str("else"),
            Instr::End => f.write_str("end"),
            Instr::Br(d) => write!(f, "br {d}"),
            Instr::BrIf(d) => write!(f, "br_if {d}"),
            Instr::Return => f.write_str("return"),
            Instr::Call(i) => write!(f, "call {i}"),
            Instr::Unsupported(u) => {
                write!(f, "<unsupported")?;
                for b in &u.raw {
                    write!(f, " {b:02x}")?;
                }
                f.write_str(">")
            }
        }
    }
}
