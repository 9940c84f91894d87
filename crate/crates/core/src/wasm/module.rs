use super::instr::{Instr, ValType};
use super::leb128::{self, Reader};
use super::DecodeError;

pub const MAGIC: [u8; 4] = [0x00, 0x61, 0x73, 0x6d];
pub const VERSION: [u8; 4] = [0x01, 0x00, 0x00, 0x00];
pub const CODE_SECTION: u8 = 10;
pub const MAX_MODULE_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct WasmModule {
    pub preamble: [u8; 8],
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub id: u8,
    pub payload: SectionPayload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionPayload {
    Raw(Vec<u8>),
    Code(CodeSection),
}

/// The decoded code section. `raw` holds the original payload and is dropped
/// as soon as any body is replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSection {
    bodies: Vec<FunctionBody>,
    raw: Option<Vec<u8>>,
}

impl CodeSection {
    pub fn new(bodies: Vec<FunctionBody>) -> Self {
        CodeSection { bodies, raw: None }
    }

    pub fn bodies(&self) -> &[FunctionBody] {
        &self.bodies
    }

    pub fn replace_body(&mut self, index: usize, body: FunctionBody) {
        self.bodies[index] = body;
        self.raw = None;
    }

    pub fn encode(&self) -> Vec<u8> {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let mut out = Vec::new();
        leb128::write_u32(&mut out, self.bodies.len() as u32);
        for body in &self.bodies {
            let bytes = body.encode();
            leb128::write_u32(&mut out, bytes.len() as u32);
            out.extend_from_slice(&bytes);
        }
        out
    }
}

/// One entry of the code section.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionBody {
    locals: Vec<(u32, ValType)>,
    instrs: Vec<Instr>,
    raw: Option<Vec<u8>>,
}

impl FunctionBody {
    pub fn new(locals: Vec<(u32, ValType)>, instrs: Vec<Instr>) -> Self {
        FunctionBody { locals, instrs, raw: None }
    }

    pub fn locals(&self) -> &[(u32, ValType)] {
        &self.locals
    }

    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    pub fn raw(&self) -> Option<&[u8]> {
        self.raw.as_deref()
    }

    /// Declared local types in index order, excluding parameters.
    pub fn local_types(&self) -> Vec<ValType> {
        self.locals.iter().flat_map(|&(n, t)| std::iter::repeat_n(t, n as usize)).collect()
    }

    pub fn declared_local_count(&self) -> u64 {
        self.locals.iter().map(|&(n, _)| n as u64).sum()
    }

    /// A body that contained an opcode we could not size ends in an opaque
    /// blob instead of `end`. Such bodies are never rewritten.
    pub fn is_opaque(&self) -> bool {
        !matches!(self.instrs.last(), Some(Instr::End))
    }

    pub fn encode(&self) -> Vec<u8> {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let mut out = Vec::new();
        leb128::write_u32(&mut out, self.locals.len() as u32);
        for &(n, t) in &self.locals {
            leb128::write_u32(&mut out, n);
            out.push(t.to_byte());
        }
        for i in &self.instrs {
            i.encode(&mut out);
        }
        out
    }

    fn decode(bytes: &[u8], base: usize) -> Result<FunctionBody, DecodeError> {
        let mut r = Reader::new(bytes, base);
        let groups = r.u32()?;
        let mut locals = Vec::new();
        let mut total = 0u64;
        for _ in 0..groups {
            let n = r.u32()?;
            let at = r.offset();
            let b = r.byte()?;
            let t = ValType::from_byte(b).ok_or(DecodeError::BadValType { offset: at, byte: b })?;
            total += n as u64;
            if total > u32::MAX as u64 {
                return Err(DecodeError::TooManyLocals { offset: at });
            }
            locals.push((n, t));
        }
        let mut instrs = Vec::new();
        while !r.is_empty() {
            let before = r.position();
            match Instr::decode(&mut r) {
                Ok(i) => instrs.push(i),
                Err(DecodeError::UnknownOpcode { .. }) => {
                    let raw = r.slice(before, bytes.len()).to_vec();
                    instrs.push(Instr::Unsupported(super::instr::Unsupported {
                        raw,
                        effect: super::instr::OtherEffect::Unknown,
                    }));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match instrs.last() {
            Some(Instr::End) | Some(Instr::Unsupported(_)) => {}
            _ => return Err(DecodeError::MissingEnd { offset: base + bytes.len() }),
        }
        Ok(FunctionBody { locals, instrs, raw: Some(bytes.to_vec()) })
    }
}

fn section_rank(id: u8) -> u8 {
    // Data-count (12) sits between element (9) and code (10).
    match id {
        12 => 10,
        10 => 11,
        11 => 12,
        other => other,
    }
}

impl WasmModule {
    pub fn empty() -> Self {
        let mut preamble = [0u8; 8];
        preamble[..4].copy_from_slice(&MAGIC);
        preamble[4..].copy_from_slice(&VERSION);
        WasmModule { preamble, sections: Vec::new() }
    }

    pub fn decode(bytes: &[u8]) -> Result<WasmModule, DecodeError> {
        if bytes.len() > MAX_MODULE_BYTES {
            return Err(DecodeError::ModuleTooLarge { size: bytes.len() });
        }
        let mut r = Reader::new(bytes, 0);
        let magic = r.bytes(4)?;
        if magic != MAGIC {
            return Err(DecodeError::BadMagic { offset: 0 });
        }
        let version = r.bytes(4)?;
        if version != VERSION {
            return Err(DecodeError::BadVersion { offset: 4 });
        }
        let mut preamble = [0u8; 8];
        preamble.copy_from_slice(&bytes[..8]);

        let mut sections = Vec::new();
        let mut last_rank = 0u8;
        while !r.is_empty() {
            let id_at = r.offset();
            let id = r.byte()?;
            if id > 12 {
                return Err(DecodeError::UnknownSection { offset: id_at, id });
            }
            if id != 0 {
                let rank = section_rank(id);
                if rank < last_rank || (rank == last_rank && last_rank != 0) {
                    return Err(DecodeError::SectionOrder { offset: id_at, id });
                }
                last_rank = rank;
            }
            let size = r.u32()? as usize;
            let payload_at = r.offset();
            if r.remaining().len() < size {
                return Err(DecodeError::SectionSizeMismatch { offset: payload_at });
            }
            let payload = r.bytes(size)?;
            let payload = if id == CODE_SECTION {
                SectionPayload::Code(decode_code(payload, payload_at)?)
            } else {
                SectionPayload::Raw(payload.to_vec())
            };
            sections.push(Section { id, payload });
        }
        Ok(WasmModule { preamble, sections })
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        let mut out = self.preamble.to_vec();
        for s in &self.sections {
            let payload = match &s.payload {
                SectionPayload::Raw(b) => b.clone(),
                SectionPayload::Code(code) => {
                    for (i, body) in code.bodies.iter().enumerate() {
                        if body.raw.is_none() {
                            check_encodable(i, body)?;
                        }
                    }
                    code.encode()
                }
            };
            out.push(s.id);
            leb128::write_u32(&mut out, payload.len() as u32);
            out.extend_from_slice(&payload);
        }
        Ok(out)
    }

    pub fn code(&self) -> Option<&CodeSection> {
        self.sections.iter().find_map(|s| match &s.payload {
            SectionPayload::Code(c) => Some(c),
            _ => None,
        })
    }

    pub fn code_mut(&mut self) -> Option<&mut CodeSection> {
        self.sections.iter_mut().find_map(|s| match &mut s.payload {
            SectionPayload::Code(c) => Some(c),
            _ => None,
        })
    }

    pub fn bodies(&self) -> &[FunctionBody] {
        self.code().map(|c| c.bodies()).unwrap_or(&[])
    }

    pub fn raw_section(&self, id: u8) -> Option<&[u8]> {
        self.sections.iter().find_map(|s| match &s.payload {
            SectionPayload::Raw(b) if s.id == id => Some(b.as_slice()),
            _ => None,
        })
    }

    pub fn count_instructions(&self) -> usize {
        self.bodies().iter().map(count_instructions).sum()
    }

    pub fn code_section_size(&self) -> usize {
        self.code().map(|c| c.encode().len()).unwrap_or(0)
    }
}

fn check_encodable(index: usize, body: &FunctionBody) -> Result<(), EncodeError> {
    for i in &body.instrs {
        if let Instr::Unsupported(u) = i {
            if u.raw.is_empty() {
                return Err(EncodeError::UnencodableInstruction { function: index });
            }
        }
    }
    Ok(())
}

fn decode_code(payload: &[u8], base: usize) -> Result<CodeSection, DecodeError> {
    let mut r = Reader::new(payload, base);
    let count = r.u32()?;
    let mut bodies = Vec::new();
    for _ in 0..count {
        let size = r.u32()? as usize;
        let at = r.offset();
        if r.remaining().len() < size {
            return Err(DecodeError::SectionSizeMismatch { offset: at });
        }
        let bytes = r.bytes(size)?;
        bodies.push(FunctionBody::decode(bytes, at)?);
    }
    if !r.is_empty() {
        return Err(DecodeError::SectionSizeMismatch { offset: r.offset() });
    }
    Ok(CodeSection { bodies, raw: Some(payload.to_vec()) })
}

/// Instructions in a body, not counting its final `end`.
pub fn count_instructions(body: &FunctionBody) -> usize {
    let n = body.instrs.len();
    if body.is_opaque() {
        n
    } else {
        n - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("function {function} holds an unsupported instruction without its raw bytes")]
    UnencodableInstruction { function: usize },
}
