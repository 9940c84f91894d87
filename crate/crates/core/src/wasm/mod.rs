//! WebAssembly binary decoding and re-encoding for the integer subset, plus
//! code-size metrics.

pub mod builder;
pub mod info;
pub mod instr;
pub mod leb128;
pub mod module;

pub use info::{FuncType, ModuleInfo};
pub use instr::{BinOp, BlockType, Instr, UnOp, ValType};
pub use module::{count_instructions, CodeSection, EncodeError, FunctionBody, Section, SectionPayload, WasmModule};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic number at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version at offset {offset}")]
    BadVersion { offset: usize },
    #[error("unexpected end of input at offset {offset}")]
    TruncatedInput { offset: usize },
    #[error("malformed LEB128 integer at offset {offset}")]
    MalformedLeb128 { offset: usize },
    #[error("section or body size does not match its contents at offset {offset}")]
    SectionSizeMismatch { offset: usize },
    #[error("unknown section id {id} at offset {offset}")]
    UnknownSection { offset: usize, id: u8 },
    #[error("section id {id} out of order at offset {offset}")]
    SectionOrder { offset: usize, id: u8 },
    #[error("unknown opcode 0x{opcode:02x} at offset {offset}")]
    UnknownOpcode { offset: usize, opcode: u8 },
    #[error("bad value type 0x{byte:02x} at offset {offset}")]
    BadValType { offset: usize, byte: u8 },
    #[error("too many locals at offset {offset}")]
    TooManyLocals { offset: usize },
    #[error("function body missing final end at offset {offset}")]
    MissingEnd { offset: usize },
    #[error("module of {size} bytes exceeds the 64 MiB limit")]
    ModuleTooLarge { size: usize },
    #[error("function section declares {declared} bodies but code section has {bodies}")]
    FunctionCountMismatch { declared: usize, bodies: usize },
}

pub fn decode_module(bytes: &[u8]) -> Result<WasmModule, DecodeError> {
    WasmModule::decode(bytes)
}

pub fn encode_module(module: &WasmModule) -> Result<Vec<u8>, EncodeError> {
    module.encode()
}
