//! Read-only views of the non-code sections: signatures, imports, globals and
//! exports. These sections stay opaque bytes in [`WasmModule`]; this module
//! only parses what the lifter and interpreter need.

use super::instr::{Instr, ValType};
use super::leb128::Reader;
use super::module::WasmModule;
use super::DecodeError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Func,
    Table,
    Memory,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub name: String,
    pub kind: ExportKind,
    pub index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModuleInfo {
    pub types: Vec<FuncType>,
    /// Type index of every function, imported functions first.
    pub func_types: Vec<u32>,
    pub imported_funcs: u32,
    pub globals: Vec<ValType>,
    pub exports: Vec<Export>,
}

impl ModuleInfo {
    pub fn parse(module: &WasmModule) -> Result<ModuleInfo, DecodeError> {
        let mut info = ModuleInfo::default();
        if let Some(bytes) = module.raw_section(1) {
            let mut r = Reader::new(bytes, 0);
            for _ in 0..r.u32()? {
                let at = r.offset();
                let form = r.byte()?;
                if form != 0x60 {
                    return Err(DecodeError::BadValType { offset: at, byte: form });
                }
                let params = val_types(&mut r)?;
                let results = val_types(&mut r)?;
                info.types.push(FuncType { params, results });
            }
        }
        if let Some(bytes) = module.raw_section(2) {
            let mut r = Reader::new(bytes, 0);
            for _ in 0..r.u32()? {
                name(&mut r)?;
                name(&mut r)?;
                let at = r.offset();
                match r.byte()? {
                    0x00 => {
                        info.func_types.push(r.u32()?);
                        info.imported_funcs += 1;
                    }
                    0x01 => {
                        r.byte()?;
                        limits(&mut r)?;
                    }
                    0x02 => limits(&mut r)?,
                    0x03 => {
                        info.globals.push(val_type(&mut r)?);
                        r.byte()?;
                    }
                    b => return Err(DecodeError::BadValType { offset: at, byte: b }),
                }
            }
        }
        if let Some(bytes) = module.raw_section(3) {
            let mut r = Reader::new(bytes, 0);
            for _ in 0..r.u32()? {
                info.func_types.push(r.u32()?);
            }
        }
        if let Some(bytes) = module.raw_section(6) {
            let mut r = Reader::new(bytes, 0);
            for _ in 0..r.u32()? {
                info.globals.push(val_type(&mut r)?);
                r.byte()?;
                loop {
                    if Instr::decode(&mut r)? == Instr::End {
                        break;
                    }
                }
            }
        }
        if let Some(bytes) = module.raw_section(7) {
            let mut r = Reader::new(bytes, 0);
            for _ in 0..r.u32()? {
                let name = name(&mut r)?;
                let at = r.offset();
                let kind = match r.byte()? {
                    0 => ExportKind::Func,
                    1 => ExportKind::Table,
                    2 => ExportKind::Memory,
                    3 => ExportKind::Global,
                    b => return Err(DecodeError::BadValType { offset: at, byte: b }),
                };
                info.exports.push(Export { name, kind, index: r.u32()? });
            }
        }
        let defined = info.func_types.len() as u32 - info.imported_funcs;
        if defined as usize != module.bodies().len() {
            return Err(DecodeError::FunctionCountMismatch {
                declared: defined as usize,
                bodies: module.bodies().len(),
            });
        }
        Ok(info)
    }

    pub fn func_type(&self, func: u32) -> Option<&FuncType> {
        self.func_types.get(func as usize).and_then(|&t| self.types.get(t as usize))
    }

    pub fn is_imported(&self, func: u32) -> bool {
        func < self.imported_funcs
    }

    /// Index into the code section for a function index, if it has a body.
    pub fn body_index(&self, func: u32) -> Option<usize> {
        if func < self.imported_funcs || func as usize >= self.func_types.len() {
            None
        } else {
            Some((func - self.imported_funcs) as usize)
        }
    }

    pub fn exported_func(&self, name: &str) -> Option<u32> {
        self.exports.iter().find(|e| e.kind == ExportKind::Func && e.name == name).map(|e| e.index)
    }

    /// First export name of a function, if any.
    pub fn export_name(&self, func: u32) -> Option<String> {
        self.exports.iter().find(|e| e.kind == ExportKind::Func && e.index == func).map(|e| e.name.clone())
    }

    /// Parameter and declared local types of a defined function.
    pub fn all_locals(&self, module: &WasmModule, body_index: usize) -> Option<Vec<ValType>> {
        let func = self.imported_funcs + body_index as u32;
        let mut locals = self.func_type(func)?.params.clone();
        locals.extend(module.bodies().get(body_index)?.local_types());
        Some(locals)
    }
}

fn val_type(r: &mut Reader<'_>) -> Result<ValType, DecodeError> {
    let at = r.offset();
    let b = r.byte()?;
    ValType::from_byte(b).ok_or(DecodeError::BadValType { offset: at, byte: b })
}

fn val_types(r: &mut Reader<'_>) -> Result<Vec<ValType>, DecodeError> {
    (0..r.u32()?).map(|_| val_type(r)).collect()
}

fn name(r: &mut Reader<'_>) -> Result<String, DecodeError> {
    let n = r.u32()? as usize;
    Ok(String::from_utf8_lossy(r.bytes(n)?).into_owned())
}

fn limits(r: &mut Reader<'_>) -> Result<(), DecodeError> {
    let flags = r.byte()?;
    r.u64()?;
    if flags & 1 != 0 {
        r.u64()?;
    }
    Ok(())
}
