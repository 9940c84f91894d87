//! Small assembler for modules in the supported subset. Used by the bundled
//! corpus generator and by tests.

use super::instr::{Instr, ValType};
use super::leb128;
use super::module::FunctionBody;

#[derive(Debug, Default)]
pub struct ModuleBuilder {
    types: Vec<(Vec<ValType>, Vec<ValType>)>,
    imports: Vec<(String, String, u32)>,
    funcs: Vec<u32>,
    bodies: Vec<FunctionBody>,
    exports: Vec<(String, u32)>,
    memory_pages: Option<u32>,
    globals: Vec<(ValType, i64)>,
}

impl ModuleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_type(&mut self, params: &[ValType], results: &[ValType]) -> u32 {
        let key = (params.to_vec(), results.to_vec());
        if let Some(i) = self.types.iter().position(|t| *t == key) {
            return i as u32;
        }
        self.types.push(key);
        self.types.len() as u32 - 1
    }

    /// Imports must be added before any defined function.
    pub fn import_func(&mut self, module: &str, name: &str, ty: u32) -> u32 {
        assert!(self.funcs.is_empty(), "imports must precede defined functions");
        self.imports.push((module.into(), name.into(), ty));
        self.imports.len() as u32 - 1
    }

    pub fn add_function(
        &mut self,
        ty: u32,
        locals: Vec<(u32, ValType)>,
        instrs: Vec<Instr>,
        export: Option<&str>,
    ) -> u32 {
        let index = self.imports.len() as u32 + self.funcs.len() as u32;
        self.funcs.push(ty);
        self.bodies.push(FunctionBody::new(locals, instrs));
        if let Some(name) = export {
            self.exports.push((name.into(), index));
        }
        index
    }

    pub fn memory(&mut self, pages: u32) {
        self.memory_pages = Some(pages);
    }

    pub fn global(&mut self, ty: ValType, init: i64) -> u32 {
        self.globals.push((ty, init));
        self.globals.len() as u32 - 1
    }

    pub fn build(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&super::module::MAGIC);
        out.extend_from_slice(&super::module::VERSION);

        let mut s = Vec::new();
        leb128::write_u32(&mut s, self.types.len() as u32);
        for (p, r) in &self.types {
            s.push(0x60);
            vec_types(&mut s, p);
            vec_types(&mut s, r);
        }
        section(&mut out, 1, &s);

        if !self.imports.is_empty() {
            let mut s = Vec::new();
            leb128::write_u32(&mut s, self.imports.len() as u32);
            for (m, n, ty) in &self.imports {
                name(&mut s, m);
                name(&mut s, n);
                s.push(0x00);
                leb128::write_u32(&mut s, *ty);
            }
            section(&mut out, 2, &s);
        }

        let mut s = Vec::new();
        leb128::write_u32(&mut s, self.funcs.len() as u32);
        for ty in &self.funcs {
            leb128::write_u32(&mut s, *ty);
        }
        section(&mut out, 3, &s);

        if let Some(pages) = self.memory_pages {
            let mut s = vec![1, 0];
            leb128::write_u32(&mut s, pages);
            section(&mut out, 5, &s);
        }

        if !self.globals.is_empty() {
            let mut s = Vec::new();
            leb128::write_u32(&mut s, self.globals.len() as u32);
            for &(ty, init) in &self.globals {
                s.push(ty.to_byte());
                s.push(1);
                match ty {
                    ValType::I64 => Instr::I64Const(init).encode(&mut s),
                    _ => Instr::I32Const(init as i32).encode(&mut s),
                }
                s.push(0x0b);
            }
            section(&mut out, 6, &s);
        }

        if !self.exports.is_empty() {
            let mut s = Vec::new();
            leb128::write_u32(&mut s, self.exports.len() as u32);
            for (n, idx) in &self.exports {
                name(&mut s, n);
                s.push(0x00);
                leb128::write_u32(&mut s, *idx);
            }
            section(&mut out, 7, &s);
        }

        let mut s = Vec::new();
        leb128::write_u32(&mut s, self.bodies.len() as u32);
        for body in &self.bodies {
            let bytes = body.encode();
            leb128::write_u32(&mut s, bytes.len() as u32);
            s.extend_from_slice(&bytes);
        }
        section(&mut out, 10, &s);
        out
    }
}

fn section(out: &mut Vec<u8>, id: u8, payload: &[u8]) {
    out.push(id);
    leb128::write_u32(out, payload.len() as u32);
    out.extend_from_slice(payload);
}

fn vec_types(out: &mut Vec<u8>, types: &[ValType]) {
    leb128::write_u32(out, types.len() as u32);
    out.extend(types.iter().map(|t| t.to_byte()));
}

fn name(out: &mut Vec<u8>, s: &str) {
    leb128::write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}
