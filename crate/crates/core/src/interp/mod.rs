//! Fuel-bounded interpreter for the supported subset, used for differential
//! testing and for folding pure zero-argument functions.
//!
//! Arithmetic here uses native `i32`/`i64` operations and deliberately does
//! not share code with the graph evaluator, so the two can check each other.

use std::collections::HashMap;

use crate::wasm::{BinOp, BlockType, FunctionBody, Instr, ModuleInfo, UnOp, ValType, WasmModule};

pub const DEFAULT_FOLD_FUEL: u64 = 10_000_000;
pub const MAX_CALL_DEPTH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    I32(i32),
    I64(i64),
}

impl Value {
    pub fn default_for(ty: ValType) -> Option<Value> {
        match ty {
            ValType::I32 => Some(Value::I32(0)),
            ValType::I64 => Some(Value::I64(0)),
            _ => None,
        }
    }

    pub fn as_bits(self) -> u64 {
        match self {
            Value::I32(v) => v as u32 as u64,
            Value::I64(v) => v as u64,
        }
    }

    pub fn from_bits(ty: ValType, bits: u64) -> Option<Value> {
        match ty {
            ValType::I32 => Some(Value::I32(bits as u32 as i32)),
            ValType::I64 => Some(Value::I64(bits as i64)),
            _ => None,
        }
    }

    fn truthy(self) -> bool {
        self.as_bits() != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trap {
    DivZero,
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Returned(Vec<Value>),
    Trapped(Trap),
    FuelExhausted,
    Unsupported(String),
}

enum Stop {
    Trap(Trap),
    Fuel,
    Unsupported(String),
}

/// Branch target of a structured instruction at a given pc.
#[derive(Debug, Clone, Copy)]
struct Scope {
    end: usize,
    else_at: Option<usize>,
}

struct Label {
    is_loop: bool,
    start: usize,
    end: usize,
    height: usize,
    /// Values carried by a branch to this label.
    arity: usize,
}

struct Frame {
    body: usize,
    pc: usize,
    locals: Vec<Value>,
    stack: Vec<Value>,
    labels: Vec<Label>,
    results: usize,
}

enum Step {
    Continue,
    Call(u32, Vec<Value>),
    Return(Vec<Value>),
}

/// Interpreter over one decoded module. Control structure is precomputed
/// per body.
pub struct Interpreter<'m> {
    module: &'m WasmModule,
    info: ModuleInfo,
    scopes: Vec<Option<HashMap<usize, Scope>>>,
}

fn scopes_of(instrs: &[Instr]) -> Option<HashMap<usize, Scope>> {
    let mut out = HashMap::new();
    let mut open: Vec<(usize, Option<usize>)> = Vec::new();
    for (pc, ins) in instrs.iter().enumerate() {
        match ins {
            Instr::Block(_) | Instr::Loop(_) | Instr::If(_) => open.push((pc, None)),
            Instr::Else => open.last_mut()?.1 = Some(pc),
            Instr::End => {
                if let Some((start, else_at)) = open.pop() {
                    out.insert(start, Scope { end: pc, else_at });
                }
            }
            _ => {}
        }
    }
    Some(out)
}

impl<'m> Interpreter<'m> {
    pub fn new(module: &'m WasmModule) -> Result<Self, crate::wasm::DecodeError> {
        let info = ModuleInfo::parse(module)?;
        let scopes = module.bodies().iter().map(|b| scopes_of(b.instrs())).collect();
        Ok(Interpreter { module, info, scopes })
    }

    pub fn info(&self) -> &ModuleInfo {
        &self.info
    }

    /// Run function `func` (module-wide index) with `args`.
    pub fn exec(&self, func: u32, args: &[Value], fuel: u64) -> Outcome {
        let mut fuel = fuel;
        match self.call(func, args.to_vec(), &mut fuel) {
            Ok(v) => Outcome::Returned(v),
            Err(Stop::Trap(t)) => Outcome::Trapped(t),
            Err(Stop::Fuel) => Outcome::FuelExhausted,
            Err(Stop::Unsupported(s)) => Outcome::Unsupported(s),
        }
    }

    fn block_arity(&self, bt: BlockType) -> Result<(usize, usize), Stop> {
        match bt {
            BlockType::Empty => Ok((0, 0)),
            BlockType::Value(_) => Ok((0, 1)),
            BlockType::TypeIndex(t) => self
                .info
                .types
                .get(t as usize)
                .map(|ft| (ft.params.len(), ft.results.len()))
                .ok_or_else(|| Stop::Unsupported(format!("block type {t}"))),
        }
    }

    fn enter(&self, func: u32, args: Vec<Value>, depth: usize) -> Result<Frame, Stop> {
        if depth >= MAX_CALL_DEPTH {
            return Err(Stop::Fuel);
        }
        let ty = self.info.func_type(func).ok_or_else(|| Stop::Unsupported(format!("function {func}")))?;
        let Some(bi) = self.info.body_index(func) else {
            return Err(Stop::Unsupported(format!("imported function {func}")));
        };
        let body: &FunctionBody = &self.module.bodies()[bi];
        if self.scopes[bi].is_none() {
            return Err(Stop::Unsupported("malformed control".into()));
        }
        if args.len() != ty.params.len() {
            return Err(Stop::Unsupported("argument count".into()));
        }
        let mut locals = args;
        for (count, vt) in body.locals() {
            let v = Value::default_for(*vt).ok_or_else(|| Stop::Unsupported(format!("{vt} local")))?;
            locals.extend(std::iter::repeat_n(v, *count as usize));
        }
        Ok(Frame {
            body: bi,
            pc: 0,
            locals,
            stack: Vec::new(),
            labels: vec![Label {
                is_loop: false,
                start: 0,
                end: body.instrs().len().saturating_sub(1),
                height: 0,
                arity: ty.results.len(),
            }],
            results: ty.results.len(),
        })
    }

    fn call(&self, func: u32, args: Vec<Value>, fuel: &mut u64) -> Result<Vec<Value>, Stop> {
        let mut frames = vec![self.enter(func, args, 0)?];
        loop {
            let depth = frames.len();
            let f = frames.last_mut().expect("active frame");
            match self.step(f, fuel)? {
                Step::Continue => {}
                Step::Call(callee, args) => {
                    let next = self.enter(callee, args, depth)?;
                    frames.push(next);
                }
                Step::Return(values) => {
                    frames.pop();
                    match frames.last_mut() {
                        Some(caller) => caller.stack.extend(values),
                        None => return Ok(values),
                    }
                }
            }
        }
    }

    /// Execute one instruction of the innermost frame.
    fn step(&self, f: &mut Frame, fuel: &mut u64) -> Result<Step, Stop> {
        let instrs = self.module.bodies()[f.body].instrs();
        let scopes = self.scopes[f.body].as_ref().expect("checked on entry");
        let underflow = || Stop::Unsupported("stack underflow".into());
        if f.pc >= instrs.len() {
            let at = f.stack.len().checked_sub(f.results).ok_or_else(underflow)?;
            return Ok(Step::Return(f.stack.split_off(at)));
        }
        if *fuel == 0 {
            return Err(Stop::Fuel);
        }
        *fuel -= 1;
        let stack = &mut f.stack;
        let labels = &mut f.labels;
        let locals = &mut f.locals;
        let pc = f.pc;
        let ins = &instrs[pc];

        macro_rules! pop {
            () => {
                stack.pop().ok_or_else(underflow)?
            };
        }

        let mut branch: Option<u32> = None;
        let mut next = pc + 1;
        match ins {
            Instr::I32Const(v) => stack.push(Value::I32(*v)),
            Instr::I64Const(v) => stack.push(Value::I64(*v)),
            Instr::Binary(_, op) => {
                let b = pop!();
                let a = pop!();
                stack.push(binop(*op, a, b).map_err(Stop::Trap)?);
            }
            Instr::Unary(_, op) => {
                let a = pop!();
                stack.push(unop(*op, a));
            }
            Instr::Select => {
                let c = pop!();
                let b = pop!();
                let a = pop!();
                stack.push(if c.truthy() { a } else { b });
            }
            Instr::Drop => {
                pop!();
            }
            Instr::Nop => {}
            Instr::LocalGet(i) => {
                stack.push(*locals.get(*i as usize).ok_or_else(|| Stop::Unsupported("local".into()))?)
            }
            Instr::LocalSet(i) => {
                let v = pop!();
                *locals.get_mut(*i as usize).ok_or_else(|| Stop::Unsupported("local".into()))? = v;
            }
            Instr::LocalTee(i) => {
                let v = *stack.last().ok_or_else(underflow)?;
                *locals.get_mut(*i as usize).ok_or_else(|| Stop::Unsupported("local".into()))? = v;
            }
            Instr::Block(bt) | Instr::Loop(bt) | Instr::If(bt) => {
                let (params, results) = self.block_arity(*bt)?;
                let scope = scopes[&pc];
                let is_loop = matches!(ins, Instr::Loop(_));
                let enter = if matches!(ins, Instr::If(_)) { pop!().truthy() } else { true };
                let height = stack.len().checked_sub(params).ok_or_else(underflow)?;
                labels.push(Label {
                    is_loop,
                    start: pc,
                    end: scope.end,
                    height,
                    arity: if is_loop { params } else { results },
                });
                if !enter {
                    match scope.else_at {
                        Some(e) => next = e + 1,
                        None => {
                            labels.pop();
                            next = scope.end + 1;
                        }
                    }
                }
            }
            Instr::Else => {
                // End of the taken then-arm.
                let l = labels.pop().ok_or_else(|| Stop::Unsupported("else without if".into()))?;
                next = l.end + 1;
            }
            Instr::End => {
                labels.pop();
                if labels.is_empty() {
                    let at = stack.len().checked_sub(f.results).ok_or_else(underflow)?;
                    return Ok(Step::Return(stack.split_off(at)));
                }
            }
            Instr::Br(d) => branch = Some(*d),
            Instr::BrIf(d) => {
                if pop!().truthy() {
                    branch = Some(*d);
                }
            }
            Instr::Return => branch = Some(labels.len() as u32 - 1),
            Instr::Call(callee) => {
                let ty = self.info.func_type(*callee).ok_or_else(|| Stop::Unsupported(format!("function {callee}")))?;
                let at = stack.len().checked_sub(ty.params.len()).ok_or_else(underflow)?;
                let args = stack.split_off(at);
                f.pc = next;
                return Ok(Step::Call(*callee, args));
            }
            Instr::Unsupported(u) => {
                return Err(Stop::Unsupported(format!("{}", Instr::Unsupported(u.clone()))));
            }
        }
        if let Some(d) = branch {
            let target =
                labels.len().checked_sub(1 + d as usize).ok_or_else(|| Stop::Unsupported("branch depth".into()))?;
            if target == 0 {
                let at = stack.len().checked_sub(f.results).ok_or_else(underflow)?;
                return Ok(Step::Return(stack.split_off(at)));
            }
            let l = &labels[target];
            let at = stack.len().checked_sub(l.arity).ok_or_else(underflow)?;
            let carried = stack.split_off(at);
            stack.truncate(l.height);
            stack.extend(carried);
            if l.is_loop {
                next = l.start + 1;
                labels.truncate(target + 1);
            } else {
                next = l.end + 1;
                labels.truncate(target);
            }
        }
        f.pc = next;
        Ok(Step::Continue)
    }
}

fn binop(op: BinOp, a: Value, b: Value) -> Result<Value, Trap> {
    match (a, b) {
        (Value::I32(x), Value::I32(y)) => {
            let (ux, uy) = (x as u32, y as u32);
            let c = |p: bool| Ok(Value::I32(p as i32));
            Ok(Value::I32(match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::DivS => {
                    if y == 0 {
                        return Err(Trap::DivZero);
                    }
                    x.checked_div(y).ok_or(Trap::Overflow)?
                }
                BinOp::DivU => ux.checked_div(uy).ok_or(Trap::DivZero)? as i32,
                BinOp::RemS => {
                    if y == 0 {
                        return Err(Trap::DivZero);
                    }
                    x.wrapping_rem(y)
                }
                BinOp::RemU => ux.checked_rem(uy).ok_or(Trap::DivZero)? as i32,
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Shl => x.wrapping_shl(uy),
                BinOp::ShrS => x.wrapping_shr(uy),
                BinOp::ShrU => ux.wrapping_shr(uy) as i32,
                BinOp::Rotl => ux.rotate_left(uy % 32) as i32,
                BinOp::Rotr => ux.rotate_right(uy % 32) as i32,
                BinOp::Eq => return c(x == y),
                BinOp::Ne => return c(x != y),
                BinOp::LtS => return c(x < y),
                BinOp::LtU => return c(ux < uy),
                BinOp::GtS => return c(x > y),
                BinOp::GtU => return c(ux > uy),
                BinOp::LeS => return c(x <= y),
                BinOp::LeU => return c(ux <= uy),
                BinOp::GeS => return c(x >= y),
                BinOp::GeU => return c(ux >= uy),
            }))
        }
        (Value::I64(x), Value::I64(y)) => {
            let (ux, uy) = (x as u64, y as u64);
            let c = |p: bool| Ok(Value::I32(p as i32));
            Ok(Value::I64(match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::DivS => {
                    if y == 0 {
                        return Err(Trap::DivZero);
                    }
                    x.checked_div(y).ok_or(Trap::Overflow)?
                }
                BinOp::DivU => ux.checked_div(uy).ok_or(Trap::DivZero)? as i64,
                BinOp::RemS => {
                    if y == 0 {
                        return Err(Trap::DivZero);
                    }
                    x.wrapping_rem(y)
                }
                BinOp::RemU => ux.checked_rem(uy).ok_or(Trap::DivZero)? as i64,
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Shl => x.wrapping_shl(uy as u32),
                BinOp::ShrS => x.wrapping_shr(uy as u32),
                BinOp::ShrU => ux.wrapping_shr(uy as u32) as i64,
                BinOp::Rotl => ux.rotate_left((uy % 64) as u32) as i64,
                BinOp::Rotr => ux.rotate_right((uy % 64) as u32) as i64,
                BinOp::Eq => return c(x == y),
                BinOp::Ne => return c(x != y),
                BinOp::LtS => return c(x < y),
                BinOp::LtU => return c(ux < uy),
                BinOp::GtS => return c(x > y),
                BinOp::GtU => return c(ux > uy),
                BinOp::LeS => return c(x <= y),
                BinOp::LeU => return c(ux <= uy),
                BinOp::GeS => return c(x >= y),
                BinOp::GeU => return c(ux >= uy),
            }))
        }
        // Mixed operand types mean the body was ill-typed; lifting rejects
        // such bodies, so treat it as zero rather than crash.
        _ => Ok(Value::I32(0)),
    }
}

fn unop(op: UnOp, a: Value) -> Value {
    match (op, a) {
        (UnOp::Eqz, v) => Value::I32((v.as_bits() == 0) as i32),
        (UnOp::ExtendS, Value::I32(x)) => Value::I64(x as i64),
        (UnOp::ExtendU, Value::I32(x)) => Value::I64(x as u32 as i64),
        (UnOp::Wrap, Value::I64(x)) => Value::I32(x as i32),
        (_, v) => v,
    }
}

/// Convenience wrapper building a fresh [`Interpreter`].
pub fn exec_function(m: &WasmModule, func: u32, args: &[Value], fuel: u64) -> Outcome {
    match Interpreter::new(m) {
        Ok(interp) => interp.exec(func, args, fuel),
        Err(e) => Outcome::Unsupported(e.to_string()),
    }
}

/// A function is pure if it has no unsupported instructions and only calls
/// defined functions that are themselves pure.
fn is_pure(m: &WasmModule, info: &ModuleInfo, func: u32, seen: &mut Vec<u32>) -> bool {
    if seen.contains(&func) {
        return true;
    }
    seen.push(func);
    let Some(bi) = info.body_index(func) else { return false };
    let body = &m.bodies()[bi];
    body.instrs().iter().all(|i| match i {
        Instr::Unsupported(_) => false,
        Instr::Call(f) => is_pure(m, info, *f, seen),
        _ => true,
    })
}

/// Replace a pure zero-argument function with constants for its results.
/// Functions that trap, run out of fuel or touch anything outside the subset
/// are left alone.
pub fn constfold_pure_function(m: &WasmModule, func: u32, fuel: u64) -> Option<FunctionBody> {
    let interp = Interpreter::new(m).ok()?;
    let ty = interp.info.func_type(func)?;
    if !ty.params.is_empty() || !is_pure(m, &interp.info, func, &mut Vec::new()) {
        return None;
    }
    match interp.exec(func, &[], fuel) {
        Outcome::Returned(values) => {
            let mut instrs: Vec<Instr> = values
                .iter()
                .map(|v| match *v {
                    Value::I32(x) => Instr::I32Const(x),
                    Value::I64(x) => Instr::I64Const(x),
                })
                .collect();
            instrs.push(Instr::End);
            Some(FunctionBody::new(vec![], instrs))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasm::builder::ModuleBuilder;
    use ValType::*;

    fn single(params: &[ValType], results: &[ValType], locals: Vec<(u32, ValType)>, body: Vec<Instr>) -> WasmModule {
        let mut b = ModuleBuilder::new();
        let t = b.add_type(params, results);
        b.add_function(t, locals, body, Some("f"));
        WasmModule::decode(&b.build()).unwrap()
    }

    #[test]
    fn adds_constants() {
        let m = single(
            &[],
            &[I32],
            vec![],
            vec![Instr::I32Const(2), Instr::I32Const(3), Instr::Binary(I32, BinOp::Add), Instr::End],
        );
        assert_eq!(exec_function(&m, 0, &[], 10), Outcome::Returned(vec![Value::I32(5)]));
    }

    #[test]
    fn division_by_zero_traps() {
        let m = single(
            &[],
            &[I32],
            vec![],
            vec![Instr::I32Const(1), Instr::I32Const(0), Instr::Binary(I32, BinOp::DivU), Instr::End],
        );
        assert_eq!(exec_function(&m, 0, &[], 10), Outcome::Trapped(Trap::DivZero));
        let m = single(
            &[],
            &[I32],
            vec![],
            vec![Instr::I32Const(i32::MIN), Instr::I32Const(-1), Instr::Binary(I32, BinOp::DivS), Instr::End],
        );
        assert_eq!(exec_function(&m, 0, &[], 10), Outcome::Trapped(Trap::Overflow));
    }

    #[test]
    fn infinite_loop_exhausts_fuel() {
        let m = single(&[], &[], vec![], vec![Instr::Loop(BlockType::Empty), Instr::Br(0), Instr::End, Instr::End]);
        assert_eq!(exec_function(&m, 0, &[], 100), Outcome::FuelExhausted);
    }

    #[test]
    fn if_else_and_block_results() {
        // if (p0) { 10 } else { 20 } + block { 1; br 0 } -> result
        let body = vec![
            Instr::LocalGet(0),
            Instr::If(BlockType::Value(I32)),
            Instr::I32Const(10),
            Instr::Else,
            Instr::I32Const(20),
            Instr::End,
            Instr::Block(BlockType::Value(I32)),
            Instr::I32Const(1),
            Instr::Br(0),
            Instr::End,
            Instr::Binary(I32, BinOp::Add),
            Instr::End,
        ];
        let m = single(&[I32], &[I32], vec![], body);
        assert_eq!(exec_function(&m, 0, &[Value::I32(1)], 100), Outcome::Returned(vec![Value::I32(11)]));
        assert_eq!(exec_function(&m, 0, &[Value::I32(0)], 100), Outcome::Returned(vec![Value::I32(21)]));
    }

    #[test]
    fn loop_counts_and_returns_early() {
        // local1 = 0; loop { local1 += 1; br_if 0 (local1 < p0) }; local1; return
        let body = vec![
            Instr::Loop(BlockType::Empty),
            Instr::LocalGet(1),
            Instr::I32Const(1),
            Instr::Binary(I32, BinOp::Add),
            Instr::LocalTee(1),
            Instr::LocalGet(0),
            Instr::Binary(I32, BinOp::LtS),
            Instr::BrIf(0),
            Instr::End,
            Instr::LocalGet(1),
            Instr::Return,
            Instr::I32Const(99),
            Instr::End,
        ];
        let m = single(&[I32], &[I32], vec![(1, I32)], body);
        assert_eq!(exec_function(&m, 0, &[Value::I32(7)], 1000), Outcome::Returned(vec![Value::I32(7)]));
    }

    #[test]
    fn calls_share_fuel_and_depth_is_bounded() {
        let mut b = ModuleBuilder::new();
        let t = b.add_type(&[I32], &[I32]);
        b.add_function(
            t,
            vec![],
            vec![Instr::LocalGet(0), Instr::I32Const(1), Instr::Binary(I32, BinOp::Add), Instr::End],
            None,
        );
        b.add_function(t, vec![], vec![Instr::LocalGet(0), Instr::Call(0), Instr::Call(0), Instr::End], Some("g"));
        let t0 = b.add_type(&[], &[]);
        b.add_function(t0, vec![], vec![Instr::Call(2), Instr::End], Some("rec"));
        let m = WasmModule::decode(&b.build()).unwrap();
        assert_eq!(exec_function(&m, 1, &[Value::I32(5)], 100), Outcome::Returned(vec![Value::I32(7)]));
        assert_eq!(exec_function(&m, 2, &[], u64::MAX), Outcome::FuelExhausted);
    }

    #[test]
    fn unsupported_opcode_is_reported() {
        let mut b = ModuleBuilder::new();
        let t = b.add_type(&[], &[I32]);
        b.memory(1);
        let load = Instr::from_bytes(&[0x28, 0x02, 0x00]).unwrap();
        b.add_function(t, vec![], vec![Instr::I32Const(0), load, Instr::End], Some("f"));
        let bytes = b.build();
        let m = WasmModule::decode(&bytes).unwrap();
        assert!(matches!(exec_function(&m, 0, &[], 100), Outcome::Unsupported(_)));
        assert_eq!(constfold_pure_function(&m, 0, 100), None);
    }

    #[test]
    fn folding_rules() {
        let m = single(&[], &[I32, I64], vec![], vec![Instr::I32Const(7), Instr::I64Const(-1), Instr::End]);
        let body = constfold_pure_function(&m, 0, DEFAULT_FOLD_FUEL).unwrap();
        assert_eq!(body.instrs(), &[Instr::I32Const(7), Instr::I64Const(-1), Instr::End]);

        let m = single(&[I32], &[I32], vec![], vec![Instr::LocalGet(0), Instr::End]);
        assert_eq!(constfold_pure_function(&m, 0, DEFAULT_FOLD_FUEL), None);

        let m = single(
            &[],
            &[I32],
            vec![],
            vec![Instr::I32Const(7), Instr::I32Const(0), Instr::Binary(I32, BinOp::DivU), Instr::End],
        );
        assert_eq!(constfold_pure_function(&m, 0, DEFAULT_FOLD_FUEL), None);
    }
}
