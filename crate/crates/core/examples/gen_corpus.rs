//! Writes the bundled benchmark corpus: `<name>.wasm` plus `<name>.json`
//! with test inputs and expected outputs.
//!
//!     cargo run --example gen_corpus -- crates/core/corpus
//!
//! Expected values come from the plain Rust reference functions below, not
//! from the crate's interpreter.

use std::path::{Path, PathBuf};

use wasm_superopt::driver::corpus::{Expected, TestCase, TestFile};
use wasm_superopt::interp::{Trap, Value};
use wasm_superopt::wasm::builder::ModuleBuilder;
use wasm_superopt::wasm::BinOp::*;
use wasm_superopt::wasm::Instr::{self, *};
use wasm_superopt::wasm::{BinOp, BlockType, UnOp, ValType};

const I32: ValType = ValType::I32;
const I64: ValType = ValType::I64;
const EMPTY: BlockType = BlockType::Empty;

fn b32(op: BinOp) -> Instr {
    Binary(I32, op)
}
fn b64(op: BinOp) -> Instr {
    Binary(I64, op)
}
fn get(i: u32) -> Instr {
    LocalGet(i)
}
fn set(i: u32) -> Instr {
    LocalSet(i)
}
fn tee(i: u32) -> Instr {
    LocalTee(i)
}
fn c32(v: i32) -> Instr {
    I32Const(v)
}
fn c64(v: i64) -> Instr {
    I64Const(v)
}
fn raw(bytes: &[u8]) -> Instr {
    Instr::from_bytes(bytes).expect("valid instruction bytes")
}

fn ret(values: &[Value]) -> Option<Expected> {
    Some(Expected::Returned(values.to_vec()))
}
fn t(export: &str, args: &[Value], expect: Option<Expected>) -> TestCase {
    TestCase { export: export.into(), args: args.to_vec(), expect }
}
fn i(v: i32) -> Value {
    Value::I32(v)
}
fn l(v: i64) -> Value {
    Value::I64(v)
}

struct Entry {
    name: &'static str,
    wasm: Vec<u8>,
    tests: Vec<TestCase>,
}

// Reference implementations.

fn babbage_ref() -> i32 {
    (1..).find(|n: &i64| n * n % 1_000_000 == 269_696).unwrap() as i32
}
fn gcd_ref(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
fn fib_ref(n: u32) -> i64 {
    let (mut a, mut b) = (0i64, 1i64);
    for _ in 0..n {
        (a, b) = (b, a.wrapping_add(b));
    }
    a
}
fn fact_ref(n: u64) -> i64 {
    (1..=n.max(1)).fold(1i64, |acc, k| acc.wrapping_mul(k as i64))
}
fn leap_ref(y: u32) -> i32 {
    ((y.is_multiple_of(4) && !y.is_multiple_of(100)) || y.is_multiple_of(400)) as i32
}
fn collatz_ref(mut n: u32) -> i32 {
    let mut steps = 0;
    while n > 1 {
        n = if n % 2 == 1 { n.wrapping_mul(3).wrapping_add(1) } else { n / 2 };
        steps += 1;
    }
    steps
}
fn digits_ref(mut n: u32) -> i32 {
    let mut s = 0;
    while n != 0 {
        s += n % 10;
        n /= 10;
    }
    s as i32
}
fn droot_ref(mut n: u32) -> i32 {
    while n >= 10 {
        n = digits_ref(n) as u32;
    }
    n as i32
}
fn ack_ref(m: i32, n: i32) -> i32 {
    if m == 0 {
        n + 1
    } else if n == 0 {
        ack_ref(m - 1, 1)
    } else {
        ack_ref(m - 1, ack_ref(m, n - 1))
    }
}
fn fizz_ref(n: u32) -> i32 {
    (1..=n).filter(|i| i % 3 == 0 || i % 5 == 0).count() as i32
}
fn mix_ref(x: i32, y: i32) -> i32 {
    let s = x.wrapping_add(y);
    (s ^ s.wrapping_mul(y) ^ s.rotate_left(x as u32)).wrapping_add(((s as u32) >> 3) as i32)
}

fn babbage() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[], &[I32]);
    // Smallest n whose square ends in 269696, as a do-while search.
    let body = vec![
        Loop(EMPTY),
        get(0),
        c32(1),
        b32(Add),
        tee(0),
        get(0),
        b32(Mul),
        tee(1),
        c32(1_000_000),
        b32(RemU),
        c32(269_696),
        b32(Ne),
        get(1),
        c32(i32::MAX),
        b32(LtS),
        b32(And),
        c32(1),
        b32(And),
        c32(0),
        b32(Ne),
        BrIf(0),
        End,
        get(0),
        End,
    ];
    b.add_function(ty, vec![(2, I32)], body, Some("babbage"));
    Entry { name: "babbage", wasm: b.build(), tests: vec![t("babbage", &[], ret(&[i(babbage_ref())]))] }
}

fn gcd() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32, I32], &[I32]);
    let gcd = b.add_function(
        ty,
        vec![(1, I32)],
        vec![
            Block(EMPTY),
            Loop(EMPTY),
            get(1),
            Unary(I32, UnOp::Eqz),
            BrIf(1),
            get(0),
            get(1),
            b32(RemU),
            set(2),
            get(1),
            c32(0),
            b32(Or),
            set(0),
            get(2),
            set(1),
            Br(0),
            End,
            End,
            get(0),
            c32(1),
            b32(Mul),
            End,
        ],
        Some("gcd"),
    );
    // lcm(a, b) = a / gcd(a, b) * b; traps when both are zero.
    b.add_function(
        ty,
        vec![],
        vec![get(0), get(0), get(1), Call(gcd), b32(DivU), get(1), b32(Mul), get(0), get(0), b32(Xor), b32(Add), End],
        Some("lcm"),
    );
    let u = |v: u32| i(v as i32);
    let mut tests: Vec<TestCase> = [(48, 18), (17, 5), (0, 9), (12, 0), (1071, 462), (u32::MAX, 3)]
        .iter()
        .map(|&(a, c)| t("gcd", &[u(a), u(c)], ret(&[u(gcd_ref(a, c))])))
        .collect();
    for (a, c) in [(4u32, 6u32), (21, 6), (7, 1)] {
        tests.push(t("lcm", &[u(a), u(c)], ret(&[u(a / gcd_ref(a, c) * c)])));
    }
    tests.push(t("lcm", &[i(0), i(0)], Some(Expected::Trapped(Trap::DivZero))));
    Entry { name: "gcd", wasm: b.build(), tests }
}

fn fibonacci() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I64]);
    b.add_function(
        ty,
        vec![(3, I64)],
        vec![
            c64(0),
            set(1),
            c64(1),
            set(2),
            Block(EMPTY),
            Loop(EMPTY),
            get(0),
            Unary(I32, UnOp::Eqz),
            BrIf(1),
            get(1),
            get(2),
            b64(Add),
            set(3),
            get(2),
            c64(0),
            b64(Add),
            set(1),
            get(3),
            set(2),
            get(0),
            c32(1),
            b32(Sub),
            set(0),
            Br(0),
            End,
            End,
            get(1),
            End,
        ],
        Some("fib"),
    );
    let tests =
        [0u32, 1, 2, 10, 50, 90, 100].iter().map(|&n| t("fib", &[i(n as i32)], ret(&[l(fib_ref(n))]))).collect();
    Entry { name: "fibonacci", wasm: b.build(), tests }
}

fn factorial() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I64]);
    b.add_function(
        ty,
        vec![(1, I64)],
        vec![
            c64(1),
            set(1),
            Block(EMPTY),
            Loop(EMPTY),
            get(0),
            c32(2),
            b32(LtU),
            BrIf(1),
            get(1),
            get(0),
            Unary(I32, UnOp::ExtendU),
            b64(Mul),
            set(1),
            get(0),
            Unary(I32, UnOp::ExtendU),
            Unary(I64, UnOp::Wrap),
            c32(1),
            b32(Sub),
            set(0),
            Br(0),
            End,
            End,
            get(1),
            End,
        ],
        Some("fact"),
    );
    let ty64 = b.add_type(&[I64], &[I64]);
    // Recursive variant: n <= 1 ? 1 : n * fact_rec(n - 1).
    b.add_function(
        ty64,
        vec![],
        vec![
            get(0),
            c64(1),
            b64(LeS),
            If(BlockType::Value(I64)),
            c64(1),
            Else,
            get(0),
            c64(-1),
            b64(And),
            get(0),
            c64(1),
            b64(Sub),
            Call(1),
            b64(Mul),
            End,
            End,
        ],
        Some("fact_rec"),
    );
    let mut tests: Vec<TestCase> =
        [0u64, 1, 5, 12, 20, 25].iter().map(|&n| t("fact", &[i(n as i32)], ret(&[l(fact_ref(n))]))).collect();
    for n in [0u64, 1, 10, 20] {
        tests.push(t("fact_rec", &[l(n as i64)], ret(&[l(fact_ref(n))])));
    }
    Entry { name: "factorial", wasm: b.build(), tests }
}

fn leap_year() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I32]);
    let leap = b.add_function(
        ty,
        vec![],
        vec![
            get(0),
            c32(4),
            b32(RemU),
            Unary(I32, UnOp::Eqz),
            get(0),
            c32(100),
            b32(RemU),
            c32(0),
            b32(Ne),
            b32(And),
            get(0),
            c32(400),
            b32(RemU),
            Unary(I32, UnOp::Eqz),
            b32(Or),
            get(0),
            get(0),
            b32(Eq),
            b32(And),
            End,
        ],
        Some("is_leap"),
    );
    b.add_function(
        ty,
        vec![],
        vec![c32(365), c32(0), b32(Add), get(0), Call(leap), b32(Add), End],
        Some("days_in_year"),
    );
    let mut tests: Vec<TestCase> = [2000u32, 1900, 2024, 2023, 2100, 0, 4]
        .iter()
        .map(|&y| t("is_leap", &[i(y as i32)], ret(&[i(leap_ref(y))])))
        .collect();
    for y in [2024u32, 2023] {
        tests.push(t("days_in_year", &[i(y as i32)], ret(&[i(365 + leap_ref(y))])));
    }
    Entry { name: "leap_year", wasm: b.build(), tests }
}

fn collatz() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I32]);
    b.add_function(
        ty,
        vec![(1, I32)],
        vec![
            Block(EMPTY),
            Loop(EMPTY),
            get(0),
            c32(1),
            b32(LeU),
            BrIf(1),
            get(0),
            c32(1),
            b32(And),
            If(BlockType::Value(I32)),
            get(0),
            c32(3),
            b32(Mul),
            c32(1),
            b32(Add),
            Else,
            get(0),
            c32(1),
            b32(ShrU),
            c32(0),
            b32(Shl),
            End,
            set(0),
            get(1),
            c32(1),
            b32(Add),
            set(1),
            Br(0),
            End,
            End,
            get(1),
            c32(-1),
            b32(And),
            End,
        ],
        Some("steps"),
    );
    let tests =
        [1u32, 6, 7, 27, 97, 871].iter().map(|&n| t("steps", &[i(n as i32)], ret(&[i(collatz_ref(n))]))).collect();
    Entry { name: "collatz", wasm: b.build(), tests }
}

fn sum_digits() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I32]);
    let digits = b.add_function(
        ty,
        vec![(1, I32)],
        vec![
            Block(EMPTY),
            Loop(EMPTY),
            get(0),
            Unary(I32, UnOp::Eqz),
            BrIf(1),
            get(1),
            get(0),
            c32(10),
            b32(RemU),
            b32(Add),
            set(1),
            get(0),
            c32(10),
            b32(DivU),
            set(0),
            Br(0),
            End,
            End,
            get(1),
            get(0),
            b32(Xor),
            get(0),
            b32(Xor),
            End,
        ],
        Some("sum_digits"),
    );
    b.add_function(
        ty,
        vec![],
        vec![
            Block(EMPTY),
            Loop(EMPTY),
            get(0),
            c32(10),
            b32(LtU),
            BrIf(1),
            get(0),
            Call(digits),
            set(0),
            Br(0),
            End,
            End,
            get(0),
            End,
        ],
        Some("digital_root"),
    );
    let mut tests: Vec<TestCase> = [0u32, 7, 12345, 4_000_000_000]
        .iter()
        .map(|&n| t("sum_digits", &[i(n as i32)], ret(&[i(digits_ref(n))])))
        .collect();
    for n in [493_193u32, 9, 10] {
        tests.push(t("digital_root", &[i(n as i32)], ret(&[i(droot_ref(n))])));
    }
    Entry { name: "sum_digits", wasm: b.build(), tests }
}

fn ackermann() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32, I32], &[I32]);
    b.add_function(
        ty,
        vec![],
        vec![
            get(0),
            Unary(I32, UnOp::Eqz),
            If(EMPTY),
            get(1),
            c32(1),
            b32(Add),
            Return,
            End,
            get(1),
            Unary(I32, UnOp::Eqz),
            If(EMPTY),
            get(0),
            c32(1),
            b32(Sub),
            c32(1),
            Call(0),
            Return,
            End,
            get(0),
            c32(1),
            b32(Sub),
            get(0),
            get(1),
            c32(1),
            b32(Sub),
            Call(0),
            Call(0),
            End,
        ],
        Some("ack"),
    );
    let tests = [(0, 0), (1, 2), (2, 3), (3, 3)]
        .iter()
        .map(|&(m, n)| t("ack", &[i(m), i(n)], ret(&[i(ack_ref(m, n))])))
        .collect();
    Entry { name: "ackermann", wasm: b.build(), tests }
}

fn fizzbuzz() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32], &[I32]);
    b.add_function(
        ty,
        vec![(2, I32)],
        vec![
            c32(1),
            set(1),
            Block(EMPTY),
            Loop(EMPTY),
            get(1),
            get(0),
            b32(GtU),
            BrIf(1),
            get(1),
            c32(3),
            b32(RemU),
            Unary(I32, UnOp::Eqz),
            get(1),
            c32(5),
            b32(RemU),
            Unary(I32, UnOp::Eqz),
            b32(Or),
            get(2),
            b32(Add),
            set(2),
            get(2),
            get(1),
            get(1),
            b32(Sub),
            b32(Add),
            set(2),
            get(1),
            c32(1),
            b32(Add),
            set(1),
            Br(0),
            End,
            End,
            get(2),
            End,
        ],
        Some("count"),
    );
    let tests = [0u32, 1, 15, 100, 1000].iter().map(|&n| t("count", &[i(n as i32)], ret(&[i(fizz_ref(n))]))).collect();
    Entry { name: "fizzbuzz", wasm: b.build(), tests }
}

fn bitwise_io() -> Entry {
    let mut b = ModuleBuilder::new();
    let ty = b.add_type(&[I32, I32], &[I32]);
    // A shared sum feeds every term; the cheapest rewrite of `s & s`
    // recomputes the sum and gains nothing once lowered.
    b.add_function(
        ty,
        vec![(1, I32)],
        vec![
            get(0),
            get(1),
            b32(Add),
            tee(2),
            get(2),
            b32(And),
            get(2),
            get(1),
            b32(Mul),
            b32(Xor),
            get(2),
            get(0),
            b32(Rotl),
            b32(Xor),
            get(2),
            c32(3),
            b32(ShrU),
            b32(Add),
            End,
        ],
        Some("mix"),
    );
    let ty1 = b.add_type(&[I32], &[I32]);
    b.add_function(ty1, vec![], vec![get(0), c32(8), b32(ShrU), c32(255), b32(And), End], Some("byte1"));
    let mut tests: Vec<TestCase> = [(1, 2), (-7, 13), (0x1234_5678, -1), (0, 0)]
        .iter()
        .map(|&(x, y)| t("mix", &[i(x), i(y)], ret(&[i(mix_ref(x, y))])))
        .collect();
    for x in [0x1234_5678i32, -1] {
        tests.push(t("byte1", &[i(x)], ret(&[i(((x as u32 >> 8) & 255) as i32)])));
    }
    Entry { name: "bitwise_io", wasm: b.build(), tests }
}

fn bubble_sort() -> Entry {
    let mut b = ModuleBuilder::new();
    b.memory(1);
    let load = raw(&[0x28, 0x02, 0x00]); // i32.load
    let load4 = raw(&[0x28, 0x02, 0x04]); // i32.load offset=4
    let store = raw(&[0x36, 0x02, 0x00]); // i32.store
    let store4 = raw(&[0x36, 0x02, 0x04]); // i32.store offset=4
    let ty2 = b.add_type(&[I32, I32], &[I32]);
    let max = b.add_function(
        ty2,
        vec![],
        vec![get(0), get(1), get(0), get(1), b32(GtS), c32(1), b32(And), Select, End],
        Some("max"),
    );
    let _ = max;
    let ty_sort = b.add_type(&[I32, I32], &[]);
    // One bubble pass per outer iteration over `len` words at `ptr`.
    // Locals: 2 = i, 3 = p, 4 = a, 5 = b.
    b.add_function(
        ty_sort,
        vec![(4, I32)],
        vec![
            Block(EMPTY),
            Loop(EMPTY),
            get(1),
            c32(1),
            b32(LeU),
            BrIf(1),
            c32(0),
            set(2),
            Block(EMPTY),
            Loop(EMPTY),
            get(2),
            get(1),
            c32(1),
            b32(Sub),
            b32(GeU),
            BrIf(1),
            get(0),
            get(2),
            c32(2),
            b32(Shl),
            b32(Add),
            tee(3),
            load.clone(),
            set(4),
            get(3),
            load4.clone(),
            set(5),
            get(4),
            get(5),
            b32(GtS),
            If(EMPTY),
            get(3),
            get(5),
            store.clone(),
            get(3),
            get(4),
            store4.clone(),
            End,
            get(2),
            c32(1),
            b32(Add),
            set(2),
            Br(0),
            End,
            End,
            get(1),
            c32(1),
            b32(Sub),
            set(1),
            Br(0),
            End,
            End,
            End,
        ],
        Some("sort"),
    );
    let tests = vec![
        t("max", &[i(3), i(9)], ret(&[i(9)])),
        t("max", &[i(-1), i(-5)], ret(&[i(-1)])),
        t("sort", &[i(0), i(4)], None),
    ];
    Entry { name: "bubble_sort", wasm: b.build(), tests }
}

fn string_hash() -> Entry {
    let mut b = ModuleBuilder::new();
    b.memory(1);
    let calls = b.global(I32, 0);
    let load8 = raw(&[0x2d, 0x00, 0x00]); // i32.load8_u
    let gget = raw(&[0x23, calls as u8]);
    let gset = raw(&[0x24, calls as u8]);
    let ty = b.add_type(&[I32, I32], &[I32]);
    // djb2 over `len` bytes at `ptr`; counts calls in a global.
    b.add_function(
        ty,
        vec![(1, I32)],
        vec![
            gget,
            c32(1),
            b32(Add),
            gset,
            c32(5381),
            set(2),
            Block(EMPTY),
            Loop(EMPTY),
            get(1),
            Unary(I32, UnOp::Eqz),
            BrIf(1),
            get(2),
            c32(33),
            b32(Mul),
            get(0),
            load8,
            b32(Add),
            set(2),
            get(0),
            c32(1),
            b32(Add),
            set(0),
            get(1),
            c32(1),
            b32(Sub),
            set(1),
            Br(0),
            End,
            End,
            get(2),
            End,
        ],
        Some("djb2"),
    );
    let tests = vec![t("djb2", &[i(0), i(0)], None), t("djb2", &[i(16), i(5)], None)];
    Entry { name: "string_hash", wasm: b.build(), tests }
}

fn write(dir: &Path, e: &Entry) -> std::io::Result<()> {
    std::fs::write(dir.join(format!("{}.wasm", e.name)), &e.wasm)?;
    let tests = TestFile { tests: e.tests.clone() };
    let json = serde_json::to_string_pretty(&tests).expect("tests serialize");
    std::fs::write(dir.join(format!("{}.json", e.name)), json + "\n")
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("crates/core/corpus"));
    std::fs::create_dir_all(&dir)?;
    let entries = [
        ackermann(),
        babbage(),
        bitwise_io(),
        bubble_sort(),
        collatz(),
        factorial(),
        fibonacci(),
        fizzbuzz(),
        gcd(),
        leap_year(),
        string_hash(),
        sum_digits(),
    ];
    for e in &entries {
        write(&dir, e)?;
        println!("{:<12} {:>5} bytes  {} tests", e.name, e.wasm.len(), e.tests.len());
    }
    Ok(())
}
