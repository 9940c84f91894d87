//! Bottom-up, cost-ordered enumeration of RHS programs with pruning by
//! observational equivalence on a set of test vectors.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::dataflow::graph::{mask, DfGraph, NodeId, Sink, Source};
use crate::verify::{apply_binop, apply_unop, TestVector};
use crate::wasm::{BinOp, UnOp};

/// Operators an RHS may use: everything in the subset that cannot trap.
pub fn rhs_binops() -> impl Iterator<Item = BinOp> {
    BinOp::ALL.into_iter().filter(|op| !op.can_trap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PKind {
    Arg(u32),
    Const(u64),
    Un(UnOp),
    Bin(BinOp),
    Select,
}

#[derive(Debug, Clone, Copy)]
pub struct Prog {
    pub kind: PKind,
    pub width: u32,
    pub kids: [u32; 3],
    /// Tree size, which equals the lowered instruction count.
    pub cost: u32,
    /// No inputs below this node.
    pub konst: bool,
}

/// Work limit shared by every enumeration round for one candidate.
#[derive(Debug)]
pub struct Budget {
    pub remaining: u64,
    pub deadline: std::time::Instant,
    ticks: u32,
}

impl Budget {
    pub fn new(programs: u64, deadline: std::time::Instant) -> Self {
        Budget { remaining: programs, deadline, ticks: 0 }
    }

    /// Charge one program. False once the budget or the deadline is spent.
    pub fn charge(&mut self) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        self.ticks += 1;
        if self.ticks.is_multiple_of(1024) && std::time::Instant::now() >= self.deadline {
            self.remaining = 0;
            return false;
        }
        true
    }

    pub fn exhausted(&self) -> bool {
        self.remaining == 0
    }
}

/// Programs found so far, one per distinct (width, behaviour on vectors).
pub struct Bank {
    pub progs: Vec<Prog>,
    sigs: Vec<u64>,
    nvec: usize,
    by_cost: Vec<Vec<u32>>,
    seen: HashMap<(u32, u64), Vec<u32>>,
}

fn sig_hash(width: u32, sig: &[u64]) -> (u32, u64) {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    sig.hash(&mut h);
    (width, h.finish())
}

impl Bank {
    pub fn new(nvec: usize) -> Self {
        Bank { progs: vec![], sigs: vec![], nvec, by_cost: vec![vec![]], seen: HashMap::new() }
    }

    pub fn sig(&self, id: u32) -> &[u64] {
        let i = id as usize * self.nvec;
        &self.sigs[i..i + self.nvec]
    }

    pub fn level(&self, cost: u32) -> &[u32] {
        self.by_cost.get(cost as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Insert unless an equivalent program is already present.
    fn insert(&mut self, p: Prog, sig: Vec<u64>) -> Option<u32> {
        let key = sig_hash(p.width, &sig);
        if let Some(ids) = self.seen.get(&key) {
            if ids.iter().any(|&i| self.sig(i) == sig.as_slice()) {
                return None;
            }
        }
        let id = self.progs.len() as u32;
        self.progs.push(p);
        self.sigs.extend_from_slice(&sig);
        while self.by_cost.len() <= p.cost as usize {
            self.by_cost.push(vec![]);
        }
        self.by_cost[p.cost as usize].push(id);
        self.seen.entry(key).or_default().push(id);
        Some(id)
    }

    /// Store a program that later programs must not build on.
    fn push_unindexed(&mut self, p: Prog, sig: Vec<u64>) -> u32 {
        self.progs.push(p);
        self.sigs.extend_from_slice(&sig);
        self.progs.len() as u32 - 1
    }

    /// Preorder operation tags, for deterministic tie-breaking.
    pub fn tags(&self, id: u32) -> Vec<String> {
        let mut out = vec![];
        self.tags_into(id, &mut out);
        out
    }

    fn tags_into(&self, id: u32, out: &mut Vec<String>) {
        let p = self.progs[id as usize];
        let (tag, arity) = match p.kind {
            PKind::Arg(i) => (format!("arg{i}"), 0),
            PKind::Const(c) => (format!("const{c:020}"), 0),
            PKind::Un(op) => (op.name().to_string(), 1),
            PKind::Bin(op) => (op.name().to_string(), 2),
            PKind::Select => ("select".to_string(), 3),
        };
        out.push(tag);
        for k in 0..arity {
            self.tags_into(p.kids[k], out);
        }
    }

    /// Materialize program `id` as a fragment over `arg_widths`. Subtrees
    /// are never shared, so the lowered cost equals the tree size.
    pub fn to_graph(&self, id: u32, arg_widths: &[u32]) -> DfGraph {
        let mut g = DfGraph::new(arg_widths.len() as u32);
        let args: Vec<NodeId> = arg_widths.iter().enumerate().map(|(i, &w)| g.var(Source::Arg(i as u32), w)).collect();
        let root = self.build(id, &mut g, &args);
        g.add_output(Sink::Stack(0), root);
        g
    }

    fn build(&self, id: u32, g: &mut DfGraph, args: &[NodeId]) -> NodeId {
        let p = self.progs[id as usize];
        match p.kind {
            PKind::Arg(i) => args[i as usize],
            PKind::Const(c) => g.constant(c, p.width),
            PKind::Un(op) => {
                let a = self.build(p.kids[0], g, args);
                let n = g.unop(op, a);
                g.nodes[n.index()].width = p.width;
                n
            }
            PKind::Bin(op) => {
                let a = self.build(p.kids[0], g, args);
                let b = self.build(p.kids[1], g, args);
                g.binop(op, a, b)
            }
            PKind::Select => {
                let a = self.build(p.kids[0], g, args);
                let b = self.build(p.kids[1], g, args);
                let c = self.build(p.kids[2], g, args);
                g.select(a, b, c)
            }
        }
    }
}

/// What to search for and with which leaves.
pub struct Search<'a> {
    pub arg_widths: &'a [u32],
    pub constants: &'a [(u32, u64)],
    pub vectors: &'a [TestVector],
    pub target: &'a [u64],
    pub target_width: u32,
    /// Matches cheaper than this are ignored (they were inconclusive).
    pub min_cost: u32,
    pub max_cost: u32,
}

/// Unary operators applicable to a value of `width`, with result widths.
fn unops_for(width: u32, widths: &[u32]) -> Vec<(UnOp, u32)> {
    let mut out = vec![(UnOp::Eqz, 32)];
    if width == 32 && widths.contains(&64) {
        out.push((UnOp::ExtendS, 64));
        out.push((UnOp::ExtendU, 64));
    }
    if width == 64 && widths.contains(&32) {
        out.push((UnOp::Wrap, 32));
    }
    out
}

/// Outcome of one enumeration round.
pub enum Round {
    /// Programs matching the target at the cheapest cost level that had any,
    /// in tie-break order.
    Matches(Bank, Vec<u32>),
    NotFound,
    Exhausted,
}

/// Enumerate programs level by level until some level contains programs
/// that agree with the target on every vector.
pub fn enumerate(s: &Search<'_>, budget: &mut Budget) -> Round {
    let nvec = s.vectors.len();
    let mut bank = Bank::new(nvec);
    let mut widths: Vec<u32> = s.arg_widths.to_vec();
    widths.push(s.target_width);
    widths.push(32);
    widths.sort();
    widths.dedup();

    for cost in 1..=s.max_cost {
        let mut matches: Vec<u32> = vec![];
        let mut add = |bank: &mut Bank, p: Prog, sig: Vec<u64>| -> bool {
            if !budget.charge() {
                return false;
            }
            let hit = p.width == s.target_width && sig.as_slice() == s.target;
            if hit {
                // Keep every matching program, even behavioural duplicates,
                // so ties are broken by shape rather than discovery order.
                let id = match bank.insert(p, sig.clone()) {
                    Some(id) => id,
                    None => bank.push_unindexed(p, sig),
                };
                matches.push(id);
            } else {
                bank.insert(p, sig);
            }
            true
        };
        let mut ok = true;
        if cost == 1 {
            for (i, &w) in s.arg_widths.iter().enumerate() {
                let sig = s.vectors.iter().map(|v| v.values[i] & mask(w)).collect();
                let p = Prog { kind: PKind::Arg(i as u32), width: w, kids: [0; 3], cost: 1, konst: false };
                ok &= add(&mut bank, p, sig);
            }
            for &(w, c) in s.constants {
                let p = Prog { kind: PKind::Const(c & mask(w)), width: w, kids: [0; 3], cost: 1, konst: true };
                ok &= add(&mut bank, p, vec![c & mask(w); nvec]);
            }
        } else {
            // Unary.
            let prev: Vec<u32> = bank.level(cost - 1).to_vec();
            'un: for &a in &prev {
                let pa = bank.progs[a as usize];
                if pa.konst {
                    continue;
                }
                for (op, ow) in unops_for(pa.width, &widths) {
                    let sig = bank.sig(a).iter().map(|&x| apply_unop(op, pa.width, ow, x)).collect();
                    let p = Prog { kind: PKind::Un(op), width: ow, kids: [a, 0, 0], cost, konst: false };
                    if !add(&mut bank, p, sig) {
                        ok = false;
                        break 'un;
                    }
                }
            }
            // Binary.
            'bin: for ca in 1..cost - 1 {
                let cb = cost - 1 - ca;
                let la: Vec<u32> = bank.level(ca).to_vec();
                let lb: Vec<u32> = bank.level(cb).to_vec();
                for op in rhs_binops() {
                    if op.is_commutative() && ca > cb {
                        continue;
                    }
                    for &a in &la {
                        let pa = bank.progs[a as usize];
                        for &b in &lb {
                            let pb = bank.progs[b as usize];
                            if pa.width != pb.width || (pa.konst && pb.konst) {
                                continue;
                            }
                            if op.is_commutative() && ca == cb && a > b {
                                continue;
                            }
                            let w = pa.width;
                            let ow = if op.is_comparison() { 32 } else { w };
                            let sig =
                                bank.sig(a).iter().zip(bank.sig(b)).map(|(&x, &y)| apply_binop(op, w, x, y)).collect();
                            let p = Prog { kind: PKind::Bin(op), width: ow, kids: [a, b, 0], cost, konst: false };
                            if !add(&mut bank, p, sig) {
                                ok = false;
                                break 'bin;
                            }
                        }
                    }
                }
            }
            // Select: value, value, i32 condition.
            if ok && cost >= 4 {
                'sel: for ca in 1..cost - 2 {
                    for cb in 1..cost - 1 - ca {
                        let cc = cost - 1 - ca - cb;
                        let (la, lb, lc) = (bank.level(ca).to_vec(), bank.level(cb).to_vec(), bank.level(cc).to_vec());
                        for &c in &lc {
                            let pc = bank.progs[c as usize];
                            if pc.konst || pc.width != 32 {
                                continue;
                            }
                            for &a in &la {
                                let pa = bank.progs[a as usize];
                                for &b in &lb {
                                    let pb = bank.progs[b as usize];
                                    if pa.width != pb.width || a == b {
                                        continue;
                                    }
                                    let sig = (0..nvec)
                                        .map(|k| if bank.sig(c)[k] != 0 { bank.sig(a)[k] } else { bank.sig(b)[k] })
                                        .collect();
                                    let p = Prog {
                                        kind: PKind::Select,
                                        width: pa.width,
                                        kids: [a, b, c],
                                        cost,
                                        konst: false,
                                    };
                                    if !add(&mut bank, p, sig) {
                                        ok = false;
                                        break 'sel;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if !matches.is_empty() && cost >= s.min_cost {
            let mut keyed: Vec<(Vec<String>, u32)> = matches.iter().map(|&m| (bank.tags(m), m)).collect();
            keyed.sort();
            return Round::Matches(bank, keyed.into_iter().map(|(_, m)| m).collect());
        }
        if !ok {
            return Round::Exhausted;
        }
    }
    if budget.exhausted() {
        Round::Exhausted
    } else {
        Round::NotFound
    }
}
