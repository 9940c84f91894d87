//! Probabilistic equivalence check over corner cases and seeded random
//! vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{eval_all, TestVector};
use super::Verdict;
use crate::dataflow::graph::{mask, DfGraph, NodeKind, Source};

/// Upper bound on the cartesian product of per-input corner values.
pub const MAX_CORNER_VECTORS: usize = 4096;

/// Widths of `Arg(i)` inputs, by position, across both fragments.
pub fn arg_widths(lhs: &DfGraph, rhs: &DfGraph) -> Vec<u32> {
    let mut widths: Vec<u32> = Vec::new();
    for g in [lhs, rhs] {
        for n in g.nodes() {
            if let NodeKind::Var(Source::Arg(i)) = n.kind {
                let i = i as usize;
                if widths.len() <= i {
                    widths.resize(i + 1, 0);
                }
                if widths[i] == 0 {
                    widths[i] = n.width;
                }
            }
        }
    }
    for w in &mut widths {
        if *w == 0 {
            *w = 32;
        }
    }
    widths
}

/// Boundary values for a `width`-bit input: 0, ±1, signed extremes, the
/// alternating patterns, single bits up to bit 7 and ±2^k for a few k.
pub fn corner_values(width: u32) -> Vec<u64> {
    let m = mask(width);
    let min = 1u64 << (width - 1);
    let mut out = vec![0, 1, m, min, min - 1, 0x5555_5555_5555_5555 & m, 0xAAAA_AAAA_AAAA_AAAA & m];
    for b in 0..8 {
        out.push((1u64 << b) & m);
    }
    for k in [8u32, 15, 16, 30, 31] {
        if k < width {
            out.push(1u64 << k);
            out.push((1u64 << k).wrapping_neg() & m);
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|v| seen.insert(*v));
    out
}

/// Corner-case cartesian product, evenly subsampled down to
/// [`MAX_CORNER_VECTORS`] when larger.
pub fn corner_vectors(widths: &[u32]) -> Vec<TestVector> {
    let per: Vec<Vec<u64>> = widths.iter().map(|&w| corner_values(w)).collect();
    let total = per.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len())).unwrap_or(usize::MAX);
    let take = total.min(MAX_CORNER_VECTORS);
    (0..take)
        .map(|k| {
            let mut idx = if total == take { k } else { ((k as u128 * total as u128) / take as u128) as usize };
            let values = per
                .iter()
                .map(|c| {
                    let v = c[idx % c.len()];
                    idx /= c.len();
                    v
                })
                .collect();
            TestVector::new(values)
        })
        .collect()
}

/// Seeded random vectors: mostly uniform, some small magnitudes, since
/// those exercise carries and comparisons differently.
pub fn random_vectors(widths: &[u32], n: usize, seed: u64) -> Vec<TestVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let values = widths
                .iter()
                .map(|&w| {
                    let v: u64 = match rng.gen_range(0..4) {
                        0 => rng.gen_range(0..64),
                        1 => (rng.gen_range(0..64) as u64).wrapping_neg(),
                        _ => rng.gen(),
                    };
                    v & mask(w)
                })
                .collect();
            TestVector::new(values)
        })
        .collect()
}

/// Compare `lhs` and `rhs` on corner and random vectors.
pub fn verify_testing(lhs: &DfGraph, rhs: &DfGraph, n_random: usize, seed: u64) -> Verdict {
    let (Some(lr), Some(rr)) = (lhs.root(), rhs.root()) else {
        return Verdict::Unknown("fragment without a single result".into());
    };
    let widths = arg_widths(lhs, rhs);
    let mut count = 0;
    for tv in corner_vectors(&widths).into_iter().chain(random_vectors(&widths, n_random, seed)) {
        let a = eval_all(lhs, &tv).map(|v| v[lr.index()]);
        let b = eval_all(rhs, &tv).map(|v| v[rr.index()]);
        if a != b {
            return Verdict::Refuted(tv);
        }
        count += 1;
    }
    Verdict::PassedTests(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::graph::{NodeId, Sink};
    use crate::wasm::BinOp;

    fn unary(build: impl FnOnce(&mut DfGraph, NodeId) -> NodeId) -> DfGraph {
        let mut g = DfGraph::new(1);
        let a = g.var(Source::Arg(0), 32);
        let r = build(&mut g, a);
        g.add_output(Sink::Stack(0), r);
        g
    }

    fn konst(v: u64) -> DfGraph {
        unary(|g, _| g.constant(v, 32))
    }

    #[test]
    fn xor_self_passes() {
        let lhs = unary(|g, a| g.binop(BinOp::Xor, a, a));
        assert!(matches!(verify_testing(&lhs, &konst(0), 4096, 1), Verdict::PassedTests(n) if n >= 4096));
    }

    #[test]
    fn increment_is_refuted() {
        let lhs = unary(|g, a| {
            let one = g.constant(1, 32);
            g.binop(BinOp::Add, a, one)
        });
        let rhs = unary(|_, a| a);
        assert!(matches!(verify_testing(&lhs, &rhs, 0, 1), Verdict::Refuted(_)));
    }

    #[test]
    fn corners_catch_sign_bit_without_random_luck() {
        assert!(corner_values(32).contains(&0x8000_0000));
        let lhs = unary(|g, a| {
            let k = g.constant(0x8000_0000, 32);
            g.binop(BinOp::And, a, k)
        });
        match verify_testing(&lhs, &konst(0), 0, 1) {
            Verdict::Refuted(tv) => assert_eq!(tv.values[0] & 0x8000_0000, 0x8000_0000),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn corner_product_is_capped() {
        assert_eq!(corner_vectors(&[32]).len(), corner_values(32).len());
        assert_eq!(corner_vectors(&[32, 32, 32]).len(), MAX_CORNER_VECTORS);
        assert!(corner_values(8).iter().all(|&v| v <= 0xFF));
    }
}
