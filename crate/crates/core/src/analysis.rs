//! Executable forms of the order-invariance results: proportion-class
//! sampling and the explicit two-dimensional majority recognizer.

use std::collections::{BTreeMap, HashSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::attention::ScoreFn;
use crate::error::{Error, Result};
use crate::linalg::{Activation, AffineMap, FeedForward, Rat, RatMat, RatVec};
use crate::transformer::{
    CoordConstraint, DecLayerParams, EncLayerParams, FinalPred, PosEnc, Recognizer,
    TransformerParams,
};

/// A base word together with sampled members of its proportion class: every
/// member has exactly the same per-symbol proportions as the base.
#[derive(Debug, Clone)]
pub struct PropClass {
    pub base: String,
    pub members: Vec<String>,
}

/// Exact per-symbol proportions of a word.
pub fn proportions(w: &str) -> BTreeMap<char, Rat> {
    let n = w.chars().count() as i64;
    let mut counts: BTreeMap<char, i64> = BTreeMap::new();
    for c in w.chars() {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(c, k)| (c, Rat::ratio(k, n)))
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Lexicographic next permutation; yields each distinct multiset
/// permutation exactly once from the sorted start.
fn next_permutation(chars: &mut [char]) -> bool {
    if chars.len() < 2 {
        return false;
    }
    let mut i = chars.len() - 1;
    while i > 0 && chars[i - 1] >= chars[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = chars.len() - 1;
    while chars[j] <= chars[i - 1] {
        j -= 1;
    }
    chars.swap(i - 1, j);
    chars[i..].reverse();
    true
}

fn multinomial_at_most(counts: &[usize], cap: usize) -> bool {
    // running product n! / (c_1! ... c_k!) computed incrementally; bail out
    // as soon as the cap is exceeded
    let mut total: u128 = 1;
    let mut placed = 0usize;
    for &c in counts {
        for k in 1..=c {
            placed += 1;
            total = total * placed as u128 / k as u128;
            if total > cap as u128 {
                return false;
            }
        }
    }
    true
}

/// Enumeration cap per class; beyond it, members are sampled by seeded
/// shuffles instead of exhaustive enumeration.
pub const PERMUTATION_BUDGET: usize = 5040;

/// Samples members of the proportion class of `w`: all lengths that can
/// realize the exact proportions up to `max_len`, with permutations
/// enumerated exhaustively below the budget and subsampled deterministically
/// above it. Output is deduplicated and capped at `count`.
pub fn propinv_samples(w: &str, max_len: usize, count: usize, seed: u64) -> Result<PropClass> {
    let base: Vec<char> = w.chars().collect();
    if base.is_empty() {
        return Err(Error::Empty("base word"));
    }
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    for &c in &base {
        *counts.entry(c).or_insert(0) += 1;
    }
    let n = base.len();
    let g = counts.values().fold(n, |acc, &c| gcd(acc, c));
    let unit_len = n / g;
    let unit: Vec<(char, usize)> = counts.iter().map(|(&c, &k)| (c, k / g)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut members: Vec<String> = Vec::new();
    let push = |s: String, members: &mut Vec<String>, seen: &mut HashSet<String>| {
        if seen.insert(s.clone()) {
            members.push(s);
        }
    };

    let mut len = unit_len;
    while len <= max_len && members.len() < count {
        let scale = len / unit_len;
        let scaled: Vec<(char, usize)> = unit.iter().map(|&(c, k)| (c, k * scale)).collect();
        let mut sorted: Vec<char> = scaled
            .iter()
            .flat_map(|&(c, k)| std::iter::repeat(c).take(k))
            .collect();
        sorted.sort_unstable();
        let count_vec: Vec<usize> = scaled.iter().map(|&(_, k)| k).collect();
        if multinomial_at_most(&count_vec, PERMUTATION_BUDGET) {
            loop {
                push(sorted.iter().collect(), &mut members, &mut seen);
                if members.len() >= count || !next_permutation(&mut sorted) {
                    break;
                }
            }
        } else {
            push(sorted.iter().collect::<String>(), &mut members, &mut seen);
            for _ in 0..4 * count {
                if members.len() >= count {
                    break;
                }
                let mut shuffled = sorted.clone();
                shuffled.shuffle(&mut rng);
                push(shuffled.iter().collect(), &mut members, &mut seen);
            }
        }
        len += unit_len;
    }
    Ok(PropClass {
        base: w.to_string(),
        members,
    })
}

/// The explicit two-dimensional majority recognizer: accepts exactly the
/// words over {a, b} with strictly more a's than b's. Every output equals
/// [(#a - #b) / n, 0]; acceptance tests the first coordinate against zero.
pub fn majority_recognizer() -> Recognizer {
    let dim = 2;
    let o = AffineMap::new(
        RatMat::from_rows(vec![
            vec![Rat::from_int(-1), Rat::zero()],
            vec![Rat::one(), Rat::from_int(-1)],
        ])
        .unwrap(),
        RatVec::zeros(2),
    )
    .unwrap();
    let dec = DecLayerParams {
        self_q: FeedForward::zero_map(dim),
        self_k: FeedForward::zero_map(dim),
        self_v: FeedForward::zero_map(dim),
        o: FeedForward::single(o, Activation::Identity),
        self_score: ScoreFn::MultPhi,
        cross_score: ScoreFn::MultPhi,
    };
    let mut embed = BTreeMap::new();
    embed.insert('a', RatVec::from_ints(&[0, 1]));
    embed.insert('b', RatVec::from_ints(&[0, -1]));
    Recognizer {
        alphabet: vec!['a', 'b'],
        embed,
        posenc: PosEnc::Zero,
        seed: RatVec::zeros(2),
        final_pred: FinalPred::new(vec![CoordConstraint::GreaterThan {
            coord: 0,
            value: Rat::zero(),
        }]),
        params: TransformerParams {
            dim,
            enc_layers: vec![EncLayerParams::identity(dim)],
            final_k: FeedForward::zero_map(dim),
            final_v: FeedForward::identity(),
            dec_layers: vec![dec],
            final_f: FeedForward::identity(),
        },
        layout: None,
    }
}

/// The majority network with identity encoder keys and a nonzero positional
/// encoding: its cross-attention scores depend on positions, so permuting
/// the input changes the output. Used to witness that order invariance
/// genuinely hinges on the absence of positional encodings.
pub fn position_sensitive_majority() -> Recognizer {
    let mut rec = majority_recognizer();
    rec.posenc = PosEnc::IndexAt { slot: 1 };
    rec.params.final_k = FeedForward::identity();
    rec
}

/// Seeded generator of small zero-positional-encoding recognizers with
/// random parameter maps and score functions; used to exercise the
/// proportion-invariance property beyond the majority network.
pub fn random_flat_recognizer(seed: u64) -> Recognizer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..=3);
    let small = |rng: &mut ChaCha8Rng| Rat::ratio(rng.gen_range(-2..=2), 2);
    let ffn = |rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize| {
        let mut m = RatMat::zeros(in_dim, out_dim);
        for i in 0..in_dim {
            for j in 0..out_dim {
                let v = small(rng);
                m.set(i, j, v);
            }
        }
        let bias = RatVec::new((0..out_dim).map(|_| small(rng)).collect());
        let act = [Activation::Identity, Activation::Sigma, Activation::Relu]
            [rng.gen_range(0..3)];
        FeedForward::single(AffineMap::new(m, bias).unwrap(), act)
    };
    let score = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            ScoreFn::MultPhi
        } else {
            ScoreFn::NetDefined {
                net: ffn(rng, 2 * dim, 1),
            }
        }
    };
    let enc = EncLayerParams {
        q: ffn(&mut rng, dim, dim),
        k: ffn(&mut rng, dim, dim),
        v: ffn(&mut rng, dim, dim),
        o: ffn(&mut rng, dim, dim),
        score: score(&mut rng),
    };
    let n_dec = rng.gen_range(1..=2);
    let dec_layers: Vec<DecLayerParams> = (0..n_dec)
        .map(|_| DecLayerParams {
            self_q: ffn(&mut rng, dim, dim),
            self_k: ffn(&mut rng, dim, dim),
            self_v: ffn(&mut rng, dim, dim),
            o: ffn(&mut rng, dim, dim),
            self_score: score(&mut rng),
            cross_score: score(&mut rng),
        })
        .collect();
    let mut embed = BTreeMap::new();
    embed.insert('a', RatVec::new((0..dim).map(|_| small(&mut rng)).collect()));
    embed.insert('b', RatVec::new((0..dim).map(|_| small(&mut rng)).collect()));
    Recognizer {
        alphabet: vec!['a', 'b'],
        embed,
        posenc: PosEnc::Zero,
        seed: RatVec::new((0..dim).map(|_| small(&mut rng)).collect()),
        final_pred: FinalPred::default(),
        params: TransformerParams {
            dim,
            enc_layers: vec![enc],
            final_k: ffn(&mut rng, dim, dim),
            final_v: ffn(&mut rng, dim, dim),
            dec_layers,
            final_f: ffn(&mut rng, dim, dim),
        },
        layout: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::{recognizer_accepts, run_trans, Decision};

    #[test]
    fn propinv_contains_expected_members() {
        let class = propinv_samples("aabb", 8, 64, 1).unwrap();
        for m in ["abab", "bbaa", "aaabbb", "ab"] {
            assert!(class.members.iter().any(|s| s == m), "missing {m:?}");
        }
        for m in &class.members {
            assert_eq!(proportions(m), proportions("aabb"), "member {m:?}");
        }
    }

    #[test]
    fn propinv_single_symbol_class_is_repetitions() {
        let class = propinv_samples("a", 5, 16, 0).unwrap();
        assert_eq!(class.members, vec!["a", "aa", "aaa", "aaaa", "aaaaa"]);
    }

    #[test]
    fn propinv_budget_subsamples_deterministically() {
        let a = propinv_samples("aabbccdd", 8, 30, 9).unwrap();
        let b = propinv_samples("aabbccdd", 8, 30, 9).unwrap();
        assert_eq!(a.members, b.members);
        assert!(a.members.len() <= 30);
        for m in &a.members {
            assert_eq!(proportions(m), proportions("aabbccdd"));
        }
    }

    #[test]
    fn majority_accepts_aab_at_step_one() {
        let rec = majority_recognizer();
        assert_eq!(
            recognizer_accepts("aab", &rec, 4).unwrap(),
            Decision::Accept { step: 1 }
        );
        let xs = rec.embed_word("aab").unwrap();
        let ys = run_trans(&xs, &rec.seed, 2, &rec).unwrap();
        let expect = RatVec::new(vec![Rat::ratio(1, 3), Rat::zero()]);
        assert_eq!(ys, vec![expect.clone(), expect]);
    }

    #[test]
    fn majority_never_accepts_balanced_words() {
        let rec = majority_recognizer();
        assert_eq!(
            recognizer_accepts("ab", &rec, 6).unwrap(),
            Decision::Undecided
        );
        let xs = rec.embed_word("ab").unwrap();
        let ys = run_trans(&xs, &rec.seed, 3, &rec).unwrap();
        for y in ys {
            assert!(y.is_zero());
        }
    }

    #[test]
    fn majority_matches_counting_on_short_words() {
        let rec = majority_recognizer();
        for len in 1..=7usize {
            for bits in 0..(1usize << len) {
                let w: String = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { 'a' } else { 'b' })
                    .collect();
                let na = w.chars().filter(|&c| c == 'a').count();
                let expected = na > len - na;
                let got = recognizer_accepts(&w, &rec, 2).unwrap();
                assert_eq!(got != Decision::Undecided, expected, "word {w:?}");
            }
        }
    }

    #[test]
    fn flat_networks_are_proportion_invariant() {
        for seed in [5u64, 6, 7] {
            let rec = random_flat_recognizer(seed);
            let class = propinv_samples("aab", 9, 8, seed).unwrap();
            let base_xs = rec.embed_word("aab").unwrap();
            let base = run_trans(&base_xs, &rec.seed, 3, &rec).unwrap();
            for m in &class.members {
                let xs = rec.embed_word(m).unwrap();
                let got = run_trans(&xs, &rec.seed, 3, &rec).unwrap();
                assert_eq!(got, base, "seed {seed} member {m:?}");
            }
        }
    }

    #[test]
    fn positional_encoding_breaks_order_invariance() {
        let rec = position_sensitive_majority();
        let lhs = run_trans(&rec.embed_word("ab").unwrap(), &rec.seed, 2, &rec).unwrap();
        let rhs = run_trans(&rec.embed_word("ba").unwrap(), &rec.seed, 2, &rec).unwrap();
        assert_ne!(lhs, rhs);
    }

    #[test]
    fn majority_output_is_count_difference_over_length() {
        let rec = majority_recognizer();
        for w in ["a", "b", "aabab", "bbbaa", "abab"] {
            let na = w.chars().filter(|&c| c == 'a').count() as i64;
            let nb = w.len() as i64 - na;
            let xs = rec.embed_word(w).unwrap();
            let ys = run_trans(&xs, &rec.seed, 1, &rec).unwrap();
            assert_eq!(ys[0][0], Rat::ratio(na - nb, w.len() as i64), "word {w:?}");
            assert_eq!(ys[0][1], Rat::zero());
        }
    }
}
