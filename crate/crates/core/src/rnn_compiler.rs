//! Compiles a restricted RNN encoder-decoder into a recognizer over
//! dimension 6d + 8 whose transformer reproduces the hidden and decoder
//! state streams exactly.
//!
//! The construction tracks six sequences per step i: the clamped input
//! vector, the hidden-state stream (equal to the encoder states while input
//! remains), the decoder stream (zero until the input is exhausted, then
//! the decoder iterates), and three scalars: the exhaustion flag a_i, the
//! handoff flag b_i (zero exactly once, at i = n+1), and the clamped
//! position c_i = min(i, n).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attention::ScoreFn;
use crate::error::{Error, Result};
use crate::linalg::{sigma_pl, Activation, AffineMap, FeedForward, FfnStage, Rat, RatMat, RatVec};
use crate::machines::RnnEncDec;
use crate::transformer::{
    CoordConstraint, DecLayerParams, EncLayerParams, FinalPred, PosEnc, Recognizer, SlotRange,
    TransformerParams,
};

/// Slot ranges over dimension 6d + 8: three d-blocks (input echo, hidden
/// stream, decoder stream), four scalars (a, b, c, c_next), three scratch
/// d-blocks for the successor values, and four scalars (a_next, b_next,
/// spare, position).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnLayout {
    pub d: usize,
}

impl RnnLayout {
    pub fn new(d: usize) -> Self {
        RnnLayout { d }
    }

    pub fn dim(&self) -> usize {
        6 * self.d + 8
    }

    pub fn input(&self) -> usize {
        0
    }
    pub fn hidden(&self) -> usize {
        self.d
    }
    pub fn decoder(&self) -> usize {
        2 * self.d
    }
    pub fn flag_a(&self) -> usize {
        3 * self.d
    }
    pub fn flag_b(&self) -> usize {
        3 * self.d + 1
    }
    pub fn clamp_c(&self) -> usize {
        3 * self.d + 2
    }
    pub fn clamp_c_next(&self) -> usize {
        3 * self.d + 3
    }
    pub fn hidden_next(&self) -> usize {
        3 * self.d + 4
    }
    pub fn decoder_next(&self) -> usize {
        4 * self.d + 4
    }
    pub fn gate_scratch(&self) -> usize {
        5 * self.d + 4
    }
    pub fn flag_a_next(&self) -> usize {
        6 * self.d + 4
    }
    pub fn flag_b_next(&self) -> usize {
        6 * self.d + 5
    }
    pub fn spare(&self) -> usize {
        6 * self.d + 6
    }
    pub fn pos(&self) -> usize {
        6 * self.d + 7
    }

    pub fn slot_table(&self) -> Vec<SlotRange> {
        let named = [
            ("input", self.input(), self.d),
            ("hidden", self.hidden(), self.d),
            ("decoder", self.decoder(), self.d),
            ("flag_a", self.flag_a(), 1),
            ("flag_b", self.flag_b(), 1),
            ("clamp_c", self.clamp_c(), 1),
            ("clamp_c_next", self.clamp_c_next(), 1),
            ("hidden_next", self.hidden_next(), self.d),
            ("decoder_next", self.decoder_next(), self.d),
            ("gate_scratch", self.gate_scratch(), self.d),
            ("flag_a_next", self.flag_a_next(), 1),
            ("flag_b_next", self.flag_b_next(), 1),
            ("spare", self.spare(), 1),
            ("pos", self.pos(), 1),
        ];
        named
            .iter()
            .map(|(name, start, len)| SlotRange {
                name: name.to_string(),
                start: *start,
                len: *len,
            })
            .collect()
    }
}

/// The six reference sequences for 0 <= i <= r, computed directly from
/// their recursive definitions. This is the oracle the compiled network is
/// verified against.
#[derive(Debug, Clone)]
pub struct RefSequences {
    /// Clamped inputs; index 0 is unused and kept zero.
    pub alpha: Vec<RatVec>,
    /// Hidden stream: equals the encoder states while input remains.
    pub beta: Vec<RatVec>,
    /// Decoder stream: zero through i = n, then the decoder iterates.
    pub gamma: Vec<RatVec>,
    /// 1 exactly when i >= n+1.
    pub a: Vec<Rat>,
    /// 0 exactly when i = n+1.
    pub b: Vec<Rat>,
    /// min(i, n).
    pub c: Vec<Rat>,
}

/// Computes the reference sequences for inputs `xs` up to index r.
pub fn reference_sequences(rnn: &RnnEncDec, xs: &[RatVec], r: usize) -> Result<RefSequences> {
    let d = rnn.dim;
    let n = xs.len();
    if n == 0 {
        return Err(Error::Empty("input sequence"));
    }
    for (i, x) in xs.iter().enumerate() {
        if x.dim() != d {
            return Err(Error::dim(format!("input vector {}", i + 1), d, x.dim()));
        }
    }
    let sigma_vec = |v: RatVec| v.map(|x| sigma_pl(x));
    let mut alpha = vec![RatVec::zeros(d)];
    let mut beta = vec![RatVec::zeros(d)];
    let mut gamma = vec![RatVec::zeros(d)];
    let mut a = vec![Rat::zero()];
    let mut b = vec![Rat::one()];
    let mut c = vec![Rat::zero()];
    for i in 1..=r {
        let al = xs[i.min(n) - 1].clone();
        let be = sigma_vec(
            rnn.w
                .vec_mul(&al)?
                .add(&rnn.v.vec_mul(beta.last().unwrap())?)?,
        );
        let ga = if i <= n {
            RatVec::zeros(d)
        } else if i == n + 1 {
            beta[n].clone()
        } else {
            sigma_vec(rnn.u.vec_mul(gamma.last().unwrap())?)
        };
        alpha.push(al);
        beta.push(be);
        gamma.push(ga);
        a.push(if i > n { Rat::one() } else { Rat::zero() });
        b.push(if i == n + 1 { Rat::zero() } else { Rat::one() });
        c.push(Rat::from_int(i.min(n) as i64));
    }
    Ok(RefSequences {
        alpha,
        beta,
        gamma,
        a,
        b,
        c,
    })
}

fn linear_stage(matrix: RatMat, act: Activation) -> FfnStage {
    let bias = RatVec::zeros(matrix.cols());
    FfnStage::new(AffineMap::new(matrix, bias).unwrap(), act)
}

fn linear_stage_with_bias(matrix: RatMat, bias: RatVec, act: Activation) -> FfnStage {
    FfnStage::new(AffineMap::new(matrix, bias).unwrap(), act)
}

fn copy_block(m: &mut RatMat, from: usize, to: usize, len: usize) {
    for j in 0..len {
        m.set(from + j, to + j, Rat::one());
    }
}

/// The heavy first-layer output network: computes the successor flags
/// affinely, then one clamped stage producing the next hidden state, the
/// raw decoder update and the gated handoff copy, then sums the handoff
/// into the decoder stream.
fn build_update_ffn(rnn: &RnnEncDec, layout: &RnnLayout) -> FeedForward {
    let d = rnn.dim;
    let full = layout.dim();

    // keep the three leading blocks, compute the successor flags, zero the rest
    let mut m1 = RatMat::zeros(full, full);
    let mut b1 = RatVec::zeros(full);
    copy_block(&mut m1, layout.input(), layout.input(), d);
    copy_block(&mut m1, layout.hidden(), layout.hidden(), d);
    copy_block(&mut m1, layout.decoder(), layout.decoder(), d);
    // a' = 1 - (c_next - c)
    m1.set(layout.clamp_c_next(), layout.flag_a_next(), Rat::from_int(-1));
    m1.set(layout.clamp_c(), layout.flag_a_next(), Rat::one());
    b1[layout.flag_a_next()] = Rat::one();
    // b' = c_next - c + a
    m1.set(layout.clamp_c_next(), layout.flag_b_next(), Rat::one());
    m1.set(layout.clamp_c(), layout.flag_b_next(), Rat::from_int(-1));
    m1.set(layout.flag_a(), layout.flag_b_next(), Rat::one());

    // clamped stage: successor hidden state, raw decoder update, gated copy
    let mut m2 = RatMat::zeros(full, full);
    copy_block(&mut m2, layout.hidden(), layout.hidden(), d);
    copy_block(&mut m2, layout.decoder(), layout.decoder(), d);
    for row in 0..d {
        for col in 0..d {
            let w = rnn.w.get(row, col);
            if !w.is_zero() {
                m2.set(layout.input() + row, layout.hidden_next() + col, w.clone());
            }
            let v = rnn.v.get(row, col);
            if !v.is_zero() {
                m2.set(layout.hidden() + row, layout.hidden_next() + col, v.clone());
            }
            let u = rnn.u.get(row, col);
            if !u.is_zero() {
                m2.set(layout.decoder() + row, layout.decoder_next() + col, u.clone());
            }
        }
    }
    for j in 0..d {
        m2.set(layout.hidden() + j, layout.gate_scratch() + j, Rat::one());
        m2.set(
            layout.flag_b_next(),
            layout.gate_scratch() + j,
            Rat::from_int(-1),
        );
    }
    m2.set(layout.flag_a_next(), layout.flag_a_next(), Rat::one());
    m2.set(layout.flag_b_next(), layout.flag_b_next(), Rat::one());

    // final reassembly: the decoder successor is the clamped update plus
    // the gated handoff copy
    let mut m3 = RatMat::zeros(full, full);
    copy_block(&mut m3, layout.hidden_next(), layout.hidden_next(), d);
    copy_block(&mut m3, layout.decoder_next(), layout.decoder_next(), d);
    for j in 0..d {
        m3.set(
            layout.gate_scratch() + j,
            layout.decoder_next() + j,
            Rat::one(),
        );
    }
    m3.set(layout.flag_a_next(), layout.flag_a_next(), Rat::one());
    m3.set(layout.flag_b_next(), layout.flag_b_next(), Rat::one());

    FeedForward::from_stages(vec![
        linear_stage_with_bias(m1, b1, Activation::Identity),
        linear_stage(m2, Activation::Sigma),
        linear_stage(m3, Activation::Identity),
    ])
}

/// Cleanup output map for the second decoder layer: on the layer's
/// attended-plus-residual input it produces exactly (target - input), where
/// the target keeps only the successor values moved into their home slots.
/// The slot the forced cross attention doubled is halved back.
fn build_cleanup_ffn(layout: &RnnLayout) -> FeedForward {
    let d = layout.d;
    let full = layout.dim();
    let mut m = RatMat::zeros(full, full);
    // negate everything by default, then overwrite targeted entries
    for i in 0..full {
        m.set(i, i, Rat::from_int(-1));
    }
    for j in 0..d {
        m.set(layout.hidden_next() + j, layout.hidden() + j, Rat::one());
        m.set(layout.decoder_next() + j, layout.decoder() + j, Rat::one());
    }
    m.set(layout.flag_a_next(), layout.flag_a(), Rat::one());
    m.set(layout.flag_b_next(), layout.flag_b(), Rat::one());
    // the cross attention doubled the clamped-position deposit
    m.set(layout.clamp_c_next(), layout.clamp_c(), Rat::ratio(1, 2));
    FeedForward::single(
        AffineMap::new(m, RatVec::zeros(full)).unwrap(),
        Activation::Identity,
    )
}

/// Lifts raw input vectors into the simulation space: the vector in the
/// leading block plus the position in the last slot.
pub fn lift_input(layout: &RnnLayout, xs: &[RatVec]) -> Vec<RatVec> {
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let mut v = RatVec::zeros(layout.dim());
            for j in 0..layout.d {
                v[layout.input() + j] = x[j].clone();
            }
            v[layout.pos()] = Rat::from_int((i + 1) as i64);
            v
        })
        .collect()
}

/// Compiles the RNN into a recognizer: the accepting predicate (declared
/// over the RNN's own d-dimensional output space) is rebased onto the
/// decoder-stream block, conjoined with the exhaustion flag being 1.
pub fn compile_rnn(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    accept: &FinalPred,
) -> Result<Recognizer> {
    let d = rnn.dim;
    let layout = RnnLayout::new(d);
    let full = layout.dim();

    let mut lifted_embed = BTreeMap::new();
    for (&c, e) in embed {
        if e.dim() != d {
            return Err(Error::dim(format!("embedding of '{c}'"), d, e.dim()));
        }
        let mut v = RatVec::zeros(full);
        for j in 0..d {
            v[layout.input() + j] = e[j].clone();
        }
        lifted_embed.insert(c, v);
    }

    // encoder: identity layer; keys are the inputs themselves, values move
    // the position into the clamped-position slot
    let mut vmat = RatMat::zeros(full, full);
    copy_block(&mut vmat, layout.input(), layout.input(), d);
    vmat.set(layout.pos(), layout.clamp_c_next(), Rat::one());
    let final_v = FeedForward::single(
        AffineMap::new(vmat, RatVec::zeros(full)).unwrap(),
        Activation::Identity,
    );

    let cross = ScoreFn::PosDiff {
        pos_slot: layout.pos(),
    };
    let layer1 = DecLayerParams {
        self_q: FeedForward::zero_map(full),
        self_k: FeedForward::zero_map(full),
        self_v: FeedForward::zero_map(full),
        o: build_update_ffn(rnn, &layout),
        self_score: ScoreFn::MultPhi,
        cross_score: cross.clone(),
    };
    let layer2 = DecLayerParams {
        self_q: FeedForward::zero_map(full),
        self_k: FeedForward::zero_map(full),
        self_v: FeedForward::zero_map(full),
        o: build_cleanup_ffn(&layout),
        self_score: ScoreFn::MultPhi,
        cross_score: cross,
    };

    let mut seed = RatVec::zeros(full);
    seed[layout.flag_b()] = Rat::one();

    let mut constraints = vec![CoordConstraint::Equals {
        coord: layout.flag_a(),
        value: Rat::one(),
    }];
    for c in &accept.constraints {
        constraints.push(match c {
            CoordConstraint::Equals { coord, value } => {
                check_accept_coord(*coord, d)?;
                CoordConstraint::Equals {
                    coord: layout.decoder() + coord,
                    value: value.clone(),
                }
            }
            CoordConstraint::GreaterThan { coord, value } => {
                check_accept_coord(*coord, d)?;
                CoordConstraint::GreaterThan {
                    coord: layout.decoder() + coord,
                    value: value.clone(),
                }
            }
            CoordConstraint::OneHotIn {
                start,
                len,
                allowed,
            } => {
                check_accept_coord(start + len - 1, d)?;
                CoordConstraint::OneHotIn {
                    start: layout.decoder() + start,
                    len: *len,
                    allowed: allowed.clone(),
                }
            }
        });
    }

    let alphabet: Vec<char> = embed.keys().copied().collect();
    let rec = Recognizer {
        alphabet,
        embed: lifted_embed,
        posenc: PosEnc::IndexAt { slot: layout.pos() },
        seed,
        final_pred: FinalPred::new(constraints),
        params: TransformerParams {
            dim: full,
            enc_layers: vec![EncLayerParams::identity(full)],
            final_k: FeedForward::identity(),
            final_v,
            dec_layers: vec![layer1, layer2],
            final_f: FeedForward::identity(),
        },
        layout: Some(layout.slot_table()),
    };
    rec.validate()?;
    Ok(rec)
}

fn check_accept_coord(coord: usize, d: usize) -> Result<()> {
    if coord >= d {
        return Err(Error::dim("accepting predicate coordinate", d, coord + 1));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reference-derived expectation vectors
// ---------------------------------------------------------------------------

/// Expected network output y_i.
pub fn expected_output(layout: &RnnLayout, seqs: &RefSequences, i: usize) -> RatVec {
    let mut v = RatVec::zeros(layout.dim());
    for j in 0..layout.d {
        v[layout.hidden() + j] = seqs.beta[i][j].clone();
        v[layout.decoder() + j] = seqs.gamma[i][j].clone();
    }
    v[layout.flag_a()] = seqs.a[i].clone();
    v[layout.flag_b()] = seqs.b[i].clone();
    v[layout.clamp_c()] = seqs.c[i].clone();
    v
}

/// Expected first-layer output z^1_i (needs the sequences up to i+1).
pub fn expected_layer1(layout: &RnnLayout, seqs: &RefSequences, i: usize) -> RatVec {
    let mut v = RatVec::zeros(layout.dim());
    for j in 0..layout.d {
        v[layout.input() + j] = seqs.alpha[i + 1][j].clone();
        v[layout.hidden() + j] = seqs.beta[i][j].clone();
        v[layout.decoder() + j] = seqs.gamma[i][j].clone();
        v[layout.hidden_next() + j] = seqs.beta[i + 1][j].clone();
        v[layout.decoder_next() + j] = seqs.gamma[i + 1][j].clone();
    }
    v[layout.flag_a()] = seqs.a[i].clone();
    v[layout.flag_b()] = seqs.b[i].clone();
    v[layout.clamp_c()] = seqs.c[i].clone();
    v[layout.clamp_c_next()] = seqs.c[i + 1].clone();
    v[layout.flag_a_next()] = seqs.a[i + 1].clone();
    v[layout.flag_b_next()] = seqs.b[i + 1].clone();
    v[layout.pos()] = Rat::from_int((i + 1) as i64);
    v
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// The RNN spec document: dimension, the three weight matrices, an
/// embedding per symbol, and the accepting predicate over the RNN's own
/// output space.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnSpecFile {
    pub d: usize,
    #[serde(rename = "W")]
    pub w: RatMat,
    #[serde(rename = "V")]
    pub v: RatMat,
    #[serde(rename = "U")]
    pub u: RatMat,
    pub embed: BTreeMap<char, RatVec>,
    pub accept: FinalPred,
}

pub fn parse_rnn_spec(text: &str) -> Result<(RnnEncDec, BTreeMap<char, RatVec>, FinalPred)> {
    let file: RnnSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("rnn file: {e}")))?;
    let rnn = RnnEncDec::new(file.d, file.w, file.v, file.u)?;
    for (c, e) in &file.embed {
        if e.dim() != file.d {
            return Err(Error::dim(format!("embedding of '{c}'"), file.d, e.dim()));
        }
    }
    Ok((rnn, file.embed, file.accept))
}

pub fn serialize_rnn_spec(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    accept: &FinalPred,
) -> String {
    let file = RnnSpecFile {
        d: rnn.dim,
        w: rnn.w.clone(),
        v: rnn.v.clone(),
        u: rnn.u.clone(),
        embed: embed.clone(),
        accept: accept.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("rnn spec serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// Deterministic sampling for the verification suites
// ---------------------------------------------------------------------------

/// Seeded generators for small random networks and inputs, shared by the
/// property and acceptance suites.
pub mod sampling {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Weights drawn from {-1, -1/2, 0, 1/2, 1} scaled by 1/3.
    pub fn random_rnn(seed: u64, max_dim: usize) -> RnnEncDec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..=max_dim);
        let mut mat = || {
            let mut m = RatMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let pick = [-2i64, -1, 0, 1, 2][rng.gen_range(0..5)];
                    m.set(i, j, Rat::ratio(pick, 6));
                }
            }
            m
        };
        let w = mat();
        let v = mat();
        let u = mat();
        RnnEncDec::new(d, w, v, u).expect("square matrices")
    }

    /// Input entries are rationals in [0, 1] with denominator 8.
    pub fn random_input(seed: u64, d: usize, max_len: usize) -> Vec<RatVec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=max_len);
        (0..n)
            .map(|_| {
                RatVec::new(
                    (0..d)
                        .map(|_| Rat::ratio(rng.gen_range(0..=8), 8))
                        .collect(),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::attend;
    use crate::machines::rnn_run;
    use crate::transformer::{run_tenc, run_trans, TransRunner};

    fn small_rnn() -> RnnEncDec {
        sampling::random_rnn(7, 2)
    }

    fn test_embed(d: usize) -> BTreeMap<char, RatVec> {
        let mut m = BTreeMap::new();
        let mut a = RatVec::zeros(d);
        a[0] = Rat::one();
        m.insert('a', a);
        let mut b = RatVec::zeros(d);
        b[d - 1] = Rat::ratio(1, 2);
        m.insert('b', b);
        m
    }

    #[test]
    fn reference_sequences_case_structure() {
        let rnn = sampling::random_rnn(3, 3);
        let d = rnn.dim;
        let xs = sampling::random_input(11, d, 4);
        let n = xs.len();
        let r = n + 5;
        let seqs = reference_sequences(&rnn, &xs, r).unwrap();
        let (hs, _) = rnn_run(&rnn, &xs, 0).unwrap();
        for i in 0..=r {
            if i <= n {
                assert!(seqs.gamma[i].is_zero(), "gamma[{i}]");
                assert_eq!(seqs.a[i], Rat::zero(), "a[{i}]");
                assert_eq!(seqs.c[i], Rat::from_int(i as i64), "c[{i}]");
                assert_eq!(seqs.beta[i], hs[i], "beta[{i}] = h_{i}");
            } else {
                assert_eq!(seqs.a[i], Rat::one(), "a[{i}]");
                assert_eq!(seqs.c[i], Rat::from_int(n as i64), "c[{i}]");
            }
            assert_eq!(seqs.b[i] == Rat::zero(), i == n + 1, "b[{i}]");
        }
        assert_eq!(seqs.gamma[n + 1], seqs.beta[n]);
    }

    #[test]
    fn flag_a_matches_position_difference_identity() {
        let rnn = small_rnn();
        let xs = sampling::random_input(13, rnn.dim, 5);
        let r = xs.len() + 4;
        let seqs = reference_sequences(&rnn, &xs, r).unwrap();
        for i in 1..=r {
            let expect = Rat::one() - (&seqs.c[i] - &seqs.c[i - 1]);
            assert_eq!(seqs.a[i], expect, "i={i}");
        }
    }

    #[test]
    fn gamma_satisfies_gated_identity() {
        // the alternate route: gamma_i = sigma(gamma_{i-1} U) + (1 - b_i) beta_{i-1}
        let rnn = small_rnn();
        let xs = sampling::random_input(17, rnn.dim, 4);
        let r = xs.len() + 6;
        let seqs = reference_sequences(&rnn, &xs, r).unwrap();
        for i in 1..=r {
            let via_gate = rnn
                .u
                .vec_mul(&seqs.gamma[i - 1])
                .unwrap()
                .map(|x| sigma_pl(x))
                .add(&seqs.beta[i - 1].scale(&(Rat::one() - &seqs.b[i])))
                .unwrap();
            assert_eq!(seqs.gamma[i], via_gate, "i={i}");
        }
    }

    #[test]
    fn gate_soundness_unit_interval() {
        let rnn = sampling::random_rnn(23, 4);
        let xs = sampling::random_input(29, rnn.dim, 5);
        let seqs = reference_sequences(&rnn, &xs, xs.len() + 6).unwrap();
        for (b, g) in seqs.beta.iter().zip(&seqs.gamma) {
            assert!(b.iter().all(|x| x.in_unit_interval()));
            assert!(g.iter().all(|x| x.in_unit_interval()));
        }
    }

    #[test]
    fn encoder_moves_position_to_center_slot() {
        let rnn = small_rnn();
        let layout = RnnLayout::new(rnn.dim);
        let rec = compile_rnn(&rnn, &test_embed(rnn.dim), &FinalPred::default()).unwrap();
        let xs = sampling::random_input(31, rnn.dim, 3);
        let lifted = lift_input(&layout, &xs);
        let kv = run_tenc(&lifted, &rec.params).unwrap();
        for (idx, (k, v)) in kv.keys().iter().zip(kv.values()).enumerate() {
            assert_eq!(k, &lifted[idx], "keys are the inputs themselves");
            assert_eq!(v[layout.clamp_c_next()], Rat::from_int((idx + 1) as i64));
            assert_eq!(v[layout.pos()], Rat::zero());
            for j in 0..layout.d {
                assert_eq!(v[layout.input() + j], xs[idx][j]);
            }
        }
    }

    #[test]
    fn cross_attention_returns_clamped_value() {
        let rnn = small_rnn();
        let layout = RnnLayout::new(rnn.dim);
        let rec = compile_rnn(&rnn, &test_embed(rnn.dim), &FinalPred::default()).unwrap();
        let xs = sampling::random_input(37, rnn.dim, 3);
        let n = xs.len();
        let lifted = lift_input(&layout, &xs);
        let kv = run_tenc(&lifted, &rec.params).unwrap();
        let score = ScoreFn::PosDiff {
            pos_slot: layout.pos(),
        };
        for step in 1..=n + 3 {
            let mut q = RatVec::zeros(layout.dim());
            q[layout.pos()] = Rat::from_int(step as i64);
            let got = attend(&q, &kv, &score).unwrap();
            let pick = step.min(n);
            for j in 0..layout.d {
                assert_eq!(got[layout.input() + j], xs[pick - 1][j], "step {step}");
            }
            assert_eq!(got[layout.clamp_c_next()], Rat::from_int(pick as i64));
        }
    }

    #[test]
    fn first_layer_output_matches_reference_layout() {
        let rnn = sampling::random_rnn(41, 2);
        let layout = RnnLayout::new(rnn.dim);
        let rec = compile_rnn(&rnn, &test_embed(rnn.dim), &FinalPred::default()).unwrap();
        let xs = sampling::random_input(43, rnn.dim, 3);
        let r = xs.len() + 3;
        let seqs = reference_sequences(&rnn, &xs, r + 1).unwrap();
        let lifted = lift_input(&layout, &xs);
        let mut runner = TransRunner::new(&rec, &lifted, rec.seed.clone()).unwrap();
        for _ in 0..r {
            runner.step().unwrap();
        }
        for i in 0..r {
            assert_eq!(
                runner.layer_output(0, i).unwrap(),
                &expected_layer1(&layout, &seqs, i),
                "z1 at {i}"
            );
        }
    }

    #[test]
    fn simulation_reproduces_all_blocks_exactly() {
        for seed in [1u64, 2, 3, 4, 5] {
            let rnn = sampling::random_rnn(seed, 3);
            let layout = RnnLayout::new(rnn.dim);
            let rec = compile_rnn(&rnn, &test_embed(rnn.dim), &FinalPred::default()).unwrap();
            let xs = sampling::random_input(seed + 100, rnn.dim, 4);
            let n = xs.len();
            let r = n + 7;
            let seqs = reference_sequences(&rnn, &xs, r).unwrap();
            let lifted = lift_input(&layout, &xs);
            let ys = run_trans(&lifted, &rec.seed, r, &rec).unwrap();
            for (i, y) in ys.iter().enumerate() {
                assert_eq!(
                    y,
                    &expected_output(&layout, &seqs, i + 1),
                    "seed {seed} y_{}",
                    i + 1
                );
            }
            // decoder stream equals the source decoder states
            let (_, gs) = rnn_run(&rnn, &xs, 6).unwrap();
            for (t, g) in gs.iter().enumerate().take((r - n).min(7)) {
                let y = &ys[n + t]; // y_{n+1+t}
                for j in 0..layout.d {
                    assert_eq!(&y[layout.decoder() + j], &g[j], "g_{t}[{j}]");
                }
            }
        }
    }

    #[test]
    fn acceptance_rebases_predicate_on_decoder_block() {
        use crate::transformer::{recognizer_accepts, Decision};
        // a one-dimensional system that saturates to 1 and holds it
        let rnn = RnnEncDec::new(
            1,
            RatMat::identity(1),
            RatMat::identity(1),
            RatMat::identity(1),
        )
        .unwrap();
        let accept = FinalPred::new(vec![CoordConstraint::GreaterThan {
            coord: 0,
            value: Rat::ratio(1, 2),
        }]);
        let mut embed = BTreeMap::new();
        embed.insert('a', RatVec::new(vec![Rat::one()]));
        let rec = compile_rnn(&rnn, &embed, &accept).unwrap();
        // the hidden state saturates at 1, so the decoder stream holds 1
        // from the handoff on
        let n = 3;
        match recognizer_accepts(&"a".repeat(n), &rec, 12).unwrap() {
            Decision::Accept { step } => assert_eq!(step, n + 1),
            Decision::Undecided => panic!("expected acceptance"),
        }
        // before the input is exhausted the flag blocks acceptance
        let seqs =
            reference_sequences(&rnn, &vec![RatVec::new(vec![Rat::one()]); n], n + 2).unwrap();
        assert_eq!(seqs.a[n], Rat::zero());
    }

    #[test]
    fn rnn_spec_round_trip() {
        let rnn = small_rnn();
        let embed = test_embed(rnn.dim);
        let accept = FinalPred::new(vec![CoordConstraint::GreaterThan {
            coord: 0,
            value: Rat::zero(),
        }]);
        let text = serialize_rnn_spec(&rnn, &embed, &accept);
        let (rnn2, embed2, accept2) = parse_rnn_spec(&text).unwrap();
        assert_eq!(serialize_rnn_spec(&rnn2, &embed2, &accept2), text);
    }
}
