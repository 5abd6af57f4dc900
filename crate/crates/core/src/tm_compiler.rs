//! Compiles a normalized Turing machine into a recognizer whose transformer
//! simulates it exactly: one encoder layer, three decoder layers, and a
//! model dimension of 2|Q| + 4|Σ| + 11.
//!
//! Output vector contract: the t-th output carries the machine state and the
//! symbol under the head at time t as one-hot blocks, plus the previous head
//! move; everything else is zero. The three decoder layers respectively
//! apply the transition function, recover the head position as averaged
//! move fractions, and fetch the symbol most recently written to the next
//! head cell.

use std::collections::BTreeMap;

use crate::attention::ScoreFn;
use crate::error::{Error, Result};
use crate::linalg::{Activation, AffineMap, FeedForward, FfnStage, Rat, RatMat, RatVec};
use crate::machines::{Move, TmTrace, TuringMachine};
use crate::transformer::{
    CoordConstraint, DecLayerParams, EncLayerParams, FinalPred, PosEnc, Recognizer, SlotRange,
    TransformerParams,
};

/// Named slot ranges of the simulation vectors. Four groups tile the
/// dimension d = 2|Q| + 4|Σ| + 11:
///
/// 1. current state, current symbol, previous move;
/// 2. next state, written symbol, current move, previous move again, and
///    the two head-position fractions;
/// 3. the clamped input symbol and position, and the last write at the
///    next head cell with its time;
/// 4. the positional quadruple (1, i, 1/i, 1/i^2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TmLayout {
    pub n_states: usize,
    pub n_syms: usize,
}

impl TmLayout {
    pub fn new(tm: &TuringMachine) -> Self {
        TmLayout {
            n_states: tm.n_states(),
            n_syms: tm.n_syms(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_states + 4 * self.n_syms + 11
    }

    // group 1
    pub fn q1(&self) -> usize {
        0
    }
    pub fn s1(&self) -> usize {
        self.n_states
    }
    /// m^(i-1)
    pub fn m_prev(&self) -> usize {
        self.n_states + self.n_syms
    }
    // group 2
    pub fn q2(&self) -> usize {
        self.m_prev() + 1
    }
    pub fn s2(&self) -> usize {
        self.q2() + self.n_states
    }
    /// m^(i)
    pub fn m_cur(&self) -> usize {
        self.s2() + self.n_syms
    }
    /// m^(i-1), second copy
    pub fn m_prev2(&self) -> usize {
        self.m_cur() + 1
    }
    /// c^(i+1)/(i+1)
    pub fn c_next_frac(&self) -> usize {
        self.m_prev2() + 1
    }
    /// c^(i)/(i+1)
    pub fn c_frac(&self) -> usize {
        self.c_next_frac() + 1
    }
    // group 3
    /// clamped input symbol at the next position
    pub fn alpha(&self) -> usize {
        self.c_frac() + 1
    }
    /// clamped next position
    pub fn beta(&self) -> usize {
        self.alpha() + self.n_syms
    }
    /// symbol written at the last visit of the next head cell
    pub fn last_write(&self) -> usize {
        self.beta() + 1
    }
    /// time of that last visit
    pub fn last_visit(&self) -> usize {
        self.last_write() + self.n_syms
    }
    // group 4
    pub fn one(&self) -> usize {
        self.last_visit() + 1
    }
    pub fn pos(&self) -> usize {
        self.one() + 1
    }
    pub fn inv_pos(&self) -> usize {
        self.pos() + 1
    }
    pub fn inv_pos_sq(&self) -> usize {
        self.inv_pos() + 1
    }

    /// Slot table for layout dumps and trace printing.
    pub fn slot_table(&self) -> Vec<SlotRange> {
        let named = [
            ("q1", self.q1(), self.n_states),
            ("s1", self.s1(), self.n_syms),
            ("m_prev", self.m_prev(), 1),
            ("q2", self.q2(), self.n_states),
            ("s2", self.s2(), self.n_syms),
            ("m_cur", self.m_cur(), 1),
            ("m_prev2", self.m_prev2(), 1),
            ("c_next_frac", self.c_next_frac(), 1),
            ("c_frac", self.c_frac(), 1),
            ("alpha", self.alpha(), self.n_syms),
            ("beta", self.beta(), 1),
            ("last_write", self.last_write(), self.n_syms),
            ("last_visit", self.last_visit(), 1),
            ("one", self.one(), 1),
            ("pos", self.pos(), 1),
            ("inv_pos", self.inv_pos(), 1),
            ("inv_pos_sq", self.inv_pos_sq(), 1),
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

/// One-hot enumerations: symbols and states in declared list order, pairs
/// and (state, symbol, move) triples built from them.
#[derive(Debug, Clone, Copy)]
pub struct OneHotCodec {
    pub n_states: usize,
    pub n_syms: usize,
}

impl OneHotCodec {
    pub fn new(tm: &TuringMachine) -> Self {
        OneHotCodec {
            n_states: tm.n_states(),
            n_syms: tm.n_syms(),
        }
    }

    pub fn pairs(&self) -> usize {
        self.n_states * self.n_syms
    }

    /// Pair code: blocks of |Q| consecutive codes per symbol.
    pub fn pair(&self, q: usize, s: usize) -> usize {
        s * self.n_states + q
    }

    /// Triple code: left-moves first, then right-moves.
    pub fn triple(&self, q: usize, s: usize, m: Move) -> usize {
        match m {
            Move::L => self.pair(q, s),
            Move::R => self.pairs() + self.pair(q, s),
        }
    }
}

fn one_hot(dim: usize, hot: usize) -> RatVec {
    let mut v = RatVec::zeros(dim);
    v[hot] = Rat::one();
    v
}

fn stage(matrix: RatMat, bias: RatVec, act: Activation) -> FfnStage {
    FfnStage::new(AffineMap::new(matrix, bias).expect("stage dims"), act)
}

fn linear_stage(matrix: RatMat, act: Activation) -> FfnStage {
    let bias = RatVec::zeros(matrix.cols());
    stage(matrix, bias, act)
}

/// Embedding (input symbol one-hot in group 3) and the positional quadruple
/// in group 4.
pub fn build_tm_embedding(tm: &TuringMachine) -> (BTreeMap<char, RatVec>, PosEnc) {
    let layout = TmLayout::new(tm);
    let mut embed = BTreeMap::new();
    for (s, &c) in tm.alphabet().iter().enumerate() {
        embed.insert(c, one_hot(layout.dim(), layout.alpha() + s));
    }
    (embed, PosEnc::IndexQuad { offset: layout.one() })
}

/// Identity encoder layer plus the final key/value maps: keys carry
/// (i, -1) in group 4, values carry the input one-hot and its position in
/// group 3. Queries of the form (..., 1, j, ...) then attend to position
/// min(j, n).
pub fn build_tm_encoder(tm: &TuringMachine) -> (EncLayerParams, FeedForward, FeedForward) {
    let layout = TmLayout::new(tm);
    let d = layout.dim();

    let mut k = RatMat::zeros(d, d);
    k.set(layout.pos(), layout.one(), Rat::one());
    k.set(layout.one(), layout.pos(), -Rat::one());

    let mut v = RatMat::zeros(d, d);
    for s in 0..layout.n_syms {
        v.set(layout.alpha() + s, layout.alpha() + s, Rat::one());
    }
    v.set(layout.pos(), layout.beta(), Rat::one());

    (
        EncLayerParams::identity(d),
        FeedForward::single(AffineMap::new(k, RatVec::zeros(d)).unwrap(), Activation::Identity),
        FeedForward::single(AffineMap::new(v, RatVec::zeros(d)).unwrap(), Activation::Identity),
    )
}

/// The transition network: a one-nonlinearity feed-forward map that reads
/// the (state, symbol) one-hots, routes them through a pair encoding, the
/// transition table and a triple decoding, and emits the successor data in
/// group 2 while negating group 1 (so the residual clears it). Stages:
///
/// 1. project to [state, symbol, shifted move, pair score] and clamp: the
///    pair score has a single 1 at the active pair and non-positive values
///    elsewhere;
/// 2. look the pair up in the transition table (one-hot triple);
/// 3. decode the triple back to [next state, written symbol, move];
/// 4. place everything and negate the group-1 echoes.
pub fn build_transition_ffn(tm: &TuringMachine) -> Result<FeedForward> {
    let layout = TmLayout::new(tm);
    let codec = OneHotCodec::new(tm);
    let d = layout.dim();
    let nq = codec.n_states;
    let ns = codec.n_syms;
    let head = nq + ns + 1; // [state one-hot, symbol one-hot, move scalar]

    for q in 0..nq {
        if tm.is_accepting(q) {
            continue;
        }
        for s in 0..ns {
            if tm.step(q, s).is_none() {
                return Err(Error::invalid(
                    "machine",
                    "transition function not total on non-accepting states",
                ));
            }
        }
    }

    // stage 1: d -> head + |pairs|, sigma
    let mid1 = head + codec.pairs();
    let mut m1 = RatMat::zeros(d, mid1);
    let mut b1 = RatVec::zeros(mid1);
    for q in 0..nq {
        m1.set(layout.q1() + q, q, Rat::one());
    }
    for s in 0..ns {
        m1.set(layout.s1() + s, nq + s, Rat::one());
    }
    m1.set(layout.m_prev(), nq + ns, Rat::ratio(1, 2));
    b1[nq + ns] = Rat::ratio(1, 2);
    for s in 0..ns {
        for q in 0..nq {
            let col = head + codec.pair(q, s);
            m1.set(layout.q1() + q, col, Rat::one());
            m1.set(layout.s1() + s, col, Rat::one());
            b1[col] = Rat::from_int(-1);
        }
    }

    // stage 2: pair one-hot -> transition triple one-hot
    let mid2 = head + 2 * codec.pairs();
    let mut m2 = RatMat::zeros(mid1, mid2);
    let mut b2 = RatVec::zeros(mid2);
    for i in 0..nq + ns {
        m2.set(i, i, Rat::one());
    }
    m2.set(nq + ns, nq + ns, Rat::from_int(2));
    b2[nq + ns] = Rat::from_int(-1);
    for q in 0..nq {
        if tm.is_accepting(q) {
            continue;
        }
        for s in 0..ns {
            let (p, v, mv) = tm.step(q, s).expect("total");
            m2.set(head + codec.pair(q, s), head + codec.triple(p, v, mv), Rat::one());
        }
    }

    // stage 3: triple one-hot -> [next state, written symbol, move]
    let mid3 = 2 * head;
    let mut m3 = RatMat::zeros(mid2, mid3);
    for i in 0..head {
        m3.set(i, i, Rat::one());
    }
    for q in 0..nq {
        for s in 0..ns {
            for mv in [Move::L, Move::R] {
                let row = head + codec.triple(q, s, mv);
                m3.set(row, head + q, Rat::one());
                m3.set(row, head + nq + s, Rat::one());
                m3.set(row, head + nq + ns, mv.as_rat());
            }
        }
    }

    // stage 4: reorder into the full layout, negating the group-1 echoes
    let mut m4 = RatMat::zeros(mid3, d);
    for q in 0..nq {
        m4.set(q, layout.q1() + q, -Rat::one());
        m4.set(head + q, layout.q2() + q, Rat::one());
    }
    for s in 0..ns {
        m4.set(nq + s, layout.s1() + s, -Rat::one());
        m4.set(head + nq + s, layout.s2() + s, Rat::one());
    }
    m4.set(nq + ns, layout.m_prev(), -Rat::one());
    m4.set(nq + ns, layout.m_prev2(), Rat::one());
    m4.set(head + nq + ns, layout.m_cur(), Rat::one());

    Ok(FeedForward::from_stages(vec![
        stage(m1, b1, Activation::Sigma),
        stage(m2, b2, Activation::Identity),
        linear_stage(m3, Activation::Identity),
        linear_stage(m4, Activation::Identity),
    ]))
}

/// Output map shared by the second and third decoder layers: the forced
/// cross attention re-deposits the group-3 input copy on top of the one the
/// residual already carries, so halving those slots negatively makes the
/// layer output equal its post-self-attention input exactly.
fn cancel_cross_attention(layout: &TmLayout) -> FeedForward {
    let d = layout.dim();
    let mut m = RatMat::zeros(d, d);
    let minus_half = Rat::ratio(-1, 2);
    for s in 0..layout.n_syms {
        m.set(layout.alpha() + s, layout.alpha() + s, minus_half.clone());
    }
    m.set(layout.beta(), layout.beta(), minus_half);
    FeedForward::single(AffineMap::new(m, RatVec::zeros(d)).unwrap(), Activation::Identity)
}

/// Second decoder layer: zero queries and keys make every self-attention
/// score tie, so the values average; projecting the two move slots turns
/// that average into the head-position fractions c^(i+1)/(i+1) and
/// c^(i)/(i+1).
pub fn build_head_position_layer(tm: &TuringMachine) -> DecLayerParams {
    let layout = TmLayout::new(tm);
    let d = layout.dim();
    let mut v = RatMat::zeros(d, d);
    v.set(layout.m_cur(), layout.c_next_frac(), Rat::one());
    v.set(layout.m_prev2(), layout.c_frac(), Rat::one());
    DecLayerParams {
        self_q: FeedForward::zero_map(d),
        self_k: FeedForward::zero_map(d),
        self_v: FeedForward::single(
            AffineMap::new(v, RatVec::zeros(d)).unwrap(),
            Activation::Identity,
        ),
        o: cancel_cross_attention(&layout),
        self_score: ScoreFn::MultPhi,
        cross_score: ScoreFn::MultPhi,
    }
}

/// Third decoder layer: self attention whose query/key dot product is
/// minimized in absolute value exactly at the last previous visit of the
/// next head cell; the value map carries that visit's written symbol and
/// time.
pub fn build_last_write_layer(tm: &TuringMachine) -> DecLayerParams {
    let layout = TmLayout::new(tm);
    let d = layout.dim();

    let mut q = RatMat::zeros(d, d);
    q.set(layout.c_next_frac(), layout.pos(), Rat::one());
    q.set(layout.inv_pos(), layout.inv_pos(), Rat::one());
    q.set(layout.inv_pos_sq(), layout.inv_pos_sq(), Rat::ratio(1, 3));

    let mut k = RatMat::zeros(d, d);
    k.set(layout.inv_pos(), layout.pos(), Rat::one());
    k.set(layout.c_frac(), layout.inv_pos(), -Rat::one());
    k.set(layout.inv_pos_sq(), layout.inv_pos_sq(), Rat::one());

    let mut v = RatMat::zeros(d, d);
    for s in 0..layout.n_syms {
        v.set(layout.s2() + s, layout.last_write() + s, Rat::one());
    }
    v.set(layout.pos(), layout.last_visit(), Rat::one());
    v.set(layout.one(), layout.last_visit(), -Rat::one());

    DecLayerParams {
        self_q: FeedForward::single(
            AffineMap::new(q, RatVec::zeros(d)).unwrap(),
            Activation::Identity,
        ),
        self_k: FeedForward::single(
            AffineMap::new(k, RatVec::zeros(d)).unwrap(),
            Activation::Identity,
        ),
        self_v: FeedForward::single(
            AffineMap::new(v, RatVec::zeros(d)).unwrap(),
            Activation::Identity,
        ),
        o: cancel_cross_attention(&layout),
        self_score: ScoreFn::MultPhi,
        cross_score: ScoreFn::MultPhi,
    }
}

/// Two-stage selector: f([x ‖ y ‖ z ‖ b]) is [x ‖ y] when b = 0 and
/// [x ‖ z] when b = 1, for binary x (length m), y, z (length n each).
pub fn build_if_gadget(m: usize, n: usize) -> FeedForward {
    assert!(m >= 1 && n >= 1, "selector needs nonempty blocks");
    let in_dim = m + 2 * n + 1;
    let mid = m + 2 * n;
    let mut m1 = RatMat::zeros(in_dim, mid);
    let mut b1 = RatVec::zeros(mid);
    for i in 0..m {
        m1.set(i, i, Rat::one());
    }
    for i in 0..n {
        m1.set(m + i, m + i, Rat::one());
        m1.set(m + 2 * n, m + i, Rat::from_int(-1));
        m1.set(m + n + i, m + n + i, Rat::one());
        m1.set(m + 2 * n, m + n + i, Rat::one());
        b1[m + n + i] = Rat::from_int(-1);
    }
    let mut m2 = RatMat::zeros(mid, m + n);
    for i in 0..m {
        m2.set(i, i, Rat::one());
    }
    for i in 0..n {
        m2.set(m + i, m + i, Rat::one());
        m2.set(m + n + i, m + i, Rat::one());
    }
    FeedForward::from_stages(vec![
        stage(m1, b1, Activation::Sigma),
        linear_stage(m2, Activation::Identity),
    ])
}

/// The final output transformation: recodes the move as a two-hot flag,
/// computes the two selector bits (input exhausted; next cell never
/// visited), chains two selectors to pick the symbol now under the head
/// (input symbol / blank / last written), and reassembles the output
/// layout.
pub fn build_output_f(tm: &TuringMachine) -> FeedForward {
    let layout = TmLayout::new(tm);
    let codec = OneHotCodec::new(tm);
    let d = layout.dim();
    let nq = codec.n_states;
    let ns = codec.n_syms;

    // stage A: d -> [state, move two-hot, input symbol, b1, last write, blank, b2]
    let a_dim = nq + 2 + ns + 1 + ns + ns + 1;
    let mut ma = RatMat::zeros(d, a_dim);
    let mut ba = RatVec::zeros(a_dim);
    for qi in 0..nq {
        ma.set(layout.q2() + qi, qi, Rat::one());
    }
    ma.set(layout.m_cur(), nq, Rat::ratio(1, 2));
    ba[nq] = Rat::ratio(1, 2);
    ma.set(layout.m_cur(), nq + 1, Rat::ratio(-1, 2));
    ba[nq + 1] = Rat::ratio(1, 2);
    for s in 0..ns {
        ma.set(layout.alpha() + s, nq + 2 + s, Rat::one());
    }
    let b1_col = nq + 2 + ns;
    ma.set(layout.pos(), b1_col, Rat::one());
    ma.set(layout.beta(), b1_col, Rat::from_int(-1));
    for s in 0..ns {
        ma.set(layout.last_write() + s, b1_col + 1 + s, Rat::one());
    }
    ba[b1_col + 1 + ns + tm.blank()] = Rat::one();
    let b2_col = a_dim - 1;
    ma.set(layout.last_visit(), b2_col, Rat::one());
    ma.set(layout.pos(), b2_col, Rat::from_int(-1));
    ba[b2_col] = Rat::from_int(2);

    // first selector consumes b2: keeps the last write when 0, blank when 1
    let sel_first = build_if_gadget(nq + 2 + ns + 1, ns);

    // permutation moving b1 behind the selected block for the next selector
    let p_dim = nq + 2 + ns + 1 + ns;
    let mut mp = RatMat::zeros(p_dim, p_dim);
    for i in 0..nq + 2 + ns {
        mp.set(i, i, Rat::one());
    }
    for s in 0..ns {
        mp.set(nq + 2 + ns + 1 + s, nq + 2 + ns + s, Rat::one());
    }
    mp.set(nq + 2 + ns, p_dim - 1, Rat::one());

    // second selector consumes b1: input symbol when 0, tape lookup when 1
    let sel_second = build_if_gadget(nq + 2, ns);

    // reassembly: state to group 1, selected symbol next, move decoded back
    let r_in = nq + 2 + ns;
    let mut mr = RatMat::zeros(r_in, d);
    for qi in 0..nq {
        mr.set(qi, layout.q1() + qi, Rat::one());
    }
    for s in 0..ns {
        mr.set(nq + 2 + s, layout.s1() + s, Rat::one());
    }
    mr.set(nq, layout.m_prev(), Rat::one());
    mr.set(nq + 1, layout.m_prev(), Rat::from_int(-1));

    FeedForward::from_stages(vec![stage(ma, ba, Activation::Sigma)])
        .chain(sel_first)
        .chain(FeedForward::from_stages(vec![linear_stage(
            mp,
            Activation::Identity,
        )]))
        .chain(sel_second)
        .chain(FeedForward::from_stages(vec![linear_stage(
            mr,
            Activation::Identity,
        )]))
}

/// Assembles the full recognizer for a normalized machine.
pub fn compile_tm(tm: &TuringMachine) -> Result<Recognizer> {
    let layout = TmLayout::new(tm);
    let d = layout.dim();
    let (embed, posenc) = build_tm_embedding(tm);
    let (enc_layer, final_k, final_v) = build_tm_encoder(tm);

    let layer1 = DecLayerParams {
        self_q: FeedForward::zero_map(d),
        self_k: FeedForward::zero_map(d),
        self_v: FeedForward::zero_map(d),
        o: build_transition_ffn(tm)?,
        self_score: ScoreFn::MultPhi,
        cross_score: ScoreFn::MultPhi,
    };

    let mut seed = RatVec::zeros(d);
    seed[layout.q1() + tm.init()] = Rat::one();
    seed[layout.s1() + tm.blank()] = Rat::one();

    let final_pred = FinalPred::new(vec![CoordConstraint::OneHotIn {
        start: layout.q1(),
        len: layout.n_states,
        allowed: tm.accepting_states(),
    }]);

    let rec = Recognizer {
        alphabet: tm.input_alphabet(),
        embed,
        posenc,
        seed,
        final_pred,
        params: TransformerParams {
            dim: d,
            enc_layers: vec![enc_layer],
            final_k,
            final_v,
            dec_layers: vec![
                layer1,
                build_head_position_layer(tm),
                build_last_write_layer(tm),
            ],
            final_f: build_output_f(tm),
        },
        layout: Some(layout.slot_table()),
    };
    rec.validate()?;
    Ok(rec)
}

// ---------------------------------------------------------------------------
// Trace-derived expectation vectors
// ---------------------------------------------------------------------------

fn clamped_position(trace: &TmTrace, j: usize) -> usize {
    j.min(trace.n()).max(1)
}

/// Expected network output at time t: state and read-symbol one-hots plus
/// the previous move, everything else zero. Requires t within the trace.
pub fn trace_output_vector(layout: &TmLayout, trace: &TmTrace, t: usize) -> RatVec {
    let mut v = RatVec::zeros(layout.dim());
    v[layout.q1() + trace.state(t)] = Rat::one();
    v[layout.s1() + trace.read_sym(t)] = Rat::one();
    v[layout.m_prev()] = trace.head_move_prev(t);
    v
}

fn group4(layout: &TmLayout, v: &mut RatVec, i: usize) {
    let p = (i + 1) as i64;
    v[layout.one()] = Rat::one();
    v[layout.pos()] = Rat::from_int(p);
    v[layout.inv_pos()] = Rat::ratio(1, p);
    v[layout.inv_pos_sq()] = Rat::ratio(1, p * p);
}

fn alpha_beta(layout: &TmLayout, trace: &TmTrace, v: &mut RatVec, i: usize) {
    if trace.n() == 0 {
        return;
    }
    let pos = clamped_position(trace, i + 1);
    v[layout.alpha() + trace.input()[pos - 1]] = Rat::one();
    v[layout.beta()] = Rat::from_int(pos as i64);
}

/// Expected first-layer output at index i (needs transition i in the
/// trace): successor data in group 2, clamped input in group 3, position
/// quadruple in group 4.
pub fn trace_layer1_vector(layout: &TmLayout, trace: &TmTrace, i: usize) -> RatVec {
    let mut v = RatVec::zeros(layout.dim());
    v[layout.q2() + trace.state(i + 1)] = Rat::one();
    v[layout.s2() + trace.written(i)] = Rat::one();
    v[layout.m_cur()] = trace.head_move(i).as_rat();
    v[layout.m_prev2()] = trace.head_move_prev(i);
    alpha_beta(layout, trace, &mut v, i);
    group4(layout, &mut v, i);
    v
}

/// Expected second-layer output: the first-layer vector plus the two
/// head-position fractions.
pub fn trace_layer2_vector(layout: &TmLayout, trace: &TmTrace, i: usize) -> RatVec {
    let mut v = trace_layer1_vector(layout, trace, i);
    let denom = (i + 1) as i64;
    v[layout.c_next_frac()] = Rat::ratio(1, denom) * Rat::from_int(trace.head_cell(i + 1));
    v[layout.c_frac()] = Rat::ratio(1, denom) * Rat::from_int(trace.head_cell(i));
    v
}

/// Expected third-layer output: the second-layer vector plus the last-write
/// lookup for the next head cell.
pub fn trace_layer3_vector(layout: &TmLayout, trace: &TmTrace, i: usize) -> RatVec {
    let mut v = trace_layer2_vector(layout, trace, i);
    let ell = trace.last_visit(i + 1);
    v[layout.last_write() + trace.written(ell)] = Rat::one();
    v[layout.last_visit()] = Rat::from_int(ell as i64);
    v
}

/// The cross-attention input of the first decoder layer at index i,
/// reconstructed from the trace: groups 1 and 3-4 populated, group 2 empty.
pub fn trace_attended_input(layout: &TmLayout, trace: &TmTrace, i: usize) -> RatVec {
    let mut v = RatVec::zeros(layout.dim());
    v[layout.q1() + trace.state(i)] = Rat::one();
    v[layout.s1() + trace.read_sym(i)] = Rat::one();
    v[layout.m_prev()] = trace.head_move_prev(i);
    alpha_beta(layout, trace, &mut v, i);
    group4(layout, &mut v, i);
    v
}

/// Range check for the single nonlinearity of the transition network: on a
/// trace-derived input the clamped coordinates must already be a one-hot
/// with non-positive slack, and the passthrough coordinates must lie in
/// [0, 1].
pub fn check_transition_sigma_ranges(
    tm: &TuringMachine,
    o1: &FeedForward,
    input: &RatVec,
) -> Result<()> {
    let codec = OneHotCodec::new(tm);
    let head = codec.n_states + codec.n_syms + 1;
    let pre = o1.stages[0].map.apply(input)?;
    for i in 0..head {
        if !pre[i].in_unit_interval() {
            return Err(Error::invalid(
                "transition network",
                format!("passthrough coordinate {} outside [0,1]: {}", i + 1, pre[i]),
            ));
        }
    }
    let mut hot = 0usize;
    for i in head..pre.dim() {
        if pre[i].is_one() {
            hot += 1;
        } else if !(pre[i].is_zero() || pre[i].is_negative()) {
            return Err(Error::invalid(
                "transition network",
                format!("pair score {} not clamped: {}", i - head + 1, pre[i]),
            ));
        }
    }
    if hot != 1 {
        return Err(Error::invalid(
            "transition network",
            format!("expected exactly one active pair, found {hot}"),
        ));
    }
    Ok(())
}
