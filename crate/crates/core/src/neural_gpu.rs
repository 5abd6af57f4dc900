//! Gated convolutional recurrent networks over exact rationals:
//! tridimensional tensors, kernel-bank convolution with zero or circular
//! padding, the gated update, uniform biases, a compiler from the
//! restricted RNN encoder-decoder, and the periodicity analyzer for
//! circular convolutions.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{Activation, Rat, RatMat, RatVec};
use crate::machines::RnnEncDec;
use crate::transformer::SlotRange;

/// Dense h × w × d tensor of rationals; the (i, j) cell is a row vector of
/// length d. Indices are 0-based in code, 1-based in documentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor3 {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<Rat>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, d: usize) -> Self {
        Tensor3 {
            h,
            w,
            d,
            data: vec![Rat::zero(); h * w * d],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &Rat {
        &self.data[(i * self.w + j) * self.d + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: Rat) {
        self.data[(i * self.w + j) * self.d + k] = value;
    }

    /// The cell (i, j) as a vector copy.
    pub fn cell(&self, i: usize, j: usize) -> RatVec {
        let base = (i * self.w + j) * self.d;
        RatVec::new(self.data[base..base + self.d].to_vec())
    }

    pub fn set_cell(&mut self, i: usize, j: usize, v: &RatVec) {
        assert_eq!(v.dim(), self.d);
        let base = (i * self.w + j) * self.d;
        for k in 0..self.d {
            self.data[base + k] = v[k].clone();
        }
    }

    /// Whole row i (all columns) equality helper.
    pub fn rows_equal(&self, i: usize, other: &Tensor3, oi: usize) -> bool {
        (0..self.w).all(|j| (0..self.d).all(|k| self.get(i, j, k) == other.get(oi, j, k)))
    }

    fn map(&self, f: impl Fn(&Rat) -> Rat) -> Tensor3 {
        Tensor3 {
            h: self.h,
            w: self.w,
            d: self.d,
            data: self.data.iter().map(f).collect(),
        }
    }

    fn zip(&self, other: &Tensor3, f: impl Fn(&Rat, &Rat) -> Rat) -> Tensor3 {
        debug_assert_eq!((self.h, self.w, self.d), (other.h, other.w, other.d));
        Tensor3 {
            h: self.h,
            w: self.w,
            d: self.d,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor3) -> Tensor3 {
        self.zip(other, |a, b| {
            if a.is_zero() || b.is_zero() {
                Rat::zero()
            } else {
                a * b
            }
        })
    }
}

/// 4-D convolution weights of shape (kH, kW, d_in, d_out): scalar products
/// in a plain 2-D convolution become vector-matrix products.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelBank {
    kh: usize,
    kw: usize,
    mats: Vec<RatMat>, // u-major, then v
}

impl KernelBank {
    pub fn zeros(kh: usize, kw: usize, d_in: usize, d_out: usize) -> Self {
        KernelBank {
            kh,
            kw,
            mats: vec![RatMat::zeros(d_in, d_out); kh * kw],
        }
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn d_in(&self) -> usize {
        self.mats[0].rows()
    }

    pub fn d_out(&self) -> usize {
        self.mats[0].cols()
    }

    pub fn mat(&self, u: usize, v: usize) -> &RatMat {
        &self.mats[u * self.kw + v]
    }

    pub fn mat_mut(&mut self, u: usize, v: usize) -> &mut RatMat {
        &mut self.mats[u * self.kw + v]
    }
}

impl Serialize for KernelBank {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let nested: Vec<Vec<&RatMat>> = (0..self.kh)
            .map(|u| (0..self.kw).map(|v| self.mat(u, v)).collect())
            .collect();
        nested.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelBank {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let nested = Vec::<Vec<RatMat>>::deserialize(deserializer)?;
        let kh = nested.len();
        let kw = nested.first().map_or(0, Vec::len);
        if kh == 0 || kw == 0 {
            return Err(D::Error::custom("empty kernel bank"));
        }
        let mut mats = Vec::with_capacity(kh * kw);
        for row in &nested {
            if row.len() != kw {
                return Err(D::Error::custom("ragged kernel bank"));
            }
            for m in row {
                if m.rows() != nested[0][0].rows() || m.cols() != nested[0][0].cols() {
                    return Err(D::Error::custom("kernel matrices differ in shape"));
                }
                mats.push(m.clone());
            }
        }
        Ok(KernelBank { kh, kw, mats })
    }
}

/// Boundary handling for the convolution: missing cells read as zero
/// vectors, or rows wrap modulo the height (columns always zero-pad).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Zero,
    Circular,
}

/// Kernel-bank convolution: output cell (i, j) sums the neighbor cells
/// weighted by their kernel matrices, with neighbor offsets centered at
/// floor(k/2) + 1 in 1-based terms.
pub fn conv3(kernel: &KernelBank, s: &Tensor3, padding: Padding) -> Result<Tensor3> {
    if kernel.d_in() != s.d() {
        return Err(Error::dim("convolution depth", s.d(), kernel.d_in()));
    }
    let (h, w) = (s.h(), s.w());
    let mut out = Tensor3::zeros(h, w, kernel.d_out());
    let dy = (kernel.kh() / 2) as i64;
    let dx = (kernel.kw() / 2) as i64;
    for i in 0..h as i64 {
        for j in 0..w as i64 {
            let mut acc = RatVec::zeros(kernel.d_out());
            for u in 0..kernel.kh() as i64 {
                let mut si = i + u - dy;
                match padding {
                    Padding::Zero => {
                        if si < 0 || si >= h as i64 {
                            continue;
                        }
                    }
                    Padding::Circular => {
                        si = si.rem_euclid(h as i64);
                    }
                }
                for v in 0..kernel.kw() as i64 {
                    let sj = j + v - dx;
                    if sj < 0 || sj >= w as i64 {
                        continue;
                    }
                    let cell = s.cell(si as usize, sj as usize);
                    if cell.is_zero() {
                        continue;
                    }
                    let m = kernel.mat(u as usize, v as usize);
                    acc = acc.add(&m.vec_mul(&cell)?)?;
                }
            }
            out.set_cell(i as usize, j as usize, &acc);
        }
    }
    Ok(out)
}

/// Full parameter set: three kernel banks with uniform bias row matrices
/// (the full bias tensor repeats one w × d matrix across rows), pointwise
/// activations, and the padding mode. Update and reset activations must
/// map into [0, 1] for the gating contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgpuParams {
    pub kernel_update: KernelBank,
    pub kernel_reset: KernelBank,
    pub kernel_candidate: KernelBank,
    pub bias_update: RatMat,
    pub bias_reset: RatMat,
    pub bias_candidate: RatMat,
    pub act_update: Activation,
    pub act_reset: Activation,
    pub act_candidate: Activation,
    pub padding: Padding,
}

impl NgpuParams {
    pub fn width(&self) -> usize {
        self.bias_update.rows()
    }

    pub fn depth(&self) -> usize {
        self.bias_update.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, d) = (self.width(), self.depth());
        for (name, b) in [
            ("bias_update", &self.bias_update),
            ("bias_reset", &self.bias_reset),
            ("bias_candidate", &self.bias_candidate),
        ] {
            if b.rows() != w || b.cols() != d {
                return Err(Error::invalid("network", format!("{name} shape differs")));
            }
        }
        for (name, k) in [
            ("kernel_update", &self.kernel_update),
            ("kernel_reset", &self.kernel_reset),
            ("kernel_candidate", &self.kernel_candidate),
        ] {
            if k.d_in() != d || k.d_out() != d {
                return Err(Error::invalid("network", format!("{name} depth differs")));
            }
        }
        if !matches!(self.act_update, Activation::Sigma)
            || !matches!(self.act_reset, Activation::Sigma)
        {
            return Err(Error::invalid(
                "network",
                "update and reset activations must map into [0,1]",
            ));
        }
        Ok(())
    }
}

fn broadcast_bias(sum: &mut Tensor3, bias: &RatMat) {
    for i in 0..sum.h() {
        for j in 0..sum.w() {
            for k in 0..sum.d() {
                let b = bias.get(j, k);
                if !b.is_zero() {
                    let cur = sum.get(i, j, k) + b;
                    sum.set(i, j, k, cur);
                }
            }
        }
    }
}

fn gate(
    kernel: &KernelBank,
    bias: &RatMat,
    act: Activation,
    s: &Tensor3,
    padding: Padding,
) -> Result<Tensor3> {
    let mut pre = conv3(kernel, s, padding)?;
    broadcast_bias(&mut pre, bias);
    Ok(pre.map(|x| act.apply(x)))
}

/// One gated update: U and R gates from the previous state, then
/// S' = U ⊙ S + (1 - U) ⊙ f(K_F * (R ⊙ S) + B_F).
pub fn ngpu_step(s: &Tensor3, p: &NgpuParams) -> Result<Tensor3> {
    if s.d() != p.depth() || s.w() != p.width() {
        return Err(Error::dim("state tensor", p.depth(), s.d()));
    }
    let u = gate(&p.kernel_update, &p.bias_update, p.act_update, s, p.padding)?;
    let r = gate(&p.kernel_reset, &p.bias_reset, p.act_reset, s, p.padding)?;
    debug_assert!(
        u.data.iter().chain(r.data.iter()).all(Rat::in_unit_interval),
        "gate values escaped [0,1]"
    );
    let masked = r.hadamard(s);
    let mut cand = conv3(&p.kernel_candidate, &masked, p.padding)?;
    broadcast_bias(&mut cand, &p.bias_candidate);
    let cand = cand.map(|x| p.act_candidate.apply(x));
    let keep = u.hadamard(s);
    let fresh = u.map(|x| Rat::one() - x).hadamard(&cand);
    Ok(keep.zip(&fresh, |a, b| a + b))
}

/// Seq-to-seq reading: the input vectors fill the first column of the
/// state tensor (remaining columns zero), the network iterates r steps, and
/// the output at step t is read from the last cell of the first column.
pub fn ngpu_run(xs: &[RatVec], r: usize, p: &NgpuParams) -> Result<Vec<RatVec>> {
    if xs.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    let n = xs.len();
    let mut s = Tensor3::zeros(n, p.width(), p.depth());
    for (i, x) in xs.iter().enumerate() {
        if x.dim() != p.depth() {
            return Err(Error::dim(
                format!("input vector {}", i + 1),
                p.depth(),
                x.dim(),
            ));
        }
        s.set_cell(i, 0, x);
    }
    let mut out = Vec::with_capacity(r);
    for _ in 0..r {
        s = ngpu_step(&s, p)?;
        out.push(s.cell(n - 1, 0));
    }
    Ok(out)
}

/// Lifts RNN inputs into the simulation depth: [x, 0, 0, 1, 1, 0].
#[derive(Debug, Clone, Copy)]
pub struct NgpuInputLifter {
    pub d: usize,
}

impl NgpuInputLifter {
    pub fn depth(&self) -> usize {
        3 * self.d + 3
    }

    pub fn apply(&self, x: &RatVec) -> Result<RatVec> {
        if x.dim() != self.d {
            return Err(Error::dim("input vector", self.d, x.dim()));
        }
        let mut v = RatVec::zeros(self.depth());
        for j in 0..self.d {
            v[j] = x[j].clone();
        }
        v[3 * self.d] = Rat::one();
        v[3 * self.d + 1] = Rat::one();
        Ok(v)
    }

    pub fn slot_table(&self) -> Vec<SlotRange> {
        let d = self.d;
        [
            ("enc", 0, d),
            ("copy", d, d),
            ("dec", 2 * d, d),
            ("gate1", 3 * d, 1),
            ("gate2", 3 * d + 1, 1),
            ("gate3", 3 * d + 2, 1),
        ]
        .iter()
        .map(|(name, start, len)| SlotRange {
            name: name.to_string(),
            start: *start,
            len: *len,
        })
        .collect()
    }
}

/// Compiles the restricted RNN encoder-decoder into a uniform zero-padding
/// network of depth 3d + 3 with kernel banks of shape (2, 1, 3d+3, 3d+3).
/// The first d components carry the encoder sweep, the next d hand the
/// state across, the next d carry the decoder iterates, and the last three
/// drive the gates.
pub fn compile_rnn_to_ngpu(rnn: &RnnEncDec) -> (NgpuParams, NgpuInputLifter) {
    let d = rnn.dim;
    let depth = 3 * d + 3;
    let g = 3 * d; // first gate slot

    let mut kf = KernelBank::zeros(2, 1, depth, depth);
    {
        // neighbor above: recurrent mix into both leading blocks; gate echo
        let m = kf.mat_mut(0, 0);
        for i in 0..d {
            for j in 0..d {
                let v = rnn.v.get(i, j);
                if !v.is_zero() {
                    m.set(d + i, j, v.clone());
                    m.set(d + i, d + j, v.clone());
                }
            }
        }
        m.set(g, g, Rat::one());
    }
    {
        // same cell: input mix, decoder updates, gate echo
        let m = kf.mat_mut(1, 0);
        for i in 0..d {
            for j in 0..d {
                let w = rnn.w.get(i, j);
                if !w.is_zero() {
                    m.set(i, j, w.clone());
                    m.set(i, d + j, w.clone());
                }
                let u = rnn.u.get(i, j);
                if !u.is_zero() {
                    m.set(d + i, 2 * d + j, u.clone());
                    m.set(2 * d + i, 2 * d + j, u.clone());
                }
            }
        }
        m.set(g, g + 1, Rat::one());
    }

    let mut ku = KernelBank::zeros(2, 1, depth, depth);
    {
        let m = ku.mat_mut(0, 0);
        for j in 0..2 * d {
            m.set(g, j, Rat::one());
        }
        m.set(g, g, Rat::one());
        m.set(g, g + 1, Rat::one());
    }
    {
        let m = ku.mat_mut(1, 0);
        for j in 0..d {
            m.set(g, 2 * d + j, Rat::one());
        }
        m.set(g, g + 2, Rat::one());
    }

    let mut kr = KernelBank::zeros(2, 1, depth, depth);
    {
        let m = kr.mat_mut(1, 0);
        for j in 0..d {
            m.set(g, j, Rat::one());
            m.set(g + 1, d + j, Rat::one());
        }
        m.set(g, g, Rat::one());
        m.set(g + 1, g + 1, Rat::one());
    }

    let mut bias_reset = RatMat::zeros(1, depth);
    for j in 0..d {
        bias_reset.set(0, 2 * d + j, Rat::one());
    }
    bias_reset.set(0, depth - 1, Rat::one());

    let params = NgpuParams {
        kernel_update: ku,
        kernel_reset: kr,
        kernel_candidate: kf,
        bias_update: RatMat::zeros(1, depth),
        bias_reset,
        bias_candidate: RatMat::zeros(1, depth),
        act_update: Activation::Sigma,
        act_reset: Activation::Sigma,
        act_candidate: Activation::Sigma,
        padding: Padding::Zero,
    };
    (params, NgpuInputLifter { d })
}

/// Expected state row i (0-based) at iteration t for the compiled network:
/// rows already swept carry decoder iterates seeded from their hidden
/// state, the sweep frontier carries the hidden state twice, untouched rows
/// still carry their lifted input.
pub fn expected_state_row(
    rnn: &RnnEncDec,
    xs: &[RatVec],
    hs: &[RatVec],
    t: usize,
    i: usize,
) -> Result<RatVec> {
    let d = rnn.dim;
    let depth = 3 * d + 3;
    let pos = i + 1; // 1-based row index
    let mut v = RatVec::zeros(depth);
    if pos < t {
        let iterates = rnn.decoder_iterates(&hs[pos], t - pos)?;
        let a = &iterates[t - pos];
        for j in 0..d {
            v[2 * d + j] = a[j].clone();
        }
    } else if pos == t {
        for j in 0..d {
            v[j] = hs[pos][j].clone();
            v[d + j] = hs[pos][j].clone();
        }
        v[3 * d + 1] = Rat::one();
    } else {
        for j in 0..d {
            v[j] = xs[i][j].clone();
        }
        v[3 * d] = Rat::one();
        v[3 * d + 1] = Rat::one();
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Periodicity analysis for circular convolutions
// ---------------------------------------------------------------------------

/// Outcome of the periodicity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodicityReport {
    /// Every iterate kept the period.
    Preserved { steps: usize },
    /// A stated precondition does not hold; reported, not asserted.
    PreconditionViolation(String),
    /// Some iterate broke the period.
    Broken { step: usize, row: usize },
}

fn is_periodic(s: &Tensor3, period: usize) -> Option<usize> {
    (0..s.h()).find(|&i| !s.rows_equal(i, s, (i + period) % s.h()))
}

/// Runs the network for `steps` iterations checking that every iterate of a
/// period-p input stays period-p. Requires circular padding and p | h.
pub fn check_periodicity(
    p: &NgpuParams,
    s0: &Tensor3,
    period: usize,
    steps: usize,
) -> PeriodicityReport {
    if p.padding != Padding::Circular {
        return PeriodicityReport::PreconditionViolation("padding is not circular".into());
    }
    if period == 0 || s0.h() % period != 0 {
        return PeriodicityReport::PreconditionViolation(format!(
            "period {period} does not divide height {}",
            s0.h()
        ));
    }
    if let Some(row) = is_periodic(s0, period) {
        return PeriodicityReport::PreconditionViolation(format!(
            "input is not period-{period} periodic at row {}",
            row + 1
        ));
    }
    let mut s = s0.clone();
    for step in 1..=steps {
        s = match ngpu_step(&s, p) {
            Ok(next) => next,
            Err(e) => return PeriodicityReport::PreconditionViolation(e.to_string()),
        };
        if let Some(row) = is_periodic(&s, period) {
            return PeriodicityReport::Broken { step, row };
        }
    }
    PeriodicityReport::Preserved { steps }
}

/// Companion check: two period-p inputs with equal leading p rows keep
/// equal leading p rows at every iterate.
pub fn check_prefix_agreement(
    p: &NgpuParams,
    s0: &Tensor3,
    t0: &Tensor3,
    period: usize,
    steps: usize,
) -> PeriodicityReport {
    for (name, tensor) in [("first", s0), ("second", t0)] {
        if period == 0 || tensor.h() % period != 0 {
            return PeriodicityReport::PreconditionViolation(format!(
                "period {period} does not divide the {name} height {}",
                tensor.h()
            ));
        }
        if is_periodic(tensor, period).is_some() {
            return PeriodicityReport::PreconditionViolation(format!(
                "{name} input is not period-{period} periodic"
            ));
        }
    }
    for i in 0..period {
        if !s0.rows_equal(i, t0, i) {
            return PeriodicityReport::PreconditionViolation(format!(
                "leading rows differ at row {}",
                i + 1
            ));
        }
    }
    let mut s = s0.clone();
    let mut t = t0.clone();
    for step in 1..=steps {
        s = match ngpu_step(&s, p) {
            Ok(next) => next,
            Err(e) => return PeriodicityReport::PreconditionViolation(e.to_string()),
        };
        t = match ngpu_step(&t, p) {
            Ok(next) => next,
            Err(e) => return PeriodicityReport::PreconditionViolation(e.to_string()),
        };
        for i in 0..period {
            if !s.rows_equal(i, &t, i) {
                return PeriodicityReport::Broken { step, row: i };
            }
        }
    }
    PeriodicityReport::Preserved { steps }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// Network document: kernels as nested arrays of rationals, padding and
/// activation tags, uniform bias row matrices, optionally the lifted
/// embedding and slot names.
#[derive(Debug, Serialize, Deserialize)]
pub struct NgpuNetFile {
    #[serde(flatten)]
    pub params: NgpuParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<BTreeMap<char, RatVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<SlotRange>>,
}

pub fn parse_ngpu_file(text: &str) -> Result<NgpuNetFile> {
    let file: NgpuNetFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("network file: {e}")))?;
    file.params.validate()?;
    Ok(file)
}

pub fn serialize_ngpu_file(file: &NgpuNetFile) -> String {
    let mut text = serde_json::to_string_pretty(file).expect("network serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// Deterministic sampling for the verification suites
// ---------------------------------------------------------------------------

pub mod sampling {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Random uniform circular network with small rational weights.
    pub fn random_circular_ngpu(seed: u64) -> NgpuParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kh = rng.gen_range(1..=3);
        let kw = rng.gen_range(1..=2);
        let d = rng.gen_range(1..=3);
        let w = rng.gen_range(1..=2);
        let kernel = |rng: &mut ChaCha8Rng| {
            let mut k = KernelBank::zeros(kh, kw, d, d);
            for u in 0..kh {
                for v in 0..kw {
                    for i in 0..d {
                        for j in 0..d {
                            let pick = [-2i64, -1, 0, 0, 1, 2][rng.gen_range(0..6)];
                            k.mat_mut(u, v).set(i, j, Rat::ratio(pick, 4));
                        }
                    }
                }
            }
            k
        };
        let bias = |rng: &mut ChaCha8Rng| {
            let mut b = RatMat::zeros(w, d);
            for i in 0..w {
                for j in 0..d {
                    b.set(i, j, Rat::ratio(rng.gen_range(-2..=2), 4));
                }
            }
            b
        };
        NgpuParams {
            kernel_update: kernel(&mut rng),
            kernel_reset: kernel(&mut rng),
            kernel_candidate: kernel(&mut rng),
            bias_update: bias(&mut rng),
            bias_reset: bias(&mut rng),
            bias_candidate: bias(&mut rng),
            act_update: Activation::Sigma,
            act_reset: Activation::Sigma,
            act_candidate: if rng.gen_bool(0.5) {
                Activation::Sigma
            } else {
                Activation::Relu
            },
            padding: Padding::Circular,
        }
    }

    /// Random tensor built by tiling `period` random rows `reps` times.
    pub fn random_periodic_tensor(
        seed: u64,
        period: usize,
        reps: usize,
        w: usize,
        d: usize,
    ) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Tensor3::zeros(period * reps, w, d);
        for i in 0..period {
            for j in 0..w {
                for k in 0..d {
                    s.set(i, j, k, Rat::ratio(rng.gen_range(-4..=4), 4));
                }
            }
        }
        for i in period..period * reps {
            for j in 0..w {
                let v = s.cell(i % period, j);
                s.set_cell(i, j, &v);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::rnn_run;
    use crate::rnn_compiler::sampling as rnn_sampling;

    fn rv(xs: &[i64]) -> RatVec {
        RatVec::from_ints(xs)
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut k = KernelBank::zeros(1, 1, 2, 2);
        *k.mat_mut(0, 0) = RatMat::identity(2);
        let mut s = Tensor3::zeros(3, 2, 2);
        s.set_cell(0, 0, &rv(&[1, 2]));
        s.set_cell(2, 1, &rv(&[-3, 5]));
        assert_eq!(conv3(&k, &s, Padding::Zero).unwrap(), s);
    }

    #[test]
    fn two_row_kernel_reads_cell_above() {
        // with kernel height 2, the output mixes the cell above (zero-padded)
        // and the cell itself
        let mut k = KernelBank::zeros(2, 1, 1, 1);
        k.mat_mut(0, 0).set(0, 0, Rat::from_int(10));
        k.mat_mut(1, 0).set(0, 0, Rat::one());
        let mut s = Tensor3::zeros(3, 1, 1);
        for i in 0..3 {
            s.set(i, 0, 0, Rat::from_int(i as i64 + 1));
        }
        let out = conv3(&k, &s, Padding::Zero).unwrap();
        assert_eq!(out.get(0, 0, 0), &Rat::from_int(1)); // zero above
        assert_eq!(out.get(1, 0, 0), &Rat::from_int(12));
        assert_eq!(out.get(2, 0, 0), &Rat::from_int(23));
    }

    #[test]
    fn circular_padding_wraps_rows() {
        // brute-force neighbor oracle with explicit wrapping
        let mut k = KernelBank::zeros(3, 1, 1, 1);
        k.mat_mut(0, 0).set(0, 0, Rat::from_int(100));
        k.mat_mut(1, 0).set(0, 0, Rat::from_int(10));
        k.mat_mut(2, 0).set(0, 0, Rat::one());
        let mut s = Tensor3::zeros(3, 1, 1);
        for i in 0..3 {
            s.set(i, 0, 0, Rat::from_int(i as i64 + 1));
        }
        let out = conv3(&k, &s, Padding::Circular).unwrap();
        for i in 0..3i64 {
            let above = s.get((i - 1).rem_euclid(3) as usize, 0, 0);
            let below = s.get(((i + 1) % 3) as usize, 0, 0);
            let expect =
                Rat::from_int(100) * above + Rat::from_int(10) * s.get(i as usize, 0, 0) + below;
            assert_eq!(out.get(i as usize, 0, 0), &expect, "row {i}");
        }
        // row 1 (0-based 0) sees row 3 as its upper neighbor
        assert_eq!(
            out.get(0, 0, 0),
            &(Rat::from_int(100) * s.get(2, 0, 0)
                + Rat::from_int(10) * s.get(0, 0, 0)
                + s.get(1, 0, 0))
        );
    }

    fn trivial_params(d: usize, update_open: bool) -> NgpuParams {
        // update gate identically 1 (bias) keeps the state; identically 0
        // rewrites it with the candidate
        let depth = d;
        let mut bias_update = RatMat::zeros(1, depth);
        if update_open {
            for j in 0..depth {
                bias_update.set(0, j, Rat::from_int(2));
            }
        } else {
            for j in 0..depth {
                bias_update.set(0, j, Rat::from_int(-1));
            }
        }
        let mut bias_reset = RatMat::zeros(1, depth);
        for j in 0..depth {
            bias_reset.set(0, j, Rat::from_int(2));
        }
        let mut kf = KernelBank::zeros(1, 1, depth, depth);
        *kf.mat_mut(0, 0) = RatMat::identity(depth);
        NgpuParams {
            kernel_update: KernelBank::zeros(1, 1, depth, depth),
            kernel_reset: KernelBank::zeros(1, 1, depth, depth),
            kernel_candidate: kf,
            bias_update,
            bias_reset,
            bias_candidate: RatMat::zeros(1, depth),
            act_update: Activation::Sigma,
            act_reset: Activation::Sigma,
            act_candidate: Activation::Sigma,
            padding: Padding::Zero,
        }
    }

    #[test]
    fn open_update_gate_keeps_state() {
        let p = trivial_params(2, true);
        let mut s = Tensor3::zeros(2, 1, 2);
        s.set_cell(0, 0, &rv(&[3, -1]));
        s.set_cell(1, 0, &rv(&[0, 7]));
        assert_eq!(ngpu_step(&s, &p).unwrap(), s);
    }

    #[test]
    fn closed_update_gate_applies_candidate() {
        // U = 0, R = 1, identity candidate kernel: the state clamps
        let p = trivial_params(2, false);
        let mut s = Tensor3::zeros(1, 1, 2);
        s.set_cell(0, 0, &RatVec::new(vec![Rat::ratio(1, 2), Rat::from_int(-3)]));
        let out = ngpu_step(&s, &p).unwrap();
        assert_eq!(
            out.cell(0, 0),
            RatVec::new(vec![Rat::ratio(1, 2), Rat::zero()])
        );
    }

    #[test]
    fn compiled_kernels_have_stated_shape() {
        let rnn = rnn_sampling::random_rnn(5, 2);
        let (p, lifter) = compile_rnn_to_ngpu(&rnn);
        let depth = 3 * rnn.dim + 3;
        assert_eq!(lifter.depth(), depth);
        for k in [&p.kernel_update, &p.kernel_reset, &p.kernel_candidate] {
            assert_eq!((k.kh(), k.kw(), k.d_in(), k.d_out()), (2, 1, depth, depth));
        }
        p.validate().unwrap();
    }

    #[test]
    fn state_invariant_holds_and_outputs_match_decoder() {
        for seed in [1u64, 2, 3, 4, 5, 6] {
            let rnn = rnn_sampling::random_rnn(seed, 3);
            let xs = rnn_sampling::random_input(seed + 50, rnn.dim, 5);
            let n = xs.len();
            let (p, lifter) = compile_rnn_to_ngpu(&rnn);
            let lifted: Vec<RatVec> = xs.iter().map(|x| lifter.apply(x).unwrap()).collect();
            let (hs, gs) = rnn_run(&rnn, &xs, n + 8).unwrap();

            let mut s = Tensor3::zeros(n, 1, lifter.depth());
            for (i, x) in lifted.iter().enumerate() {
                s.set_cell(i, 0, x);
            }
            for t in 1..=n + 8 {
                s = ngpu_step(&s, &p).unwrap();
                for i in 0..n {
                    let expect = expected_state_row(&rnn, &xs, &hs, t, i).unwrap();
                    assert_eq!(s.cell(i, 0), expect, "seed {seed} t={t} row={i}");
                }
            }
            // the output cell reads the decoder stream after the sweep
            let ys = ngpu_run(&lifted, n + 6, &p).unwrap();
            for t in 1..=6usize {
                let y = &ys[n + t - 1];
                let mut expect = RatVec::zeros(lifter.depth());
                for j in 0..rnn.dim {
                    expect[2 * rnn.dim + j] = gs[t][j].clone();
                }
                assert_eq!(y, &expect, "seed {seed} g_{t}");
            }
        }
    }

    #[test]
    fn ngpu_run_zero_steps_is_empty() {
        let p = trivial_params(1, true);
        assert!(ngpu_run(&[rv(&[1])], 0, &p).unwrap().is_empty());
    }

    #[test]
    fn one_by_one_kernels_are_local() {
        // single-cell perturbation cannot spread with 1x1 kernels
        let mut p = sampling::random_circular_ngpu(99);
        let d = p.depth();
        let shrink = |k: &KernelBank| {
            let mut out = KernelBank::zeros(1, 1, d, d);
            *out.mat_mut(0, 0) = k.mat(0, 0).clone();
            out
        };
        p.kernel_update = shrink(&p.kernel_update);
        p.kernel_reset = shrink(&p.kernel_reset);
        p.kernel_candidate = shrink(&p.kernel_candidate);
        let w = p.width();
        let mut s = sampling::random_periodic_tensor(7, 2, 2, w, d);
        let mut s2 = s.clone();
        s2.set(1, 0, 0, s2.get(1, 0, 0) + &Rat::one());
        for _ in 0..4 {
            s = ngpu_step(&s, &p).unwrap();
            s2 = ngpu_step(&s2, &p).unwrap();
        }
        for i in 0..s.h() {
            for j in 0..w {
                if (i, j) == (1, 0) {
                    continue;
                }
                for k in 0..d {
                    assert_eq!(s.get(i, j, k), s2.get(i, j, k), "cell ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn constant_input_stays_constant_under_circular_nets() {
        for seed in 0..5u64 {
            let p = sampling::random_circular_ngpu(seed);
            let s0 = sampling::random_periodic_tensor(seed + 10, 1, 6, p.width(), p.depth());
            assert_eq!(
                check_periodicity(&p, &s0, 1, 6),
                PeriodicityReport::Preserved { steps: 6 }
            );
        }
    }

    #[test]
    fn periodicity_preconditions_are_reported() {
        let p = sampling::random_circular_ngpu(3);
        let s0 = sampling::random_periodic_tensor(4, 2, 3, p.width(), p.depth());
        assert!(matches!(
            check_periodicity(&p, &s0, 4, 3),
            PeriodicityReport::PreconditionViolation(_)
        ));
        let mut zero_pad = p.clone();
        zero_pad.padding = Padding::Zero;
        assert!(matches!(
            check_periodicity(&zero_pad, &s0, 2, 3),
            PeriodicityReport::PreconditionViolation(_)
        ));
    }

    #[test]
    fn ngpu_file_round_trip() {
        let rnn = rnn_sampling::random_rnn(12, 2);
        let (params, lifter) = compile_rnn_to_ngpu(&rnn);
        let file = NgpuNetFile {
            params,
            embed: None,
            layout: Some(lifter.slot_table()),
        };
        let text = serialize_ngpu_file(&file);
        let back = parse_ngpu_file(&text).unwrap();
        assert_eq!(serialize_ngpu_file(&back), text);
        assert_eq!(back.params, file.params);
    }
}
