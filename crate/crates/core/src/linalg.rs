//! Exact rational scalars, vectors, matrices, affine maps and feed-forward
//! networks. This is the only numeric substrate in the crate: every weight
//! and every activation is a rational in canonical form, all equality is
//! exact, and no floating point appears anywhere.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational in canonical form: reduced, denominator > 0.
/// Canonicalization happens eagerly after every operation, so equality,
/// ordering and tie detection are exact.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    /// p/q with q != 0. Sign and reduction are normalized on construction.
    pub fn ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "rational with zero denominator");
        Rat(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Rat {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Rat {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn min(self, other: Rat) -> Rat {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// True when the value lies in the closed interval [0, 1].
    pub fn in_unit_interval(&self) -> bool {
        !self.is_negative() && self.0 <= BigRational::one()
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rat {
    type Err = Error;

    /// Accepts "p" or "p/q" with arbitrary-precision integers and q > 0.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (p, q) = match s.split_once('/') {
            None => (s, "1"),
            Some((p, q)) => (p, q),
        };
        let p = BigInt::from_str(p).map_err(|e| Error::Parse(format!("bad numerator {p:?}: {e}")))?;
        let q = BigInt::from_str(q).map_err(|e| Error::Parse(format!("bad denominator {q:?}: {e}")))?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        if q.is_negative() {
            return Err(Error::Parse(format!(
                "denominator must be positive in {s:?}"
            )));
        }
        Ok(Rat(BigRational::new(p, q)))
    }
}

macro_rules! rat_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((self.0).$method(rhs.0))
            }
        }
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((self.0).$method(&rhs.0))
            }
        }
        impl $trait<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
    };
}

rat_binop!(Add, add);
rat_binop!(Sub, sub);
rat_binop!(Mul, mul);

impl Div for &Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / &rhs.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Rat> for Rat {
    fn sub_assign(&mut self, rhs: &Rat) {
        self.0 -= &rhs.0;
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// Piecewise-linear sigmoid: clamps to 0 below 0 and to 1 above 1,
/// identity in between.
pub fn sigma_pl(x: &Rat) -> Rat {
    if x.is_negative() {
        Rat::zero()
    } else if x.0 > BigRational::one() {
        Rat::one()
    } else {
        x.clone()
    }
}

/// max(0, x).
pub fn relu_pl(x: &Rat) -> Rat {
    if x.is_negative() {
        Rat::zero()
    } else {
        x.clone()
    }
}

/// Activation tags available to feed-forward stages. The set is closed:
/// every construction in this crate uses only these three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigma,
    Relu,
}

impl Activation {
    pub fn apply(&self, x: &Rat) -> Rat {
        match self {
            Activation::Identity => x.clone(),
            Activation::Sigma => sigma_pl(x),
            Activation::Relu => relu_pl(x),
        }
    }
}

/// Row vector of exact rationals. Indexing is 0-based in code; documentation
/// and file formats count slots from 1.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RatVec(Vec<Rat>);

impl RatVec {
    pub fn new(entries: Vec<Rat>) -> Self {
        RatVec(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        RatVec(vec![Rat::zero(); dim])
    }

    pub fn from_ints(entries: &[i64]) -> Self {
        RatVec(entries.iter().map(|&n| Rat::from_int(n)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rat> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Rat] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Rat::is_zero)
    }

    pub fn add(&self, other: &RatVec) -> Result<RatVec> {
        if self.dim() != other.dim() {
            return Err(Error::dim("vector addition", self.dim(), other.dim()));
        }
        let mut out = self.clone();
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            if !b.is_zero() {
                *a += b;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &RatVec) -> Result<RatVec> {
        if self.dim() != other.dim() {
            return Err(Error::dim("vector subtraction", self.dim(), other.dim()));
        }
        let mut out = self.clone();
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            if !b.is_zero() {
                *a -= b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: &Rat) -> RatVec {
        if factor.is_zero() {
            return RatVec::zeros(self.dim());
        }
        RatVec(
            self.0
                .iter()
                .map(|x| if x.is_zero() { Rat::zero() } else { x * factor })
                .collect(),
        )
    }

    pub fn dot(&self, other: &RatVec) -> Result<Rat> {
        if self.dim() != other.dim() {
            return Err(Error::dim("dot product", self.dim(), other.dim()));
        }
        let mut acc = Rat::zero();
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            if a.is_zero() || b.is_zero() {
                continue;
            }
            acc += &(a * b);
        }
        Ok(acc)
    }

    pub fn concat(&self, other: &RatVec) -> RatVec {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        RatVec(v)
    }

    pub fn map(&self, f: impl Fn(&Rat) -> Rat) -> RatVec {
        RatVec(self.0.iter().map(f).collect())
    }

    /// Copy of the half-open slot range [start, start+len).
    pub fn slice(&self, start: usize, len: usize) -> RatVec {
        RatVec(self.0[start..start + len].to_vec())
    }
}

impl Index<usize> for RatVec {
    type Output = Rat;
    fn index(&self, i: usize) -> &Rat {
        &self.0[i]
    }
}

impl IndexMut<usize> for RatVec {
    fn index_mut(&mut self, i: usize) -> &mut Rat {
        &mut self.0[i]
    }
}

impl fmt::Debug for RatVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct RatMat {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

impl RatMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMat {
            rows,
            cols,
            data: vec![Rat::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::dim(format!("matrix row {}", i + 1), n_cols, row.len()));
            }
            data.extend(row);
        }
        Ok(RatMat {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Rat) {
        self.data[i * self.cols + j] = value;
    }

    /// Row-vector convention: x (1×rows) times self (rows×cols).
    pub fn vec_mul(&self, x: &RatVec) -> Result<RatVec> {
        if x.dim() != self.rows {
            return Err(Error::dim("row-vector by matrix", self.rows, x.dim()));
        }
        let mut out = RatVec::zeros(self.cols);
        for (i, xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, m) in row.iter().enumerate() {
                if m.is_zero() {
                    continue;
                }
                out[j] += &(xi * m);
            }
        }
        Ok(out)
    }

    pub fn mat_mul(&self, other: &RatMat) -> Result<RatMat> {
        if self.cols != other.rows {
            return Err(Error::dim("matrix product", self.cols, other.rows));
        }
        let mut out = RatMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.get(i, j) + a * b;
                    out.set(i, j, cur);
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Debug for RatMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RatMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{} ", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Serialize for RatMat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[Rat]> = self.data.chunks(self.cols.max(1)).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RatMat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Rat>>::deserialize(deserializer)?;
        RatMat::from_rows(rows).map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// Affine map under the row-vector convention: apply(x) = x·matrix + bias.
/// The matrix is stored in-dim × out-dim, so constructions transcribe
/// without transposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: RatMat,
    pub bias: RatVec,
}

impl AffineMap {
    pub fn new(matrix: RatMat, bias: RatVec) -> Result<Self> {
        if matrix.cols() != bias.dim() {
            return Err(Error::dim("affine bias", matrix.cols(), bias.dim()));
        }
        Ok(AffineMap { matrix, bias })
    }

    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        AffineMap {
            matrix: RatMat::zeros(in_dim, out_dim),
            bias: RatVec::zeros(out_dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap {
            matrix: RatMat::identity(dim),
            bias: RatVec::zeros(dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, x: &RatVec) -> Result<RatVec> {
        let mut out = self.matrix.vec_mul(x)?;
        for (o, b) in (0..out.dim()).zip(self.bias.iter()) {
            if !b.is_zero() {
                out[o] += b;
            }
        }
        Ok(out)
    }
}

/// One feed-forward stage: an affine map followed by an activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfnStage {
    #[serde(flatten)]
    pub map: AffineMap,
    pub activation: Activation,
}

impl FfnStage {
    pub fn new(map: AffineMap, activation: Activation) -> Self {
        FfnStage { map, activation }
    }
}

/// Sequence of (affine, activation) stages. An empty stage list is the
/// identity function. Adjacent stage dimensions must chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct FeedForward {
    pub stages: Vec<FfnStage>,
}

impl FeedForward {
    /// The identity function (no stages).
    pub fn identity() -> Self {
        FeedForward { stages: vec![] }
    }

    /// Single-stage constant-zero map of the given square dimension.
    pub fn zero_map(dim: usize) -> Self {
        FeedForward {
            stages: vec![FfnStage::new(AffineMap::zero(dim, dim), Activation::Identity)],
        }
    }

    pub fn from_stages(stages: Vec<FfnStage>) -> Self {
        FeedForward { stages }
    }

    pub fn single(map: AffineMap, activation: Activation) -> Self {
        FeedForward {
            stages: vec![FfnStage::new(map, activation)],
        }
    }

    /// Concatenation: self first, then other.
    pub fn chain(mut self, other: FeedForward) -> FeedForward {
        self.stages.extend(other.stages);
        self
    }

    pub fn is_identity(&self) -> bool {
        self.stages.is_empty()
    }

    /// Folds the input through every stage. Dimension mismatches name the
    /// offending stage (1-based).
    pub fn apply(&self, x: &RatVec) -> Result<RatVec> {
        let mut cur = x.clone();
        for (idx, stage) in self.stages.iter().enumerate() {
            if cur.dim() != stage.map.in_dim() {
                return Err(Error::dim(
                    format!("feed-forward stage {}", idx + 1),
                    stage.map.in_dim(),
                    cur.dim(),
                ));
            }
            let pre = stage.map.apply(&cur)?;
            cur = match stage.activation {
                Activation::Identity => pre,
                act => pre.map(|v| act.apply(v)),
            };
        }
        Ok(cur)
    }

    /// Checks that stage dimensions chain and that the network maps
    /// `in_dim` to `out_dim`. Identity networks satisfy any square check.
    pub fn check_dims(&self, in_dim: usize, out_dim: usize) -> Result<()> {
        if self.stages.is_empty() {
            if in_dim != out_dim {
                return Err(Error::dim("identity feed-forward", in_dim, out_dim));
            }
            return Ok(());
        }
        let mut cur = in_dim;
        for (idx, stage) in self.stages.iter().enumerate() {
            if stage.map.in_dim() != cur {
                return Err(Error::dim(
                    format!("feed-forward stage {} input", idx + 1),
                    cur,
                    stage.map.in_dim(),
                ));
            }
            cur = stage.map.out_dim();
        }
        if cur != out_dim {
            return Err(Error::dim("feed-forward output", out_dim, cur));
        }
        Ok(())
    }
}

/// Total order on rationals, exposed for hardmax tie detection.
pub fn rat_cmp(a: &Rat, b: &Rat) -> Ordering {
    a.cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(p: i64, q: i64) -> Rat {
        Rat::ratio(p, q)
    }

    #[test]
    fn sigma_clamps() {
        assert_eq!(sigma_pl(&rat(-1, 1)), Rat::zero());
        assert_eq!(sigma_pl(&rat(1, 2)), rat(1, 2));
        assert_eq!(sigma_pl(&rat(7, 3)), Rat::one());
    }

    #[test]
    fn relu_clamps() {
        assert_eq!(relu_pl(&rat(-2, 1)), Rat::zero());
        assert_eq!(relu_pl(&Rat::zero()), Rat::zero());
        assert_eq!(relu_pl(&rat(5, 4)), rat(5, 4));
    }

    #[test]
    fn identity_ffn_is_identity() {
        let x = RatVec::from_ints(&[1, 2]);
        assert_eq!(FeedForward::identity().apply(&x).unwrap(), x);
    }

    #[test]
    fn single_stage_sigma() {
        // identity matrix, bias (-1, -1), sigma: [1/2, 3] -> [0, 1]
        let map = AffineMap::new(RatMat::identity(2), RatVec::from_ints(&[-1, -1])).unwrap();
        let f = FeedForward::single(map, Activation::Sigma);
        let out = f.apply(&RatVec::new(vec![rat(1, 2), rat(3, 1)])).unwrap();
        assert_eq!(out, RatVec::from_ints(&[0, 1]));
    }

    #[test]
    fn ffn_shape_error_names_stage() {
        let map = AffineMap::zero(3, 2);
        let f = FeedForward::single(map, Activation::Identity);
        let err = f.apply(&RatVec::zeros(2)).unwrap_err();
        assert!(err.to_string().contains("stage 1"), "{err}");
    }

    #[test]
    fn rat_parses_and_displays_canonically() {
        let r: Rat = "6/4".parse().unwrap();
        assert_eq!(r, rat(3, 2));
        assert_eq!(r.to_string(), "3/2");
        let n: Rat = "-5".parse().unwrap();
        assert_eq!(n.to_string(), "-5");
        assert!("1/0".parse::<Rat>().is_err());
        assert!("1/-2".parse::<Rat>().is_err());
    }

    fn small_rat() -> impl Strategy<Value = Rat> {
        (-9i64..=9, 1i64..=9).prop_map(|(p, q)| Rat::ratio(p, q))
    }

    fn small_mat(rows: usize, cols: usize) -> impl Strategy<Value = RatMat> {
        proptest::collection::vec(small_rat(), rows * cols).prop_map(move |data| {
            let mut m = RatMat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m.set(i, j, data[i * cols + j].clone());
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn sigma_idempotent(x in small_rat()) {
            let once = sigma_pl(&x);
            prop_assert_eq!(sigma_pl(&once), once.clone());
        }

        #[test]
        fn canonicalization_deterministic(p in -50i64..50, q in 1i64..50, k in 1i64..9) {
            prop_assert_eq!(Rat::ratio(p * k, q * k), Rat::ratio(p, q));
        }

        #[test]
        fn row_vector_associativity(
            x in proptest::collection::vec(small_rat(), 3),
            a in small_mat(3, 4),
            b in small_mat(4, 2),
        ) {
            let x = RatVec::new(x);
            let via_steps = b.vec_mul(&a.vec_mul(&x).unwrap()).unwrap();
            let via_product = a.mat_mul(&b).unwrap().vec_mul(&x).unwrap();
            prop_assert_eq!(via_steps, via_product);
        }

        #[test]
        fn chained_ffn_equals_concatenation(
            m1 in small_mat(2, 3),
            b1 in proptest::collection::vec(small_rat(), 3),
            m2 in small_mat(3, 2),
            b2 in proptest::collection::vec(small_rat(), 2),
            x in proptest::collection::vec(small_rat(), 2),
        ) {
            let f = FeedForward::single(
                AffineMap::new(m1, RatVec::new(b1)).unwrap(),
                Activation::Sigma,
            );
            let g = FeedForward::single(
                AffineMap::new(m2, RatVec::new(b2)).unwrap(),
                Activation::Relu,
            );
            let x = RatVec::new(x);
            let stepwise = g.apply(&f.apply(&x).unwrap()).unwrap();
            let chained = f.clone().chain(g.clone()).apply(&x).unwrap();
            prop_assert_eq!(stepwise, chained);
        }
    }
}
