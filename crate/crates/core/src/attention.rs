//! Scoring functions and the hard-attention operator.
//!
//! Normalization is fixed to hardmax: uniform weight over the positions
//! attaining the exact maximum score, zero elsewhere. Tie detection uses
//! exact rational equality, never an epsilon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{relu_pl, Activation, AffineMap, FeedForward, Rat, RatMat, RatVec};

/// Scoring function over (query, key) pairs of equal dimension.
///
/// The set is closed so networks stay serializable:
/// - `MultPhi`: -|<q, k>| (multiplicative attention through -|x|).
/// - `PosDiff`: -|e(q) - e(k)| where e reads the positional slot
///   (0-based in code, 1-based in files); evaluated through the
///   three-stage network that realizes it additively.
/// - `NetDefined`: an arbitrary feed-forward network over [q ‖ k]
///   producing a single rational.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreFn {
    MultPhi,
    PosDiff {
        #[serde(with = "crate::serde_util::one_based")]
        pos_slot: usize,
    },
    NetDefined { net: FeedForward },
}

impl ScoreFn {
    /// Position-difference scoring on the last component.
    pub fn pos_diff_last(dim: usize) -> ScoreFn {
        ScoreFn::PosDiff { pos_slot: dim - 1 }
    }

    pub fn eval(&self, q: &RatVec, k: &RatVec) -> Result<Rat> {
        if q.dim() != k.dim() {
            return Err(Error::dim("score arguments", q.dim(), k.dim()));
        }
        match self {
            ScoreFn::MultPhi => score_phi(q, k),
            ScoreFn::PosDiff { pos_slot } => {
                if *pos_slot >= q.dim() {
                    return Err(Error::dim("positional slot", q.dim(), *pos_slot + 1));
                }
                Ok(pos_diff_score(&q[*pos_slot], &k[*pos_slot]))
            }
            ScoreFn::NetDefined { net } => {
                let out = net.apply(&q.concat(k))?;
                if out.dim() != 1 {
                    return Err(Error::dim("score network output", 1, out.dim()));
                }
                Ok(out[0].clone())
            }
        }
    }
}

/// -|<q, k>|, exactly.
pub fn score_phi(q: &RatVec, k: &RatVec) -> Result<Rat> {
    Ok(-q.dot(k)?.abs())
}

/// The additive realization of -|x - y|: relu(x-y) and relu(y-x) are formed
/// in one stage and summed negatively in the next.
fn pos_diff_score(eq: &Rat, ek: &Rat) -> Rat {
    let a = relu_pl(&(eq - ek));
    let b = relu_pl(&(ek - eq));
    -a - b
}

/// -|e(q) - e(k)| where the positional slot e is the last component.
pub fn score_posdiff(q: &RatVec, k: &RatVec) -> Result<Rat> {
    if q.dim() != k.dim() {
        return Err(Error::dim("score arguments", q.dim(), k.dim()));
    }
    if q.dim() == 0 {
        return Err(Error::Empty("score argument"));
    }
    Ok(pos_diff_score(&q[q.dim() - 1], &k[k.dim() - 1]))
}

/// Builds the explicit three-stage network computing the position-difference
/// score over a concatenated [q ‖ k] input of total width 2·dim: pick the two
/// positional components, relu the two differences, negate and sum.
pub fn posdiff_score_net(dim: usize) -> FeedForward {
    let mut pick = RatMat::zeros(2 * dim, 2);
    pick.set(dim - 1, 0, Rat::one());
    pick.set(2 * dim - 1, 1, Rat::one());
    let f1 = FfnStageBuilder::linear(pick, Activation::Identity);

    let mut diff = RatMat::zeros(2, 2);
    diff.set(0, 0, Rat::one());
    diff.set(1, 0, -Rat::one());
    diff.set(0, 1, -Rat::one());
    diff.set(1, 1, Rat::one());
    let f2 = FfnStageBuilder::linear(diff, Activation::Relu);

    let mut neg_sum = RatMat::zeros(2, 1);
    neg_sum.set(0, 0, -Rat::one());
    neg_sum.set(1, 0, -Rat::one());
    let f3 = FfnStageBuilder::linear(neg_sum, Activation::Identity);

    FeedForward::from_stages(vec![f1, f2, f3])
}

struct FfnStageBuilder;

impl FfnStageBuilder {
    fn linear(matrix: RatMat, activation: Activation) -> crate::linalg::FfnStage {
        let bias = RatVec::zeros(matrix.cols());
        crate::linalg::FfnStage::new(AffineMap::new(matrix, bias).unwrap(), activation)
    }
}

/// Keys and values of equal count; all keys share a dimension and all
/// values share a dimension.
#[derive(Debug, Clone)]
pub struct KVPair {
    keys: Vec<RatVec>,
    values: Vec<RatVec>,
}

impl KVPair {
    pub fn new(keys: Vec<RatVec>, values: Vec<RatVec>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Empty("key/value pair"));
        }
        if keys.len() != values.len() {
            return Err(Error::dim("key/value counts", keys.len(), values.len()));
        }
        let kd = keys[0].dim();
        if keys.iter().any(|k| k.dim() != kd) {
            return Err(Error::invalid("keys", "dimensions differ"));
        }
        let vd = values[0].dim();
        if values.iter().any(|v| v.dim() != vd) {
            return Err(Error::invalid("values", "dimensions differ"));
        }
        Ok(KVPair { keys, values })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[RatVec] {
        &self.keys
    }

    pub fn values(&self) -> &[RatVec] {
        &self.values
    }
}

/// Hardmax normalization: weight 1/r at every position attaining the exact
/// maximum (r-fold), 0 elsewhere. Weights sum to 1.
pub fn hardmax(scores: &[Rat]) -> Result<Vec<Rat>> {
    if scores.is_empty() {
        return Err(Error::Empty("score sequence"));
    }
    let max = scores.iter().max().expect("nonempty");
    let multiplicity = scores.iter().filter(|s| *s == max).count() as i64;
    let weight = Rat::ratio(1, multiplicity);
    Ok(scores
        .iter()
        .map(|s| if s == max { weight.clone() } else { Rat::zero() })
        .collect())
}

/// Indices of the exact maximum, in position order.
pub fn argmax_set(scores: &[Rat]) -> Vec<usize> {
    let Some(max) = scores.iter().max() else {
        return vec![];
    };
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| *s == max)
        .map(|(i, _)| i)
        .collect()
}

/// Hard attention: hardmax-weighted convex combination of the values. On an
/// r-way tie the result is the exact average of the tied values.
pub fn attend(q: &RatVec, kv: &KVPair, score: &ScoreFn) -> Result<RatVec> {
    attend_slices(q, kv.keys(), kv.values(), score)
}

/// Attention over parallel key/value slices (the keys may be a prefix of a
/// longer cached sequence).
pub fn attend_slices(
    q: &RatVec,
    keys: &[RatVec],
    values: &[RatVec],
    score: &ScoreFn,
) -> Result<RatVec> {
    if keys.is_empty() {
        return Err(Error::Empty("key/value pair"));
    }
    debug_assert_eq!(keys.len(), values.len());
    let mut best: Option<Rat> = None;
    let mut winners: Vec<usize> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        let s = score.eval(q, k)?;
        match &best {
            Some(b) if s < *b => {}
            Some(b) if s == *b => winners.push(i),
            _ => {
                best = Some(s);
                winners.clear();
                winners.push(i);
            }
        }
    }
    let mut acc = values[winners[0]].clone();
    for &i in &winners[1..] {
        acc = acc.add(&values[i])?;
    }
    if winners.len() > 1 {
        acc = acc.scale(&Rat::ratio(1, winners.len() as i64));
    }
    Ok(acc)
}
