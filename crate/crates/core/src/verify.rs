//! Step-by-step verification of compiled networks against the reference
//! interpreters: runs both sides, diffs every tracked vector slot-by-slot,
//! and reports the first divergence or a pass. Independent inputs fan out
//! to worker threads; results merge in input order.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::RatVec;
use crate::machines::{rnn_run, tm_trace, RnnEncDec, TuringMachine};
use crate::neural_gpu::{expected_state_row, ngpu_step, NgpuInputLifter, NgpuParams, Tensor3};
use crate::rnn_compiler::{self, RnnLayout};
use crate::tm_compiler::{self, TmLayout};
use crate::transformer::{Recognizer, SlotRange, TransRunner};

/// Human-readable label of a coordinate under a slot layout (1-based within
/// the named range).
pub fn slot_label(layout: Option<&[SlotRange]>, coord: usize) -> String {
    if let Some(table) = layout {
        for r in table {
            if coord >= r.start && coord < r.start + r.len {
                return if r.len == 1 {
                    r.name.clone()
                } else {
                    format!("{}[{}]", r.name, coord - r.start + 1)
                };
            }
        }
    }
    format!("coord {}", coord + 1)
}

/// Per-input verification outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputOutcome {
    Pass {
        steps_checked: usize,
        accept_step: Option<usize>,
    },
    Fail {
        step: usize,
        slot: String,
        expected: String,
        got: String,
    },
}

impl InputOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, InputOutcome::Pass { .. })
    }
}

/// Ordered per-input results.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub results: Vec<(String, InputOutcome)>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|(_, o)| o.is_pass())
    }
}

fn first_diff(
    expected: &RatVec,
    got: &RatVec,
    layout: Option<&[SlotRange]>,
    stream: &str,
    step: usize,
) -> Option<InputOutcome> {
    if expected == got {
        return None;
    }
    for i in 0..expected.dim().min(got.dim()) {
        if expected[i] != got[i] {
            return Some(InputOutcome::Fail {
                step,
                slot: format!("{stream} {}", slot_label(layout, i)),
                expected: expected[i].to_string(),
                got: got[i].to_string(),
            });
        }
    }
    Some(InputOutcome::Fail {
        step,
        slot: format!("{stream} length"),
        expected: expected.dim().to_string(),
        got: got.dim().to_string(),
    })
}

fn verify_tm_one(
    tm: &TuringMachine,
    rec: &Recognizer,
    w: &str,
    steps: usize,
) -> Result<InputOutcome> {
    let layout = TmLayout::new(tm);
    let table = rec.layout.as_deref();
    let trace = tm_trace(tm, w, steps)?;
    if steps == 0 {
        return Ok(InputOutcome::Pass {
            steps_checked: 0,
            accept_step: None,
        });
    }
    let xs = rec.embed_word(w)?;
    let mut runner = TransRunner::new(rec, &xs, rec.seed.clone())?;
    let bound = steps.min(trace.steps());
    let mut network_accept = None;
    for t in 1..=bound {
        let y = runner.step()?;
        let i = t - 1;
        // intermediate decoder layers, then the output vector
        let expect_layers = [
            tm_compiler::trace_layer1_vector(&layout, &trace, i),
            tm_compiler::trace_layer2_vector(&layout, &trace, i),
            tm_compiler::trace_layer3_vector(&layout, &trace, i),
        ];
        for (l, expect) in expect_layers.iter().enumerate() {
            let got = runner.layer_output(l, i).expect("decoded position");
            if let Some(fail) = first_diff(expect, got, table, &format!("z{}", l + 1), t) {
                return Ok(fail);
            }
        }
        let expect_y = tm_compiler::trace_output_vector(&layout, &trace, t);
        if let Some(fail) = first_diff(&expect_y, &y, table, "y", t) {
            return Ok(fail);
        }
        if rec.final_pred.matches(&y) {
            network_accept = Some(t);
            break;
        }
    }
    if network_accept != trace.accept_time() {
        return Ok(InputOutcome::Fail {
            step: network_accept.or(trace.accept_time()).unwrap_or(0),
            slot: "accept time".into(),
            expected: format!("{:?}", trace.accept_time()),
            got: format!("{network_accept:?}"),
        });
    }
    Ok(InputOutcome::Pass {
        steps_checked: bound,
        accept_step: network_accept,
    })
}

/// Verifies a compiled Turing-machine network against the reference trace
/// on every input, comparing all three decoder layer outputs and the final
/// output vector at every step, plus acceptance-time coincidence.
pub fn verify_tm(
    tm: &TuringMachine,
    rec: &Recognizer,
    inputs: &[String],
    steps: usize,
) -> Result<VerifyReport> {
    let results: Result<Vec<_>> = inputs
        .par_iter()
        .map(|w| Ok((w.clone(), verify_tm_one(tm, rec, w, steps)?)))
        .collect();
    Ok(VerifyReport { results: results? })
}

fn verify_rnn_one(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    rec: &Recognizer,
    w: &str,
    steps: usize,
) -> Result<InputOutcome> {
    let layout = RnnLayout::new(rnn.dim);
    let table = rec.layout.as_deref();
    if steps == 0 {
        return Ok(InputOutcome::Pass {
            steps_checked: 0,
            accept_step: None,
        });
    }
    let xs: Vec<RatVec> = w
        .chars()
        .map(|c| {
            embed
                .get(&c)
                .cloned()
                .ok_or(crate::error::Error::UnknownSymbol(c))
        })
        .collect::<Result<_>>()?;
    let seqs = rnn_compiler::reference_sequences(rnn, &xs, steps)?;
    let enc_in = rec.embed_word(w)?;
    let mut runner = TransRunner::new(rec, &enc_in, rec.seed.clone())?;
    let mut accept_step = None;
    for t in 1..=steps {
        let y = runner.step()?;
        let expect = rnn_compiler::expected_output(&layout, &seqs, t);
        if let Some(fail) = first_diff(&expect, &y, table, "y", t) {
            return Ok(fail);
        }
        if accept_step.is_none() && rec.final_pred.matches(&y) {
            accept_step = Some(t);
        }
    }
    Ok(InputOutcome::Pass {
        steps_checked: steps,
        accept_step,
    })
}

/// Verifies a compiled RNN network against the reference sequences for
/// every input word, over `steps` decoder steps.
pub fn verify_rnn(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    rec: &Recognizer,
    inputs: &[String],
    steps: usize,
) -> Result<VerifyReport> {
    let results: Result<Vec<_>> = inputs
        .par_iter()
        .map(|w| Ok((w.clone(), verify_rnn_one(rnn, embed, rec, w, steps)?)))
        .collect();
    Ok(VerifyReport { results: results? })
}

fn verify_ngpu_one(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    params: &NgpuParams,
    lifter: &NgpuInputLifter,
    w: &str,
    steps: usize,
) -> Result<InputOutcome> {
    let table = lifter.slot_table();
    if steps == 0 {
        return Ok(InputOutcome::Pass {
            steps_checked: 0,
            accept_step: None,
        });
    }
    let xs: Vec<RatVec> = w
        .chars()
        .map(|c| {
            embed
                .get(&c)
                .cloned()
                .ok_or(crate::error::Error::UnknownSymbol(c))
        })
        .collect::<Result<_>>()?;
    let n = xs.len();
    if n == 0 {
        return Err(crate::error::Error::Empty("input word"));
    }
    let (hs, _) = rnn_run(rnn, &xs, 0)?;
    let mut s = Tensor3::zeros(n, params.width(), params.depth());
    for (i, x) in xs.iter().enumerate() {
        s.set_cell(i, 0, &lifter.apply(x)?);
    }
    for t in 1..=steps {
        s = ngpu_step(&s, params)?;
        for i in 0..n {
            let expect = expected_state_row(rnn, &xs, &hs, t, i)?;
            let got = s.cell(i, 0);
            if let Some(InputOutcome::Fail {
                step,
                slot,
                expected,
                got,
            }) = first_diff(&expect, &got, Some(&table), &format!("row {}", i + 1), t)
            {
                return Ok(InputOutcome::Fail {
                    step,
                    slot,
                    expected,
                    got,
                });
            }
        }
    }
    Ok(InputOutcome::Pass {
        steps_checked: steps,
        accept_step: None,
    })
}

/// Verifies a compiled gated-convolution network against the state-row
/// invariant derived from the reference interpreter.
pub fn verify_ngpu(
    rnn: &RnnEncDec,
    embed: &BTreeMap<char, RatVec>,
    params: &NgpuParams,
    lifter: &NgpuInputLifter,
    inputs: &[String],
    steps: usize,
) -> Result<VerifyReport> {
    let results: Result<Vec<_>> = inputs
        .par_iter()
        .map(|w| Ok((w.clone(), verify_ngpu_one(rnn, embed, params, lifter, w, steps)?)))
        .collect();
    Ok(VerifyReport { results: results? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rat;
    use crate::machines::fixtures;
    use crate::tm_compiler::compile_tm;

    #[test]
    fn verify_passes_on_correct_compilation() {
        let tm = fixtures::even_ones();
        let rec = compile_tm(&tm).unwrap();
        let inputs: Vec<String> = ["1", "11", "011", "0"].iter().map(|s| s.to_string()).collect();
        let report = verify_tm(&tm, &rec, &inputs, 40).unwrap();
        assert!(report.all_pass(), "{:?}", report.results);
    }

    #[test]
    fn verify_zero_steps_is_vacuous_pass() {
        let tm = fixtures::even_ones();
        let rec = compile_tm(&tm).unwrap();
        let report = verify_tm(&tm, &rec, &["11".to_string()], 0).unwrap();
        assert!(matches!(
            report.results[0].1,
            InputOutcome::Pass { steps_checked: 0, .. }
        ));
    }

    #[test]
    fn corrupted_transition_row_fails_at_first_use() {
        let tm = fixtures::even_ones();
        let mut rec = compile_tm(&tm).unwrap();
        // zero the transition-table row for (even, '1'): the first layer
        // then produces an empty next-state block when that rule fires
        let codec = crate::tm_compiler::OneHotCodec::new(&tm);
        let even = tm.states().iter().position(|s| s == "even").unwrap();
        let one = tm.sym_index('1').unwrap();
        let head = codec.n_states + codec.n_syms + 1;
        let row = head + codec.pair(even, one);
        let stage = &mut rec.params.dec_layers[0].o.stages[1];
        for col in 0..stage.map.matrix.cols() {
            stage.map.matrix.set(row, col, Rat::zero());
        }
        // first use of (even, '1') on input "1" is at time 1
        let trace = tm_trace(&tm, "1", 40).unwrap();
        let first_use = (0..trace.steps())
            .find(|&i| trace.state(i) == even && trace.read_sym(i) == one)
            .unwrap();
        let report = verify_tm(&tm, &rec, &["1".to_string()], 20).unwrap();
        match &report.results[0].1 {
            InputOutcome::Fail { step, slot, .. } => {
                assert_eq!(*step, first_use + 1);
                assert!(slot.contains("q2"), "diverged at {slot}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn slot_labels_use_layout_names() {
        let tm = fixtures::even_ones();
        let rec = compile_tm(&tm).unwrap();
        let table = rec.layout.as_deref();
        assert_eq!(slot_label(table, 0), "q1[1]");
        assert_eq!(slot_label(table, tm.n_states() + tm.n_syms()), "m_prev");
        assert_eq!(slot_label(None, 3), "coord 4");
    }
}
