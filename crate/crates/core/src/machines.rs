//! Ground-truth interpreters: normalized Turing machines with full trace
//! extraction, a normalizer for general machines, and the simplified RNN
//! encoder-decoder. Every compiler in this crate is verified against these.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigma_pl, Rat, RatMat, RatVec};

/// Head movement of a normalized machine; every transition moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    L,
    R,
}

impl Move {
    /// -1 for left, +1 for right.
    pub fn as_rat(self) -> Rat {
        match self {
            Move::L => Rat::from_int(-1),
            Move::R => Rat::from_int(1),
        }
    }

    fn as_i64(self) -> i64 {
        match self {
            Move::L => -1,
            Move::R => 1,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Move::L => "L",
            Move::R => "R",
        })
    }
}

/// Head movement of a general (not yet normalized) machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMove {
    L,
    R,
    S,
}

/// A normalized Turing machine:
///
/// - the head starts on cell 0 reading the blank, with the input on cells
///   1..n, and never moves left of cell 0;
/// - every transition moves left or right;
/// - the transition function is total on (non-accepting state, symbol) and
///   accepting states have no outgoing transitions;
/// - the initial transition is δ(init, blank) = (read, blank, R), and every
///   state reachable from `read` via non-blank reads moves right on every
///   non-blank read, so the first n steps sweep the input left to right.
///
/// State and symbol enumerations follow declared list order, which fixes
/// every one-hot layout derived from the machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuringMachine {
    states: Vec<String>,
    alphabet: Vec<char>,
    blank: usize,
    init: usize,
    read: usize,
    accepting: Vec<bool>,
    /// Row q, column s; `None` exactly on accepting states.
    delta: Vec<Option<(usize, usize, Move)>>,
}

impl TuringMachine {
    pub fn new(
        states: Vec<String>,
        alphabet: Vec<char>,
        blank: char,
        init: &str,
        read: &str,
        accept: &[String],
        rules: &[(String, char, String, char, Move)],
    ) -> Result<Self> {
        let find_state = |name: &str, states: &[String]| -> Result<usize> {
            states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::invalid("machine", format!("unknown state {name:?}")))
        };
        if states.is_empty() {
            return Err(Error::Empty("state list"));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(Error::invalid("machine", format!("duplicate state {s:?}")));
            }
        }
        for (i, c) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(c) {
                return Err(Error::invalid("machine", format!("duplicate symbol '{c}'")));
            }
        }
        let blank = alphabet
            .iter()
            .position(|&c| c == blank)
            .ok_or_else(|| Error::invalid("machine", "blank symbol not in alphabet"))?;
        let init = find_state(init, &states)?;
        let read = find_state(read, &states)?;
        let mut accepting = vec![false; states.len()];
        for name in accept {
            accepting[find_state(name, &states)?] = true;
        }
        let n_syms = alphabet.len();
        let mut delta: Vec<Option<(usize, usize, Move)>> = vec![None; states.len() * n_syms];
        for (state, read_sym, next, write, mv) in rules {
            let q = find_state(state, &states)?;
            let s = alphabet
                .iter()
                .position(|c| c == read_sym)
                .ok_or_else(|| Error::invalid("machine", format!("unknown symbol '{read_sym}'")))?;
            let p = find_state(next, &states)?;
            let v = alphabet
                .iter()
                .position(|c| c == write)
                .ok_or_else(|| Error::invalid("machine", format!("unknown symbol '{write}'")))?;
            if accepting[q] {
                return Err(Error::invalid(
                    "machine",
                    format!("transition out of accepting state {state:?}"),
                ));
            }
            if delta[q * n_syms + s].is_some() {
                return Err(Error::invalid(
                    "machine",
                    format!("duplicate rule for ({state:?}, '{read_sym}')"),
                ));
            }
            delta[q * n_syms + s] = Some((p, v, *mv));
        }
        let tm = TuringMachine {
            states,
            alphabet,
            blank,
            init,
            read,
            accepting,
            delta,
        };
        tm.validate()?;
        Ok(tm)
    }

    fn validate(&self) -> Result<()> {
        let n_syms = self.alphabet.len();
        for q in 0..self.states.len() {
            for s in 0..n_syms {
                let cell = &self.delta[q * n_syms + s];
                if self.accepting[q] {
                    continue; // outgoing transitions already rejected above
                }
                if cell.is_none() {
                    return Err(Error::invalid(
                        "machine",
                        format!(
                            "missing transition for ({:?}, '{}')",
                            self.states[q], self.alphabet[s]
                        ),
                    ));
                }
            }
        }
        match self.step(self.init, self.blank) {
            Some((p, v, Move::R)) if p == self.read && v == self.blank => {}
            _ => {
                return Err(Error::invalid(
                    "machine",
                    "initial transition must be (init, blank) -> (read, blank, R)",
                ))
            }
        }
        // Closure check: states reachable from `read` via non-blank reads
        // must move right on every non-blank read. This guarantees the head
        // sits on cell i at time i while the input is being swept.
        let mut in_phase = vec![false; self.states.len()];
        let mut stack = vec![self.read];
        in_phase[self.read] = true;
        while let Some(q) = stack.pop() {
            for s in 0..n_syms {
                if s == self.blank {
                    continue;
                }
                match self.step(q, s) {
                    Some((p, _, Move::R)) => {
                        if !in_phase[p] && !self.accepting[p] {
                            in_phase[p] = true;
                            stack.push(p);
                        }
                    }
                    _ => {
                        return Err(Error::invalid(
                            "machine",
                            format!(
                                "read phase violated: ({:?}, '{}') does not move right",
                                self.states[q], self.alphabet[s]
                            ),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_syms(&self) -> usize {
        self.alphabet.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn read_state(&self) -> usize {
        self.read
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&q| self.accepting[q]).collect()
    }

    pub fn step(&self, q: usize, s: usize) -> Option<(usize, usize, Move)> {
        self.delta[q * self.alphabet.len() + s]
    }

    pub fn sym_index(&self, c: char) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|&x| x == c)
            .ok_or(Error::UnknownSymbol(c))
    }

    /// Input symbols are everything except the blank.
    pub fn input_alphabet(&self) -> Vec<char> {
        self.alphabet
            .iter()
            .copied()
            .filter(|&c| c != self.alphabet[self.blank])
            .collect()
    }
}

/// Per-step quantities of a machine run:
/// state, read symbol, written symbol, head move, head cell index and the
/// last prior visit time of the current cell. The trace is frozen once an
/// accepting state is entered.
#[derive(Debug, Clone)]
pub struct TmTrace {
    input: Vec<usize>,
    states: Vec<usize>,
    reads: Vec<usize>,
    writes: Vec<usize>,
    moves: Vec<Move>,
    cells: Vec<i64>,
    last_visits: Vec<usize>,
    accept_time: Option<usize>,
}

impl TmTrace {
    /// Number of recorded transitions; recorded times are 0..=steps().
    pub fn steps(&self) -> usize {
        self.moves.len()
    }

    pub fn n(&self) -> usize {
        self.input.len()
    }

    pub fn input(&self) -> &[usize] {
        &self.input
    }

    pub fn accept_time(&self) -> Option<usize> {
        self.accept_time
    }

    /// State index at time i (i <= steps()).
    pub fn state(&self, i: usize) -> usize {
        self.states[i]
    }

    /// Symbol index under the head at time i.
    pub fn read_sym(&self, i: usize) -> usize {
        self.reads[i]
    }

    /// Symbol written at time i (i < steps()).
    pub fn written(&self, i: usize) -> usize {
        self.writes[i]
    }

    /// Head move at time i (i < steps()).
    pub fn head_move(&self, i: usize) -> Move {
        self.moves[i]
    }

    /// Head move at time i-1 as a rational, with the convention that there
    /// was no movement before time 0.
    pub fn head_move_prev(&self, i: usize) -> Rat {
        if i == 0 {
            Rat::zero()
        } else {
            self.moves[i - 1].as_rat()
        }
    }

    /// Head cell index at time i: the prefix sum of the moves.
    pub fn head_cell(&self, i: usize) -> i64 {
        self.cells[i]
    }

    /// Last time before i at which the head sat on the same cell as at
    /// time i, or i-1 when that cell had never been visited. Meaningful for
    /// i >= 1; pinned to 0 at time 0.
    pub fn last_visit(&self, i: usize) -> usize {
        self.last_visits[i]
    }

    /// Per-step symbols still to be read: s_i for i <= n, s_n beyond.
    pub fn input_clamped(&self, i: usize) -> Option<usize> {
        if self.input.is_empty() {
            return None;
        }
        Some(self.input[(i.max(1)).min(self.input.len()) - 1])
    }
}

/// Simulates `steps` transitions (or up to acceptance) from the initial
/// configuration: tape holds `w` from cell 1, head on cell 0, blank under
/// the head. Errors if the head ever moves left of cell 0.
pub fn tm_trace(tm: &TuringMachine, w: &str, steps: usize) -> Result<TmTrace> {
    let input: Vec<usize> = w
        .chars()
        .map(|c| {
            let s = tm.sym_index(c)?;
            if s == tm.blank() {
                return Err(Error::invalid("input", "blank symbol inside input word"));
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let mut tape: HashMap<i64, usize> = input
        .iter()
        .enumerate()
        .map(|(i, &s)| ((i + 1) as i64, s))
        .collect();
    let mut trace = TmTrace {
        input,
        states: Vec::new(),
        reads: Vec::new(),
        writes: Vec::new(),
        moves: Vec::new(),
        cells: Vec::new(),
        last_visits: Vec::new(),
        accept_time: None,
    };
    let mut seen: HashMap<i64, usize> = HashMap::new();
    let mut q = tm.init();
    let mut head: i64 = 0;
    for i in 0..=steps {
        let s = *tape.get(&head).unwrap_or(&tm.blank());
        trace.states.push(q);
        trace.reads.push(s);
        trace.cells.push(head);
        trace
            .last_visits
            .push(*seen.get(&head).unwrap_or(&i.saturating_sub(1)));
        seen.insert(head, i);
        if tm.is_accepting(q) {
            trace.accept_time = Some(i);
            break;
        }
        if i == steps {
            break;
        }
        let (p, v, m) = tm
            .step(q, s)
            .expect("validated machines are total on non-accepting states");
        tape.insert(head, v);
        trace.writes.push(v);
        trace.moves.push(m);
        head += m.as_i64();
        if head < 0 {
            return Err(Error::invalid(
                "machine run",
                format!("head moved left of cell 0 at time {}", i + 1),
            ));
        }
        q = p;
    }
    Ok(trace)
}

/// A general machine: may use stay-moves, may lack a read phase, may have a
/// partial transition function (a missing transition halts without
/// accepting), and may visit one cell left of its start. Conventions: head
/// starts on cell 0 reading the blank, input on cells 1..n.
#[derive(Debug, Clone)]
pub struct GeneralTm {
    pub states: Vec<String>,
    pub alphabet: Vec<char>,
    pub blank: char,
    pub init: String,
    pub read_state: Option<String>,
    pub accept: Vec<String>,
    /// (state, read, next, write, move)
    pub rules: Vec<(String, char, String, char, GenMove)>,
}

/// Result of running a general machine with bounded fuel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneralOutcome {
    Accepted { time: usize },
    Halted { time: usize },
    OutOfFuel,
}

impl GeneralTm {
    fn state_idx(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::invalid("machine", format!("unknown state {name:?}")))
    }

    fn rule_for(&self, state: &str, read: char) -> Option<&(String, char, String, char, GenMove)> {
        self.rules
            .iter()
            .find(|(q, s, _, _, _)| q == state && *s == read)
    }

    /// Direct interpreter for differential testing. Returns the outcome and
    /// the leftmost cell ever visited.
    pub fn run(&self, w: &str, fuel: usize) -> Result<(GeneralOutcome, i64)> {
        self.state_idx(&self.init)?;
        let mut tape: HashMap<i64, char> = w
            .chars()
            .enumerate()
            .map(|(i, c)| ((i + 1) as i64, c))
            .collect();
        let mut q = self.init.clone();
        let mut head: i64 = 0;
        let mut min_head: i64 = 0;
        for t in 0..=fuel {
            if self.accept.contains(&q) {
                return Ok((GeneralOutcome::Accepted { time: t }, min_head));
            }
            if t == fuel {
                break;
            }
            let s = *tape.get(&head).unwrap_or(&self.blank);
            let Some((_, _, next, write, mv)) = self.rule_for(&q, s) else {
                return Ok((GeneralOutcome::Halted { time: t }, min_head));
            };
            tape.insert(head, *write);
            head += match mv {
                GenMove::L => -1,
                GenMove::R => 1,
                GenMove::S => 0,
            };
            min_head = min_head.min(head);
            q = next.clone();
        }
        Ok((GeneralOutcome::OutOfFuel, min_head))
    }

    /// Attempts the strict reading: the machine already satisfies every
    /// normalization assumption, so it converts as-is.
    fn try_strict(&self) -> Result<TuringMachine> {
        let read = self
            .read_state
            .clone()
            .ok_or_else(|| Error::invalid("machine", "no read state declared"))?;
        let rules: Vec<(String, char, String, char, Move)> = self
            .rules
            .iter()
            .map(|(q, s, p, v, mv)| {
                let mv = match mv {
                    GenMove::L => Move::L,
                    GenMove::R => Move::R,
                    GenMove::S => {
                        return Err(Error::invalid(
                            "machine",
                            format!("rule ({q:?}, '{s}') does not move"),
                        ))
                    }
                };
                Ok((q.clone(), *s, p.clone(), *v, mv))
            })
            .collect::<Result<_>>()?;
        TuringMachine::new(
            self.states.clone(),
            self.alphabet.clone(),
            self.blank,
            &self.init,
            &read,
            &self.accept,
            &rules,
        )
    }
}

/// Normalizes a general machine. Machines that already satisfy every
/// assumption are returned unchanged; otherwise an equivalent machine is
/// constructed that boots through a fresh read phase, shifts the whole
/// computation one cell to the right (so a visit to the cell left of the
/// general start stays at cell 0), splits stay-moves through fresh helper
/// states, and sends missing transitions to a fresh rejecting state.
/// Language equality is the contract; step counts differ.
pub fn normalize_tm(g: &GeneralTm) -> Result<TuringMachine> {
    if let Ok(tm) = g.try_strict() {
        return Ok(tm);
    }

    let blank = g.blank;
    g.state_idx(&g.init)?;
    let sim = |name: &str| format!("m:{name}");
    let scan = |c: char| format!("scan[{c}]");
    let stay = |name: &str| format!("stay[{name}]");

    let mut states: Vec<String> = vec!["boot".into()];
    states.push(scan(blank));
    for &c in &g.alphabet {
        if c != blank {
            states.push(scan(c));
        }
    }
    states.push("rewind".into());
    for s in &g.states {
        states.push(sim(s));
    }
    let mut stay_targets: Vec<String> = Vec::new();
    for (_, _, next, _, mv) in &g.rules {
        if *mv == GenMove::S && !stay_targets.contains(next) {
            stay_targets.push(next.clone());
        }
    }
    for t in &stay_targets {
        states.push(stay(t));
    }
    states.push("dead".into());

    let mut rules: Vec<(String, char, String, char, Move)> = Vec::new();
    // boot
    for &c in &g.alphabet {
        if c == blank {
            rules.push(("boot".into(), blank, scan(blank), blank, Move::R));
        } else {
            rules.push(("boot".into(), c, "dead".into(), c, Move::R));
        }
    }
    // The general machine's first step happens once the head is back on the
    // shifted start cell reading blank; encode it directly.
    let first_step = |from: String, rules: &mut Vec<(String, char, String, char, Move)>| {
        match g.rule_for(&g.init, blank) {
            Some((_, _, next, write, GenMove::L)) => {
                rules.push((from, blank, sim(next), *write, Move::L));
            }
            Some((_, _, next, write, GenMove::R)) => {
                rules.push((from, blank, sim(next), *write, Move::R));
            }
            Some((_, _, next, write, GenMove::S)) => {
                rules.push((from, blank, stay(next), *write, Move::R));
            }
            None => rules.push((from, blank, "dead".into(), blank, Move::R)),
        }
    };
    // read phase: deposit the previously read symbol one cell to the right
    for &pending in &g.alphabet {
        for &c in &g.alphabet {
            if c != blank {
                rules.push((scan(pending), c, scan(c), pending, Move::R));
            }
        }
        if pending == blank {
            // empty input: the head already sits on the shifted start cell
            first_step(scan(blank), &mut rules);
        } else {
            rules.push((scan(pending), blank, "rewind".into(), pending, Move::L));
        }
    }
    // rewind to the blank that marks the shifted start cell
    for &c in &g.alphabet {
        if c != blank {
            rules.push(("rewind".into(), c, "rewind".into(), c, Move::L));
        }
    }
    first_step("rewind".into(), &mut rules);
    // simulated general states
    for q in &g.states {
        if g.accept.contains(q) {
            continue;
        }
        for &c in &g.alphabet {
            match g.rule_for(q, c) {
                Some((_, _, next, write, GenMove::L)) => {
                    rules.push((sim(q), c, sim(next), *write, Move::L));
                }
                Some((_, _, next, write, GenMove::R)) => {
                    rules.push((sim(q), c, sim(next), *write, Move::R));
                }
                Some((_, _, next, write, GenMove::S)) => {
                    rules.push((sim(q), c, stay(next), *write, Move::R));
                }
                None => rules.push((sim(q), c, "dead".into(), c, Move::R)),
            }
        }
    }
    // stay helpers step back left without touching the tape
    for t in &stay_targets {
        for &c in &g.alphabet {
            rules.push((stay(t), c, sim(t), c, Move::L));
        }
    }
    for &c in &g.alphabet {
        rules.push(("dead".into(), c, "dead".into(), c, Move::R));
    }

    let accept: Vec<String> = g.accept.iter().map(|s| sim(s)).collect();
    TuringMachine::new(
        states,
        g.alphabet.clone(),
        blank,
        "boot",
        &scan(blank),
        &accept,
        &rules,
    )
}

/// The restricted RNN encoder-decoder: h_i = σ(x_i·W + h_{i-1}·V) over the
/// input, then g_t = σ(g_{t-1}·U) with g_0 = h_n. No biases, no decoder
/// input feedback, identity output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RnnEncDec {
    pub dim: usize,
    #[serde(rename = "W")]
    pub w: RatMat,
    #[serde(rename = "V")]
    pub v: RatMat,
    #[serde(rename = "U")]
    pub u: RatMat,
}

impl RnnEncDec {
    pub fn new(dim: usize, w: RatMat, v: RatMat, u: RatMat) -> Result<Self> {
        for (name, m) in [("W", &w), ("V", &v), ("U", &u)] {
            if m.rows() != dim || m.cols() != dim {
                return Err(Error::dim(format!("matrix {name}"), dim, m.rows().max(m.cols())));
            }
        }
        Ok(RnnEncDec { dim, w, v, u })
    }

    fn sigma_vec(v: RatVec) -> RatVec {
        v.map(|x| sigma_pl(x))
    }

    /// Encoder states h_0..h_n followed by decoder states g_0..g_r.
    pub fn run(&self, xs: &[RatVec], r: usize) -> Result<(Vec<RatVec>, Vec<RatVec>)> {
        let mut hs = vec![RatVec::zeros(self.dim)];
        for (i, x) in xs.iter().enumerate() {
            if x.dim() != self.dim {
                return Err(Error::dim(format!("input vector {}", i + 1), self.dim, x.dim()));
            }
            let pre = self.w.vec_mul(x)?.add(&self.v.vec_mul(hs.last().unwrap())?)?;
            hs.push(Self::sigma_vec(pre));
        }
        let gs = self.decoder_iterates(hs.last().unwrap(), r)?;
        Ok((hs, gs))
    }

    /// seed, σ(seed·U), σ(σ(seed·U)·U), ...
    pub fn decoder_iterates(&self, seed: &RatVec, steps: usize) -> Result<Vec<RatVec>> {
        let mut gs = vec![seed.clone()];
        for _ in 0..steps {
            let pre = self.u.vec_mul(gs.last().unwrap())?;
            gs.push(Self::sigma_vec(pre));
        }
        Ok(gs)
    }
}

/// Convenience wrapper matching the spec'd operation shape.
pub fn rnn_run(rnn: &RnnEncDec, xs: &[RatVec], r: usize) -> Result<(Vec<RatVec>, Vec<RatVec>)> {
    rnn.run(xs, r)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TmRuleFile {
    state: String,
    read: String,
    next: String,
    write: String,
    #[serde(rename = "move")]
    mv: String,
}

/// The machine file schema. Field names are fixed; unknown fields rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TmSpecFile {
    states: Vec<String>,
    alphabet: Vec<String>,
    blank: String,
    init: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    read_state: Option<String>,
    accept: Vec<String>,
    delta: Vec<TmRuleFile>,
}

fn single_char(field: &str, s: &str) -> Result<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(Error::Parse(format!(
            "{field} must be a single character, got {s:?}"
        ))),
    }
}

fn parse_tm_file(text: &str) -> Result<(GeneralTm, Vec<(String, char, GenMove)>)> {
    let file: TmSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("machine file: {e}")))?;
    let alphabet: Vec<char> = file
        .alphabet
        .iter()
        .map(|s| single_char("alphabet symbol", s))
        .collect::<Result<_>>()?;
    let blank = single_char("blank", &file.blank)?;
    let mut rules = Vec::new();
    let mut rule_meta = Vec::new();
    for r in &file.delta {
        let read = single_char("rule read symbol", &r.read)?;
        let write = single_char("rule write symbol", &r.write)?;
        let mv = match r.mv.as_str() {
            "L" => GenMove::L,
            "R" => GenMove::R,
            "S" => GenMove::S,
            other => {
                return Err(Error::Parse(format!(
                    "rule ({:?}, {:?}): move must be \"L\", \"R\" or \"S\", got {other:?}",
                    r.state, r.read
                )))
            }
        };
        rule_meta.push((r.state.clone(), read, mv));
        rules.push((r.state.clone(), read, r.next.clone(), write, mv));
    }
    Ok((
        GeneralTm {
            states: file.states,
            alphabet,
            blank,
            init: file.init,
            read_state: file.read_state,
            accept: file.accept,
            rules,
        },
        rule_meta,
    ))
}

/// Strict parse: the document must describe an already-normalized machine.
/// Stay-moves and missing pieces produce diagnostics naming the offender.
pub fn parse_tm_spec(text: &str) -> Result<TuringMachine> {
    let (general, rule_meta) = parse_tm_file(text)?;
    for (state, read, mv) in &rule_meta {
        if *mv == GenMove::S {
            return Err(Error::invalid(
                "machine",
                format!("rule ({state:?}, '{read}') uses a stay move"),
            ));
        }
    }
    general.try_strict()
}

/// Lenient parse for the normalizer's input.
pub fn parse_general_tm(text: &str) -> Result<GeneralTm> {
    Ok(parse_tm_file(text)?.0)
}

/// Canonical machine file text (pretty JSON, trailing newline).
pub fn serialize_tm(tm: &TuringMachine) -> String {
    let mut delta = Vec::new();
    for q in 0..tm.n_states() {
        for s in 0..tm.n_syms() {
            if let Some((p, v, mv)) = tm.step(q, s) {
                delta.push(TmRuleFile {
                    state: tm.states()[q].clone(),
                    read: tm.alphabet()[s].to_string(),
                    next: tm.states()[p].clone(),
                    write: tm.alphabet()[v].to_string(),
                    mv: mv.to_string(),
                });
            }
        }
    }
    let file = TmSpecFile {
        states: tm.states().to_vec(),
        alphabet: tm.alphabet().iter().map(|c| c.to_string()).collect(),
        blank: tm.alphabet()[tm.blank()].to_string(),
        init: tm.states()[tm.init()].clone(),
        read_state: Some(tm.states()[tm.read_state()].clone()),
        accept: tm
            .accepting_states()
            .iter()
            .map(|&q| tm.states()[q].clone())
            .collect(),
        delta,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("machine serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// Fixture machines
// ---------------------------------------------------------------------------

/// Small machines used throughout the test and verification suites.
pub mod fixtures {
    use super::*;

    fn rules(
        raw: &[(&str, char, &str, char, Move)],
    ) -> Vec<(String, char, String, char, Move)> {
        raw.iter()
            .map(|(q, s, p, v, m)| (q.to_string(), *s, p.to_string(), *v, *m))
            .collect()
    }

    /// Accepts exactly the binary words with an even number of 1s; rejecting
    /// runs sweep right forever.
    pub fn even_ones() -> TuringMachine {
        use Move::R;
        TuringMachine::new(
            ["start", "even", "odd", "accept"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec!['0', '1', '#'],
            '#',
            "start",
            "even",
            &["accept".to_string()],
            &rules(&[
                ("start", '0', "start", '0', R),
                ("start", '1', "start", '1', R),
                ("start", '#', "even", '#', R),
                ("even", '0', "even", '0', R),
                ("even", '1', "odd", '1', R),
                ("even", '#', "accept", '#', R),
                ("odd", '0', "odd", '0', R),
                ("odd", '1', "even", '1', R),
                ("odd", '#', "odd", '#', R),
            ]),
        )
        .expect("fixture machine is valid")
    }

    /// Accepts a^k b^k (k >= 0) by zigzag marking: a's become X, b's become
    /// Y. Heavily revisits cells, exercising the last-visit machinery.
    pub fn anbn() -> TuringMachine {
        use Move::{L, R};
        TuringMachine::new(
            [
                "start", "read", "back", "seek_a", "seek_b", "check", "dead", "accept",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            vec!['a', 'b', 'X', 'Y', '#'],
            '#',
            "start",
            "read",
            &["accept".to_string()],
            &rules(&[
                ("start", 'a', "dead", 'a', R),
                ("start", 'b', "dead", 'b', R),
                ("start", 'X', "dead", 'X', R),
                ("start", 'Y', "dead", 'Y', R),
                ("start", '#', "read", '#', R),
                ("read", 'a', "read", 'a', R),
                ("read", 'b', "read", 'b', R),
                ("read", 'X', "read", 'X', R),
                ("read", 'Y', "read", 'Y', R),
                ("read", '#', "back", '#', L),
                ("back", 'a', "back", 'a', L),
                ("back", 'b', "back", 'b', L),
                ("back", 'Y', "back", 'Y', L),
                ("back", 'X', "seek_a", 'X', R),
                ("back", '#', "seek_a", '#', R),
                ("seek_a", 'X', "seek_a", 'X', R),
                ("seek_a", 'a', "seek_b", 'X', R),
                ("seek_a", 'Y', "check", 'Y', R),
                ("seek_a", 'b', "dead", 'b', R),
                ("seek_a", '#', "accept", '#', R),
                ("seek_b", 'a', "seek_b", 'a', R),
                ("seek_b", 'Y', "seek_b", 'Y', R),
                ("seek_b", 'b', "back", 'Y', L),
                ("seek_b", 'X', "dead", 'X', R),
                ("seek_b", '#', "dead", '#', R),
                ("check", 'Y', "check", 'Y', R),
                ("check", 'a', "dead", 'a', R),
                ("check", 'b', "dead", 'b', R),
                ("check", 'X', "dead", 'X', R),
                ("check", '#', "accept", '#', R),
                ("dead", 'a', "dead", 'a', R),
                ("dead", 'b', "dead", 'b', R),
                ("dead", 'X', "dead", 'X', R),
                ("dead", 'Y', "dead", 'Y', R),
                ("dead", '#', "dead", '#', R),
            ]),
        )
        .expect("fixture machine is valid")
    }

    /// Reads a unary number, appends one mark, rescans and accepts. Always
    /// accepts; writes past the input and revisits every cell.
    pub fn unary_successor() -> TuringMachine {
        use Move::{L, R};
        TuringMachine::new(
            ["start", "read", "left", "right", "dead", "accept"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec!['1', '#'],
            '#',
            "start",
            "read",
            &["accept".to_string()],
            &rules(&[
                ("start", '1', "dead", '1', R),
                ("start", '#', "read", '#', R),
                ("read", '1', "read", '1', R),
                ("read", '#', "left", '1', L),
                ("left", '1', "left", '1', L),
                ("left", '#', "right", '#', R),
                ("right", '1', "right", '1', R),
                ("right", '#', "accept", '#', R),
                ("dead", '1', "dead", '1', R),
                ("dead", '#', "dead", '#', R),
            ]),
        )
        .expect("fixture machine is valid")
    }

    pub fn all() -> Vec<(&'static str, TuringMachine)> {
        vec![
            ("even_ones", even_ones()),
            ("anbn", anbn()),
            ("unary_successor", unary_successor()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_step_trace_records_initial_configuration() {
        let tm = fixtures::even_ones();
        let tr = tm_trace(&tm, "101", 0).unwrap();
        assert_eq!(tr.steps(), 0);
        assert_eq!(tr.state(0), tm.init());
        assert_eq!(tr.read_sym(0), tm.blank());
        assert_eq!(tr.head_move_prev(0), Rat::zero());
        assert_eq!(tr.head_cell(0), 0);
    }

    #[test]
    fn even_ones_accepts_two_ones() {
        let tm = fixtures::even_ones();
        let tr = tm_trace(&tm, "11", 8).unwrap();
        assert_eq!(tr.accept_time(), Some(4));
        let cells: Vec<i64> = (0..=4).map(|i| tr.head_cell(i)).collect();
        assert_eq!(cells, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn even_ones_rejects_single_one() {
        let tm = fixtures::even_ones();
        let tr = tm_trace(&tm, "1", 32).unwrap();
        assert_eq!(tr.accept_time(), None);
        assert_eq!(tr.steps(), 32);
    }

    #[test]
    fn last_visit_sees_revisits() {
        let tm = fixtures::unary_successor();
        let tr = tm_trace(&tm, "11", 40).unwrap();
        // after the turnaround some step revisits an old cell
        let mut found = false;
        for i in 1..=tr.steps() {
            if tr.last_visit(i) + 1 < i {
                found = true;
                break;
            }
        }
        assert!(found, "expected a revisit with last_visit(i) < i-1");
    }

    #[test]
    fn anbn_language_is_correct_on_short_words() {
        let tm = fixtures::anbn();
        for len in 0..=6usize {
            for bits in 0..(1usize << len) {
                let w: String = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { 'b' } else { 'a' })
                    .collect();
                let expected = {
                    let k = w.len() / 2;
                    w.len() % 2 == 0
                        && w.chars().take(k).all(|c| c == 'a')
                        && w.chars().skip(k).all(|c| c == 'b')
                };
                let tr = tm_trace(&tm, &w, 200).unwrap();
                assert_eq!(tr.accept_time().is_some(), expected, "word {w:?}");
            }
        }
    }

    #[test]
    fn unary_successor_accept_time() {
        let tm = fixtures::unary_successor();
        for n in 0..=6usize {
            let w = "1".repeat(n);
            let tr = tm_trace(&tm, &w, 100).unwrap();
            assert_eq!(tr.accept_time(), Some(3 * n + 5), "word {w:?}");
        }
    }

    /// Independent re-derivation of the trace invariants from the moves.
    fn check_trace_consistency(tm: &TuringMachine, tr: &TmTrace) {
        let mut c = 0i64;
        for i in 0..=tr.steps() {
            assert_eq!(tr.head_cell(i), c, "c({i})");
            // brute-force last visit
            let mut expect = i.saturating_sub(1);
            for j in (0..i).rev() {
                if tr.head_cell(j) == tr.head_cell(i) {
                    expect = j;
                    break;
                }
            }
            assert_eq!(tr.last_visit(i), expect, "ell({i})");
            if i < tr.steps() {
                let (p, v, m) = tm.step(tr.state(i), tr.read_sym(i)).unwrap();
                assert_eq!(p, tr.state(i + 1));
                assert_eq!(v, tr.written(i));
                assert_eq!(m, tr.head_move(i));
                c += match m {
                    Move::L => -1,
                    Move::R => 1,
                };
            }
        }
    }

    #[test]
    fn trace_invariants_hold_on_fixtures() {
        for (name, tm) in fixtures::all() {
            for w in ["", "1", "11", "111"] {
                let w: String = match name {
                    "anbn" => w.chars().map(|_| 'a').collect(),
                    _ => w.to_string(),
                };
                let tr = tm_trace(&tm, &w, 60).unwrap();
                check_trace_consistency(&tm, &tr);
            }
        }
        let tm = fixtures::anbn();
        let tr = tm_trace(&tm, "aabb", 200).unwrap();
        check_trace_consistency(&tm, &tr);
    }

    #[test]
    fn head_left_of_zero_is_an_error() {
        // passes structural validation but walks left after the read phase
        let tm = TuringMachine::new(
            vec!["s".into(), "r".into(), "back".into(), "acc".into()],
            vec!['1', '#'],
            '#',
            "s",
            "r",
            &["acc".to_string()],
            &[
                ("s".into(), '1', "s".into(), '1', Move::R),
                ("s".into(), '#', "r".into(), '#', Move::R),
                ("r".into(), '1', "r".into(), '1', Move::R),
                ("r".into(), '#', "back".into(), '#', Move::L),
                ("back".into(), '1', "back".into(), '1', Move::L),
                ("back".into(), '#', "back".into(), '#', Move::L),
            ],
        )
        .unwrap();
        assert!(tm_trace(&tm, "1", 20).is_err());
    }

    #[test]
    fn normalize_keeps_already_normalized_machine() {
        let tm = fixtures::even_ones();
        let text = serialize_tm(&tm);
        let general = parse_general_tm(&text).unwrap();
        let renorm = normalize_tm(&general).unwrap();
        assert_eq!(renorm, tm);
    }

    #[test]
    fn normalize_splits_stay_moves_with_one_fresh_state() {
        // parity machine written with a stay-move
        let base = GeneralTm {
            states: vec!["q0".into(), "q1".into(), "acc".into()],
            alphabet: vec!['0', '1', '#'],
            blank: '#',
            init: "q0".into(),
            read_state: None,
            accept: vec!["acc".into()],
            rules: vec![
                ("q0".into(), '#', "q0".into(), '#', GenMove::R),
                ("q0".into(), '1', "q1".into(), '1', GenMove::R),
                ("q0".into(), '0', "q0".into(), '0', GenMove::R),
                ("q1".into(), '1', "q0".into(), '1', GenMove::R),
                ("q1".into(), '0', "q1".into(), '0', GenMove::R),
            ],
        };
        let mut with_stay = base.clone();
        with_stay.rules.push(("q1".into(), '#', "q1".into(), '#', GenMove::S));

        let plain = normalize_tm(&base).unwrap();
        let split = normalize_tm(&with_stay).unwrap();
        assert_eq!(split.n_states(), plain.n_states() + 1);

        for len in 0..=6usize {
            for bits in 0..(1usize << len) {
                let w: String = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { '1' } else { '0' })
                    .collect();
                let (outcome, _) = with_stay.run(&w, 120).unwrap();
                let tr = tm_trace(&split, &w, 400).unwrap();
                match outcome {
                    GeneralOutcome::Accepted { .. } => {
                        assert!(tr.accept_time().is_some(), "word {w:?}")
                    }
                    GeneralOutcome::Halted { .. } => {
                        assert!(tr.accept_time().is_none(), "word {w:?}")
                    }
                    GeneralOutcome::OutOfFuel => {}
                }
            }
        }
    }

    #[test]
    fn normalize_shields_one_cell_left_of_start() {
        // steps one cell left of its start before accepting
        let g = GeneralTm {
            states: vec!["s0".into(), "s1".into(), "acc".into()],
            alphabet: vec!['1', '#'],
            blank: '#',
            init: "s0".into(),
            read_state: None,
            accept: vec!["acc".into()],
            rules: vec![
                ("s0".into(), '#', "s1".into(), '#', GenMove::L),
                ("s0".into(), '1', "s1".into(), '1', GenMove::L),
                ("s1".into(), '#', "acc".into(), '#', GenMove::R),
                ("s1".into(), '1', "acc".into(), '1', GenMove::R),
            ],
        };
        let (_, min_head) = g.run("11", 50).unwrap();
        assert_eq!(min_head, -1);
        let tm = normalize_tm(&g).unwrap();
        let tr = tm_trace(&tm, "11", 100).unwrap();
        assert!(tr.accept_time().is_some());
        let min_cell = (0..=tr.steps()).map(|i| tr.head_cell(i)).min().unwrap();
        assert_eq!(min_cell, 0);
    }

    #[test]
    fn parse_rejects_stay_moves_with_rule_name() {
        let text = r##"{
            "states": ["a", "r", "f"],
            "alphabet": ["1", "#"],
            "blank": "#",
            "init": "a",
            "read_state": "r",
            "accept": ["f"],
            "delta": [
                {"state": "a", "read": "#", "next": "r", "write": "#", "move": "R"},
                {"state": "a", "read": "1", "next": "a", "write": "1", "move": "R"},
                {"state": "r", "read": "1", "next": "r", "write": "1", "move": "S"},
                {"state": "r", "read": "#", "next": "f", "write": "#", "move": "R"}
            ]
        }"##;
        let err = parse_tm_spec(text).unwrap_err();
        assert!(err.to_string().contains("\"r\""), "{err}");
        assert!(err.to_string().contains("stay"), "{err}");
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let text = r##"{"states": [], "alphabet": [], "blank": "#", "init": "a",
                        "accept": [], "delta": [], "extra": 1}"##;
        assert!(parse_tm_spec(text).is_err());
    }

    #[test]
    fn tm_file_round_trip_is_byte_identical() {
        for (_, tm) in fixtures::all() {
            let text = serialize_tm(&tm);
            let parsed = parse_tm_spec(&text).unwrap();
            assert_eq!(serialize_tm(&parsed), text);
            assert_eq!(parsed, tm);
        }
    }

    #[test]
    fn rnn_run_zero_weights() {
        let rnn = RnnEncDec::new(2, RatMat::zeros(2, 2), RatMat::zeros(2, 2), RatMat::zeros(2, 2))
            .unwrap();
        let xs = vec![RatVec::from_ints(&[1, 1]); 3];
        let (hs, gs) = rnn.run(&xs, 4).unwrap();
        assert!(hs.iter().all(RatVec::is_zero));
        assert!(gs.iter().all(RatVec::is_zero));
    }

    #[test]
    fn rnn_run_scalar_saturates() {
        let one = RatMat::identity(1);
        let rnn = RnnEncDec::new(1, one.clone(), one.clone(), one).unwrap();
        let xs = vec![
            RatVec::new(vec![Rat::ratio(1, 2)]),
            RatVec::new(vec![Rat::ratio(1, 2)]),
        ];
        let (hs, gs) = rnn.run(&xs, 3).unwrap();
        assert_eq!(
            hs,
            vec![
                RatVec::zeros(1),
                RatVec::new(vec![Rat::ratio(1, 2)]),
                RatVec::new(vec![Rat::one()]),
            ]
        );
        assert!(gs.iter().all(|g| g[0] == Rat::one()));
    }

    fn arb_general_tm() -> impl Strategy<Value = GeneralTm> {
        let mv = prop_oneof![
            Just(GenMove::L),
            Just(GenMove::R),
            Just(GenMove::R),
            Just(GenMove::S)
        ];
        let rule = (0usize..3, 0usize..3, 0usize..4, 0usize..3, mv);
        proptest::collection::vec(rule, 6..12).prop_map(|raw| {
            let states = vec!["q0".to_string(), "q1".into(), "q2".into(), "acc".into()];
            let alphabet = vec!['0', '1', '#'];
            let mut rules = Vec::new();
            for (q, s, p, v, m) in raw {
                let key = (states[q].clone(), alphabet[s]);
                if rules
                    .iter()
                    .any(|(rq, rs, _, _, _): &(String, char, _, _, _)| (rq.clone(), *rs) == key)
                {
                    continue;
                }
                rules.push((states[q].clone(), alphabet[s], states[p].clone(), alphabet[v], m));
            }
            GeneralTm {
                states,
                alphabet,
                blank: '#',
                init: "q0".into(),
                read_state: None,
                accept: vec!["acc".into()],
                rules,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        // Normalization preserves acceptance wherever the general machine
        // halts in bound and stays within its one-cell left excursion.
        #[test]
        fn normalize_preserves_language(g in arb_general_tm(), w in "[01]{0,5}") {
            let (outcome, min_head) = g.run(&w, 60).unwrap();
            prop_assume!(min_head >= -1);
            let tm = normalize_tm(&g).unwrap();
            let tr = tm_trace(&tm, &w, 300).unwrap();
            match outcome {
                GeneralOutcome::Accepted { .. } => prop_assert!(tr.accept_time().is_some()),
                GeneralOutcome::Halted { .. } => prop_assert!(tr.accept_time().is_none()),
                GeneralOutcome::OutOfFuel => {}
            }
        }
    }
}
