//! Command-line front end for the exact-rational network workbench.
//!
//! Exit codes: 0 on success or PASS, 1 on a verification FAIL or
//! disagreement, 2 on usage, parse or validation errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exactnn_core::analysis::propinv_samples;
use exactnn_core::linalg::RatVec;
use exactnn_core::machines::{normalize_tm, parse_general_tm, parse_tm_spec, serialize_tm};
use exactnn_core::neural_gpu::{
    compile_rnn_to_ngpu, ngpu_run, parse_ngpu_file, serialize_ngpu_file, NgpuInputLifter,
    NgpuNetFile,
};
use exactnn_core::rnn_compiler::{compile_rnn, parse_rnn_spec};
use exactnn_core::tm_compiler::{compile_tm, TmLayout};
use exactnn_core::transformer::{Recognizer, SlotRange, TransRunner};
use exactnn_core::verify::{slot_label, verify_ngpu, verify_rnn, verify_tm, InputOutcome};

#[derive(Parser)]
#[command(
    name = "exactnn",
    about = "Exact-rational transformer and gated-convolution workbench",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a normalized machine spec into a transformer network file.
    CompileTm {
        /// Machine spec (JSON).
        tm: PathBuf,
        /// Output network file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the vector slot table instead of compiling.
        #[arg(long)]
        layout: bool,
    },
    /// Compile an RNN spec into a transformer network file.
    CompileRnn {
        rnn: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile an RNN spec into a gated-convolution network file.
    CompileNgpu {
        rnn: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a compiled network on one input word and print its outputs.
    Run {
        net: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long)]
        steps: usize,
        /// One line per step with named slots.
        #[arg(long)]
        trace: bool,
        /// Tab-separated output for machine consumption.
        #[arg(long)]
        tsv: bool,
    },
    /// Compile a machine or RNN spec and diff it against the reference
    /// interpreter on every input word from a file.
    Verify {
        spec: PathBuf,
        /// Text file with one input word per line (blank for the empty word).
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        steps: usize,
    },
    /// Normalize a general machine spec (stay-moves, partial transitions).
    Normalize {
        tm: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample the proportion class of a word and check that a network
    /// produces identical outputs on every member.
    Propinv {
        #[arg(long)]
        word: String,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 12)]
        max_len: usize,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        steps: usize,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text)
                .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn print_slot_table(table: &[SlotRange]) {
    println!("{:<14} {:>6} {:>5}", "slot", "start", "len");
    for r in table {
        println!("{:<14} {:>6} {:>5}", r.name, r.start + 1, r.len);
    }
}

fn format_step(layout: Option<&[SlotRange]>, t: usize, v: &RatVec) -> String {
    let mut line = format!("t={t}");
    match layout {
        Some(table) => {
            for r in table {
                if r.len == 1 {
                    line.push_str(&format!(" {}={}", r.name, v[r.start]));
                } else {
                    let vals: Vec<String> =
                        (0..r.len).map(|k| v[r.start + k].to_string()).collect();
                    line.push_str(&format!(" {}=[{}]", r.name, vals.join(",")));
                }
            }
        }
        None => {
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            line.push_str(&format!(" y=[{}]", vals.join(",")));
        }
    }
    line
}

fn tsv_header(layout: Option<&[SlotRange]>, dim: usize) -> String {
    let mut cols = vec!["step".to_string()];
    for i in 0..dim {
        cols.push(slot_label(layout, i));
    }
    cols.join("\t")
}

fn tsv_row(t: usize, v: &RatVec) -> String {
    let mut cols = vec![t.to_string()];
    cols.extend(v.iter().map(|x| x.to_string()));
    cols.join("\t")
}

fn run_transformer_net(rec: &Recognizer, input: &str, steps: usize, tsv: bool) -> anyhow::Result<i32> {
    rec.validate()?;
    let xs = rec.embed_word(input)?;
    let mut runner = TransRunner::new(rec, &xs, rec.seed.clone())?;
    let layout = rec.layout.as_deref();
    if tsv {
        println!("{}", tsv_header(layout, rec.dim()));
    }
    let mut accept = None;
    for t in 1..=steps {
        let y = runner.step()?;
        if tsv {
            println!("{}", tsv_row(t, &y));
        } else {
            println!("{}", format_step(layout, t, &y));
        }
        if accept.is_none() && rec.final_pred.matches(&y) {
            accept = Some(t);
            break;
        }
    }
    match accept {
        Some(t) => println!("accept at step {t}"),
        None => println!("undecided after {steps} steps"),
    }
    Ok(0)
}

fn run_ngpu_net(file: &NgpuNetFile, input: &str, steps: usize, tsv: bool) -> anyhow::Result<i32> {
    let embed = file
        .embed
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("network file carries no embedding; cannot map words"))?;
    let xs: Vec<RatVec> = input
        .chars()
        .map(|c| {
            embed
                .get(&c)
                .cloned()
                .ok_or_else(|| anyhow::anyhow!("symbol '{c}' is not in the embedding"))
        })
        .collect::<anyhow::Result<_>>()?;
    let ys = ngpu_run(&xs, steps, &file.params)?;
    let layout = file.layout.as_deref();
    if tsv {
        println!("{}", tsv_header(layout, file.params.depth()));
    }
    for (t, y) in ys.iter().enumerate() {
        if tsv {
            println!("{}", tsv_row(t + 1, y));
        } else {
            println!("{}", format_step(layout, t + 1, y));
        }
    }
    Ok(0)
}

fn report_outcomes(kind: &str, results: &[(String, InputOutcome)]) -> bool {
    let mut ok = true;
    for (w, outcome) in results {
        let shown = if w.is_empty() { "<empty>" } else { w };
        match outcome {
            InputOutcome::Pass {
                steps_checked,
                accept_step,
            } => {
                let accept = match accept_step {
                    Some(t) => format!(", accept at {t}"),
                    None => String::new(),
                };
                println!("{kind} {shown}: PASS ({steps_checked} steps{accept})");
            }
            InputOutcome::Fail {
                step,
                slot,
                expected,
                got,
            } => {
                ok = false;
                println!(
                    "{kind} {shown}: FAIL at step {step}, slot {slot}: expected {expected}, got {got}"
                );
            }
        }
    }
    ok
}

fn read_inputs(path: &Path) -> anyhow::Result<Vec<String>> {
    Ok(read(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.starts_with('#'))
        .collect())
}

fn cmd_verify(spec: &Path, inputs: &Path, steps: usize) -> anyhow::Result<i32> {
    let text = read(spec)?;
    let words = read_inputs(inputs)?;
    if steps == 0 {
        eprintln!("warning: steps=0 checks nothing; reporting a vacuous PASS");
    }
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let ok = if value.get("delta").is_some() {
        let tm = parse_tm_spec(&text)?;
        let rec = compile_tm(&tm)?;
        let report = verify_tm(&tm, &rec, &words, steps)?;
        report_outcomes("tm", &report.results)
    } else if value.get("W").is_some() {
        let (rnn, embed, accept) = parse_rnn_spec(&text)?;
        let rec = compile_rnn(&rnn, &embed, &accept)?;
        let report = verify_rnn(&rnn, &embed, &rec, &words, steps)?;
        let mut ok = report_outcomes("rnn->transformer", &report.results);
        let (params, lifter) = compile_rnn_to_ngpu(&rnn);
        let report = verify_ngpu(&rnn, &embed, &params, &lifter, &words, steps)?;
        ok &= report_outcomes("rnn->conv", &report.results);
        ok
    } else {
        anyhow::bail!("unrecognized spec file: expected a machine (delta) or an RNN (W)");
    };
    if ok {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL");
        Ok(1)
    }
}

fn cmd_propinv(
    word: &str,
    net: &Path,
    max_len: usize,
    count: usize,
    seed: u64,
    steps: usize,
) -> anyhow::Result<i32> {
    let rec = Recognizer::from_json(&read(net)?)?;
    if !rec.posenc.is_zero() {
        eprintln!("warning: network uses positional encodings; agreement is not expected");
    }
    let class = propinv_samples(word, max_len, count, seed)?;
    let run = |w: &str| -> anyhow::Result<Vec<RatVec>> {
        let xs = rec.embed_word(w)?;
        Ok(exactnn_core::transformer::run_trans(
            &xs,
            &rec.seed,
            steps,
            &rec,
        )?)
    };
    let base = run(word)?;
    let mut all_agree = true;
    println!("base {word}");
    for m in &class.members {
        if m == word {
            continue;
        }
        let verdict = if run(m)? == base {
            "AGREE"
        } else {
            all_agree = false;
            "DIFFER"
        };
        println!("{m}: {verdict}");
    }
    Ok(if all_agree { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::CompileTm { tm, output, layout } => {
            let machine = parse_tm_spec(&read(&tm)?)?;
            if layout {
                print_slot_table(&TmLayout::new(&machine).slot_table());
                return Ok(0);
            }
            let rec = compile_tm(&machine)?;
            let mut text = rec.to_json();
            text.push('\n');
            emit(output.as_deref(), &text)?;
            Ok(0)
        }
        Cmd::CompileRnn { rnn, output } => {
            let (rnn, embed, accept) = parse_rnn_spec(&read(&rnn)?)?;
            let rec = compile_rnn(&rnn, &embed, &accept)?;
            let mut text = rec.to_json();
            text.push('\n');
            emit(output.as_deref(), &text)?;
            Ok(0)
        }
        Cmd::CompileNgpu { rnn, output } => {
            let (rnn, embed, _) = parse_rnn_spec(&read(&rnn)?)?;
            let (params, lifter) = compile_rnn_to_ngpu(&rnn);
            let lifted: BTreeMap<char, RatVec> = embed
                .iter()
                .map(|(&c, e)| Ok((c, lifter.apply(e)?)))
                .collect::<exactnn_core::Result<_>>()?;
            let file = NgpuNetFile {
                params,
                embed: Some(lifted),
                layout: Some(lifter.slot_table()),
            };
            emit(output.as_deref(), &serialize_ngpu_file(&file))?;
            Ok(0)
        }
        Cmd::Run {
            net,
            input,
            steps,
            trace: _,
            tsv,
        } => {
            let text = read(&net)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.get("kernel_update").is_some() {
                run_ngpu_net(&parse_ngpu_file(&text)?, &input, steps, tsv)
            } else {
                run_transformer_net(&Recognizer::from_json(&text)?, &input, steps, tsv)
            }
        }
        Cmd::Verify {
            spec,
            inputs,
            steps,
        } => cmd_verify(&spec, &inputs, steps),
        Cmd::Normalize { tm, output } => {
            let general = parse_general_tm(&read(&tm)?)?;
            let normalized = normalize_tm(&general)?;
            emit(output.as_deref(), &serialize_tm(&normalized))?;
            Ok(0)
        }
        Cmd::Propinv {
            word,
            net,
            max_len,
            count,
            seed,
            steps,
        } => cmd_propinv(&word, &net, max_len, count, seed, steps),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
