use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use sosbench::bisim::{compute_bisim, replay_trace, BisimVerdict, StoredTransition};
use sosbench::engine::{TermId, TransitionStore};
use sosbench::format::format_report;
use sosbench::instances::{self, Machine, RunEnd};
use sosbench::ops::validate_signature_ops;
use sosbench::run::{congruence_suite, howe_suite, RunConfig};
use sosbench::sig::Signature;
use sosbench::syntax::{parse_signature, parse_term, Printer};
use sosbench::term::{EdgeId, Term};

/// Structural operational semantics workbench.
#[derive(Parser)]
#[command(name = "sosbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Engine rounds.
    #[arg(long, global = true, default_value_t = 30)]
    fuel: usize,
    /// Largest number of terms the engine may consider.
    #[arg(long, global = true, default_value_t = 5000)]
    max_universe: usize,
    /// Largest label size in the label universe.
    #[arg(long, global = true, default_value_t = 2)]
    label_size: usize,
    /// Largest seed term size for `howe` and `congruence`.
    #[arg(long, global = true, default_value_t = 5)]
    term_size: usize,
    /// Samples for randomized checks.
    #[arg(long, global = true, default_value_t = 200)]
    samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print a JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
}

impl ConfigArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            fuel: self.fuel,
            max_universe: self.max_universe,
            label_size: self.label_size,
            term_size: self.term_size,
            samples: self.samples,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a signature file and validate its operations.
    Validate { sig: PathBuf },
    /// Check every rule against the rule format.
    FormatCheck { sig: PathBuf },
    /// List the derived transitions of a term.
    Step { sig: PathBuf, term: String },
    /// Silent-step normal forms of a term.
    Eval {
        sig: PathBuf,
        term: String,
        /// Use the direct shift/reset machine instead of the rule engine.
        #[arg(long)]
        machine: bool,
    },
    /// Decide bounded bisimilarity of two terms.
    Bisim { sig: PathBuf, left: String, right: String },
    /// Howe closure of bisimilarity and its property suite.
    Howe { sig: PathBuf },
    /// Randomized constructor-congruence check of bisimilarity.
    Congruence { sig: PathBuf },
    /// Compare the rule engine with the direct shift/reset machine.
    OracleDiff { term: String },
}

/// Outcome of a command: its results and whether every check passed.
struct Outcome {
    results: Value,
    text: String,
    passed: bool,
}

fn load_signature(path: &Path) -> Result<Signature> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => match path.to_str() {
            // the shipped instances are available by file name anywhere
            Some("shiftreset.sig") => instances::SHIFT_RESET_SIG.to_string(),
            Some("pcf.sig") => instances::PCF_SIG.to_string(),
            _ => return Err(e).with_context(|| format!("reading {}", path.display())),
        },
    };
    parse_signature(&text).map_err(|e| anyhow::anyhow!("{}:{e}", path.display()))
}

fn term(sig: &Signature, text: &str) -> Result<Term> {
    parse_term(sig, text).map_err(|e| anyhow::anyhow!("term `{text}`: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn show_transition(p: &Printer, store: &TransitionStore, t: &StoredTransition) -> String {
    let labels: Vec<Term> = t.labels.iter().map(|&l| store.term(l).clone()).collect();
    p.transition(store.term(t.source), t.edge, &labels, store.term(t.target))
}

fn validate(sig: &Signature) -> Outcome {
    let ops = validate_signature_ops(sig);
    let results = json!({
        "sorts": sig.sorts.len(),
        "subsorts": sig.subsorts.len(),
        "constructors": sig.cons.len(),
        "operations": sig.ops.len(),
        "clauses": sig.clauses.len(),
        "edges": sig.edges.len(),
        "rules": sig.rules.len(),
        "operation_issues": to_json(&ops.issues),
    });
    let mut text = format!(
        "{} sorts, {} subsorts, {} constructors, {} operations, {} clauses, {} edge types, {} rules\n",
        sig.sorts.len(),
        sig.subsorts.len(),
        sig.cons.len(),
        sig.ops.len(),
        sig.clauses.len(),
        sig.edges.len(),
        sig.rules.len()
    );
    for p in &ops.issues {
        text.push_str(&format!("operation issue: {p:?}\n"));
    }
    Outcome { results, text, passed: ops.is_valid() }
}

fn format_check(sig: &Signature) -> Outcome {
    let report = format_report(sig);
    let mut text = format!("{:<12} {:<12} {:<12} {:<10} schedule\n", "rule", "structural", "cofibration", "coverage");
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    for r in &report.rules {
        let schedule = match &r.border.scheduled_order {
            Some(o) => format!("{o:?}"),
            None => "-".into(),
        };
        text.push_str(&format!(
            "{:<12} {:<12} {:<12} {:<10} {}\n",
            r.rule,
            verdict(r.structural.passed()),
            verdict(r.border.cofibration_passed()),
            verdict(r.border.coverage_passed()),
            schedule
        ));
        if let sosbench::format::Structuralness::Fail { witness } = &r.structural {
            text.push_str(&format!("  structuralness witness: {witness}\n"));
        }
        for s in &r.border.stuck {
            text.push_str(&format!("  stuck premise {}: {} ({})\n", s.index, s.premise, s.reason));
        }
        if !r.border.uncovered.is_empty() {
            text.push_str(&format!("  uncovered target metavariables: {}\n", r.border.uncovered.join(", ")));
        }
    }
    text.push_str(if report.passed { "format check passed\n" } else { "format check FAILED\n" });
    Outcome { results: to_json(&report), text, passed: report.passed }
}

fn step(sig: &Signature, config: &RunConfig, t: &Term) -> Outcome {
    let store = config.derive(sig, std::slice::from_ref(t));
    let p = Printer::new(sig);
    let id = store.id_of(t).expect("seeds are in the universe");
    let mut lines = Vec::new();
    let mut edges = Vec::new();
    for e in (0..sig.edges.len()).map(EdgeId::from) {
        if !store.edge_applies(sig, id, e) {
            continue;
        }
        let mut transitions = Vec::new();
        for (ls, tg) in store.successors(id, e) {
            let s = show_transition(&p, &store, &StoredTransition { source: id, edge: e, labels: ls.clone(), target: *tg });
            lines.push(s.clone());
            transitions.push(s);
        }
        edges.push(json!({
            "edge": sig.edge(e).name,
            "exhausted": store.is_exhausted(id, e),
            "transitions": transitions,
        }));
    }
    let mut text = lines.join("\n");
    text.push_str(&format!(
        "\n{} transitions; exhausted: {}; engine: {} rounds, fixpoint {}, universe {}\n",
        lines.len(),
        store.is_exhausted_term(sig, id),
        store.stats.rounds,
        store.stats.fixpoint,
        store.stats.universe
    ));
    let results = json!({ "term": p.term(t), "edges": edges, "stats": to_json(&store.stats) });
    Outcome { results, text, passed: true }
}

fn eval_engine(sig: &Signature, config: &RunConfig, t: &Term) -> Result<Outcome> {
    let Some(tau) = sig.edge_id("tau") else { bail!("signature has no `tau` edge type") };
    let store = config.derive(sig, std::slice::from_ref(t));
    let p = Printer::new(sig);
    let id = store.id_of(t).expect("seeds are in the universe");
    // normal forms: reachable terms whose only silent step is to themselves
    let normal: Vec<TermId> = store
        .successors(id, tau)
        .iter()
        .map(|(_, tg)| *tg)
        .filter(|&r| store.successors(r, tau).iter().all(|(_, x)| *x == r))
        .collect();
    let names: Vec<String> = normal.iter().map(|&n| p.term(store.term(n))).collect();
    let exhausted = store.is_exhausted(id, tau);
    let mut text = if names.is_empty() { "no normal form\n".to_string() } else { format!("{}\n", names.join("\n")) };
    text.push_str(&format!("exhausted: {exhausted}\n"));
    let results = json!({ "term": p.term(t), "normal_forms": names, "exhausted": exhausted });
    Ok(Outcome { results, text, passed: true })
}

fn eval_machine(sig: &Signature, config: &RunConfig, t: &Term) -> Result<Outcome> {
    let m = Machine::new(sig)?;
    m.check_program(t)?;
    let p = Printer::new(sig);
    let run = m.run(t, config.fuel);
    let (kind, result) = match &run.end {
        RunEnd::Value(v) => ("value", Some(p.term(v))),
        RunEnd::Stuck { .. } => ("control_stuck", run.states.last().map(|s| p.term(s))),
        RunEnd::Cycle => ("diverges", None),
        RunEnd::OutOfFuel => ("out_of_fuel", run.states.last().map(|s| p.term(s))),
    };
    let text = match &result {
        Some(r) => format!("{r}\n{kind} after {} steps\n", run.states.len() - 1),
        None => format!("{kind} after {} steps\n", run.states.len() - 1),
    };
    let results = json!({ "term": p.term(t), "outcome": kind, "result": result, "steps": run.states.len() - 1 });
    Ok(Outcome { results, text, passed: true })
}

fn bisim(sig: &Signature, config: &RunConfig, a: &Term, b: &Term) -> Result<Outcome> {
    let store = config.derive(sig, &[a.clone(), b.clone()]);
    let (_, verdicts) = compute_bisim(sig, &store, &[(a.clone(), b.clone())])?;
    let v = &verdicts[0];
    let p = Printer::new(sig);
    let pair = format!("({}, {})", p.term(a), p.term(b));
    let (results, text, passed) = match &v.verdict {
        BisimVerdict::EquivalentUpToBounds { depth, fuel, label_size, exhausted } => (
            json!({
                "verdict": "equivalent_up_to_bounds",
                "depth": depth, "fuel": fuel, "label_size": label_size, "exhausted": exhausted,
            }),
            format!(
                "{pair}: equivalent up to bounds (depth {depth}, fuel {fuel}, label size {label_size}, exhausted {exhausted})\n"
            ),
            true,
        ),
        BisimVerdict::Distinguished { trace } => {
            let mut text = format!("{pair}: distinguished\n");
            let mut steps = Vec::new();
            for s in trace {
                let challenge = show_transition(&p, &store, &s.challenge);
                let answers: Vec<String> = s.answers.iter().map(|x| show_transition(&p, &store, x)).collect();
                text.push_str(&format!("  {:?} challenges: {challenge}\n", s.challenger));
                if answers.is_empty() {
                    text.push_str("    no answer\n");
                }
                for a in &answers {
                    text.push_str(&format!("    answer: {a}\n"));
                }
                steps.push(json!({ "challenger": to_json(&s.challenger), "challenge": challenge, "answers": answers }));
            }
            let replays = replay_trace(&store, v.left, v.right, trace);
            text.push_str(&format!("  trace replays: {replays}\n"));
            (json!({ "verdict": "distinguished", "trace": steps, "replays": replays }), text, false)
        }
    };
    let mut results = results;
    results["left"] = json!(p.term(a));
    results["right"] = json!(p.term(b));
    Ok(Outcome { results, text, passed })
}

fn howe(sig: &Signature, config: &RunConfig) -> Outcome {
    let run = howe_suite(sig, config, &[]);
    let mut text = format!(
        "{} seeds, {} stored terms, {} transitions, {} bisimilarity classes\n\
         term universe {}, closure {} pairs after {} iterations (converged {})\n",
        run.seeds,
        run.store_universe,
        run.transitions,
        run.bisim_blocks,
        run.term_universe,
        run.closure_pairs,
        run.iterations,
        run.converged
    );
    for c in &run.report.checks {
        text.push_str(&format!(
            "{:<46} {} checked {:>8} skipped {:>6} violations {}\n",
            c.name,
            if c.passed() { "pass" } else { "FAIL" },
            c.pairs_checked,
            c.skips,
            c.violations.len()
        ));
        for v in &c.violations {
            text.push_str(&format!("    {v}\n"));
        }
    }
    let passed = run.report.passed() && run.converged;
    Outcome { results: to_json(&run), text, passed }
}

fn congruence(sig: &Signature, config: &RunConfig) -> Outcome {
    let run = congruence_suite(sig, config);
    let r = &run.report;
    let mut text = format!(
        "{} samples: {} checked, {} skipped ({} outside static labels, {} split locally, {} inconclusive), {} violations\n\
         ({} seeds, {} stored terms)\n",
        config.samples,
        r.checked,
        r.skipped,
        run.outside_labels,
        run.premise_split,
        run.inconclusive,
        r.violations.len(),
        run.seeds,
        run.store_universe
    );
    for v in &r.violations {
        text.push_str(&format!(
            "  {}: ({}, {}) related but ({}, {}) not\n",
            v.kind, v.premise.0, v.premise.1, v.conclusion.0, v.conclusion.1
        ));
    }
    Outcome { results: to_json(&run), text, passed: r.passed() }
}

fn oracle_diff(config: &RunConfig, text: &str) -> Result<Outcome> {
    let sig = instances::shift_reset();
    let t = term(&sig, text)?;
    let report = instances::oracle_compare(&sig, &t, config.fuel, &config.labels(&sig))?;
    let mut out = format!(
        "{}: exhausted {}, machine complete {}, {} silent states, {} labels compared\n",
        report.term, report.exhausted, report.machine_complete, report.tau_states, report.labels_compared
    );
    for d in &report.discrepancies {
        out.push_str(&format!("  {d}\n"));
    }
    out.push_str(if report.clean() { "clean\n" } else { "DISCREPANCIES\n" });
    Ok(Outcome { passed: report.clean(), results: to_json(&report), text: out })
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Outcome), Failure> {
    let config = cli.config.run_config();
    let usage = |e: anyhow::Error| Failure::Usage(e);
    Ok(match &cli.command {
        Command::Validate { sig } => ("validate", validate(&load_signature(sig).map_err(usage)?)),
        Command::FormatCheck { sig } => ("format-check", format_check(&load_signature(sig).map_err(usage)?)),
        Command::Step { sig, term: t } => {
            let sig = load_signature(sig).map_err(usage)?;
            let t = term(&sig, t).map_err(usage)?;
            ("step", step(&sig, &config, &t))
        }
        Command::Eval { sig, term: t, machine } => {
            let sig = load_signature(sig).map_err(usage)?;
            let t = term(&sig, t).map_err(usage)?;
            let out = if *machine { eval_machine(&sig, &config, &t) } else { eval_engine(&sig, &config, &t) };
            ("eval", out.map_err(usage)?)
        }
        Command::Bisim { sig, left, right } => {
            let sig = load_signature(sig).map_err(usage)?;
            let (a, b) = (term(&sig, left).map_err(usage)?, term(&sig, right).map_err(usage)?);
            ("bisim", bisim(&sig, &config, &a, &b).map_err(Failure::Internal)?)
        }
        Command::Howe { sig } => ("howe", howe(&load_signature(sig).map_err(usage)?, &config)),
        Command::Congruence { sig } => ("congruence", congruence(&load_signature(sig).map_err(usage)?, &config)),
        Command::OracleDiff { term: t } => ("oracle-diff", oracle_diff(&config, t).map_err(usage)?),
    })
}

enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok((command, outcome)) => {
            if cli.config.json {
                let report = json!({
                    "command": command,
                    "config": to_json(&cli.config.run_config()),
                    "results": outcome.results,
                });
                println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            } else {
                print!("{}", outcome.text);
            }
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
