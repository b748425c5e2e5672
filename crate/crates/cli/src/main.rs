use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use chasekit::analysis::{self, AnalysisError, LocalityParams, Verdict};
use chasekit::chase::{chase_to, ChaseError, ChaseOptions};
use chasekit::homo::{core_retract, HomoError};
use chasekit::markedrw::{run_process_with, Levels, MarkedError, ProcessOptions};
use chasekit::model::{ConjunctiveQuery, Instance, RuleSet, Term};
use chasekit::normalizer::{self, AncestorTrace, AppAConstants, NormalizeError};
use chasekit::rewriter::rewrite;
use chasekit::textio::{parse_instance, parse_queries, parse_query, parse_rules, print_queries, print_rules};

#[derive(Parser)]
#[command(name = "chasekit", version, about = "Chase, rewriting and marked-query tools for existential rules")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Chase an instance to a fixed depth and list atoms per stage.
    Chase {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(0..))]
        depth: u32,
        /// Cap on the total number of atoms.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Breadth-first UCQ rewriting.
    Rewrite {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        fuel: u32,
        #[arg(long = "emit-ucq")]
        emit_ucq: Option<PathBuf>,
    },
    /// Complete rewriting through marked queries.
    Markedrw {
        #[arg(long)]
        query: PathBuf,
        /// Number of levels `I1..IK`; the red/green signature when absent.
        #[arg(long = "K", value_parser = clap::value_parser!(u32).range(2..))]
        k: Option<u32>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long = "emit-ucq")]
        emit_ucq: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
        budget: u64,
    },
    /// Smallest retract of the chase that is a model.
    Core {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        slack: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-depth probes.
    Analyze {
        probe: Probe,
        #[arg(long)]
        rules: PathBuf,
        /// Instance file; `ubdd` accepts several.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        l: usize,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        slack: usize,
        /// Term pair `a,b` for `distancing`; all constant pairs when absent.
        #[arg(long)]
        pair: Vec<String>,
        /// Query file for `enough`.
        #[arg(long)]
        query: Option<PathBuf>,
        /// Answer tuple for `enough`, comma separated.
        #[arg(long, default_value = "")]
        args: String,
        /// Step count judged by `enough`.
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Normalize a binary theory.
    Normalize {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        fuel: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ancestor counts per skeleton tree against `M = N·h + k·h`.
    Ancestors {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Probe {
    Locality,
    Distancing,
    Enough,
    Cd,
    Ubdd,
}

/// Usage problems in input files, as opposed to budget exhaustion.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

const OK: u8 = 0;
const NEGATIVE: u8 = 1;
const USAGE: u8 = 2;
const BUDGET: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn is_budget(e: &anyhow::Error) -> bool {
    let chase = |c: &ChaseError| matches!(c, ChaseError::Budget { .. });
    let homo = |h: &HomoError| matches!(h, HomoError::Budget(_)) || matches!(h, HomoError::Chase(c) if chase(c));
    e.chain().any(|c| {
        c.downcast_ref::<ChaseError>().is_some_and(chase)
            || c.downcast_ref::<HomoError>().is_some_and(homo)
            || matches!(c.downcast_ref::<MarkedError>(), Some(MarkedError::Budget(_) | MarkedError::TooLarge(_) | MarkedError::Overflow))
            || matches!(c.downcast_ref::<AnalysisError>(), Some(AnalysisError::IslandCap(..)))
            || matches!(c.downcast_ref::<NormalizeError>(), Some(NormalizeError::Incomplete(..)))
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if is_budget(e) {
        BUDGET
    } else {
        USAGE
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())).into())
}

fn load_rules(path: &Path) -> Result<RuleSet> {
    parse_rules(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn load_instance(path: &Path) -> Result<Instance> {
    parse_instance(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn load_query(path: &Path) -> Result<ConjunctiveQuery> {
    parse_query(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

/// Writes via a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn emit_json(path: Option<&Path>, command: &str, body: Value) -> Result<()> {
    let mut doc = json!({ "schema": 1, "command": command });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    emit(path, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Chase { rules, data, depth, cap, out } => {
            let t = load_rules(&rules)?;
            let d = load_instance(&data)?;
            let mut opts = ChaseOptions::default();
            if let Some(c) = cap {
                opts = opts.cap(c);
            }
            let run = chase_to(&t, &d, depth as usize, opts)?;
            let mut text = String::new();
            let mut prev = Instance::new();
            for i in 0..=run.depth() {
                let s = run.stage(i);
                text.push_str(&format!("# stage {i}\n"));
                text.push_str(&s.difference(&prev).to_string());
                prev = s;
            }
            if run.saturated() {
                text.push_str(&format!("# saturated at {}\n", run.computed_depth()));
            }
            emit(out.as_deref(), &text)?;
            Ok(OK)
        }
        Cmd::Rewrite { rules, query, fuel, emit_ucq } => {
            let t = load_rules(&rules)?;
            let q = load_query(&query)?;
            let rs = rewrite(&t, &q, fuel as usize)?;
            let text = format!(
                "# complete: {}\n{}",
                if rs.complete { "yes" } else { "no" },
                print_queries(&rs.queries)
            );
            emit(emit_ucq.as_deref(), &text)?;
            Ok(if rs.complete { OK } else { BUDGET })
        }
        Cmd::Markedrw { query, k, trace, emit_ucq, budget } => {
            let q = load_query(&query)?;
            let levels = match k {
                Some(k) => Levels::indexed(k as usize),
                None => Levels::red_green(),
            };
            let opts = ProcessOptions {
                step_budget: usize::try_from(budget).unwrap_or(usize::MAX),
                trace: trace.is_some(),
                check_clauses: true,
            };
            let r = run_process_with(&q, &levels, &opts)?;
            if let Some(p) = &trace {
                let mut text = String::new();
                for s in &r.trace {
                    let outs: Vec<String> = s.outputs.iter().map(|o| o.to_string()).collect();
                    let added: Vec<String> = s.ranks_added.iter().map(|o| o.to_string()).collect();
                    text.push_str(&format!(
                        "{} {} | {} => [{}] | srk -{} +[{}] | size {} -> {}\n",
                        s.index,
                        s.op,
                        s.input,
                        outs.join("; "),
                        s.rank_removed,
                        added.join("; "),
                        s.set_size_before,
                        s.set_size_after
                    ));
                }
                write_atomic(p, &text)?;
            }
            let text = format!("# steps: {} discarded: {}\n{}", r.steps, r.discarded, print_queries(&r.queries));
            emit(emit_ucq.as_deref(), &text)?;
            Ok(OK)
        }
        Cmd::Core { rules, data, depth, slack, out } => {
            let t = load_rules(&rules)?;
            let d = load_instance(&data)?;
            let c = core_retract(&t, &d, depth as usize, slack as usize)?;
            emit(out.as_deref(), &format!("# c_value: {}\n{}", c.c_value, c.core))?;
            Ok(OK)
        }
        Cmd::Analyze {
            probe,
            rules,
            data,
            l,
            degree,
            depth,
            slack,
            pair,
            query,
            args,
            n,
            report,
        } => {
            let t = load_rules(&rules)?;
            let ds = data.iter().map(|p| load_instance(p)).collect::<Result<Vec<_>>>()?;
            let first = &ds[0];
            let (name, body, code) = match probe {
                Probe::Locality => {
                    let params = LocalityParams {
                        l,
                        degree_bound: degree,
                        probe_depth: depth,
                    };
                    let r = analysis::locality_refute(&t, &params, first)?;
                    let code = if r.verdict == Verdict::Refuted { NEGATIVE } else { OK };
                    ("locality", serde_json::to_value(&r)?, code)
                }
                Probe::Distancing => {
                    let pairs = if pair.is_empty() {
                        let cs: Vec<Term> = first.domain().into_iter().collect();
                        let mut v = Vec::new();
                        for (i, a) in cs.iter().enumerate() {
                            for b in &cs[i + 1..] {
                                v.push((a.clone(), b.clone()));
                            }
                        }
                        v
                    } else {
                        pair.iter().map(|p| parse_pair(p)).collect::<Result<Vec<_>>>()?
                    };
                    let r = analysis::distancing_probe(&t, first, &pairs, depth)?;
                    ("distancing", serde_json::to_value(&r)?, OK)
                }
                Probe::Enough => {
                    let Some(qp) = query else {
                        bail!(Usage("enough needs --query".into()));
                    };
                    let qs = parse_queries(&read(&qp)?).map_err(|e| Usage(format!("{}: {e}", qp.display())))?;
                    let tuple: Vec<Term> = args.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Term::constant).collect();
                    let pairs: Vec<(ConjunctiveQuery, Vec<Term>)> = qs.into_iter().map(|q| (q, tuple.clone())).collect();
                    for (q, a) in &pairs {
                        if q.free_vars().len() != a.len() {
                            bail!(Usage(format!("query {q} needs {} answer terms", q.free_vars().len())));
                        }
                    }
                    let res = analysis::check_enough(&t, first, n, &pairs, depth)?;
                    let code = if res.contains(&analysis::Enough::No) { NEGATIVE } else { OK };
                    let rows: Vec<Value> = pairs
                        .iter()
                        .zip(&res)
                        .map(|((q, _), e)| json!({ "query": q.to_string(), "enough": e }))
                        .collect();
                    ("enough", json!({ "n": n, "depth": depth, "results": rows }), code)
                }
                Probe::Cd => {
                    let r = analysis::compute_cd(&t, first, l, depth, slack)?;
                    ("cd", serde_json::to_value(&r)?, OK)
                }
                Probe::Ubdd => {
                    let r = analysis::ubdd_probe(&t, &ds, depth, slack)?;
                    ("ubdd", serde_json::to_value(&r)?, OK)
                }
            };
            emit_json(report.as_deref(), &format!("analyze {name}"), json!({ "report": body }))?;
            Ok(code)
        }
        Cmd::Normalize { rules, fuel, out } => {
            let t = load_rules(&rules)?;
            let nf = normalizer::normalize(&t, fuel as usize)?;
            let mut text = String::new();
            for (q, m) in nf.m_predicates.entries() {
                text.push_str(&format!("# {m}: {q}\n"));
            }
            text.push_str(&print_rules(&nf.t_nf));
            emit(out.as_deref(), &text)?;
            Ok(OK)
        }
        Cmd::Ancestors {
            rules,
            data,
            depth,
            samples,
            seed,
            report,
        } => {
            let t = load_rules(&rules)?;
            let d = load_instance(&data)?;
            let run = chase_to(&t, &d, depth, ChaseOptions::default().with_provenance())?;
            let consts = AppAConstants::of(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reports = Vec::new();
            let mut ok = true;
            for _ in 0..samples {
                let trace = AncestorTrace::random(&run, &t, &mut rng);
                let r = normalizer::ancestor_probe(&run, &t, &trace, consts)?;
                ok &= r.within_bound;
                reports.push(r);
            }
            let max = reports.iter().map(|r| r.max_count).max().unwrap_or(0);
            emit_json(
                report.as_deref(),
                "ancestors",
                json!({
                    "depth": depth,
                    "seed": seed,
                    "constants": consts,
                    "max_count": max,
                    "within_bound": ok,
                    "samples": reports,
                }),
            )?;
            Ok(if ok { OK } else { NEGATIVE })
        }
    }
}

fn parse_pair(s: &str) -> Result<(Term, Term)> {
    match s.split_once(',') {
        Some((a, b)) => Ok((Term::constant(a.trim()), Term::constant(b.trim()))),
        None => Err(Usage(format!("pair `{s}` is not of the form a,b")).into()),
    }
}
