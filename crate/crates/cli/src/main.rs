//! `biascert`: certify decision-tree predictions against training-data bias.

use anyhow::{anyhow, bail, Context};
use biascert::bias::{normalize, parse_bias_dsl_sized, parse_target, BiasModel, NormalizedBiasModel};
use biascert::certify::{certify, Verdict};
use biascert::dataset::{load_dataset, parse_decimal, Dataset, FeatureKind, FeatureSchema, Row, Value};
use biascert::error::Error as CoreError;
use biascert::fuzz::{falsify, RNG_ALGORITHM};
use biascert::oracle::{
    enumerate_bias_set, estimate_bias_set, oracle_robust, Universe, DEFAULT_CAP,
};
use biascert::report::{rates_to_csv, rates_to_json, stratified_rates, Group};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "biascert", version, about = "Certify decision-tree robustness under programmable training-data bias")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV (header row, label column per schema)
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON: {"features":[{"name","kind","domain"?}],"label":{"name","arity"}}
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify one point (or every row of a test CSV) against a bias model
    Certify {
        #[command(flatten)]
        data: DataArgs,
        /// Bias model, e.g. "flip(l=1, where race=Black and label=0)"
        #[arg(long)]
        bias: String,
        /// Tree depth to certify
        #[arg(long)]
        depth: usize,
        /// One query point, e.g. "race=Black,score=7"
        #[arg(long, conflicts_with = "test")]
        point: Option<String>,
        /// Test CSV of query points (same schema; label column ignored)
        #[arg(long)]
        test: Option<PathBuf>,
        /// Worker threads for batch certification
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Include wall-clock timings (breaks byte-for-byte reproducibility)
        #[arg(long, default_value_t = false)]
        timings: bool,
    },
    /// Batch certify a test CSV and report stratified certification rates
    Rates {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bias: String,
        #[arg(long)]
        depth: usize,
        /// Test CSV of query points
        #[arg(long)]
        test: PathBuf,
        /// Semicolon-separated named groups, e.g. "black: race=Black; low: score<=3"
        #[arg(long)]
        groups: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Exact robustness by enumerating and retraining on the whole bias set
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bias: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        point: String,
        /// "observed" or a JSON file of per-feature value lists
        #[arg(long, default_value = "observed")]
        universe: String,
        /// Abort if the bias set would exceed this many members
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
    /// Randomized counterexample search over sampled bias-set members
    Falsify {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bias: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        point: String,
        #[arg(long, default_value = "observed")]
        universe: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        iters: u64,
    },
    /// Train the concrete tree and dump it as JSON
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        depth: usize,
    },
    /// Report the bias-set cardinality (or that it is infinite)
    EnumSize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bias: String,
        /// "observed", "none" (no finite universe), or a JSON file
        #[arg(long, default_value = "observed")]
        universe: String,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn load(data: &DataArgs) -> anyhow::Result<Dataset> {
    let schema_text = std::fs::read_to_string(&data.schema)
        .with_context(|| format!("reading schema {}", data.schema.display()))?;
    let schema = Arc::new(FeatureSchema::from_json(&schema_text)?);
    let file = File::open(&data.data).with_context(|| format!("reading data {}", data.data.display()))?;
    Ok(load_dataset(file, schema)?)
}

fn parse_point(text: &str, schema: &FeatureSchema) -> anyhow::Result<Vec<Value>> {
    let mut by_name: BTreeMap<&str, &str> = BTreeMap::new();
    for part in text.split(',') {
        let (name, raw) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("point entry '{}' is not name=value", part))?;
        by_name.insert(name.trim(), raw.trim());
    }
    let mut out = Vec::with_capacity(schema.features.len());
    for (j, f) in schema.features.iter().enumerate() {
        let raw = by_name
            .remove(f.name.as_str())
            .ok_or_else(|| anyhow!("point is missing feature '{}'", f.name))?;
        let v = schema
            .parse_cell(j, raw)
            .ok_or_else(|| anyhow!("bad value '{}' for feature '{}'", raw, f.name))?;
        out.push(v);
    }
    if let Some((name, _)) = by_name.into_iter().next() {
        bail!("point names unknown feature '{}'", name);
    }
    Ok(out)
}

fn render_point(x: &[Value], schema: &FeatureSchema) -> String {
    schema
        .features
        .iter()
        .zip(x)
        .map(|(f, v)| format!("{}={}", f.name, v))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_universe(spec: &str, t: &Dataset) -> anyhow::Result<Option<Universe>> {
    match spec {
        "observed" => Ok(Some(Universe::observed(t))),
        "none" => Ok(None),
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading universe {}", path))?;
            let raw: BTreeMap<String, Vec<serde_json::Value>> =
                serde_json::from_str(&text).context("universe JSON must map feature names to value lists")?;
            let mut values = Vec::with_capacity(t.schema.features.len());
            for (j, f) in t.schema.features.iter().enumerate() {
                let list = raw
                    .get(&f.name)
                    .ok_or_else(|| anyhow!("universe is missing feature '{}'", f.name))?;
                let mut vs = Vec::with_capacity(list.len());
                for v in list {
                    let s = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    let val = match f.kind {
                        FeatureKind::Numeric => Value::Num(
                            parse_decimal(&s)
                                .ok_or_else(|| anyhow!("bad numeric universe value '{}' for '{}'", s, f.name))?,
                        ),
                        FeatureKind::Categorical => Value::Cat(s),
                    };
                    vs.push(val);
                }
                if vs.is_empty() {
                    bail!("universe for feature '{}' is empty", f.name);
                }
                vs.sort();
                vs.dedup();
                let _ = j;
                values.push(vs);
            }
            Ok(Some(Universe { values }))
        }
    }
}

fn parse_model(text: &str, t: &Dataset) -> anyhow::Result<(BiasModel, NormalizedBiasModel)> {
    let model = parse_bias_dsl_sized(text, &t.schema, Some(t.len()))?;
    let normalized = normalize(&model);
    Ok((model, normalized))
}

fn verdict_string(v: &Verdict) -> String {
    match v {
        Verdict::Robust(i) => format!("Robust({})", i),
        Verdict::Unknown(_) => "Unknown".to_string(),
    }
}

fn with_thread_pool<T: Send>(jobs: usize, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T> {
    if jobs <= 1 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?
        .install(f)
}

fn certify_record(
    t: &Dataset,
    model: &BiasModel,
    model_text: &str,
    x: &[Value],
    depth: usize,
    timings: bool,
) -> anyhow::Result<serde_json::Value> {
    let res = certify(t, model, x, depth)?;
    let mut record = serde_json::json!({
        "x": render_point(x, &t.schema),
        "verdict": verdict_string(&res.verdict),
        "labels": res.labels.iter().collect::<Vec<_>>(),
        "depth": res.depth,
        "bias_model": model_text,
        "root_split_count": res.root_split_count,
    });
    if timings {
        record["wall_ms"] = serde_json::json!(res.elapsed.as_millis() as u64);
    }
    Ok(record)
}

/// Multiset difference size between a bias-set member and the original.
fn rows_changed(original: &Dataset, member: &Dataset) -> usize {
    let mut counts: BTreeMap<Row, i64> = BTreeMap::new();
    for r in &original.rows {
        *counts.entry(r.clone()).or_default() += 1;
    }
    for r in &member.rows {
        *counts.entry(r.clone()).or_default() -= 1;
    }
    let added: i64 = counts.values().filter(|&&v| v < 0).map(|v| -v).sum();
    let removed: i64 = counts.values().filter(|&&v| v > 0).sum();
    added.max(removed) as usize
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Certify {
            data,
            bias,
            depth,
            point,
            test,
            jobs,
            timings,
        } => {
            let t = load(&data)?;
            let (model, normalized) = parse_model(&bias, &t)?;
            let model_text = normalized.render(&t.schema);
            let points: Vec<Vec<Value>> = match (&point, &test) {
                (Some(p), None) => vec![parse_point(p, &t.schema)?],
                (None, Some(path)) => {
                    let file = File::open(path).with_context(|| format!("reading test {}", path.display()))?;
                    let test_set = load_dataset(file, t.schema.clone())?;
                    test_set.rows.into_iter().map(|r| r.x).collect()
                }
                _ => bail!("exactly one of --point or --test is required"),
            };
            let records = with_thread_pool(jobs, || {
                points
                    .par_iter()
                    .map(|x| certify_record(&t, &model, &model_text, x, depth, timings))
                    .collect::<anyhow::Result<Vec<_>>>()
            })?;
            for r in records {
                println!("{}", r);
            }
            Ok(())
        }
        Cmd::Rates {
            data,
            bias,
            depth,
            test,
            groups,
            format,
            jobs,
        } => {
            let t = load(&data)?;
            let (model, _) = parse_model(&bias, &t)?;
            let file = File::open(&test).with_context(|| format!("reading test {}", test.display()))?;
            let test_set = load_dataset(file, t.schema.clone())?;
            let groups = match groups {
                None => Vec::new(),
                Some(spec) => spec
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|part| {
                        let (name, pred) = part
                            .split_once(':')
                            .ok_or_else(|| anyhow!("group '{}' is not name: predicate", part.trim()))?;
                        Ok(Group::new(name.trim(), parse_target(pred, &t.schema)?)?)
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?,
            };
            let outcomes: Vec<bool> = with_thread_pool(jobs, || {
                test_set
                    .rows
                    .par_iter()
                    .map(|r| Ok(certify(&t, &model, &r.x, depth)?.is_robust()))
                    .collect::<anyhow::Result<Vec<_>>>()
            })?;
            let points: Vec<(Vec<Value>, bool)> = test_set
                .rows
                .into_iter()
                .map(|r| r.x)
                .zip(outcomes)
                .collect();
            let rates = stratified_rates(&points, &groups);
            match format {
                Format::Csv => print!("{}", rates_to_csv(&rates)),
                Format::Json => println!("{}", rates_to_json(&rates)),
            }
            Ok(())
        }
        Cmd::Oracle {
            data,
            bias,
            depth,
            point,
            universe,
            cap,
        } => {
            let t = load(&data)?;
            let (_, normalized) = parse_model(&bias, &t)?;
            let x = parse_point(&point, &t.schema)?;
            let u = required_universe(&universe, &t, &normalized)?;
            let out = oracle_robust(&t, &normalized, &u, &x, depth, cap)?;
            let verdict = if out.robust {
                format!("Robust({})", out.baseline_label)
            } else {
                "NonRobust".to_string()
            };
            println!(
                "{}",
                serde_json::json!({
                    "verdict": verdict,
                    "baseline_label": out.baseline_label,
                    "members_checked": out.members_checked,
                    "witness_label": out.witness.as_ref().map(|(_, l)| *l),
                    "witness_rows_changed": out.witness.as_ref().map(|(m, _)| rows_changed(&t, m)),
                })
            );
            Ok(())
        }
        Cmd::Falsify {
            data,
            bias,
            depth,
            point,
            universe,
            seed,
            iters,
        } => {
            let t = load(&data)?;
            let (_, normalized) = parse_model(&bias, &t)?;
            let x = parse_point(&point, &t.schema)?;
            let u = required_universe(&universe, &t, &normalized)?;
            let out = falsify(&t, &normalized, &u, &x, depth, seed, iters)?;
            println!(
                "{}",
                serde_json::json!({
                    "found": out.counterexample.is_some(),
                    "iteration": out.counterexample.as_ref().map(|c| c.iteration),
                    "seed": seed,
                    "rng": RNG_ALGORITHM,
                    "baseline_label": out.baseline_label,
                    "witness_label": out.counterexample.as_ref().map(|c| c.label),
                    "witness_rows_changed": out.counterexample.as_ref().map(|c| rows_changed(&t, &c.member)),
                    "iterations_run": out.iterations_run,
                })
            );
            Ok(())
        }
        Cmd::Train { data, depth } => {
            let t = load(&data)?;
            let tree = biascert::concrete::train(&t, depth)?;
            println!("{}", tree.to_json(&t.schema));
            Ok(())
        }
        Cmd::EnumSize {
            data,
            bias,
            universe,
            cap,
        } => {
            let t = load(&data)?;
            let (_, normalized) = parse_model(&bias, &t)?;
            let u = parse_universe(&universe, &t)?;
            let finite = normalized.m() == 0 || u.is_some();
            if !finite {
                println!(
                    "{}",
                    serde_json::json!({ "finite": false, "count": serde_json::Value::Null })
                );
                return Ok(());
            }
            let u = u.unwrap_or_else(|| Universe::observed(&t));
            let stages = normalized.to_components();
            let estimate = estimate_bias_set(&t, &stages, &u);
            let count = if estimate <= cap {
                Some(enumerate_bias_set(&t, &normalized, &u, cap)?.len())
            } else {
                None
            };
            println!(
                "{}",
                serde_json::json!({
                    "finite": true,
                    "estimate": estimate as u64,
                    "count": count,
                })
            );
            Ok(())
        }
    }
}

fn required_universe(spec: &str, t: &Dataset, n: &NormalizedBiasModel) -> anyhow::Result<Universe> {
    match parse_universe(spec, t)? {
        Some(u) => Ok(u),
        None => {
            if n.m() > 0 {
                Err(CoreError::Invalid("MISS budget requires a finite universe".into()).into())
            } else {
                Ok(Universe::observed(t))
            }
        }
    }
}
