use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use senscap_core::bounds::{
    crossings, random_coding_exponent, replication_comparison, sweep, Axis, BoundProblem, SolverOptions, SweepTable,
    Variant,
};
use senscap_core::model::ModelSpec;
use senscap_core::sim::{
    curve_point, isotonic_residual, point_seed, transition_width, CurvePoint, Decoder,
};
use senscap_core::types::{
    compute_joint_type, count_type_classes, enumerate_type_class, parse_symbols, pattern_count, JointType, Layout,
};
use senscap_core::Error;

use crate::svg::{Marker, Plot, Series, Table};
use crate::{
    interrupted, BoundArgs, Command, DecoderKind, EnumerateArgs, ExponentArgs, Output, SimulateArgs, SolverArgs,
    SweepArgs,
};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Interrupted,
}

type Outcome<T> = Result<T, Failure>;

/// Errors caused by the inputs rather than by a solver.
fn is_config_error(e: &Error) -> bool {
    !matches!(
        e,
        Error::EmptyFeasibleSet(_)
            | Error::InnerSolverDiverged(_)
            | Error::ConditionalUndefined { .. }
            | Error::NumericalUnderflow(_)
    )
}

fn kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_string()
}

/// Output directory plus the command name, for error reports.
struct Ctx {
    command: &'static str,
    out: PathBuf,
    timestamp: Option<u64>,
}

impl Ctx {
    fn new(command: &'static str, output: &Output) -> Outcome<Self> {
        fs::create_dir_all(&output.out)
            .map_err(|e| Failure::Config(format!("--out {}: {e}", output.out.display())))?;
        let timestamp = (!output.fixed_metadata).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Ok(Ctx {
            command,
            out: output.out.clone(),
            timestamp,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Outcome<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Failure::Config(format!("--out {}: {e}", p.display())))
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Outcome<()> {
        let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
        s.push('\n');
        self.write(name, &s)
    }

    /// Map a library error; solver failures leave an `error.json` behind.
    fn fail(&self, context: &str, e: Error) -> Failure {
        if is_config_error(&e) {
            return Failure::Config(format!("{context}: {e}"));
        }
        let report = json!({
            "command": self.command,
            "context": context,
            "kind": kind(&e),
            "error": e.to_string(),
        });
        let _ = self.write_json("error.json", &report);
        Failure::Solver(format!("{context}: {e}"))
    }
}

/// A CSV file written line by line and mirrored in memory.
struct CsvSink {
    file: File,
    path: PathBuf,
    text: String,
}

impl CsvSink {
    fn create(path: PathBuf, header: &str) -> Outcome<Self> {
        let file = File::create(&path).map_err(|e| Failure::Config(format!("--out {}: {e}", path.display())))?;
        let mut sink = CsvSink {
            file,
            path,
            text: String::new(),
        };
        sink.push(&format!("{header}\n"))?;
        Ok(sink)
    }

    fn push(&mut self, line: &str) -> Outcome<()> {
        self.text.push_str(line);
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Failure::Config(format!("{}: {e}", self.path.display())))
    }

    fn truncate_marker(&mut self) -> Failure {
        let _ = self.push("# truncated\n");
        Failure::Interrupted
    }
}

pub fn run(command: Command) -> Outcome<()> {
    match command {
        Command::Bound(a) => bound(a),
        Command::Exponent(a) => exponent(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Enumerate(a) => enumerate(a),
    }
}

fn load_model(path: &Path) -> Outcome<ModelSpec> {
    ModelSpec::from_path(path).map_err(|e| Failure::Config(format!("--model {}: {e}", path.display())))
}

fn check_distortion(d: f64) -> Outcome<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(Failure::Config(format!("--distortion: {d} is outside [0, 1]")))
    }
}

fn problem(model: ModelSpec, distortion: f64, solver: &SolverArgs) -> Outcome<BoundProblem> {
    check_distortion(distortion)?;
    let variant = match &solver.variant {
        Some(v) => Variant::parse(v).map_err(|e| Failure::Config(format!("--variant: {e}")))?,
        None => Variant::for_model(&model),
    };
    let mut options = SolverOptions::default();
    if let Some(g) = solver.grid {
        if g < 2 {
            return Err(Failure::Config(format!("--grid: need at least 2 cells, got {g}")));
        }
        options.grid = g;
    }
    if let Some(r) = solver.refinements {
        options.refinements = r;
    }
    if let Some(t) = solver.bisection_tol {
        if t.is_nan() || t <= 0.0 {
            return Err(Failure::Config(format!("--bisection-tol: {t} must be positive")));
        }
        options.bisection_tol = t;
    }
    options.shift_consistency = !solver.no_shift_consistency;
    BoundProblem::with_variant(model, distortion, variant)
        .map(|p| p.options(options))
        .map_err(|e| Failure::Config(format!("--variant: {e}")))
}

/// Inclusive grid from `from:to:points` or an explicit comma list.
pub fn parse_grid(flag: &str, s: &str) -> Outcome<Vec<f64>> {
    let bad = |why: String| Failure::Config(format!("{flag}: {why}"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [from, to, points] => {
            let from: f64 = from.trim().parse().map_err(|_| bad(format!("bad start `{from}`")))?;
            let to: f64 = to.trim().parse().map_err(|_| bad(format!("bad end `{to}`")))?;
            let points: usize = points.trim().parse().map_err(|_| bad(format!("bad point count `{points}`")))?;
            linear_grid(from, to, points).map_err(bad)?
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad value `{v}`"))))
            .collect::<Outcome<_>>()?,
        _ => return Err(bad(format!("expected from:to:points or a list, got `{s}`"))),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite".into()));
    }
    Ok(values)
}

fn linear_grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>, String> {
    if points == 0 {
        return Err("need at least one point".into());
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let mut v: Vec<f64> = (0..points)
        .map(|i| from + (to - from) * i as f64 / (points - 1) as f64)
        .collect();
    v[points - 1] = to;
    Ok(v)
}

fn bound(a: BoundArgs) -> Outcome<()> {
    let ctx = Ctx::new("bound", &a.output)?;
    let model = load_model(&a.model)?;
    let prob = problem(model, a.distortion, &a.solver)?;
    let result = prob.solve().map_err(|e| ctx.fail("bound", e))?;
    println!("clb = {}", result.clb);
    ctx.write_json("bound.json", &result)?;
    if let Some(m) = a.replication {
        let rep = replication_comparison(&prob, m).map_err(|e| match e {
            Error::EvenReplication(_) | Error::InvalidArgument(_) | Error::InvalidModel { .. } => {
                Failure::Config(format!("--replication: {e}"))
            }
            e => ctx.fail("replication", e),
        })?;
        println!(
            "replication m={}: p_eff = {}, rate_direct = {}, rate_replicated = {}",
            rep.m, rep.p_eff, rep.rate_direct, rep.rate_replicated
        );
        ctx.write_json("replication.json", &rep)?;
    }
    Ok(())
}

fn exponent(a: ExponentArgs) -> Outcome<()> {
    let ctx = Ctx::new("exponent", &a.output)?;
    if !(a.rate >= 0.0 && a.rate.is_finite()) {
        return Err(Failure::Config(format!("--rate: {} must be nonnegative", a.rate)));
    }
    let model = load_model(&a.model)?;
    let prob = problem(model, a.distortion, &a.solver)?;
    let result = random_coding_exponent(&prob, a.rate).map_err(|e| ctx.fail("exponent", e))?;
    println!("E_r = {} (rho = {})", result.er_value, result.rho);
    ctx.write_json("exponent.json", &result)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn sweep_cmd(a: SweepArgs) -> Outcome<()> {
    let ctx = Ctx::new("sweep", &a.output)?;
    let axis = Axis::parse(&a.axis).map_err(|e| Failure::Config(format!("--axis: {e}")))?;
    let values = match (&a.values, a.from, a.to, a.points) {
        (Some(v), ..) => parse_grid("--values", v)?,
        (None, Some(f), Some(t), Some(p)) => {
            linear_grid(f, t, p).map_err(|e| Failure::Config(format!("--points: {e}")))?
        }
        _ => {
            return Err(Failure::Config(
                "--values: give either --values or all of --from, --to, --points".into(),
            ))
        }
    };
    let chunk = rayon::current_num_threads().max(1);
    let mut summaries = Vec::new();
    let mut plots = Vec::new();
    let mut used = Vec::new();
    for path in &a.models {
        let mut name = stem(path);
        if used.contains(&name) {
            name = format!("{name}_{}", used.len());
        }
        used.push(name.clone());
        let model = load_model(path)?;
        let prob = problem(model, a.distortion, &a.solver)?;
        let csv_name = format!("sweep_{name}.csv");
        let mut sink = CsvSink::create(ctx.path(&csv_name), SweepTable::HEADER)?;
        let mut table = SweepTable {
            axis,
            rows: Vec::new(),
            results: Vec::new(),
        };
        for part in values.chunks(chunk) {
            if interrupted() {
                return Err(sink.truncate_marker());
            }
            let t = sweep(&prob, axis, part).map_err(|e| match e {
                Error::InvalidArgument(_) | Error::InvalidModel { .. } | Error::RangeExceedsField { .. } => {
                    Failure::Config(format!("--values: {e}"))
                }
                e => ctx.fail(&format!("sweep of {}", path.display()), e),
            })?;
            for row in &t.rows {
                sink.push(&t.csv_line(row))?;
            }
            table.rows.extend(t.rows);
        }
        let parsed = Table::parse(&sink.text);
        let (xs, ys) = (
            parsed.column("value").unwrap_or_default(),
            parsed.column("clb").unwrap_or_default(),
        );
        summaries.push(json!({
            "model": path.display().to_string(),
            "csv": csv_name,
            "monotone": table.monotone(),
        }));
        plots.push((name, xs, ys));
    }
    let mut markers = Vec::new();
    let mut crossing_list = Vec::new();
    for i in 0..plots.len() {
        for j in i + 1..plots.len() {
            for x in crossings(&plots[i].1, &plots[i].2, &plots[j].2) {
                markers.push(Marker {
                    x,
                    label: format!("cross {x:.4}"),
                });
                crossing_list.push(json!({"a": plots[i].0, "b": plots[j].0, "value": x}));
            }
        }
    }
    for c in &crossing_list {
        println!("crossing {} / {} at {} = {}", c["a"], c["b"], axis.name(), c["value"]);
    }
    ctx.write_json(
        "sweep.json",
        &json!({
            "axis": axis.name(),
            "distortion": a.distortion,
            "models": summaries,
            "crossings": crossing_list,
        }),
    )?;
    let y_label = if axis == Axis::Rate { "E_r(R, D)" } else { "C_LB" };
    let plot = Plot {
        title: format!("{y_label} versus {}", axis.name()),
        x_label: axis.name().into(),
        y_label: y_label.into(),
        series: plots
            .into_iter()
            .map(|(label, xs, ys)| Series {
                label,
                points: xs.into_iter().zip(ys).collect(),
            })
            .collect(),
        markers,
    };
    ctx.write("sweep.svg", &plot.render(ctx.timestamp))
}

fn simulate(a: SimulateArgs) -> Outcome<()> {
    let ctx = Ctx::new("simulate", &a.output)?;
    check_distortion(a.distortion)?;
    let rates = parse_grid("--rates", &a.rates)?;
    if let Some(r) = rates.iter().find(|r| **r <= 0.0) {
        return Err(Failure::Config(format!("--rates: {r} is not positive")));
    }
    if a.trials == 0 {
        return Err(Failure::Config("--trials: must be at least 1".into()));
    }
    if let Some(k) = a.k.iter().find(|k| **k == 0) {
        return Err(Failure::Config(format!("--k: {k} is not positive")));
    }
    if a.max_iters == 0 {
        return Err(Failure::Config("--max-iters: must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&a.damping) {
        return Err(Failure::Config(format!("--damping: {} is outside [0, 1)", a.damping)));
    }
    let model = load_model(&a.model)?;
    let decoder = match a.decoder {
        DecoderKind::Ml => Decoder::Ml,
        DecoderKind::Bp => Decoder::Bp {
            max_iters: a.max_iters,
            damping: a.damping,
        },
    };
    let clb = if a.no_bound {
        None
    } else {
        let prob = problem(model.clone(), a.distortion, &SolverArgs::default())?;
        let r = prob.solve().map_err(|e| ctx.fail("bound", e))?;
        ctx.write_json("bound.json", &r)?;
        Some(r.clb)
    };
    let mut sink = CsvSink::create(ctx.path("simulate.csv"), CurvePoint::HEADER)?;
    let mut records = if a.records {
        Some(CsvSink {
            file: File::create(ctx.path("trials.ndjson"))
                .map_err(|e| Failure::Config(format!("--out: {e}")))?,
            path: ctx.path("trials.ndjson"),
            text: String::new(),
        })
    } else {
        None
    };
    let mut curve: Vec<CurvePoint> = Vec::new();
    for (ki, &k) in a.k.iter().enumerate() {
        for (ri, &rate) in rates.iter().enumerate() {
            if interrupted() {
                return Err(sink.truncate_marker());
            }
            let seed = point_seed(a.seed, ki, ri);
            let (point, batch) = curve_point(&model, k, rate, a.distortion, a.trials, seed, decoder)
                .map_err(|e| ctx.fail(&format!("k={k} rate={rate}"), e))?;
            sink.push(&point.csv_line())?;
            if let Some(rec) = records.as_mut() {
                rec.push(&batch.to_ndjson())?;
                rec.text.clear();
            }
            curve.push(point);
        }
    }
    let parsed = Table::parse(&sink.text);
    let col = |n: &str| parsed.column(n).unwrap_or_default();
    let (ks, rs, es) = (col("k"), col("rate"), col("error_rate"));
    let mut series = Vec::new();
    let mut per_k = Vec::new();
    for &k in &a.k {
        let points: Vec<(f64, f64)> = ks
            .iter()
            .zip(rs.iter().zip(&es))
            .filter(|(kk, _)| **kk == k as f64)
            .map(|(_, (&r, &e))| (r, e))
            .collect();
        let pts: Vec<CurvePoint> = curve.iter().filter(|p| p.k == k).cloned().collect();
        let mut sorted: Vec<&CurvePoint> = pts.iter().collect();
        sorted.sort_by(|x, y| x.rate.total_cmp(&y.rate));
        let errs: Vec<f64> = sorted.iter().map(|p| p.error_rate).collect();
        per_k.push(json!({
            "k": k,
            "transition_width": transition_width(&pts),
            "isotonic_residual": isotonic_residual(&errs),
        }));
        series.push(Series {
            label: format!("k = {k}"),
            points,
        });
    }
    ctx.write_json(
        "simulate.json",
        &json!({
            "seed": a.seed,
            "distortion": a.distortion,
            "trials": a.trials,
            "decoder": decoder,
            "clb": clb,
            "curves": per_k,
        }),
    )?;
    let plot = Plot {
        title: format!("error rate versus rate, D = {}", a.distortion),
        x_label: "rate R".into(),
        y_label: "error rate".into(),
        series,
        markers: clb
            .map(|c| Marker {
                x: c,
                label: format!("C_LB = {c:.3}"),
            })
            .into_iter()
            .collect(),
    };
    ctx.write("simulate.svg", &plot.render(ctx.timestamp))?;
    println!("wrote {} curve points", curve.len());
    Ok(())
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => s.trim().parse().ok(),
    }
}

fn enumerate(a: EnumerateArgs) -> Outcome<()> {
    let ctx = Ctx::new("enumerate", &a.output)?;
    let reference = parse_symbols(&a.reference).map_err(|e| Failure::Config(format!("--reference: {e}")))?;
    let circular = !a.linear;
    let layout = if circular { Layout::Circular } else { Layout::Linear };
    let lambda = match (&a.partner, &a.lambda) {
        (Some(p), _) => {
            let partner = parse_symbols(p).map_err(|e| Failure::Config(format!("--partner: {e}")))?;
            compute_joint_type(&reference, &partner, a.alphabet, a.order, circular)
                .map_err(|e| Failure::Config(format!("--partner: {e}")))?
        }
        (None, Some(l)) => {
            let probs: Vec<f64> = l
                .split(',')
                .map(|v| parse_fraction(v).ok_or_else(|| Failure::Config(format!("--lambda: bad entry `{v}`"))))
                .collect::<Outcome<_>>()?;
            let side = pattern_count(a.alphabet, a.order);
            if probs.len() != side * side {
                return Err(Failure::Config(format!(
                    "--lambda: expected {} entries, got {}",
                    side * side,
                    probs.len()
                )));
            }
            // exact types have k windows (k − c + 1 when linear)
            let windows = if circular {
                reference.len()
            } else {
                (reference.len() + 1).saturating_sub(a.order)
            };
            let counts: Vec<u64> = probs
                .iter()
                .map(|p| {
                    let c = p * windows as f64;
                    if (c - c.round()).abs() > 1e-9 || c < -1e-9 {
                        Err(Failure::Config(format!(
                            "--lambda: {p} is not a multiple of 1/{windows}"
                        )))
                    } else {
                        Ok(c.round() as u64)
                    }
                })
                .collect::<Outcome<_>>()?;
            JointType::from_counts(a.order, a.alphabet, &counts, layout)
                .map_err(|e| Failure::Config(format!("--lambda: {e}")))?
        }
        (None, None) => return Err(Failure::Config("--partner: give --partner or --lambda".into())),
    };
    let found = enumerate_type_class(&reference, &lambda, a.list).map_err(|e| ctx.fail("enumerate", e))?;
    let bound = count_type_classes(&lambda)
        .map_err(|e| ctx.fail("count", e))?
        .with_exact(found.count as u128);
    println!("count = {}", found.count);
    let members: Option<Vec<String>> = found.members.map(|ms| {
        ms.iter()
            .map(|m| m.iter().map(|s| char::from(b'0' + s)).collect())
            .collect()
    });
    ctx.write_json(
        "enumerate.json",
        &json!({
            "reference": a.reference,
            "order": a.order,
            "alphabet": a.alphabet,
            "circular": circular,
            "lambda": lambda,
            "count": found.count,
            "members": members,
            "bound": bound,
            "holds": bound.holds(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_inclusive() {
        assert_eq!(parse_grid("--x", "0.2:1.0:5").unwrap(), vec![0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(parse_grid("--x", "0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("--x", "1,2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("--x", "0:1").is_err());
        assert!(parse_grid("--x", "0:1:0").is_err());
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("3/8"), Some(0.375));
        assert_eq!(parse_fraction("0.25"), Some(0.25));
        assert_eq!(parse_fraction("1/0"), None);
    }

    #[test]
    fn solver_errors_are_not_config_errors() {
        assert!(!is_config_error(&Error::InnerSolverDiverged("x".into())));
        assert!(is_config_error(&Error::InvalidArgument("x".into())));
        assert_eq!(kind(&Error::EmptyFeasibleSet("x".into())), "EmptyFeasibleSet");
    }
}
