use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use axmap_core::axmult::{load_lut, lut_from_bytes, save_lut, AxMode, AxMultiplier, DEFAULT_ENERGIES};
use axmap_core::mapping::AxmapFile;
use axmap_core::mining::{
    records_to_axlog, reevaluate, run_mining, subset_batches, DnnSystem, MiningConfig, Summary, SystemUnderTest,
};
use axmap_core::pstl::parse_query;
use axmap_core::qnn::{Dataset, QuantModel};
use axmap_core::report::{self, Bundle, AXLOG_FILE, AXMAP_FILE, AXTR_FILE, SUMMARY_FILE};
use axmap_core::{derive_seed, FractionVectors, Query, Trace};

use crate::args::{
    InferArgs, LutCommand, MappingArgs, MineArgs, ModelArgs, MultArgs, ReportArgs, RobustnessArgs, TraceArgs,
};
use crate::error::{CliError, CliResult, Context};

fn load_model(args: &ModelArgs) -> CliResult<(QuantModel, Dataset)> {
    let model = QuantModel::load_axqm(&args.model).context(args.model.display())?;
    let data = match &args.labels {
        Some(labels) => Dataset::load_idx(&args.dataset, labels),
        None => Dataset::load_axds(&args.dataset),
    }
    .context(args.dataset.display())?;
    if args.batch_size == 0 {
        return Err(CliError::input("--batch-size must be positive"));
    }
    Ok((model, data))
}

fn mode_from_spec(spec: &str) -> CliResult<AxMode> {
    if spec == "exact" {
        return Ok(AxMode::exact());
    }
    if let Some(k) = spec.strip_prefix("trunc:") {
        let k: u32 = k
            .parse()
            .map_err(|_| CliError::input(format!("bad truncation width in `{spec}`")))?;
        return Ok(AxMode::truncation(k)?);
    }
    load_lut(spec).context(spec)
}

fn load_mult(args: &MultArgs) -> CliResult<AxMultiplier> {
    let mut specs: [Option<&str>; 3] = [None; 3];
    for part in args.mult.split(',') {
        let (key, spec) = part
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("--mult entry `{part}` is not `mN=SPEC`")))?;
        let slot = match key.trim() {
            "m0" => 0,
            "m1" => 1,
            "m2" => 2,
            other => return Err(CliError::input(format!("--mult key `{other}` is not m0, m1 or m2"))),
        };
        specs[slot] = Some(spec.trim());
    }
    let mut modes = Vec::with_capacity(3);
    for (i, spec) in specs.iter().enumerate() {
        let spec = spec.ok_or_else(|| CliError::input(format!("--mult is missing m{i}")))?;
        let mode = mode_from_spec(spec)?;
        let builtin = spec == "exact" || spec.starts_with("trunc:");
        let energy = match &args.energy {
            Some(e) => e[i],
            None if builtin => DEFAULT_ENERGIES[i],
            None => mode.energy_per_op(),
        };
        modes.push(mode.with_energy(energy)?);
    }
    let modes: [AxMode; 3] = modes.try_into().expect("three modes");
    Ok(AxMultiplier::new(modes)?)
}

fn parse_fv(literal: &str, layers: usize) -> CliResult<FractionVectors> {
    match literal {
        "exact" => return Ok(FractionVectors::zeros(layers)),
        "m2" => return Ok(FractionVectors::all_m2(layers)),
        _ => {}
    }
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for pair in literal.split(',') {
        let parsed = pair
            .split_once(':')
            .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
        let (a, b) = parsed.ok_or_else(|| CliError::input(format!("--fv entry `{pair}` is not `v1:v2`")))?;
        v1.push(a);
        v2.push(b);
    }
    if v1.len() != layers {
        return Err(CliError::input(format!(
            "--fv has {} pairs, the model has {layers} layers",
            v1.len()
        )));
    }
    Ok(FractionVectors::new(v1, v2)?)
}

fn load_fv(args: &MappingArgs, model: &QuantModel) -> CliResult<Option<FractionVectors>> {
    if let Some(path) = &args.mapping {
        let file = AxmapFile::load(path).context(path.display())?;
        file.replay(model).context(path.display())?;
        return Ok(Some(file.fractions()?));
    }
    args.fv
        .as_deref()
        .map(|l| parse_fv(l, model.mac_layer_count()))
        .transpose()
}

fn write_out(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).context(path.display())
}

pub fn infer(args: &InferArgs) -> CliResult<()> {
    let (model, data) = load_model(&args.model)?;
    let mult = load_mult(&args.mult)?;
    let fv = load_fv(&args.mapping, &model)?;
    let system = DnnSystem::from_dataset(&model, &mult, &data, args.model.batch_size, 1.0)?;
    let exact = system.exact_accuracies();
    let trace = fv.as_ref().map(|fv| system.run(fv)).transpose()?;
    let mut s = String::from("batch,images,acc_exact");
    if trace.is_some() {
        s.push_str(",acc_approx,acc_diff");
    }
    s.push('\n');
    for (i, b) in system.batches().iter().enumerate() {
        write!(s, "{i},{},{}", b.len(), exact[i]).unwrap();
        if let Some((_, approx)) = trace.as_ref().and_then(|t| t.accuracies()) {
            write!(s, ",{},{}", approx[i], trace.as_ref().unwrap().acc_diff()[i]).unwrap();
        }
        s.push('\n');
    }
    match &args.out {
        Some(p) => write_out(p, &s)?,
        None => print!("{s}"),
    }
    let weighted = |acc: &[f64]| {
        let n: usize = system.batches().iter().map(|b| b.len()).sum();
        acc.iter()
            .zip(system.batches())
            .map(|(a, b)| a * b.len() as f64)
            .sum::<f64>()
            / n as f64
    };
    eprintln!("exact accuracy {:.2}%", weighted(&exact));
    if let Some((_, approx)) = trace.as_ref().and_then(|t| t.accuracies()) {
        eprintln!(
            "approximate accuracy {:.2}%, energy gain {:.4}",
            weighted(approx),
            trace.as_ref().unwrap().energy_gain()
        );
    }
    Ok(())
}

fn drop_summary(trace: &Trace) -> String {
    let stats = report::drop_stats(trace);
    let mut s = format!("avg drop {:.4}, max drop {:.4}", stats.avg_acc_drop, stats.max_acc_drop);
    for (t, p) in stats.percent_over {
        write!(s, ", over {t}%: {p:.1}% of batches").unwrap();
    }
    s
}

pub fn trace(args: &TraceArgs) -> CliResult<()> {
    let (model, data) = load_model(&args.model)?;
    let mult = load_mult(&args.mult)?;
    let fv = load_fv(&args.mapping, &model)?.ok_or_else(|| CliError::input("trace needs --mapping or --fv"))?;
    let system = DnnSystem::from_dataset(&model, &mult, &data, args.model.batch_size, 1.0)?;
    let trace = system.run(&fv)?;
    write_out(&args.out, &trace.to_axtr())?;
    println!("energy gain {:.6}, {}", trace.energy_gain(), drop_summary(&trace));
    Ok(())
}

fn load_query(path: &Path) -> CliResult<Query> {
    let text = fs::read_to_string(path).context(path.display())?;
    parse_query(&text).context(path.display())
}

pub fn robustness(args: &RobustnessArgs) -> CliResult<()> {
    let query = load_query(&args.query)?;
    let traces = args
        .traces
        .iter()
        .map(|p| Trace::load(p).context(p.display()))
        .collect::<CliResult<Vec<_>>>()?;
    let mut s = String::from("trace,theta,robustness,satisfied\n");
    for (path, t) in args.traces.iter().zip(&traces) {
        let thetas = if args.theta.is_empty() {
            vec![t.energy_gain()]
        } else {
            args.theta.clone()
        };
        for theta in thetas {
            // r = 0 on the antecedent boundary says nothing; the verdict is Boolean
            let r = query.robustness(theta, t);
            writeln!(s, "{},{theta},{r},{}", path.display(), query.satisfies(theta, t) as u8).unwrap();
        }
    }
    s.push_str("\ntrace,conjunct,robustness,satisfied\n");
    for (path, t) in args.traces.iter().zip(&traces) {
        for c in query.conjunct_status(t) {
            writeln!(
                s,
                "{},\"{}\",{},{}",
                path.display(),
                c.text,
                c.robustness,
                c.satisfied as u8
            )
            .unwrap();
        }
    }
    if args.batches {
        for (path, t) in args.traces.iter().zip(&traces) {
            write!(s, "\n# {}\n{}", path.display(), report::trace_csv(&query, t)).unwrap();
        }
    }
    print!("{s}");
    Ok(())
}

pub fn mine(args: &MineArgs) -> CliResult<()> {
    let (model, data) = load_model(&args.model)?;
    let mult = load_mult(&args.mult)?;
    let query = load_query(&args.query)?;
    let cfg = MiningConfig {
        iterations: args.iterations,
        proposal_sigma: args.sigma,
        initial_beta: args.initial_beta,
        target_accept_rate: args.target_accept,
        seed: derive_seed(args.seed, "mining"),
        optimization_subset_fraction: args.subset,
    };
    cfg.validate()?;
    let batches = data.batches(&model, args.model.batch_size)?;
    let subset = subset_batches(&batches, cfg.optimization_subset_fraction)?.to_vec();
    log::info!("mining on {} of {} batches", subset.len(), batches.len());
    fs::create_dir_all(&args.out).context(args.out.display())?;

    let search = DnnSystem::new(&model, &mult, subset)?;
    let result = run_mining(&search, &query, &cfg)?;
    let breaches = result.penalty_dominance_violations();
    let full = match &result.best_mapping {
        Some(_) => {
            let system = DnnSystem::new(&model, &mult, batches)?;
            let record = reevaluate(&result, &system, &query)?;
            Some((system, record))
        }
        None => None,
    };
    let mut summary = Summary::new(&query, &cfg, &result, full.as_ref().map(|(_, r)| r));
    summary.seed = args.seed;

    write_out(&args.out.join(AXLOG_FILE), &records_to_axlog(&result.records))?;
    if let (Some(best), Some((system, full))) = (&result.best_mapping, &full) {
        let plan = system.plan(best)?;
        let mapping = AxmapFile::from_plan(&plan, &model, &mult)?;
        write_out(&args.out.join(AXMAP_FILE), &mapping.to_json())?;
        write_out(&args.out.join(AXTR_FILE), &full.trace.to_axtr())?;
    }
    write_out(&args.out.join(SUMMARY_FILE), &summary.to_json())?;

    if !breaches.is_empty() {
        return Err(CliError::invariant(format!(
            "penalty does not dominate: unsatisfied/satisfied iteration pairs {breaches:?}"
        )));
    }
    match (summary.theta_star, &summary.full) {
        (Some(theta), Some(full)) => {
            let sub = summary.subset.as_ref().expect("subset record of the best mapping");
            println!(
                "theta* = {theta:.6} at iteration {}; rhs robustness {:.4} on the subset, {:.4} on all {} batches ({})",
                summary.best_iteration.unwrap_or(0),
                sub.rhs_robustness,
                full.rhs_robustness,
                full.batches,
                if full.satisfied { "satisfied" } else { "violated" },
            );
            Ok(())
        }
        _ => Err(CliError::infeasible(
            summary.diagnostic.unwrap_or_else(|| "no satisfying mapping".into()),
        )),
    }
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let bundle = Bundle::load(&args.bundle).context(args.bundle.display())?;
    let out = args.out.as_ref().unwrap_or(&args.bundle);
    let files = report::write_report(&bundle, out)?;
    println!(
        "theta* {:?}, energy gain {:.6}, utilization M0/M1/M2 {:.2}/{:.2}/{:.2}%, {}",
        bundle.mining.theta_star,
        bundle.mapping.energy_gain,
        bundle.mapping.utilization.percentages()[0],
        bundle.mapping.utilization.percentages()[1],
        bundle.mapping.utilization.percentages()[2],
        drop_summary(&bundle.trace),
    );
    println!("wrote {}", files.join(", "));
    Ok(())
}

pub fn lut(cmd: &LutCommand) -> CliResult<()> {
    match cmd {
        LutCommand::Build { mode, energy, out } => {
            let m = mode_from_spec(mode)?.with_energy(*energy)?;
            save_lut(&m, out).context(out.display())?;
            println!("wrote {} ({}, energy {})", out.display(), m.name(), m.energy_per_op());
        }
        LutCommand::Inspect { path } => {
            let bytes = fs::read(path).context(path.display())?;
            let (m, stored) = lut_from_bytes(&bytes).context(path.display())?;
            let p = m.error_profile();
            println!("name {}", m.name());
            println!("energy_per_op {}", m.energy_per_op());
            println!("exact {}", m.is_exact());
            println!("mean_error {}", p.mean_error);
            println!("mean_absolute_error {}", p.mean_absolute_error);
            println!("max_absolute_error {}", p.max_absolute_error);
            println!(
                "stored_profile {}",
                if stored.is_some() { "verified" } else { "absent" }
            );
        }
    }
    Ok(())
}
