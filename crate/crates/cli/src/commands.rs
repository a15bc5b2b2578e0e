use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use otassign::harness::eval::predict;
use otassign::harness::{run_ablation, run_training_on, ConfusionMatrix, Dataset, RunResult, TrainConfig, WorldConfig};
use otassign::metrics::{list_images, load_raster, MetricReport, METRICS_VERSION};
use otassign::pixel::io::{encode_pseudo_labels, read_label_png, write_label_png};
use otassign::pixel::{confidence_gate, make_pseudo_labels};
use otassign::transport::io::{decode_prob_tensor, encode_plan, read_cost};
use otassign::transport::{
    build_cost_matrix, flatten_predictions, lp_oracle_solve, sinkhorn_solve, transport_cost, MarginalPrior,
    SinkhornSettings,
};

use crate::manifest::{dir_of, Manifest};
use crate::{AblateArgs, AssignArgs, EvalArgs, MetricsArgs, RunArgs, SolveOtArgs};

/// Probability files may deviate from the simplex by this much.
const PROBS_TOLERANCE: f64 = 1e-4;

pub enum Status {
    Ok,
    NotConverged,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn ensure_parent(file: &Path) -> Result<()> {
    create_dir(&dir_of(file))
}

pub fn solve_ot(a: &SolveOtArgs) -> Result<Status> {
    let start = Instant::now();
    let bytes = read(&a.cost)?;
    let cost = read_cost(&bytes).with_context(|| format!("parsing {}", a.cost.display()))?;
    let settings = SinkhornSettings {
        beta: a.beta,
        tolerance: a.tol,
        max_iters: a.max_iters,
        ..SinkhornSettings::default()
    };
    settings.validate()?;
    let (n, k) = (cost.rows(), cost.cols());
    let prior = MarginalPrior::uniform(n, k);
    let read_seconds = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let plan = sinkhorn_solve(&cost, &prior, &settings)?;
    let solve_seconds = t.elapsed().as_secs_f64();
    ensure_parent(&a.out)?;
    write(&a.out, encode_plan(&plan)?)?;

    let mut m = Manifest::new("solve-ot");
    m.config("beta", a.beta)
        .config("tol", a.tol)
        .config("max_iters", a.max_iters)
        .config("oracle", a.oracle)
        .input(&a.cost.display().to_string(), &bytes)
        .result("rows", n)
        .result("cols", k)
        .result("converged", plan.converged)
        .result("iterations_used", plan.iterations_used)
        .result("final_violation", plan.final_violation);
    let objective = transport_cost(&plan, &cost)?;
    println!("n={n} k={k}");
    println!("converged={} iterations={} violation={:e}", plan.converged, plan.iterations_used, plan.final_violation);
    println!("sinkhorn_objective={objective}");
    m.result("sinkhorn_objective", objective);

    let mut oracle_seconds = 0.0;
    if a.oracle {
        let t = Instant::now();
        let lp = lp_oracle_solve(&cost, &prior)?;
        oracle_seconds = t.elapsed().as_secs_f64();
        let gap = objective - lp.objective;
        let bound = a.beta * ((n * k) as f64).ln();
        println!("lp_objective={}", lp.objective);
        println!("entropic_gap={gap}");
        println!("gap_bound={bound}");
        m.result("lp_objective", lp.objective).result("entropic_gap", gap).result("gap_bound", bound);
    }
    m.timing("read_seconds", read_seconds)
        .timing("ot_solve_seconds", solve_seconds)
        .timing("ot_seconds_per_iteration", solve_seconds / plan.iterations_used.max(1) as f64)
        .timing("oracle_seconds", oracle_seconds);
    m.write(&dir_of(&a.out))?;
    Ok(if plan.converged { Status::Ok } else { Status::NotConverged })
}

pub fn assign(a: &AssignArgs) -> Result<Status> {
    let bytes = read(&a.probs)?;
    let probs = decode_prob_tensor(&bytes, PROBS_TOLERANCE).with_context(|| format!("parsing {}", a.probs.display()))?;
    if !(0.0..=1.0).contains(&a.gamma) {
        bail!("--gamma {} outside [0, 1]", a.gamma);
    }
    let (p, layout) = flatten_predictions(&probs)?;
    let settings = SinkhornSettings::default();
    let gate = confidence_gate(&p, a.gamma)?;
    let t = Instant::now();
    let cost = build_cost_matrix(&p, &settings)?;
    let plan = sinkhorn_solve(&cost, &MarginalPrior::uniform(p.rows(), p.cols()), &settings)?;
    let solve_seconds = t.elapsed().as_secs_f64();
    let pl = make_pseudo_labels(&plan, gate, layout)?;

    create_dir(&a.out)?;
    write(&a.out.join("pseudo.pslg"), encode_pseudo_labels(&pl)?)?;
    let labels: Vec<u8> = pl.q.argmax_rows().into_iter().map(|c| c as u8).collect();
    let hw = layout.height * layout.width;
    for b in 0..layout.batch {
        write_label_png(
            &a.out.join(format!("argmax_{b:03}.png")),
            &labels[b * hw..(b + 1) * hw],
            layout.height,
            layout.width,
        )?;
    }
    let fraction = pl.gate.fraction();
    println!("gate_fraction={fraction}");
    println!("converged={} iterations={}", plan.converged, plan.iterations_used);
    let mut m = Manifest::new("assign");
    m.config("gamma", a.gamma)
        .config("beta", settings.beta)
        .config("tol", settings.tolerance)
        .config("max_iters", settings.max_iters)
        .input(&a.probs.display().to_string(), &bytes)
        .result("shape", format!("{}x{}x{}x{}", layout.batch, p.cols(), layout.height, layout.width))
        .result("gate_fraction", fraction)
        .result("converged", plan.converged)
        .result("iterations_used", plan.iterations_used)
        .result("final_violation", plan.final_violation)
        .timing("ot_solve_seconds", solve_seconds)
        .timing("ot_seconds_per_iteration", solve_seconds / plan.iterations_used.max(1) as f64);
    m.write(&a.out)?;
    Ok(if plan.converged { Status::Ok } else { Status::NotConverged })
}

pub fn metrics(a: &MetricsArgs) -> Result<Status> {
    let t = Instant::now();
    let paths = list_images(&a.dir).with_context(|| format!("listing {}", a.dir.display()))?;
    let mut m = Manifest::new("metrics");
    m.config("dir", a.dir.display()).config("metrics_version", METRICS_VERSION);
    let mut rasters = Vec::new();
    for p in &paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match load_raster(p) {
            Ok(r) => {
                m.input(&name, &read(p)?);
                rasters.push((name, r));
            }
            Err(e) => eprintln!("skipping {}: {e}", p.display()),
        }
    }
    if rasters.is_empty() {
        bail!("no decodable images in {}", a.dir.display());
    }
    let report = MetricReport::from_rasters(rasters.iter().map(|(n, r)| (n.clone(), r)))?;
    ensure_parent(&a.out)?;
    write(&a.out, report.to_csv())?;
    let summary = report.summary();
    print!("{summary}");
    for line in summary.lines() {
        if let Some((k, v)) = line.split_once(": ") {
            m.result(&k.replace(' ', "_"), v);
        }
    }
    m.timing("total_seconds", t.elapsed().as_secs_f64());
    m.write(&dir_of(&a.out))?;
    Ok(Status::Ok)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(TrainConfig, Vec<u8>)> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let mut cfg = TrainConfig::parse(text).with_context(|| format!("config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((cfg, bytes))
}

fn timing_csv(run: &RunResult) -> String {
    let mut s = String::from("step,ot_converged,ot_iterations,ot_seconds,step_seconds\n");
    for r in &run.log {
        let conv = r.ot_converged.map_or("NA".to_string(), |c| c.to_string());
        let _ = writeln!(s, "{},{conv},{},{:.9},{:.9}", r.step, r.ot_iterations, r.ot_seconds, r.step_seconds);
    }
    s
}

fn run_timings(m: &mut Manifest, prefix: &str, run: &RunResult) {
    let t = &run.timings;
    m.result(&format!("{prefix}ot_solves"), t.ot_solves)
        .result(&format!("{prefix}ot_not_converged"), t.ot_not_converged)
        .timing(&format!("{prefix}mean_step_seconds"), t.mean_step_seconds)
        .timing(&format!("{prefix}mean_ot_seconds"), t.mean_ot_seconds)
        .timing(&format!("{prefix}ot_fraction"), t.ot_fraction())
        .timing(&format!("{prefix}eval_seconds"), t.eval_seconds);
}

pub fn toy_train(a: &RunArgs) -> Result<Status> {
    let start = Instant::now();
    let (cfg, bytes) = load_config(&a.config, a.seed)?;
    let world = WorldConfig::default();
    let data = Dataset::generate(&world, cfg.seed)?;
    let data_seconds = start.elapsed().as_secs_f64();
    let run = run_training_on(&cfg, &data)?;

    create_dir(&a.out)?;
    write(&a.out.join("metrics.csv"), run.metrics_csv())?;
    write(&a.out.join("iou.csv"), run.iou.to_csv())?;
    write(&a.out.join("timing.csv"), timing_csv(&run))?;
    let (pred_dir, truth_dir) = (a.out.join("predictions"), a.out.join("truth"));
    create_dir(&pred_dir)?;
    create_dir(&truth_dir)?;
    let n = world.size;
    for (i, s) in data.eval.iter().enumerate() {
        let name = format!("eval_{i:03}.png");
        write_label_png(&pred_dir.join(&name), &predict(&run.model, s), n, n)?;
        write_label_png(&truth_dir.join(&name), &s.labels.labels, n, n)?;
    }
    println!("miou={}", run.iou.mean);
    let mut m = Manifest::new("toy-train");
    m.config_text(&cfg.to_text())
        .input(&a.config.display().to_string(), &bytes)
        .result("miou", run.iou.mean);
    run_timings(&mut m, "", &run);
    m.timing("data_seconds", data_seconds).timing("total_seconds", start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(Status::Ok)
}

pub fn ablate(a: &AblateArgs) -> Result<Status> {
    let start = Instant::now();
    let (cfg, bytes) = load_config(&a.run.config, a.run.seed)?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (0..a.seeds).map(|i| cfg.seed.wrapping_add(i)).collect();
    let (report, runs) = run_ablation(&cfg, &WorldConfig::default(), &seeds)?;

    let out = &a.run.out;
    create_dir(out)?;
    write(&out.join("ablation.csv"), report.to_csv())?;
    let mut m = Manifest::new("ablate");
    m.config_text(&cfg.to_text())
        .config("seeds", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
        .input(&a.run.config.display().to_string(), &bytes);
    for pair in &runs {
        for (tag, run) in [("ot_on", &pair.ot_on), ("ot_off", &pair.ot_off)] {
            let stem = format!("seed{}_{tag}", pair.seed);
            write(&out.join(format!("{stem}_metrics.csv")), run.metrics_csv())?;
            write(&out.join(format!("{stem}_iou.csv")), run.iou.to_csv())?;
            write(&out.join(format!("{stem}_timing.csv")), timing_csv(run))?;
            run_timings(&mut m, &format!("{stem}."), run);
        }
    }
    let (on, off) = report.mean_miou();
    m.result("mean_miou_ot_on", on)
        .result("mean_miou_ot_off", off)
        .result("mean_paired_delta", report.mean_delta())
        .result("rare_improved", format!("{}/{}", report.rare_improved(), report.rows.len()))
        .timing("total_seconds", start.elapsed().as_secs_f64());
    m.write(out)?;
    print!("{}", report.summary());
    Ok(Status::Ok)
}

pub fn eval(a: &EvalArgs) -> Result<Status> {
    let start = Instant::now();
    let (cfg, bytes) = load_config(&a.config, a.seed)?;
    let world = WorldConfig::default();
    let data = Dataset::generate(&world, cfg.seed)?;
    let mut cm = ConfusionMatrix::new(world.classes);
    let mut m = Manifest::new("eval");
    m.config_text(&cfg.to_text()).input(&a.config.display().to_string(), &bytes);
    for (i, s) in data.eval.iter().enumerate() {
        let path = a.pred.join(format!("eval_{i:03}.png"));
        let pred = read_label_png(&path).with_context(|| format!("reading {}", path.display()))?;
        if pred.labels.len() != s.labels.labels.len() {
            bail!("{} has {} pixels, expected {}", path.display(), pred.labels.len(), s.labels.labels.len());
        }
        m.input(&format!("eval_{i:03}.png"), &read(&path)?);
        cm.add(&s.labels.labels, &pred.labels, s.labels.ignore_value)?;
    }
    let iou = cm.iou();
    create_dir(&a.out)?;
    write(&a.out.join("iou.csv"), iou.to_csv())?;
    println!("miou={}", iou.mean);
    m.result("miou", iou.mean).timing("total_seconds", start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(Status::Ok)
}
