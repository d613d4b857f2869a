use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use vmfkd::activation_model::{
    class_relations, derive_from_network, export_prior, folded_temperature, gen_disc_gap, import_prior, kappa_inspection,
    load_relations_csv, save_relations_csv, ClassRelationMatrix, GapConcentration,
};
use vmfkd::data::{class_alignment_gaps, load_idx, viz_export, Dataset, Split};
use vmfkd::directional::sample_seeded;
use vmfkd::distill::{
    run_experiment, summarize, write_metrics_csv, write_runs_csv, write_summary_csv, DistillMode, DistillSpec, Experiment,
    RunReport,
};
use vmfkd::nn::{accuracy, checkpoint_hash, load_checkpoint, save_checkpoint, train_with_callback, LabelObjective, Network};

use crate::config::{KappaKeyword, KappaSetting, RunConfig};
use crate::{ConfigArgs, ConfigError, DataArgs, RunFailures};

fn load_config(args: &ConfigArgs, extra: Vec<String>) -> Result<RunConfig> {
    let mut overrides = args.set.clone();
    overrides.extend(extra);
    let mut cfg = RunConfig::load(args.config.as_deref(), &overrides)?;
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn load_teacher(path: &Path) -> Result<Network> {
    load_checkpoint(path).with_context(|| format!("loading teacher checkpoint {}", path.display()))
}

pub fn train_teacher(args: &ConfigArgs, epochs: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(e) = epochs {
        extra.push(format!("teacher.train.epochs={e}"));
    }
    if let Some(s) = seed {
        extra.push(format!("teacher.seed={s}"));
        extra.push(format!("teacher.train.seed={s}"));
    }
    let cfg = load_config(args, extra)?;
    let train = cfg.data.train_set()?;
    let test = cfg.data.test_set()?;
    let net = cfg.teacher.build(cfg.teacher.seed)?;
    if net.input_dim() != train.feature_dim() {
        return Err(ConfigError(format!("teacher.layers starts with {} but the data has {} features", net.input_dim(), train.feature_dim())).into());
    }
    let mut log = String::from("epoch,train_loss,train_accuracy,test_accuracy\n");
    let outcome = train_with_callback(net, &train, &cfg.teacher.train, &LabelObjective, |n, m| {
        let acc = accuracy(n, &test)?;
        let _ = writeln!(log, "{},{},{},{}", m.epoch, m.train_loss, m.train_accuracy, acc);
        eprintln!("epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}", m.epoch, m.train_loss, m.train_accuracy, acc);
        Ok(())
    })?;
    let ckpt = cfg.teacher_checkpoint();
    create_parent(&ckpt)?;
    save_checkpoint(&outcome.network, &ckpt)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("teacher_metrics.csv"), log)?;
    cfg.write_resolved(&cfg.out_dir, "train-teacher")?;
    println!("checkpoint: {}", ckpt.display());
    println!("test accuracy: {:.4}", accuracy(&outcome.network, &test)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn derive(
    args: &ConfigArgs,
    checkpoint: Option<PathBuf>,
    kappa: Option<String>,
    samples: Option<usize>,
    temperature: Option<f64>,
    seed: Option<u64>,
    per_class_scaling: bool,
) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(k) = kappa {
        let value = if k == "inspect" { "\"inspect\"".to_string() } else { format!("{:?}", parse_f64("kappa", &k)?) };
        extra.push(format!("derive.kappa={value}"));
    }
    if let Some(n) = samples {
        extra.push(format!("derive.samples_per_class={n}"));
    }
    if let Some(t) = temperature {
        extra.push(format!("derive.relation_temperature={t:?}"));
    }
    if let Some(s) = seed {
        extra.push(format!("derive.seed={s}"));
    }
    if per_class_scaling {
        extra.push("derive.per_class_scaling=true".into());
    }
    let mut cfg = load_config(args, extra)?;
    if let Some(c) = checkpoint {
        cfg.teacher.checkpoint = Some(c);
    }
    let ckpt = cfg.teacher_checkpoint();
    let teacher = load_teacher(&ckpt)?;
    let kappa = match cfg.derive.kappa {
        KappaSetting::Fixed(k) => k,
        KappaSetting::Named(KappaKeyword::Inspect) => {
            let k = kappa_inspection(&teacher, &cfg.data.train_set().context("kappa = \"inspect\" needs the training data")?)?;
            println!("inspected kappa: {k:.4}");
            k
        }
    };
    let model = derive_from_network(&teacher, kappa, cfg.derive.per_class_scaling)?;
    let tau = cfg.derive.relation_temperature.unwrap_or_else(|| folded_temperature(&model, cfg.distill.temperature));
    let relations = class_relations(&teacher, &model, cfg.derive.samples_per_class, tau, cfg.derive.seed)?;

    let prior_path = cfg.prior_path();
    let rel_path = cfg.relations_path();
    create_parent(&prior_path)?;
    create_parent(&rel_path)?;
    export_prior(&model, &prior_path)?;
    save_relations_csv(&relations, cfg.derive.seed, Some(checkpoint_hash(&ckpt)?), &rel_path)?;
    cfg.derive.kappa = KappaSetting::Fixed(kappa);
    cfg.derive.relation_temperature = Some(tau);
    cfg.write_resolved(&cfg.out_dir, "derive")?;

    let argmax = relations.row_argmax();
    let dominant = argmax.iter().enumerate().filter(|(i, &a)| *i == a).count();
    println!("kappa: {kappa}  relation temperature: {tau:.6}");
    println!("prior: {}", prior_path.display());
    println!("relations: {}", rel_path.display());
    println!("row argmax: {argmax:?}");
    println!("diagonal-dominant rows: {dominant}/{}", argmax.len());
    Ok(())
}

pub fn distill(args: &ConfigArgs, seeds: Option<Vec<u64>>, modes: Option<Vec<String>>, epochs: Option<usize>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(s) = seeds {
        extra.push(format!("distill.seeds={s:?}"));
    }
    if let Some(m) = modes {
        let parsed = m.iter().map(|s| s.parse::<DistillMode>()).collect::<vmfkd::Result<Vec<_>>>().map_err(|e| ConfigError(e.to_string()))?;
        extra.push(format!("distill.modes={:?}", parsed.iter().map(|m| m.name()).collect::<Vec<_>>()));
    }
    if let Some(e) = epochs {
        extra.push(format!("student.train.epochs={e}"));
    }
    let cfg = load_config(args, extra)?;
    if cfg.distill.modes.is_empty() || cfg.distill.seeds.is_empty() || cfg.shifts.is_empty() {
        return Err(ConfigError("distill needs at least one mode, seed and shift".into()).into());
    }
    let train = cfg.data.train_set()?;
    let test = cfg.data.test_set()?;
    fs::create_dir_all(&cfg.out_dir)?;
    cfg.write_resolved(&cfg.out_dir, "distill")?;

    let needs_teacher = cfg.distill.modes.iter().any(|m| m.needs_teacher());
    let needs_relations = cfg.distill.modes.iter().any(|m| m.needs_relations());
    let teacher = needs_teacher.then(|| load_teacher(&cfg.teacher_checkpoint()).map_err(|e| format!("{e:#}")));
    let relations: Option<Result<ClassRelationMatrix, String>> = needs_relations.then(|| {
        let path = cfg.relations_path();
        load_relations_csv(&path)
            .map(|(m, _)| m)
            .map_err(|e| format!("loading relations {} ({e}); run `vmfkd derive` first", path.display()))
    });

    let exp = Experiment {
        train_set: &train,
        eval_set: &test,
        student_layers: cfg.student.layers.clone(),
        activation: cfg.student.activation,
        final_bias: cfg.student.final_bias,
        train: cfg.student.train.clone(),
        eval_on_shifted: cfg.distill.eval_on_shifted,
    };
    let students_dir = cfg.out_dir.join("students");
    let mut reports: Vec<RunReport> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for shift in &cfg.shifts {
        for &mode in &cfg.distill.modes {
            let spec = match build_spec(&cfg, mode, teacher.as_ref(), relations.as_ref()) {
                Ok(s) => s,
                Err(msg) => {
                    for &seed in &cfg.distill.seeds {
                        failures.push(format!("{mode} {} {} seed {seed}: {msg}", shift.kind.name(), shift.param()));
                    }
                    continue;
                }
            };
            for &seed in &cfg.distill.seeds {
                let label = format!("{mode} {} {} seed {seed}", shift.kind.name(), shift.param());
                match run_experiment(&exp, &spec, shift, seed) {
                    Ok(r) => {
                        eprintln!("{label}: accuracy {:.4} ({:.1}s)", r.accuracy, r.wall_time.as_secs_f64());
                        if cfg.distill.save_students {
                            fs::create_dir_all(&students_dir)?;
                            let name = format!("{mode}_{}_{}_seed{seed}.ckpt", shift.kind.name(), shift.param());
                            save_checkpoint(&r.student, students_dir.join(name))?;
                        }
                        reports.push(r);
                    }
                    Err(e) => failures.push(format!("{label}: {e}")),
                }
            }
        }
    }

    write_metrics_csv(&reports, cfg.out_dir.join("metrics.csv"))?;
    write_runs_csv(&reports, cfg.out_dir.join("runs.csv"))?;
    let summary = summarize(&reports);
    write_summary_csv(&summary, cfg.out_dir.join("summary.csv"))?;
    println!("{:<12} {:<12} {:>6} {:>5} {:>9} {:>8}", "mode", "shift", "param", "runs", "mean_acc", "std");
    for row in &summary {
        println!(
            "{:<12} {:<12} {:>6} {:>5} {:>9.4} {:>8.4}",
            row.mode.name(),
            row.shift_kind.name(),
            row.shift_param,
            row.runs,
            row.mean_accuracy,
            row.std_accuracy
        );
    }
    if failures.is_empty() {
        return Ok(());
    }
    fs::write(cfg.out_dir.join("failures.txt"), failures.join("\n") + "\n")?;
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Err(RunFailures(failures.len()).into())
}

fn build_spec(
    cfg: &RunConfig,
    mode: DistillMode,
    teacher: Option<&Result<Network, String>>,
    relations: Option<&Result<ClassRelationMatrix, String>>,
) -> Result<DistillSpec, String> {
    let mut spec = DistillSpec::new(mode);
    spec.temperature = cfg.distill.temperature;
    spec.scale_by_t2 = cfg.distill.scale_by_t2;
    if let (Some(a), true) = (cfg.distill.alpha, mode != DistillMode::Label) {
        spec.alpha = a;
    }
    if mode.needs_teacher() {
        spec.teacher = Some(teacher.ok_or("teacher not loaded")?.clone()?);
    }
    if mode.needs_relations() {
        spec.relations = Some(relations.ok_or("relations not loaded")?.clone()?);
    }
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn eval_set(cfg: &RunConfig, data: &DataArgs) -> Result<Dataset> {
    match (&data.images, &data.labels) {
        (Some(i), Some(l)) => Ok(load_idx(i, l, Split::Test)?),
        _ => cfg.data.test_set(),
    }
}

pub fn inspect(args: &ConfigArgs, checkpoint: Option<PathBuf>, data: &DataArgs, kappa: f64) -> Result<()> {
    let cfg = load_config(args, Vec::new())?;
    let net = load_teacher(&checkpoint.unwrap_or_else(|| cfg.teacher_checkpoint()))?;
    let ds = eval_set(&cfg, data)?;
    let plain = net.accuracy(&ds)?;
    let normalized = net.normalized_accuracy(&ds)?;
    let drop = plain - normalized;
    println!("accuracy:            {plain:.4}");
    println!("normalized accuracy: {normalized:.4}");
    println!("drop:                {:.2} points ({:.2}% relative)", 100.0 * drop, if plain > 0.0 { 100.0 * drop / plain } else { 0.0 });
    let model = derive_from_network(&net, kappa, false)?;
    let gap = gen_disc_gap(&net, &model, &ds, GapConcentration::Model)?;
    let exact = gen_disc_gap(&net, &model, &ds, GapConcentration::PerSampleNorms)?;
    let norms = net.prototype_norms();
    let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &n| (a.min(n), b.max(n)));
    println!("prototype norms ‖w_i‖: min {lo:.4} max {hi:.4} mean {:.4} cv {:.4}", gap.prototype_norms.mean, gap.prototype_norms.cv());
    println!("activation norm ‖a‖: mean {:.4} cv {:.4}", gap.activation_norm_overall.mean, gap.activation_norm_overall.cv());
    println!("kappa inspection (mean‖a‖·mean‖w‖): {:.4}", kappa_inspection(&net, &ds)?);
    println!("gen/disc gap, κ = {kappa}: {:.6}", gap.mean_kl);
    println!("gen/disc gap, κ_i = ‖w_i‖‖a‖: {:.6}", exact.mean_kl);
    Ok(())
}

pub fn viz(args: &ConfigArgs, checkpoint: Option<PathBuf>, data: &DataArgs, kappa: Option<f64>, svg: bool) -> Result<()> {
    let cfg = load_config(args, Vec::new())?;
    let net = load_teacher(&checkpoint.unwrap_or_else(|| cfg.teacher_checkpoint()))?;
    let d = net.penultimate_dim();
    if d != 2 {
        return Err(ConfigError(format!(
            "viz needs a 2-dimensional penultimate layer but this checkpoint has d = {d}; \
             train one with e.g. --set 'teacher.layers=[784,256,2,10]' --set teacher.penultimate_activation=\"identity\""
        ))
        .into());
    }
    let ds = eval_set(&cfg, data)?;
    let kappa = match kappa {
        Some(k) => k,
        None => kappa_inspection(&net, &ds)?,
    };
    let model = derive_from_network(&net, kappa, false)?;
    let files = viz_export(&net, &ds, &model, &cfg.out_dir, svg)?;
    let gaps = class_alignment_gaps(&net, &ds, &model)?;
    let within = gaps.iter().flatten().filter(|&&g| g <= 15.0).count();
    println!("kappa: {kappa:.4}");
    println!("activations: {}", files.activations_csv.display());
    println!("densities: {}", files.density_csv.display());
    if let Some(s) = files.svg {
        println!("svg: {}", s.display());
    }
    println!("classes aligned within 15°: {within}/{}", gaps.len());
    Ok(())
}

pub fn sample(prior: &Path, class: usize, n: usize, seed: u64, scale: f64, out: Option<&Path>) -> Result<()> {
    let model = import_prior(prior)?;
    if class >= model.class_count() {
        return Err(ConfigError(format!("class {class} is out of range: the prior has {} classes", model.class_count())).into());
    }
    if !scale.is_finite() {
        return Err(ConfigError(format!("scale must be finite, got {scale}")).into());
    }
    let dist = model.component(class)?;
    let d = model.dim();
    let mut text = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for v in sample_seeded(&dist, n, seed) {
        let row: Vec<String> = v.as_slice().iter().map(|x| (x * scale).to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    match out {
        Some(p) => {
            create_parent(p)?;
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_f64(name: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| anyhow!(ConfigError(format!("{name}: `{s}` is not a number"))))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}
