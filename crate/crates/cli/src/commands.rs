//! Command implementations behind the `tsdh` binary.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use ndarray::{Array2, ArrayView2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tsdh_core::checkpoint::{load_checkpoint, save_checkpoint};
use tsdh_core::data::{
    build_relational, load_windows, make_synthetic2d, read_raw_pair, save_windows, DatasetKind,
    DatasetMeta, Normalizer, RelationalDataset, SplitSpec,
};
use tsdh_core::diffusion::{DiffusionModel, VarianceSchedule};
use tsdh_core::halluc::{
    self, baseline_respond, calibrate_avg, classify, ingest_external_responses, mitigate_avg,
    select_external_groups, CalibrationQuartiles, HallucinationLevel,
};
use tsdh_core::metrics::{
    self, combined_error_avg, dataset_relational_error, overlap_coefficient, prompt_error,
    write_scored_pairs_csv, ScoredPair, DEFAULT_OVERLAP_BINS,
};
use tsdh_core::nn::{MlpConfig, MlpNetwork};
use tsdh_core::tasks::{assemble_prompt, TaskKind, ALL_TASKS};

use crate::cli::{
    BenchmarkArgs, BuildDatasetArgs, CalibrateArgs, ClassifyArgs, HeatmapArgs, ImputeArgs,
    MitigateArgs, ScoreArgs, SplitSel, TaskSel, TrainArgs,
};
use crate::config::RunConfig;

fn load_dataset(windows: &Path, meta: &Path) -> anyhow::Result<(RelationalDataset, DatasetMeta)> {
    load_windows(windows, meta).with_context(|| {
        format!(
            "loading windows {} with metadata {}",
            windows.display(),
            meta.display()
        )
    })
}

fn split_range(split: &SplitSpec, sel: SplitSel) -> (usize, usize) {
    match sel {
        SplitSel::Train => split.train,
        SplitSel::Val => split.val,
        SplitSel::Test => split.test,
    }
}

fn slice_split<'a>(
    dataset: &'a RelationalDataset,
    split: &SplitSpec,
    sel: SplitSel,
) -> (usize, ArrayView2<'a, f64>) {
    let (lo, hi) = split_range(split, sel);
    (lo, dataset.windows.slice(ndarray::s![lo..hi, ..]))
}

fn tasks_for(sel: TaskSel) -> Vec<TaskKind> {
    match sel {
        TaskSel::Oc => vec![TaskKind::Oc],
        TaskSel::Uc => vec![TaskKind::Uc],
        TaskSel::Fc => vec![TaskKind::Fc],
        TaskSel::All => ALL_TASKS.to_vec(),
    }
}

fn require_task_shape(meta: &DatasetMeta) -> anyhow::Result<()> {
    let (v, l) = (tsdh_core::data::VAR_COUNT, tsdh_core::data::WINDOW_LEN);
    if meta.var_count != v || meta.window_len != l {
        bail!(tsdh_core::Error::Config(format!(
            "prompt tasks are defined on {v}x{l} windows; dataset {} is {}x{}",
            meta.name, meta.var_count, meta.window_len
        )));
    }
    Ok(())
}

/// CSV writer with a leading config-hash comment line.
fn csv_writer(path: &Path, comment: &str) -> anyhow::Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# {comment}")?;
    Ok(csv::Writer::from_writer(file))
}

pub fn cmd_build_dataset(args: BuildDatasetArgs) -> anyhow::Result<()> {
    let kind: DatasetKind = args.dataset.parse::<DatasetKind>()?;
    let out_dir = args.out_dir.unwrap_or_else(crate::config::default_out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let mut config = RunConfig {
        dataset: kind.name().to_string(),
        stride: args.stride,
        seed: args.seed,
        out_dir: out_dir.clone(),
        ..RunConfig::default()
    };

    let dataset = if kind == DatasetKind::Synthetic2d {
        make_synthetic2d(args.n_points, args.noise_std, args.seed)?
    } else {
        let source = args
            .source
            .ok_or_else(|| tsdh_core::Error::Config("--source is required".into()))?;
        let col_a = args
            .col_a
            .ok_or_else(|| tsdh_core::Error::Config("--col-a is required".into()))?;
        let col_b = args
            .col_b
            .ok_or_else(|| tsdh_core::Error::Config("--col-b is required".into()))?;
        let raw = read_raw_pair(&source, &col_a, &col_b)?;
        config.source = Some(source);
        config.col_a = Some(col_a);
        config.col_b = Some(col_b);
        build_relational(&raw, kind, args.stride)?
    };

    let csv_path = out_dir.join(format!("{}_windows.csv", kind.name()));
    let meta_path = out_dir.join(format!("{}_meta.json", kind.name()));
    save_windows(&dataset, &csv_path, &meta_path)?;
    config.save(&out_dir.join("run_config.json"))?;
    println!(
        "built {}: {} windows of dim {} ({} source rows dropped) -> {}",
        dataset.name,
        dataset.windows.nrows(),
        dataset.dim(),
        dataset.dropped_rows,
        csv_path.display()
    );
    Ok(())
}

/// Apply config-file values first, explicit flags last.
fn effective_train_config(args: &TrainArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("reading config file {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.t_steps {
        config.t_steps = v;
    }
    if let Some(v) = args.beta_start {
        config.beta_start = v;
    }
    if let Some(v) = args.beta_end {
        config.beta_end = v;
    }
    if let Some(v) = &args.hidden {
        config.hidden = parse_hidden(v)?;
    }
    if let Some(v) = args.time_embed_dim {
        config.time_embed_dim = v;
    }
    if let Some(v) = args.batch_size {
        config.train.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        config.train.max_epochs = v;
    }
    if let Some(v) = args.patience {
        config.train.patience = v;
    }
    if let Some(v) = args.val_interval {
        config.train.val_interval = v;
    }
    if let Some(v) = args.max_lr {
        config.train.max_lr = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
        config.train.seed = v;
    } else {
        config.train.seed = config.seed;
    }
    if let Some(v) = &args.out_dir {
        config.out_dir = v.clone();
    } else if args.config.is_none() {
        config.out_dir = crate::config::default_out_dir();
    }
    Ok(config)
}

fn parse_hidden(spec: &str) -> anyhow::Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| tsdh_core::Error::Config(format!("bad hidden width '{s}': {e}")).into())
        })
        .collect()
}

pub fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let (dataset, meta) = load_dataset(&args.windows, &args.meta)?;
    let mut config = effective_train_config(&args)?;
    config.dataset = meta.name.clone();
    std::fs::create_dir_all(&config.out_dir)?;

    let (_, train) = slice_split(&dataset, &meta.split, SplitSel::Train);
    let (_, val) = slice_split(&dataset, &meta.split, SplitSel::Val);
    let normalizer = Normalizer::fit(train, meta.var_count, meta.window_len)?;

    let mlp = MlpConfig {
        data_dim: dataset.dim(),
        time_embed_dim: config.time_embed_dim,
        hidden: config.hidden.clone(),
    };
    let net = MlpNetwork::new(mlp, config.seed)?;
    let schedule = VarianceSchedule::linear(config.t_steps, config.beta_start, config.beta_end)?;
    let mut model = DiffusionModel::new(net, schedule, normalizer)?;

    let report = model.train(train, val, &config.train)?;

    let ckpt_path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("model.ckpt"));
    save_checkpoint(
        &model,
        &ckpt_path,
        &meta.name,
        config.seed,
        config.beta_start,
        config.beta_end,
    )?;

    let curve_path = config.out_dir.join("train_curve.csv");
    let mut writer = csv_writer(&curve_path, &config.comment())?;
    writer.write_record(["epoch", "train_loss", "val_loss"])?;
    let mut val_iter = report.val_losses.iter();
    for (epoch, train_loss) in report.train_losses.iter().enumerate() {
        let evaluated =
            epoch % config.train.val_interval == 0 || epoch + 1 == config.train.max_epochs;
        let val_loss = if evaluated {
            val_iter
                .next()
                .map(|v| format!("{v:.12e}"))
                .unwrap_or_default()
        } else {
            String::new()
        };
        writer.write_record([epoch.to_string(), format!("{train_loss:.12e}"), val_loss])?;
    }
    writer.flush()?;

    config.save(&config.out_dir.join("run_config.json"))?;
    println!(
        "trained on {} ({} epochs, best val loss {:.6e} at epoch {}) -> {}",
        meta.name,
        report.epochs_run,
        report.best_val_loss,
        report.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

/// Header for the response CSV shared by impute output, score input, and
/// external-response ingestion.
fn response_header(dim: usize) -> Vec<String> {
    let mut h = vec![
        "window_id".to_string(),
        "task".to_string(),
        "model".to_string(),
        "group".to_string(),
    ];
    h.extend((0..dim).map(|i| format!("v{i}")));
    h
}

pub fn cmd_impute(args: ImputeArgs) -> anyhow::Result<()> {
    let (model, header) = load_checkpoint(&args.checkpoint)?;
    let (dataset, meta) = load_dataset(&args.windows, &args.meta)?;
    require_task_shape(&meta)?;
    let config = RunConfig {
        dataset: meta.name.clone(),
        seed: args.seed,
        ..RunConfig::default()
    };
    let _ = header;

    let (offset, windows) = slice_split(&dataset, &meta.split, args.split);
    let count = windows.nrows().min(args.max_windows.unwrap_or(usize::MAX));
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    let mut writer = csv_writer(&args.out, &config.comment())?;
    writer.write_record(response_header(dataset.dim()))?;
    for task in tasks_for(args.task) {
        let mask = task.mask();
        let imputed =
            model.repaint_impute_masked_batch(windows.slice(ndarray::s![..count, ..]), &mask, &mut rng)?;
        for (row, values) in imputed.rows().into_iter().enumerate() {
            let mut record = vec![
                (offset + row).to_string(),
                task.name().to_string(),
                "dm".to_string(),
                "0".to_string(),
            ];
            record.extend(values.iter().map(|v| format!("{v:.17e}")));
            writer.write_record(record)?;
        }
    }
    writer.flush()?;
    println!("imputed {count} windows -> {}", args.out.display());
    Ok(())
}

pub fn cmd_score(args: ScoreArgs) -> anyhow::Result<()> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let report = ingest_external_responses(&args.responses)?;
    for (line, reason) in &report.rejected {
        eprintln!("rejected line {line}: {reason}");
    }
    let meta: Option<DatasetMeta> = match &args.meta {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let truth: Option<RelationalDataset> = match (&args.windows, &args.meta) {
        (Some(w), Some(m)) => Some(load_dataset(w, m)?.0),
        _ => None,
    };

    let config = RunConfig {
        dataset: meta.as_ref().map(|m| m.name.clone()).unwrap_or_default(),
        seed: args.seed,
        ..RunConfig::default()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut pairs = Vec::with_capacity(report.responses.len());
    for r in &report.responses {
        let ce = combined_error_avg(&model, &r.values, &mut rng, args.ce_draws)?;
        let e_r = match &meta {
            Some(m) => Some(metrics::relational_error(
                &r.values,
                m.relation,
                m.var_count,
                m.window_len,
            )?),
            None => None,
        };
        let pe = match &truth {
            Some(d) if r.window_id < d.windows.nrows() => {
                let window = d.windows.row(r.window_id);
                let prompt = assemble_prompt(window.as_slice().unwrap(), r.task)?;
                Some(prompt_error(&r.values, &prompt)?)
            }
            _ => None,
        };
        let cts = if args.full_metrics {
            Some(metrics::cts(&model, &r.values, &mut rng)?)
        } else {
            None
        };
        pairs.push(ScoredPair {
            window_id: r.window_id,
            task: r.task,
            model_tag: r.model_tag.clone(),
            x_hat: r.values.clone(),
            ce,
            pe,
            tv: None,
            rts: None,
            pts: None,
            cts,
            e_r,
        });
    }
    write_scored_pairs_csv(&pairs, &args.out, Some(&config.comment()))?;
    println!(
        "scored {} pairs ({} rejected) -> {}",
        pairs.len(),
        report.rejected.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let (dataset, meta) = load_dataset(&args.windows, &args.meta)?;
    require_task_shape(&meta)?;
    let (_, train) = slice_split(&dataset, &meta.split, SplitSel::Train);
    let count = train.nrows().min(args.max_windows.unwrap_or(usize::MAX));
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let quartiles = calibrate_avg(
        &model,
        train.slice(ndarray::s![..count, ..]),
        &meta.name,
        &mut rng,
        args.ce_draws,
    )?;
    quartiles.save(&args.out)?;
    println!(
        "calibrated on {count} train windows: Q2 = {:.6e}, Q3 = {:.6e} -> {}",
        quartiles.q2,
        quartiles.q3,
        args.out.display()
    );
    Ok(())
}

fn level_name(level: HallucinationLevel) -> &'static str {
    match level {
        HallucinationLevel::Low => "low",
        HallucinationLevel::Medium => "medium",
        HallucinationLevel::High => "high",
    }
}

pub fn cmd_classify(args: ClassifyArgs) -> anyhow::Result<()> {
    let quartiles = CalibrationQuartiles::load(&args.calibration)?;
    if let Some(ce) = args.ce {
        println!("{}", level_name(classify(ce, &quartiles)));
        return Ok(());
    }
    let scored = args
        .scored
        .ok_or_else(|| tsdh_core::Error::Config("either --ce or --scored is required".into()))?;
    let out = args
        .out
        .ok_or_else(|| tsdh_core::Error::Config("--out is required with --scored".into()))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(&scored)
        .with_context(|| format!("reading {}", scored.display()))?;
    let headers = reader.headers()?.clone();
    let ce_col = headers
        .iter()
        .position(|h| h == "ce")
        .ok_or_else(|| tsdh_core::Error::Data("scored CSV has no 'ce' column".into()))?;

    let mut writer = csv_writer(&out, &format!("calibration: {}", args.calibration.display()))?;
    let mut header: Vec<String> = headers.iter().map(str::to_string).collect();
    header.push("level".to_string());
    writer.write_record(&header)?;
    let mut counts = [0usize; 3];
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let ce: f64 = record
            .get(ce_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| tsdh_core::Error::Parse {
                line: idx + 3,
                msg: "bad ce value".into(),
            })?;
        let level = classify(ce, &quartiles);
        counts[level as usize] += 1;
        let mut row: Vec<String> = record.iter().map(str::to_string).collect();
        row.push(level_name(level).to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    println!(
        "classified {} pairs (low {}, medium {}, high {}) -> {}",
        counts.iter().sum::<usize>(),
        counts[0],
        counts[1],
        counts[2],
        out.display()
    );
    Ok(())
}

pub fn cmd_mitigate(args: MitigateArgs) -> anyhow::Result<()> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    if let Some(external) = &args.external {
        // Selection over externally supplied sample groups.
        let report = ingest_external_responses(external)?;
        let mut ce = Vec::with_capacity(report.responses.len());
        for r in &report.responses {
            ce.push(combined_error_avg(&model, &r.values, &mut rng, args.ce_draws)?);
        }
        let groups = select_external_groups(&report.responses, &ce)?;
        let mut writer = csv_writer(&args.out, &format!("seed: {}", args.seed))?;
        writer.write_record(["window_id", "task", "group", "size", "selected_row", "ce_selected"])?;
        for (members, best) in &groups {
            let r = &report.responses[*best];
            writer.write_record([
                r.window_id.to_string(),
                r.task.name().to_string(),
                r.group.clone(),
                members.len().to_string(),
                best.to_string(),
                format!("{:.12e}", ce[*best]),
            ])?;
        }
        writer.flush()?;
        println!("selected over {} external groups -> {}", groups.len(), args.out.display());
        return Ok(());
    }

    let windows = args
        .windows
        .ok_or_else(|| tsdh_core::Error::Config("--windows is required without --external".into()))?;
    let meta = args
        .meta
        .ok_or_else(|| tsdh_core::Error::Config("--meta is required without --external".into()))?;
    let (dataset, meta) = load_dataset(&windows, &meta)?;
    require_task_shape(&meta)?;
    let (offset, test) = slice_split(&dataset, &meta.split, args.split);
    let count = test.nrows().min(args.max_prompts.unwrap_or(usize::MAX));

    let mut writer = csv_writer(&args.out, &format!("seed: {} n: {}", args.seed, args.n))?;
    writer.write_record([
        "window_id",
        "task",
        "n",
        "selected",
        "ce_selected",
        "ce_mean",
        "e_r_selected",
        "e_r_mean",
        "delta_e_r",
    ])?;
    let mut deltas: Vec<(TaskKind, f64)> = Vec::new();
    for task in tasks_for(args.task) {
        for row in 0..count {
            let window = test.row(row);
            let prompt = assemble_prompt(window.as_slice().unwrap(), task)?;
            let result = mitigate_avg(&model, &prompt, args.n, &mut rng, args.ce_draws)?;
            let e_r: Vec<f64> = result
                .samples
                .iter()
                .map(|s| dataset_relational_error(&dataset, s))
                .collect::<tsdh_core::Result<_>>()?;
            let result = result.with_relational_errors(e_r)?;
            let e_r = result.e_r_values.as_ref().expect("just attached");
            let ce_mean = result.ce_values.iter().sum::<f64>() / result.ce_values.len() as f64;
            let e_r_mean = e_r.iter().sum::<f64>() / e_r.len() as f64;
            if let Some(d) = result.delta_e_r {
                deltas.push((task, d));
            }
            writer.write_record([
                (offset + row).to_string(),
                task.name().to_string(),
                args.n.to_string(),
                result.selected.to_string(),
                format!("{:.12e}", result.ce_values[result.selected]),
                format!("{ce_mean:.12e}"),
                format!("{:.12e}", e_r[result.selected]),
                format!("{e_r_mean:.12e}"),
                result
                    .delta_e_r
                    .map(|d| format!("{d:.12e}"))
                    .unwrap_or_default(),
            ])?;
        }
    }
    writer.flush()?;
    for task in tasks_for(args.task) {
        let vals: Vec<f64> = deltas
            .iter()
            .filter(|(t, _)| *t == task)
            .map(|(_, d)| *d)
            .collect();
        if !vals.is_empty() {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            println!("{task}: mean delta_e_r = {mean:.4} over {} prompts", vals.len());
        }
    }
    println!("-> {}", args.out.display());
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn cmd_benchmark(args: BenchmarkArgs) -> anyhow::Result<()> {
    let (model, ckpt_header) = load_checkpoint(&args.checkpoint)?;
    let (dataset, meta) = load_dataset(&args.windows, &args.meta)?;
    require_task_shape(&meta)?;
    let out_dir = args.out_dir.unwrap_or_else(crate::config::default_out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let config = RunConfig {
        dataset: meta.name.clone(),
        t_steps: ckpt_header.t_steps,
        beta_start: ckpt_header.beta_start,
        beta_end: ckpt_header.beta_end,
        hidden: ckpt_header.mlp.hidden.clone(),
        time_embed_dim: ckpt_header.mlp.time_embed_dim,
        seed: args.seed,
        out_dir: out_dir.clone(),
        ..RunConfig::default()
    };
    let comment = config.comment();
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    // Quartile calibration on the training split.
    let (_, train) = slice_split(&dataset, &meta.split, SplitSel::Train);
    let calib_count = train.nrows().min(args.calib_windows.unwrap_or(usize::MAX));
    let quartiles = calibrate_avg(
        &model,
        train.slice(ndarray::s![..calib_count, ..]),
        &meta.name,
        &mut rng,
        args.ce_draws,
    )?;
    quartiles.save(&out_dir.join("calibration.json"))?;

    let (offset, test) = slice_split(&dataset, &meta.split, SplitSel::Test);
    let count = test.nrows().min(args.max_prompts.unwrap_or(usize::MAX));

    let externals: Vec<halluc::IngestReport> = args
        .external
        .iter()
        .map(|p| ingest_external_responses(p))
        .collect::<tsdh_core::Result<_>>()?;

    let mut pairs: Vec<ScoredPair> = Vec::new();
    let mut level_e_r: Vec<(HallucinationLevel, f64)> = Vec::new();
    let mut deltas: Vec<(TaskKind, f64)> = Vec::new();

    for task in ALL_TASKS {
        for row in 0..count {
            let window = test.row(row);
            let window_id = offset + row;
            let prompt = assemble_prompt(window.as_slice().unwrap(), task)?;

            // Diffusion-model response with the full metric set.
            let (x_hat, traj) = model.repaint_impute_with_trajectory(&prompt, &mut rng)?;
            let ce = combined_error_avg(&model, &x_hat, &mut rng, args.ce_draws)?;
            let e_r = dataset_relational_error(&dataset, &x_hat)?;
            level_e_r.push((classify(ce, &quartiles), e_r));
            pairs.push(ScoredPair {
                window_id,
                task,
                model_tag: "dm".to_string(),
                x_hat: x_hat.clone(),
                ce,
                pe: Some(prompt_error(&x_hat, &prompt)?),
                tv: Some(metrics::trajectory_variance(&traj)?),
                rts: Some(metrics::rts(&traj, prompt.response_idx())?),
                pts: Some(metrics::pts(&model, &traj, &prompt)?),
                cts: Some(metrics::cts(&model, &x_hat, &mut rng)?),
                e_r: Some(e_r),
            });

            // Training-mean baseline.
            let base = baseline_respond(&model.normalizer, &prompt);
            pairs.push(ScoredPair {
                window_id,
                task,
                model_tag: "baseline".to_string(),
                x_hat: base.clone(),
                ce: combined_error_avg(&model, &base, &mut rng, args.ce_draws)?,
                pe: Some(prompt_error(&base, &prompt)?),
                tv: None,
                rts: None,
                pts: None,
                cts: None,
                e_r: Some(dataset_relational_error(&dataset, &base)?),
            });

            // Argmin-CE mitigation over N fresh samples.
            let result = mitigate_avg(&model, &prompt, args.n, &mut rng, args.ce_draws)?;
            let e_r_samples: Vec<f64> = result
                .samples
                .iter()
                .map(|s| dataset_relational_error(&dataset, s))
                .collect::<tsdh_core::Result<_>>()?;
            let result = result.with_relational_errors(e_r_samples)?;
            if let Some(d) = result.delta_e_r {
                deltas.push((task, d));
            }
        }
    }

    // Externally supplied responses join the Table-1 comparison.
    for report in &externals {
        for r in &report.responses {
            pairs.push(ScoredPair {
                window_id: r.window_id,
                task: r.task,
                model_tag: r.model_tag.clone(),
                x_hat: r.values.clone(),
                ce: combined_error_avg(&model, &r.values, &mut rng, args.ce_draws)?,
                pe: None,
                tv: None,
                rts: None,
                pts: None,
                cts: None,
                e_r: Some(metrics::relational_error(
                    &r.values,
                    meta.relation,
                    meta.var_count,
                    meta.window_len,
                )?),
            });
        }
    }

    // Table 1: relational error per model and task, with baseline ratios.
    let mut model_tags: Vec<String> = Vec::new();
    for p in &pairs {
        if !model_tags.contains(&p.model_tag) {
            model_tags.push(p.model_tag.clone());
        }
    }
    let task_mean = |tag: &str, task: TaskKind| -> Option<(f64, f64, usize)> {
        let vals: Vec<f64> = pairs
            .iter()
            .filter(|p| p.model_tag == tag && p.task == task)
            .filter_map(|p| p.e_r)
            .collect();
        (!vals.is_empty()).then(|| {
            let (m, s) = mean_std(&vals);
            (m, s, vals.len())
        })
    };
    let mut writer = csv_writer(&out_dir.join("table1.csv"), &comment)?;
    writer.write_record(["model", "task", "n", "e_r_mean", "e_r_std", "ratio_to_baseline"])?;
    for tag in &model_tags {
        for task in ALL_TASKS {
            if let Some((mean, std, n)) = task_mean(tag, task) {
                let ratio = task_mean("baseline", task)
                    .filter(|(b, _, _)| *b > 0.0)
                    .map(|(b, _, _)| format!("{:.12e}", mean / b))
                    .unwrap_or_default();
                writer.write_record([
                    tag.clone(),
                    task.name().to_string(),
                    n.to_string(),
                    format!("{mean:.12e}"),
                    format!("{std:.12e}"),
                    ratio,
                ])?;
            }
        }
    }
    writer.flush()?;

    // Table 2: low/high overlap coefficient and mitigation delta per task.
    let low: Vec<f64> = level_e_r
        .iter()
        .filter(|(l, _)| *l == HallucinationLevel::Low)
        .map(|(_, e)| *e)
        .collect();
    let high: Vec<f64> = level_e_r
        .iter()
        .filter(|(l, _)| *l == HallucinationLevel::High)
        .map(|(_, e)| *e)
        .collect();
    let mut writer = csv_writer(&out_dir.join("table2.csv"), &comment)?;
    writer.write_record(["metric", "task", "value", "n"])?;
    if !low.is_empty() && !high.is_empty() {
        let overlap = overlap_coefficient(&low, &high, DEFAULT_OVERLAP_BINS)?;
        writer.write_record([
            "overlap_low_high".to_string(),
            "all".to_string(),
            format!("{overlap:.12e}"),
            (low.len() + high.len()).to_string(),
        ])?;
    }
    for task in ALL_TASKS {
        let vals: Vec<f64> = deltas
            .iter()
            .filter(|(t, _)| *t == task)
            .map(|(_, d)| *d)
            .collect();
        if !vals.is_empty() {
            let (mean, _) = mean_std(&vals);
            writer.write_record([
                "delta_e_r".to_string(),
                task.name().to_string(),
                format!("{mean:.12e}"),
                vals.len().to_string(),
            ])?;
        }
    }
    writer.flush()?;

    write_scored_pairs_csv(&pairs, &out_dir.join("scatter.csv"), Some(&comment))?;
    config.save(&out_dir.join("run_config.json"))?;
    println!(
        "benchmarked {} on {count} test windows x {} tasks -> {}",
        meta.name,
        ALL_TASKS.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_heatmap(args: HeatmapArgs) -> anyhow::Result<()> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    if model.dim() != 2 {
        bail!(tsdh_core::Error::Config(format!(
            "heatmap needs a 2-dimensional model, checkpoint has dim {}",
            model.dim()
        )));
    }
    if args.nx < 2 || args.ny < 2 {
        bail!(tsdh_core::Error::Config("grid needs nx >= 2 and ny >= 2".into()));
    }
    let (x_lo, x_hi, y_lo, y_hi) = (args.x_min, args.x_max, args.y_min, args.y_max);
    if !(x_lo < x_hi && y_lo < y_hi) {
        bail!(tsdh_core::Error::Config("empty grid extent".into()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut grid = Array2::zeros((args.ny, args.nx));
    let mut writer = csv_writer(&args.out_csv, &format!("seed: {}", args.seed))?;
    writer.write_record(["x", "y", "ce"])?;
    for iy in 0..args.ny {
        let y = y_lo + (y_hi - y_lo) * iy as f64 / (args.ny - 1) as f64;
        for ix in 0..args.nx {
            let x = x_lo + (x_hi - x_lo) * ix as f64 / (args.nx - 1) as f64;
            let ce = combined_error_avg(&model, &[x, y], &mut rng, args.ce_draws)?;
            grid[(iy, ix)] = ce;
            writer.write_record([
                format!("{x:.12e}"),
                format!("{y:.12e}"),
                format!("{ce:.12e}"),
            ])?;
        }
    }
    writer.flush()?;

    // Grayscale render, darker = lower CE. Image row 0 is the top (max y).
    let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::GrayImage::from_fn(args.nx as u32, args.ny as u32, |px, py| {
        let iy = args.ny - 1 - py as usize;
        let v = (grid[(iy, px as usize)] - lo) / span;
        image::Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
    });
    img.save(&args.out_png)
        .with_context(|| format!("writing {}", args.out_png.display()))?;
    println!(
        "heatmap {}x{} over [{x_lo}, {x_hi}]x[{y_lo}, {y_hi}] -> {} / {}",
        args.nx,
        args.ny,
        args.out_csv.display(),
        args.out_png.display()
    );
    Ok(())
}
