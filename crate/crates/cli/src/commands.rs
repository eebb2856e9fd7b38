//! Subcommand implementations. Each handler resolves its configuration
//! (flag > config file > default), runs the corresponding core pipeline,
//! writes its artifacts plus a manifest, and prints a short summary.

use std::fs;
use std::path::Path;

use hftsim_core::bench::bench_engine;
use hftsim_core::ensemble;
use hftsim_core::features::{extract, feature_dim, NormState, TickWindow, DEFAULT_NORM_ALPHA};
use hftsim_core::labeler::{label_day, Label};
use hftsim_core::market_data::{read_day, write_day, MarketDataError, Tick, TickSize};
use hftsim_core::metrics::{
    calibrate_threshold, metrics_at_threshold, MetricsError, MetricsSummary, MetricsTracker,
    SweepConfig,
};
use hftsim_core::online::{
    self, decision_log_csv, run_day, EngineConfig, OnlineError, PretrainConfig, RunOptions,
};
use hftsim_core::parallel::{configure_jobs, par_map};
use hftsim_core::synthgen::{generate_day, regime_stream, GenParams, RegimeShift, SynthError};

use crate::config::{parse_hidden, pick, sibling_manifest, write_manifest, FileConfig};
use crate::{
    BenchArgs, CalibrateArgs, FeaturesArgs, GenArgs, LabelArgs, PretrainArgs, RunArgs, SweepArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 1.
    Usage(String),
    /// Unreadable, malformed, or insufficient data; exit code 2.
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<OnlineError> for CliError {
    fn from(e: OnlineError) -> Self {
        match e {
            OnlineError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ensemble::EnsembleError> for CliError {
    fn from(e: ensemble::EnsembleError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn tick_size_of(flag: &Option<String>, cfg: &FileConfig) -> Result<(TickSize, String), CliError> {
    let text = pick(flag.clone(), cfg.string("data.tick_size")?, "0.05".to_string());
    let ts = TickSize::parse(&text).map_err(|e| CliError::Usage(format!("tick size {text:?}: {e}")))?;
    Ok((ts, text))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ensemble::EnsembleWeights, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(ensemble::from_json(&text)?)
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    let defaults = GenParams::default();
    let seed = pick(args.seed, cfg.u64("gen.seed")?, defaults.seed);
    let securities = pick(args.securities, cfg.usize("gen.securities")?, 1);
    if securities == 0 {
        return Err(CliError::Usage("--securities must be >= 1".into()));
    }
    let shift_at = args.shift_at.or(cfg.usize("gen.shift_at")?);
    let shift_theta = args.shift_theta.or(cfg.f64("gen.shift_theta")?);
    let shift_sigma = args.shift_sigma.or(cfg.f64("gen.shift_sigma")?);
    let regime_shift = match (shift_at, shift_theta, shift_sigma) {
        (None, None, None) => None,
        (Some(at_tick), Some(theta), Some(sigma)) => Some(RegimeShift { at_tick, theta, sigma }),
        _ => {
            return Err(CliError::Usage(
                "regime shift needs all of shift_at, shift_theta, shift_sigma".into(),
            ))
        }
    };
    let base_symbol = pick(args.symbol, cfg.string("gen.symbol")?, defaults.symbol.clone());
    let params = GenParams {
        n_ticks: pick(args.n_ticks, cfg.usize("gen.n_ticks")?, defaults.n_ticks),
        theta: pick(args.theta, cfg.f64("gen.theta")?, defaults.theta),
        sigma: pick(args.sigma, cfg.f64("gen.sigma")?, defaults.sigma),
        sigma_m: pick(args.sigma_m, cfg.f64("gen.sigma_m")?, defaults.sigma_m),
        x0: pick(args.x0, cfg.f64("gen.x0")?, defaults.x0),
        regime_shift,
        seed,
        symbol: base_symbol.clone(),
        ..defaults
    };

    let mut per_security: Vec<Vec<Tick>> = Vec::with_capacity(securities);
    for i in 0..securities {
        let p = GenParams {
            seed: seed.wrapping_add(i as u64),
            symbol: if securities == 1 {
                base_symbol.clone()
            } else {
                format!("{base_symbol}{i:03}")
            },
            ..params.clone()
        };
        per_security.push(if regime_shift.is_some() { regime_stream(&p)? } else { generate_day(&p)? });
    }
    // interleave tick by tick so the file stays timestamp-sorted
    let mut ticks = Vec::with_capacity(params.n_ticks * securities);
    for k in 0..params.n_ticks {
        for sec in &per_security {
            ticks.push(sec[k].clone());
        }
    }
    write_day(&args.out, &ticks, ts)?;
    write_manifest(
        &sibling_manifest(&args.out),
        "gen",
        serde_json::json!({
            "params": params,
            "securities": securities,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    println!(
        "wrote {} ticks ({securities} securities x {}) to {}",
        ticks.len(),
        params.n_ticks,
        args.out.display()
    );
    Ok(())
}

pub fn pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    let defaults = PretrainConfig::default();
    let hidden = match args.hidden.or(cfg.string("pretrain.hidden")?) {
        Some(s) => parse_hidden(&s)?,
        None => defaults.hidden.clone(),
    };
    let pre = PretrainConfig {
        window: pick(args.w, cfg.usize("pretrain.window")?, defaults.window),
        horizon: pick(args.h, cfg.usize("pretrain.horizon")?, defaults.horizon),
        hidden,
        lr: pick(args.lr, cfg.f64("pretrain.lr")?, defaults.lr),
        epochs: pick(args.epochs, cfg.usize("pretrain.epochs")?, defaults.epochs),
        batch_size: pick(args.batch_size, cfg.usize("pretrain.batch_size")?, defaults.batch_size),
        no_move_cap: pick(args.no_move_cap, cfg.f64("pretrain.no_move_cap")?, defaults.no_move_cap),
        seed: pick(args.seed, cfg.u64("pretrain.seed")?, defaults.seed),
    };
    let days: Vec<Vec<Tick>> =
        args.data.iter().map(|p| read_day(p, ts)).collect::<Result<_, _>>()?;
    let weights = online::pretrain(&days, &pre)?;
    write_file(&args.out, &ensemble::to_json(&weights))?;
    write_manifest(
        &sibling_manifest(&args.out),
        "pretrain",
        serde_json::json!({
            "pretrain": pre,
            "data": args.data,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    println!(
        "trained on {} day(s), {} input features, wrote {}",
        days.len(),
        feature_dim(pre.window),
        args.out.display()
    );
    Ok(())
}

/// Splits a (timestamp-sorted, possibly interleaved) day file into
/// per-symbol streams, preserving first-seen symbol order.
fn split_symbols(ticks: Vec<Tick>) -> Vec<(String, Vec<Tick>)> {
    let mut groups: Vec<(String, Vec<Tick>)> = Vec::new();
    for tick in ticks {
        match groups.iter_mut().find(|(s, _)| *s == tick.symbol) {
            Some((_, v)) => v.push(tick),
            None => groups.push((tick.symbol.clone(), vec![tick])),
        }
    }
    groups
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    if let Some(jobs) = args.jobs.or(cfg.usize("run.jobs")?) {
        configure_jobs(jobs);
    }
    let defaults = EngineConfig::default();
    let engine_cfg = EngineConfig {
        window: pick(args.w, cfg.usize("engine.window")?, defaults.window),
        horizon: pick(args.h, cfg.usize("engine.horizon")?, defaults.horizon),
        batch_size: pick(args.b, cfg.usize("engine.batch_size")?, defaults.batch_size),
        threshold: pick(args.threshold, cfg.f64("engine.threshold")?, defaults.threshold),
        lr_online: pick(args.lr_online, cfg.f64("engine.lr_online")?, defaults.lr_online),
        online_updates: if args.frozen {
            false
        } else {
            cfg.bool("engine.online_updates")?.unwrap_or(true)
        },
        symbol: String::new(),
    };
    let include_warmup = if args.no_warmup {
        false
    } else {
        cfg.bool("run.include_warmup")?.unwrap_or(true)
    };
    let opts = RunOptions { include_warmup, trade: true };
    let weights = load_model(&args.model)?;
    let groups = split_symbols(read_day(&args.data, ts)?);
    if groups.is_empty() {
        return Err(CliError::Data(format!("{}: no ticks", args.data.display())));
    }

    let results = par_map(groups, |(symbol, ticks)| {
        let cfg = EngineConfig { symbol: symbol.clone(), ..engine_cfg.clone() };
        run_day(&ticks, weights.clone(), &cfg, &opts).map(|r| (symbol, r))
    });

    fs::create_dir_all(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let mut summaries = Vec::new();
    let mut merged = MetricsTracker::new();
    let (mut total_pnl, mut total_updates, mut max_version) = (0i64, 0u64, 0u64);
    for result in results {
        let (symbol, r) = result?;
        write_file(&args.out.join(format!("decision_log_{symbol}.csv")), &decision_log_csv(&r.log))?;
        write_file(&args.out.join(format!("trades_{symbol}.csv")), &r.portfolio.trade_log_csv())?;
        write_file(
            &args.out.join(format!("final_model_{symbol}.json")),
            &ensemble::to_json(&r.final_weights),
        )?;
        merged.merge(&r.metrics);
        total_pnl += r.portfolio.realized;
        total_updates += r.update_count;
        max_version = max_version.max(r.final_weights.version);
        summaries.push(MetricsSummary::from_tracker(
            &symbol,
            &r.metrics,
            r.portfolio.realized,
            r.update_count,
            r.final_weights.version,
        ));
    }
    let merged_summary =
        MetricsSummary::from_tracker("ALL", &merged, total_pnl, total_updates, max_version);
    let metrics_json = serde_json::to_string_pretty(&serde_json::json!({
        "symbols": summaries,
        "merged": merged_summary,
    }))
    .expect("metrics serialize");
    write_file(&args.out.join("metrics.json"), &metrics_json)?;
    write_manifest(
        &args.out.join("manifest.json"),
        "run",
        serde_json::json!({
            "engine": engine_cfg,
            "include_warmup": include_warmup,
            "data": args.data,
            "model": args.model,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    println!(
        "{} symbol(s): participation {:.2}%, accuracy {}, pnl {} ticks, {} update(s); outputs in {}",
        summaries.len(),
        merged_summary.participation_pct,
        merged_summary
            .accuracy_pct
            .map(|a| format!("{a:.2}%"))
            .unwrap_or_else(|| "n/a".to_string()),
        total_pnl,
        total_updates,
        args.out.display()
    );
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    if let Some(jobs) = args.jobs.or(cfg.usize("run.jobs")?) {
        configure_jobs(jobs);
    }
    let grid = pick(args.grid, cfg.string("sweep.grid")?, "reduced".to_string());
    let mut sweep_cfg = match grid.as_str() {
        "reduced" => SweepConfig::reduced(),
        "full" => SweepConfig::full(),
        other => return Err(CliError::Usage(format!("unknown grid {other:?}; use reduced or full"))),
    };
    sweep_cfg.seed = pick(args.seed, cfg.u64("sweep.seed")?, sweep_cfg.seed);
    sweep_cfg.target_participation_pct =
        pick(args.target_pct, cfg.f64("sweep.target_pct")?, sweep_cfg.target_participation_pct);
    sweep_cfg.calibration_frac =
        pick(args.calibration_frac, cfg.f64("sweep.calibration_frac")?, sweep_cfg.calibration_frac);

    let day1 = read_day(&args.day1, ts)?;
    let day2 = read_day(&args.day2, ts)?;
    let outputs = hftsim_core::metrics::sweep(&sweep_cfg, &day1, &day2);

    fs::create_dir_all(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    write_file(&args.out.join("fig4_online_vs_frozen.csv"), &outputs.fig4_online_vs_frozen)?;
    write_file(&args.out.join("fig5_history_range.csv"), &outputs.fig5_history_range)?;
    write_file(&args.out.join("fig6_batch.csv"), &outputs.fig6_batch)?;
    write_file(&args.out.join("fig7_arch.csv"), &outputs.fig7_arch)?;
    write_file(&args.out.join("fig8_confidence.csv"), &outputs.fig8_confidence)?;
    write_manifest(
        &args.out.join("manifest.json"),
        "sweep",
        serde_json::json!({
            "sweep": sweep_cfg,
            "grid": grid,
            "day1": args.day1,
            "day2": args.day2,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    let failed = outputs.rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} configuration(s), {failed} failed; figure CSVs in {}",
        outputs.rows.len(),
        args.out.display()
    );
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} sweep configuration(s) failed; see rows status")));
    }
    Ok(())
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    let defaults = EngineConfig::default();
    let engine_cfg = EngineConfig {
        window: pick(args.w, cfg.usize("engine.window")?, defaults.window),
        horizon: pick(args.h, cfg.usize("engine.horizon")?, defaults.horizon),
        threshold: 0.0,
        // calibration is only meaningful against constant weights: online
        // updates shift the score distribution out from under the bound
        online_updates: false,
        ..defaults
    };
    let target_pct = pick(args.target_pct, cfg.f64("calibrate.target_pct")?, 10.0);
    let weights = load_model(&args.model)?;
    let ticks = read_day(&args.data, ts)?;
    let result = run_day(
        &ticks,
        weights,
        &engine_cfg,
        &RunOptions { include_warmup: false, trade: false },
    )?;
    let confidences: Vec<f64> = result
        .predictions
        .iter()
        .filter(|p| p.winner.is_actionable())
        .map(|p| p.score)
        .collect();
    let threshold = calibrate_threshold(&confidences, result.predictions.len(), target_pct)?;
    let tracker = metrics_at_threshold(&result.predictions, threshold);
    let report = serde_json::json!({
        "threshold": threshold,
        "target_pct": target_pct,
        "participation_pct": tracker.participation(),
        "accuracy_pct": tracker.accuracy().ok(),
        "predictions": result.predictions.len(),
    });
    let text = serde_json::to_string_pretty(&report).expect("report serialize");
    println!("{text}");
    if let Some(out) = &args.out {
        write_file(out, &text)?;
        write_manifest(
            &sibling_manifest(out),
            "calibrate",
            serde_json::json!({
                "engine": engine_cfg,
                "target_pct": target_pct,
                "data": args.data,
                "model": args.model,
                "tick_size": ts_text,
                "out": out,
            }),
        )?;
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    if let Some(jobs) = args.jobs.or(cfg.usize("run.jobs")?) {
        configure_jobs(jobs);
    }
    let hidden = match args.hidden.or(cfg.string("bench.hidden")?) {
        Some(s) => parse_hidden(&s)?,
        None => vec![10, 10],
    };
    let n_ticks = pick(args.n_ticks, cfg.usize("bench.n_ticks")?, 70_000);
    let securities = pick(args.securities, cfg.usize("bench.securities")?, 20);
    let seed = pick(args.seed, cfg.u64("bench.seed")?, 0);
    let report = bench_engine(&EngineConfig::default(), &hidden, n_ticks, securities, seed)?;
    let text = serde_json::to_string_pretty(&report).expect("report serialize");
    println!("{text}");
    if let Some(out) = &args.out {
        write_file(out, &text)?;
        write_manifest(
            &sibling_manifest(out),
            "bench",
            serde_json::json!({
                "n_ticks": n_ticks,
                "securities": securities,
                "seed": seed,
                "hidden": hidden,
                "out": out,
            }),
        )?;
    }
    Ok(())
}

pub fn features(args: FeaturesArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    let w = pick(args.w, cfg.usize("engine.window")?, EngineConfig::default().window);
    if w < 2 {
        return Err(CliError::Usage("window must be >= 2".into()));
    }
    let ticks = read_day(&args.data, ts)?;
    let dim = feature_dim(w);
    let mut window = TickWindow::new(w);
    let mut norm = NormState::new(dim, DEFAULT_NORM_ALPHA);
    let mut out = String::from("tick_index");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    let mut rows = 0usize;
    for (idx, tick) in ticks.iter().enumerate() {
        window.push(tick);
        if !window.is_warm() {
            continue;
        }
        let feats = extract(&window, &mut norm).map_err(|e| CliError::Data(e.to_string()))?;
        out.push_str(&idx.to_string());
        for f in feats {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
        rows += 1;
    }
    write_file(&args.out, &out)?;
    write_manifest(
        &sibling_manifest(&args.out),
        "features",
        serde_json::json!({
            "window": w,
            "feature_dim": dim,
            "data": args.data,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    println!("wrote {rows} feature rows x {dim} columns to {}", args.out.display());
    Ok(())
}

pub fn label(args: LabelArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let (ts, ts_text) = tick_size_of(&args.tick_size, &cfg)?;
    let h = pick(args.h, cfg.usize("engine.horizon")?, EngineConfig::default().horizon);
    if h < 1 {
        return Err(CliError::Usage("horizon must be >= 1".into()));
    }
    let ticks = read_day(&args.data, ts)?;
    let labels = label_day(&ticks, h);
    let mut out = String::from("tick_index,label\n");
    for (idx, l) in labels.iter().enumerate() {
        let name = match l {
            Label::Up => "UP",
            Label::Down => "DOWN",
            Label::NoMove => "NO_MOVE",
        };
        out.push_str(&format!("{idx},{name}\n"));
    }
    write_file(&args.out, &out)?;
    write_manifest(
        &sibling_manifest(&args.out),
        "label",
        serde_json::json!({
            "horizon": h,
            "data": args.data,
            "tick_size": ts_text,
            "out": args.out,
        }),
    )?;
    println!("wrote {} labels to {}", labels.len(), args.out.display());
    Ok(())
}
