use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use deforest_core::calibration::{
    calibrate_stack, db_convert_stack, local_incidence_angle, AcquisitionGeometry, DbDirection, TerrainGrid, LIA_MAX,
};
use deforest_core::detection::{
    detect_stack, evaluate, read_alerts_csv, write_alerts_csv, write_evaluation_json, write_series_dump,
    write_unevaluable_csv, AlertSet, DetectOptions,
};
use deforest_core::filters::{apply_combination_all_bands, bench_grid, FilterCombination};
use deforest_core::metrics::score_combinations;
use deforest_core::report::fmt_sig;
use deforest_core::stack::{load_sample_set, Location, RasterStack, SampleSet, UnitDomain};
use deforest_core::stats::{
    bartlett, calibration_series, default_calibration_window, derive_threshold, fit_baseline, ks_normality,
    shapiro_wilk, ForestModel, TestResult,
};
use deforest_core::synth::generate_scene;

use crate::config::PipelineConfig;
use crate::CliError;

pub const SCORES: &str = "scores.csv";
pub const ALERTS: &str = "alerts.csv";
pub const UNEVALUABLE: &str = "unevaluable.csv";
pub const EVALUATION: &str = "evaluation.json";
pub const NORMALITY: &str = "normality.csv";
pub const THRESHOLDS: &str = "thresholds.csv";

fn create_out(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn load_samples(cfg: &PipelineConfig, stack: &RasterStack) -> Result<(SampleSet, SampleSet), CliError> {
    let bounds = Some((stack.height(), stack.width()));
    let forest = load_sample_set(cfg.forest_path(), bounds)?;
    let cleared = load_sample_set(cfg.cleared_path(), bounds)?;
    Ok((forest, cleared))
}

fn monitored_bands(cfg: &PipelineConfig, stack: &RasterStack) -> Result<Vec<String>, CliError> {
    let bands = cfg.bands.clone().unwrap_or_else(|| stack.bands().to_vec());
    for b in &bands {
        stack.band_index(b)?;
    }
    if bands.is_empty() {
        return Err(CliError::usage("no bands selected"));
    }
    Ok(bands)
}

pub fn synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut scene_cfg = cfg
        .synth
        .clone()
        .ok_or_else(|| CliError::usage("config has no `synth` section"))?;
    if let Some(seed) = cfg.seed {
        scene_cfg.seed = seed;
    }
    let scene = generate_scene(&scene_cfg)?;
    create_out(cfg)?;
    scene.write(cfg.out_dir())?;
    println!(
        "synth: {}x{} pixels, {} dates, {} bands, {} forest / {} cleared samples",
        scene.stack.height(),
        scene.stack.width(),
        scene.stack.dates().len(),
        scene.stack.bands().len(),
        scene.forest.len(),
        scene.cleared.len()
    );
    Ok(())
}

pub fn calibrate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let geom = cfg
        .geometry
        .as_ref()
        .ok_or_else(|| CliError::usage("config has no `geometry` section"))?;
    let stack = RasterStack::load(cfg.input_stack())?;
    let terrain = match &cfg.terrain {
        Some(p) => TerrainGrid::load(p)?,
        None => TerrainGrid::flat(stack.height(), stack.width()),
    };
    let geometry =
        AcquisitionGeometry::scalar(geom.incidence_angle_deg.to_radians(), geom.look_azimuth_deg.to_radians())?;
    let lia = local_incidence_angle(&terrain, &geometry)?;
    let lia_max = cfg.lia_max_deg.map(f64::to_radians).unwrap_or(LIA_MAX);
    let gamma0 = calibrate_stack(&stack, lia.view(), lia_max)?;
    create_out(cfg)?;
    gamma0.write(cfg.analysis_stack())?;
    let masked = lia.iter().filter(|v| **v >= lia_max).count();
    println!("calibrate: gamma0 written, {masked} pixels masked by local incidence angle");
    Ok(())
}

fn bench_combos(cfg: &PipelineConfig) -> Result<Vec<FilterCombination>, CliError> {
    match &cfg.bench_combinations {
        None => Ok(bench_grid()),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<FilterCombination>().map_err(CliError::from))
            .collect(),
    }
}

pub fn bench(cfg: &PipelineConfig) -> Result<(), CliError> {
    let stack = RasterStack::load(cfg.analysis_stack())?;
    let (forest, cleared) = load_samples(cfg, &stack)?;
    let band = match &cfg.bench_band {
        Some(b) => b.clone(),
        None => monitored_bands(cfg, &stack)?[0].clone(),
    };
    let combos = bench_combos(cfg)?;
    let report = score_combinations(&stack, &forest, &cleared, &combos, &band)?;
    create_out(cfg)?;
    report.write_csv(cfg.out_dir().join(SCORES))?;
    for a in &report.absent {
        eprintln!("bench: {} left out: {}", a.combo, a.reason);
    }
    match report.best() {
        Some(best) => println!(
            "bench: {} combinations scored on {band}, best {} (score {})",
            report.scores.len(),
            best.combo,
            fmt_sig(best.score)
        ),
        None => println!("bench: no combination could be scored on {band}"),
    }
    Ok(())
}

/// Combination named in the config, or the top row of `scores.csv`.
fn chosen_combination(cfg: &PipelineConfig) -> Result<FilterCombination, CliError> {
    if cfg.combination != "bench" {
        return Ok(cfg.combination.parse()?);
    }
    let path = cfg.out_dir().join(SCORES);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("combination is `bench` but {} is unreadable: {e}", path.display())))?;
    let name = text
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').next())
        .ok_or_else(|| CliError::data(format!("{} holds no scored combination", path.display())))?;
    Ok(name.parse()?)
}

fn test_row(out: &mut String, band: &str, loc: Option<Location>, name: &str, r: Option<&TestResult>, n: usize) {
    let (row, col) = loc.map_or((String::new(), String::new()), |l| (l.row.to_string(), l.col.to_string()));
    let (stat, p) = r.map_or(("NaN".into(), "NaN".into()), |r| (fmt_sig(r.statistic), fmt_sig(r.p_value)));
    let _ = writeln!(out, "{band},{row},{col},{name},{n},{stat},{p}");
}

pub fn fit(cfg: &PipelineConfig) -> Result<(), CliError> {
    let combo = chosen_combination(cfg)?;
    let stack = RasterStack::load(cfg.analysis_stack())?;
    let bands = monitored_bands(cfg, &stack)?;
    let (forest, cleared) = load_samples(cfg, &stack)?;
    let selected = RasterStack::stack_bands(
        bands
            .iter()
            .map(|b| stack.select_band(b))
            .collect::<Result<Vec<_>, _>>()?,
    )?;
    let filtered = db_convert_stack(&apply_combination_all_bands(&selected, &combo)?, DbDirection::ToDb)?;
    let window = match cfg.calibration_window {
        Some(w) => w,
        None => default_calibration_window(filtered.dates(), Some(&cleared))?,
    };

    create_out(cfg)?;
    filtered.write(cfg.filtered_dir())?;
    let mut normality = String::from("band,row,col,test,n,statistic,p_value\n");
    let mut thresholds = String::from("band,alpha,z_crit,sigma_db,offset_db\n");
    for band in &bands {
        let model = fit_baseline(&filtered, window, &forest, band)?;
        model.write(cfg.model_dir())?;
        let series = calibration_series(&filtered, &window, &forest, band)?;
        let (mut sw_pass, mut ks_pass) = (0, 0);
        for (loc, values) in &series {
            let sw = shapiro_wilk(values).ok();
            let ks = ks_normality(values).ok();
            sw_pass += usize::from(sw.is_some_and(|r| !r.rejects(0.05)));
            ks_pass += usize::from(ks.is_some_and(|r| !r.rejects(0.05)));
            test_row(&mut normality, band, Some(*loc), "shapiro-wilk", sw.as_ref(), values.len());
            test_row(&mut normality, band, Some(*loc), "ks", ks.as_ref(), values.len());
        }
        let groups: Vec<&Vec<f64>> = series.iter().map(|(_, v)| v).filter(|v| v.len() >= 2).collect();
        let total: usize = groups.iter().map(|g| g.len()).sum();
        let bart = bartlett(&groups.iter().map(|g| g.as_slice()).collect::<Vec<_>>()).ok();
        test_row(&mut normality, band, None, "bartlett", bart.as_ref(), total);
        for &alpha in &cfg.alphas {
            let t = derive_threshold(&model, alpha)?;
            let _ = writeln!(
                thresholds,
                "{band},{},{},{},{}",
                fmt_sig(alpha),
                fmt_sig(t.z_crit),
                fmt_sig(model.pooled_sigma),
                fmt_sig(t.offset_db)
            );
        }
        println!(
            "fit: {band} with {combo}, window {window}, sigma {} dB; normal at 5%: SW {sw_pass}/{n}, KS {ks_pass}/{n}",
            fmt_sig(model.pooled_sigma),
            n = series.len()
        );
    }
    write_file(&cfg.out_dir().join(NORMALITY), &normality)?;
    write_file(&cfg.out_dir().join(THRESHOLDS), &thresholds)?;
    Ok(())
}

pub fn detect(cfg: &PipelineConfig) -> Result<(), CliError> {
    let filtered = RasterStack::load(cfg.filtered_dir())?;
    if filtered.unit_domain() != UnitDomain::Db {
        return Err(CliError::data("filtered stack is not in dB"));
    }
    let bands = monitored_bands(cfg, &filtered)?;
    let (forest, cleared) = load_samples(cfg, &filtered)?;
    let opts = DetectOptions {
        confirmation: cfg.confirmation,
        nodata_resets: cfg.nodata_resets,
    };
    let mut sets = Vec::new();
    for band in &bands {
        let model = ForestModel::load(cfg.model_dir(), band)?;
        for &alpha in &cfg.alphas {
            let spec = derive_threshold(&model, alpha)?;
            let mut set = detect_stack(&filtered, &model, &spec, &cleared, &opts)?;
            set.extend(detect_stack(&filtered, &model, &spec, &forest, &opts)?)?;
            println!(
                "detect: {band} alpha {}: {} alerts, {} unevaluable",
                fmt_sig(alpha),
                set.alerts.len(),
                set.unevaluable.len()
            );
            sets.push(set);
        }
    }
    create_out(cfg)?;
    write_alerts_csv(&sets, cfg.out_dir().join(ALERTS))?;
    write_unevaluable_csv(&sets, cfg.out_dir().join(UNEVALUABLE))?;

    // Plot data for the first band and significance level.
    let band = &bands[0];
    let model = ForestModel::load(cfg.model_dir(), band)?;
    let spec = derive_threshold(&model, cfg.alphas[0])?;
    let raw = db_convert_stack(
        &RasterStack::load(cfg.analysis_stack())?.select_band(band)?,
        DbDirection::ToDb,
    )?;
    let locations: Vec<Location> = match &cfg.series_locations {
        Some(l) => l.iter().map(|[r, c]| Location::new(*r, *c)).collect(),
        None => cleared.locations().take(1).chain(forest.locations().take(1)).collect(),
    };
    for loc in locations {
        filtered.check_location(loc)?;
        let threshold = model.baseline_mean[[loc.row, loc.col]] + spec.offset_db;
        write_series_dump(
            cfg.out_dir().join(format!("series_{}_{}.csv", loc.row, loc.col)),
            &raw.extract_series(loc, band)?,
            &filtered.extract_series(loc, band)?,
            threshold,
            model.calibration_window.end,
        )?;
    }
    Ok(())
}

/// `(band, alpha)` pairs fitted by `fit`, read from `thresholds.csv`.
fn fitted_levels(cfg: &PipelineConfig) -> Result<Vec<(String, f64)>, CliError> {
    let path = cfg.out_dir().join(THRESHOLDS);
    let text = fs::read_to_string(&path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut parts = l.split(',');
            let band = parts.next().unwrap_or_default().to_string();
            let alpha = parts
                .next()
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| CliError::data(format!("malformed line in {}: {l}", path.display())))?;
            Ok((band, alpha))
        })
        .collect()
}

pub fn evaluate_cmd(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let read = read_alerts_csv(out.join(ALERTS), Some(&out.join(UNEVALUABLE)), cfg.confirmation)?;
    let forest = load_sample_set(cfg.forest_path(), None)?;
    let cleared = load_sample_set(cfg.cleared_path(), None)?;
    let mut reports = Vec::new();
    for (band, alpha) in fitted_levels(cfg)? {
        let set = read
            .iter()
            .find(|s| s.band == band && s.alpha == alpha)
            .cloned()
            .unwrap_or_else(|| AlertSet::empty(&band, alpha, cfg.confirmation));
        let r = evaluate(&set, &[&cleared, &forest])?;
        println!(
            "evaluate: {band} alpha {}: CE {} OE {} MD {} days (TP {} FP {} FN {})",
            fmt_sig(alpha),
            fmt_sig(r.commission_error),
            fmt_sig(r.omission_error),
            r.median_delay_days.map_or("n/a".into(), |d| d.to_string()),
            r.tp,
            r.fp,
            r.fn_
        );
        reports.push(r);
    }
    write_evaluation_json(&reports, out.join(EVALUATION))?;
    Ok(())
}

pub fn pipeline(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.synth.is_some() {
        synth(cfg)?;
    }
    if cfg.geometry.is_some() {
        calibrate(cfg)?;
    }
    bench(cfg)?;
    fit(cfg)?;
    detect(cfg)?;
    evaluate_cmd(cfg)
}
