//! Confirmed-alert detection over dB series and evaluation against
//! reference dates.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_sig, round_sig};
use crate::stack::{Location, RasterStack, SampleClass, SampleSet, TimeSeries, UnitDomain};
use crate::stats::{ForestModel, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    /// Consecutive breaches needed to confirm an alert.
    pub confirmation: usize,
    /// A no-data date breaks the current run of breaches.
    pub nodata_resets: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            confirmation: 2,
            nodata_resets: true,
        }
    }
}

impl DetectOptions {
    pub fn with_confirmation(confirmation: usize) -> Self {
        DetectOptions {
            confirmation,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.confirmation == 0 {
            return Err(Error::InvalidParameter("confirmation must be at least 1".into()));
        }
        Ok(())
    }
}

/// A confirmed alert. `alert_date` is the first date of the confirming run;
/// with `confirmation == 1` the confirmation date equals it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertRecord {
    pub location: Location,
    pub band: String,
    pub first_breach_date: NaiveDate,
    pub confirmation_date: NaiveDate,
    pub alert_date: NaiveDate,
    /// Values of the confirming run. Empty when read back from CSV.
    pub breach_values: Vec<f64>,
    pub threshold_used: f64,
}

/// Scan `values` in order for `confirmation` consecutive values strictly
/// below `threshold`. Returns the index range of the first such run.
pub fn find_run(values: &[f64], threshold: f64, opts: &DetectOptions) -> Option<Vec<usize>> {
    let mut run: Vec<usize> = Vec::with_capacity(opts.confirmation);
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            if opts.nodata_resets {
                run.clear();
            }
            continue;
        }
        if v < threshold {
            run.push(i);
            if run.len() == opts.confirmation {
                return Some(run);
            }
        } else {
            run.clear();
        }
    }
    None
}

/// Run the confirmed-alert rule over one series.
pub fn detect(series: &TimeSeries, threshold: f64, opts: &DetectOptions) -> Result<Option<AlertRecord>> {
    opts.validate()?;
    series.unit_domain.expect(UnitDomain::Db)?;
    if series.is_empty() {
        return Err(Error::InvalidParameter("cannot run detection on an empty series".into()));
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {threshold} is not finite")));
    }
    Ok(find_run(&series.values, threshold, opts).map(|run| {
        let first = series.dates[run[0]];
        AlertRecord {
            location: series.location,
            band: series.band.clone(),
            first_breach_date: first,
            confirmation_date: series.dates[*run.last().expect("non-empty run")],
            alert_date: first,
            breach_values: run.iter().map(|&i| series.values[i]).collect(),
            threshold_used: threshold,
        }
    }))
}

/// Number of valid values strictly below `threshold`, and number of valid
/// values.
pub fn breach_count(values: &[f64], threshold: f64) -> (usize, usize) {
    values.iter().filter(|v| !v.is_nan()).fold((0, 0), |(b, n), &v| {
        (b + usize::from(v < threshold), n + 1)
    })
}

/// Alerts for one band and significance level over a set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertSet {
    pub band: String,
    pub alpha: f64,
    pub confirmation: usize,
    pub alerts: Vec<AlertRecord>,
    /// Locations whose monitoring series or baseline held no data.
    pub unevaluable: Vec<Location>,
}

impl AlertSet {
    pub fn empty(band: &str, alpha: f64, confirmation: usize) -> Self {
        AlertSet {
            band: band.to_string(),
            alpha,
            confirmation,
            alerts: Vec::new(),
            unevaluable: Vec::new(),
        }
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.alerts.iter().map(|a| a.location)
    }

    /// Append the results of another run with the same band and level.
    pub fn extend(&mut self, other: AlertSet) -> Result<()> {
        if other.band != self.band || other.alpha != self.alpha || other.confirmation != self.confirmation {
            return Err(Error::InvalidParameter(
                "alert sets differ in band, alpha or confirmation".into(),
            ));
        }
        self.alerts.extend(other.alerts);
        self.unevaluable.extend(other.unevaluable);
        Ok(())
    }
}

/// Indices of stack dates after the model's calibration window.
pub fn monitoring_indices(stack: &RasterStack, model: &ForestModel) -> Vec<usize> {
    let end = model.calibration_window.end;
    stack
        .dates()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > end)
        .map(|(i, _)| i)
        .collect()
}

enum LocationResult {
    Alert(AlertRecord),
    Quiet,
    Unevaluable(Location),
}

/// Run detection at every sample location with per-pixel threshold
/// `baseline + offset`, over the dates after the calibration window.
pub fn detect_stack(
    stack: &RasterStack,
    model: &ForestModel,
    spec: &ThresholdSpec,
    samples: &SampleSet,
    opts: &DetectOptions,
) -> Result<AlertSet> {
    opts.validate()?;
    stack.unit_domain().expect(UnitDomain::Db)?;
    if spec.band != model.band {
        return Err(Error::InvalidParameter(format!(
            "threshold band {} does not match model band {}",
            spec.band, model.band
        )));
    }
    if model.baseline_mean.dim() != (stack.height(), stack.width()) {
        return Err(Error::ShapeMismatch(format!(
            "model baseline is {:?}, stack is {}x{}",
            model.baseline_mean.dim(),
            stack.height(),
            stack.width()
        )));
    }
    let b = stack.band_index(&model.band)?;
    let idx = monitoring_indices(stack, model);
    let dates: Vec<NaiveDate> = idx.iter().map(|&i| stack.dates()[i]).collect();
    for loc in samples.locations() {
        stack.check_location(loc)?;
    }

    let results: Vec<LocationResult> = samples
        .samples()
        .par_iter()
        .map(|s| {
            let loc = s.location;
            let base = model.baseline_mean[[loc.row, loc.col]];
            let values: Vec<f64> = idx
                .iter()
                .map(|&d| stack.slice(d, b)[[loc.row, loc.col]])
                .collect();
            if base.is_nan() || values.iter().all(|v| v.is_nan()) {
                return LocationResult::Unevaluable(loc);
            }
            let threshold = base + spec.offset_db;
            match find_run(&values, threshold, opts) {
                Some(run) => LocationResult::Alert(AlertRecord {
                    location: loc,
                    band: model.band.clone(),
                    first_breach_date: dates[run[0]],
                    confirmation_date: dates[*run.last().expect("non-empty run")],
                    alert_date: dates[run[0]],
                    breach_values: run.iter().map(|&i| values[i]).collect(),
                    threshold_used: threshold,
                }),
                None => LocationResult::Quiet,
            }
        })
        .collect();

    let mut set = AlertSet::empty(&model.band, spec.alpha, opts.confirmation);
    for r in results {
        match r {
            LocationResult::Alert(a) => set.alerts.push(a),
            LocationResult::Unevaluable(l) => set.unevaluable.push(l),
            LocationResult::Quiet => {}
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    TruePositive,
    FalseNegative,
    FalsePositive,
    TrueNegative,
    Unevaluable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationOutcome {
    pub row: usize,
    pub col: usize,
    pub class: SampleClass,
    pub outcome: Outcome,
    pub reference_date: Option<NaiveDate>,
    pub alert_date: Option<NaiveDate>,
    pub delay_days: Option<i64>,
}

fn ser_sig<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub band: String,
    #[serde(serialize_with = "ser_sig")]
    pub alpha: f64,
    pub confirmation: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub unevaluable: usize,
    #[serde(serialize_with = "ser_sig")]
    pub commission_error: f64,
    #[serde(serialize_with = "ser_sig")]
    pub omission_error: f64,
    #[serde(serialize_with = "ser_sig")]
    pub users_accuracy: f64,
    #[serde(serialize_with = "ser_sig")]
    pub producers_accuracy: f64,
    /// Median of alert date minus reference date over true positives; an
    /// even count averages the middle pair and rounds half away from zero.
    pub median_delay_days: Option<i64>,
    pub outcomes: Vec<LocationOutcome>,
}

fn median_days(mut d: Vec<i64>) -> Option<i64> {
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    let n = d.len();
    if n % 2 == 1 {
        Some(d[n / 2])
    } else {
        Some(((d[n / 2 - 1] + d[n / 2]) as f64 / 2.0).round() as i64)
    }
}

/// Confusion counts, CE/OE and median delay of `alerts` against the sample
/// sets. Alerts at cleared locations are true positives regardless of the
/// sign of their delay.
pub fn evaluate(alerts: &AlertSet, samples: &[&SampleSet]) -> Result<EvaluationReport> {
    let mut reference: HashMap<Location, (SampleClass, Option<NaiveDate>)> = HashMap::new();
    let mut order = Vec::new();
    for set in samples {
        for s in set.samples() {
            match reference.get(&s.location) {
                Some((c, _)) if *c != set.class() => {
                    return Err(Error::InvalidParameter(format!(
                        "location {} appears in both sample classes",
                        s.location
                    )))
                }
                Some(_) => continue,
                None => {
                    reference.insert(s.location, (set.class(), s.reference_date));
                    order.push(s.location);
                }
            }
        }
    }
    let mut alert_at: HashMap<Location, &AlertRecord> = HashMap::new();
    for a in &alerts.alerts {
        if !reference.contains_key(&a.location) {
            return Err(Error::UnknownLocation {
                row: a.location.row,
                col: a.location.col,
            });
        }
        alert_at.entry(a.location).or_insert(a);
    }
    let unevaluable: std::collections::HashSet<Location> = alerts.unevaluable.iter().copied().collect();

    let (mut tp, mut fp, mut fn_, mut tn, mut ue) = (0, 0, 0, 0, 0);
    let mut delays = Vec::new();
    let mut outcomes = Vec::with_capacity(order.len());
    for loc in order {
        let (class, reference_date) = reference[&loc];
        let alert = alert_at.get(&loc);
        let alert_date = alert.map(|a| a.alert_date);
        let mut delay_days = None;
        let outcome = if unevaluable.contains(&loc) && alert.is_none() {
            ue += 1;
            Outcome::Unevaluable
        } else {
            match (class, alert) {
                (SampleClass::ClearedForest, Some(a)) => {
                    tp += 1;
                    let d = (a.alert_date - reference_date.expect("cleared samples carry dates")).num_days();
                    delays.push(d);
                    delay_days = Some(d);
                    Outcome::TruePositive
                }
                (SampleClass::ClearedForest, None) => {
                    fn_ += 1;
                    Outcome::FalseNegative
                }
                (SampleClass::InvariantForest, Some(_)) => {
                    fp += 1;
                    Outcome::FalsePositive
                }
                (SampleClass::InvariantForest, None) => {
                    tn += 1;
                    Outcome::TrueNegative
                }
            }
        };
        outcomes.push(LocationOutcome {
            row: loc.row,
            col: loc.col,
            class,
            outcome,
            reference_date,
            alert_date,
            delay_days,
        });
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let commission_error = ratio(fp, tp + fp);
    let omission_error = ratio(fn_, tp + fn_);
    Ok(EvaluationReport {
        band: alerts.band.clone(),
        alpha: alerts.alpha,
        confirmation: alerts.confirmation,
        tp,
        fp,
        fn_,
        tn,
        unevaluable: ue,
        commission_error,
        omission_error,
        users_accuracy: 1.0 - commission_error,
        producers_accuracy: 1.0 - omission_error,
        median_delay_days: median_days(delays),
        outcomes,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct EvaluationDoc {
    reports: Vec<EvaluationReport>,
}

pub fn write_evaluation_json(reports: &[EvaluationReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = EvaluationDoc {
        reports: reports.to_vec(),
    };
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_evaluation_json(path: impl AsRef<Path>) -> Result<Vec<EvaluationReport>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str::<EvaluationDoc>(&text)?.reports)
}

pub const ALERTS_HEADER: &str = "row,col,band,alpha,first_breach,confirmation,alert_date,threshold_db";

/// Alerts CSV; `confirmation` holds the confirmation date.
pub fn write_alerts_csv(sets: &[AlertSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(ALERTS_HEADER);
    out.push('\n');
    for set in sets {
        for a in &set.alerts {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                a.location.row,
                a.location.col,
                a.band,
                fmt_sig(set.alpha),
                a.first_breach_date,
                a.confirmation_date,
                a.alert_date,
                fmt_sig(a.threshold_used)
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_unevaluable_csv(sets: &[AlertSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("row,col,band,alpha\n");
    for set in sets {
        for l in &set.unevaluable {
            out.push_str(&format!("{},{},{},{}\n", l.row, l.col, set.band, fmt_sig(set.alpha)));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct AlertRow {
    row: usize,
    col: usize,
    band: String,
    alpha: f64,
    first_breach: NaiveDate,
    confirmation: NaiveDate,
    alert_date: NaiveDate,
    threshold_db: f64,
}

#[derive(Debug, Deserialize)]
struct UnevaluableRow {
    row: usize,
    col: usize,
    band: String,
    alpha: f64,
}

fn set_for<'a>(sets: &'a mut Vec<AlertSet>, band: &str, alpha: f64, confirmation: usize) -> &'a mut AlertSet {
    let pos = match sets.iter().position(|s| s.band == band && s.alpha == alpha) {
        Some(p) => p,
        None => {
            sets.push(AlertSet::empty(band, alpha, confirmation));
            sets.len() - 1
        }
    };
    &mut sets[pos]
}

/// Read an alerts CSV (and optionally the unevaluable list) back into alert
/// sets grouped by band and alpha, in first-seen order.
pub fn read_alerts_csv(
    path: impl AsRef<Path>,
    unevaluable: Option<&Path>,
    confirmation: usize,
) -> Result<Vec<AlertSet>> {
    let mut sets = Vec::new();
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    for row in reader.deserialize::<AlertRow>() {
        let r = row?;
        set_for(&mut sets, &r.band, r.alpha, confirmation).alerts.push(AlertRecord {
            location: Location::new(r.row, r.col),
            band: r.band.clone(),
            first_breach_date: r.first_breach,
            confirmation_date: r.confirmation,
            alert_date: r.alert_date,
            breach_values: Vec::new(),
            threshold_used: r.threshold_db,
        });
    }
    if let Some(p) = unevaluable {
        let mut reader = csv::Reader::from_path(p)?;
        for row in reader.deserialize::<UnevaluableRow>() {
            let r = row?;
            set_for(&mut sets, &r.band, r.alpha, confirmation)
                .unevaluable
                .push(Location::new(r.row, r.col));
        }
    }
    Ok(sets)
}

/// Per-location plot data: raw and filtered dB, threshold and breach flag.
/// Breaches are only flagged after `monitor_after`.
pub fn write_series_dump(
    path: impl AsRef<Path>,
    raw: &TimeSeries,
    filtered: &TimeSeries,
    threshold_db: f64,
    monitor_after: NaiveDate,
) -> Result<()> {
    let path = path.as_ref();
    if raw.dates != filtered.dates {
        return Err(Error::ShapeMismatch("raw and filtered series dates differ".into()));
    }
    let mut out = String::from("date,raw_db,filtered_db,threshold_db,breach_flag\n");
    for (i, d) in filtered.dates.iter().enumerate() {
        let f = filtered.values[i];
        let flag = *d > monitor_after && !f.is_nan() && f < threshold_db;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            d,
            fmt_sig(raw.values[i]),
            fmt_sig(f),
            fmt_sig(threshold_db),
            u8::from(flag)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{threshold_for_sigma, DateInterval};
    use ndarray::{Array2, Array4};
    use proptest::prelude::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Duration::days(12 * i as i64)).collect()
    }

    fn series(values: &[f64]) -> TimeSeries {
        TimeSeries {
            dates: dates(values.len()),
            values: values.to_vec(),
            band: "VH".into(),
            location: Location::new(0, 0),
            unit_domain: UnitDomain::Db,
        }
    }

    #[test]
    fn no_breach_no_alert() {
        let s = series(&[0.0, 0.5, -0.9]);
        assert!(detect(&s, -1.0, &DetectOptions::default()).unwrap().is_none());
    }

    #[test]
    fn isolated_breach_is_unconfirmed() {
        let s = series(&[0.0, -2.0, 0.0, -2.0, 0.0]);
        assert!(detect(&s, -1.0, &DetectOptions::default()).unwrap().is_none());
    }

    #[test]
    fn hand_worked_example() {
        let s = series(&[-0.1, -0.5, -1.4, -1.6]);
        let a = detect(&s, -1.0, &DetectOptions::default()).unwrap().unwrap();
        assert_eq!(a.first_breach_date, s.dates[2]);
        assert_eq!(a.confirmation_date, s.dates[3]);
        assert_eq!(a.alert_date, s.dates[2]);
        assert_eq!(a.breach_values, vec![-1.4, -1.6]);
    }

    #[test]
    fn equality_is_not_a_breach() {
        let s = series(&[-1.0, -1.0]);
        assert!(detect(&s, -1.0, &DetectOptions::default()).unwrap().is_none());
    }

    #[test]
    fn nodata_resets_or_bridges() {
        let s = series(&[-2.0, f64::NAN, -2.0]);
        assert!(detect(&s, -1.0, &DetectOptions::default()).unwrap().is_none());
        let bridge = DetectOptions {
            confirmation: 2,
            nodata_resets: false,
        };
        let a = detect(&s, -1.0, &bridge).unwrap().unwrap();
        assert_eq!(a.confirmation_date, s.dates[2]);
    }

    #[test]
    fn precondition_errors() {
        let s = series(&[1.0]);
        assert!(detect(&s, f64::NAN, &DetectOptions::default()).is_err());
        assert!(detect(&series(&[]), 0.0, &DetectOptions::default()).is_err());
        assert!(detect(&s, 0.0, &DetectOptions::with_confirmation(0)).is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(v in prop::collection::vec(-5.0f64..5.0, 1..30), t in -3.0f64..3.0, c in -20i32..20) {
            // integer shifts keep the comparisons exact
            let c = c as f64;
            let a = detect(&series(&v), t, &DetectOptions::default()).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = detect(&series(&shifted), t + c, &DetectOptions::default()).unwrap();
            prop_assert_eq!(a.map(|a| a.alert_date), b.map(|b| b.alert_date));
        }

        #[test]
        fn confirmation_monotone(v in prop::collection::vec(-3.0f64..3.0, 1..40), t in -2.0f64..2.0) {
            let a2 = find_run(&v, t, &DetectOptions::with_confirmation(2));
            let a3 = find_run(&v, t, &DetectOptions::with_confirmation(3));
            if a3.is_some() {
                prop_assert!(a2.is_some());
                prop_assert!(a2.unwrap()[0] <= a3.unwrap()[0]);
            }
        }

        #[test]
        fn threshold_monotone(v in prop::collection::vec(-3.0f64..3.0, 1..40), t in -2.0f64..2.0, dt in 0.0f64..1.0) {
            let lo = find_run(&v, t - dt, &DetectOptions::default());
            let hi = find_run(&v, t, &DetectOptions::default());
            if lo.is_some() {
                prop_assert!(hi.is_some());
            }
        }
    }

    #[test]
    fn breach_counting() {
        assert_eq!(breach_count(&[-2.0, f64::NAN, 0.0, -1.0], -1.0), (1, 3));
    }

    fn alert_at(loc: Location, date: NaiveDate) -> AlertRecord {
        AlertRecord {
            location: loc,
            band: "VH".into(),
            first_breach_date: date,
            confirmation_date: date + chrono::Duration::days(12),
            alert_date: date,
            breach_values: vec![],
            threshold_used: -1.0,
        }
    }

    #[test]
    fn evaluate_hand_count() {
        let d = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        let cleared = SampleSet::cleared((0..10).map(|i| (Location::new(0, i), d)));
        let forest = SampleSet::forest((0..5).map(|i| Location::new(1, i)));
        let mut set = AlertSet::empty("VH", 0.05, 2);
        for i in 0..8 {
            set.alerts.push(alert_at(Location::new(0, i), d + chrono::Duration::days(i as i64 * 2 - 4)));
        }
        for i in 0..2 {
            set.alerts.push(alert_at(Location::new(1, i), d));
        }
        let r = evaluate(&set, &[&cleared, &forest]).unwrap();
        assert_eq!((r.tp, r.fn_, r.fp, r.tn), (8, 2, 2, 3));
        assert!((r.commission_error - 0.2).abs() < 1e-15);
        assert!((r.omission_error - 0.2).abs() < 1e-15);
        assert!((r.users_accuracy + r.commission_error - 1.0).abs() < 1e-15);
        assert!((r.producers_accuracy + r.omission_error - 1.0).abs() < 1e-15);
        // delays -4,-2,0,...,10 → middle pair 2 and 4
        assert_eq!(r.median_delay_days, Some(3));
        assert_eq!(r.outcomes.len(), 15);
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let d = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        let cleared = SampleSet::cleared([(Location::new(0, 0), d)]);
        let forest = SampleSet::forest([Location::new(1, 1)]);
        let mut set = AlertSet::empty("VH", 0.01, 2);
        set.alerts.push(alert_at(Location::new(0, 0), d - chrono::Duration::days(4)));
        let r = evaluate(&set, &[&cleared, &forest]).unwrap();
        assert_eq!(r.commission_error, 0.0);
        assert_eq!(r.omission_error, 0.0);
        assert_eq!(r.median_delay_days, Some(-4));

        let none = AlertSet::empty("VH", 0.01, 2);
        let r = evaluate(&none, &[&forest]).unwrap();
        assert_eq!(r.commission_error, 0.0);
        assert_eq!(r.median_delay_days, None);
    }

    #[test]
    fn evaluate_rejects_unknown_location() {
        let forest = SampleSet::forest([Location::new(1, 1)]);
        let mut set = AlertSet::empty("VH", 0.01, 2);
        set.alerts.push(alert_at(Location::new(5, 5), dates(1)[0]));
        assert!(matches!(evaluate(&set, &[&forest]), Err(Error::UnknownLocation { .. })));
    }

    fn toy_model(stack: &RasterStack, cal: usize) -> ForestModel {
        ForestModel {
            baseline_mean: Array2::zeros((stack.height(), stack.width())),
            pooled_sigma: 1.0,
            calibration_window: DateInterval::new(stack.dates()[0], stack.dates()[cal - 1]).unwrap(),
            band: "VH".into(),
        }
    }

    #[test]
    fn stack_detection_skips_calibration_and_flags_nodata() {
        let n = 12;
        let mut px = Array4::zeros((n, 1, 2, 2));
        // breaches inside the calibration window are ignored
        px[[0, 0, 0, 0]] = -5.0;
        px[[1, 0, 0, 0]] = -5.0;
        px[[9, 0, 0, 1]] = -5.0;
        px[[10, 0, 0, 1]] = -5.0;
        for t in 8..n {
            px[[t, 0, 1, 0]] = f64::NAN;
        }
        let stack = RasterStack::new(vec!["VH".into()], dates(n), px, UnitDomain::Db).unwrap();
        let model = toy_model(&stack, 8);
        let spec = threshold_for_sigma(1.0, 0.05, "VH").unwrap();
        let samples = SampleSet::forest([
            Location::new(0, 0),
            Location::new(0, 1),
            Location::new(1, 0),
            Location::new(1, 1),
        ]);
        let set = detect_stack(&stack, &model, &spec, &samples, &DetectOptions::default()).unwrap();
        assert_eq!(set.alerts.len(), 1);
        assert_eq!(set.alerts[0].location, Location::new(0, 1));
        assert_eq!(set.alerts[0].alert_date, stack.dates()[9]);
        assert_eq!(set.unevaluable, vec![Location::new(1, 0)]);

        let empty = SampleSet::forest([]);
        let set = detect_stack(&stack, &model, &spec, &empty, &DetectOptions::default()).unwrap();
        assert!(set.alerts.is_empty());
    }

    #[test]
    fn alerts_csv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let d = dates(3);
        let mut set = AlertSet::empty("VH", 0.05, 2);
        set.alerts.push(alert_at(Location::new(3, 4), d[1]));
        set.unevaluable.push(Location::new(7, 7));
        let p = tmp.path().join("alerts.csv");
        let u = tmp.path().join("unevaluable.csv");
        write_alerts_csv(std::slice::from_ref(&set), &p).unwrap();
        write_unevaluable_csv(std::slice::from_ref(&set), &u).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(ALERTS_HEADER));
        let back = read_alerts_csv(&p, Some(&u), 2).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].alerts[0].location, Location::new(3, 4));
        assert_eq!(back[0].alerts[0].confirmation_date, d[2]);
        assert_eq!(back[0].unevaluable, vec![Location::new(7, 7)]);
    }

    #[test]
    fn evaluation_json_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let forest = SampleSet::forest([Location::new(1, 1)]);
        let r = evaluate(&AlertSet::empty("VV", 0.05, 2), &[&forest]).unwrap();
        let p = tmp.path().join("evaluation.json");
        write_evaluation_json(std::slice::from_ref(&r), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"commission_error\"") && text.contains("\"median_delay_days\""));
        assert_eq!(read_evaluation_json(&p).unwrap(), vec![r]);
    }
}
