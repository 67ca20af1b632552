use std::collections::BTreeMap;

use fairrank::dataset::BiasLevel;
use fairrank::experiments::{
    emit_reports, load_report, run_plan, DataSource, ExperimentPlan, WeightPair, METRICS,
};
use fairrank::fairness::FairnessMode;
use fairrank::training::TrainConfig;
use fairrank::Error;

fn plan() -> ExperimentPlan {
    ExperimentPlan {
        source: DataSource::Synthetic { regime: BiasLevel::High, n_papers: 200 },
        lambdas: vec![1.0, 3.0],
        weights: vec![WeightPair::new(0.32, 0.68), WeightPair::new(0.64, 0.68)],
        seeds: vec![1, 2, 3],
        train: TrainConfig { epochs: 5, hidden: [8, 4], ..TrainConfig::default() },
        ..ExperimentPlan::default()
    }
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn grid_is_complete_and_every_cell_has_each_seed() {
    let p = plan();
    let result = run_plan(&p, Some(2)).unwrap();
    // race + country: one cell per lambda; combined: one per weight pair
    let n_lambda = 3;
    assert_eq!(result.aggregates.len(), n_lambda * (1 + 1 + 2));
    let mut per_cell: BTreeMap<String, usize> = BTreeMap::new();
    for r in &result.runs {
        *per_cell.entry(format!("{:?}", r.cell)).or_default() += 1;
    }
    assert_eq!(per_cell.len(), result.aggregates.len());
    assert!(per_cell.values().all(|&n| n == p.seeds.len()));
}

#[test]
fn outputs_are_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_plan(&plan(), None).unwrap();
    let manifest = emit_reports(&result, dir.path()).unwrap();
    assert!(manifest.iter().all(|p| p.exists()));

    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), result.runs.len());
    let (agg_header, agg_rows) = read_csv(&dir.path().join("aggregate.csv"));
    assert_eq!(agg_rows.len(), result.aggregates.len());

    // recompute every mean/std from sweep.csv
    let col = |h: &[String], name: &str| h.iter().position(|c| c == name).unwrap();
    for agg in &agg_rows {
        let key = &agg[..4];
        let group: Vec<&Vec<String>> = rows.iter().filter(|r| &r[..4] == key).collect();
        assert_eq!(group.len(), 3);
        for m in METRICS {
            let vals: Vec<f64> = group
                .iter()
                .map(|r| &r[col(&header, m)])
                .filter(|v| *v != "NA")
                .map(|v| v.parse().unwrap())
                .collect();
            let mean_cell = &agg[col(&agg_header, &format!("{m}_mean"))];
            let std_cell = &agg[col(&agg_header, &format!("{m}_std"))];
            if vals.is_empty() {
                assert_eq!(mean_cell, "NA");
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let fmt = fairrank::experiments::fmt4;
            assert_eq!(fmt(mean), *mean_cell, "{m} mean for {key:?}");
            assert_eq!(fmt(std), *std_cell, "{m} std for {key:?}");
            let stored = result
                .aggregates
                .iter()
                .find(|a| fmt(a.cell.lambda) == key[1] && a.cell.mode.as_str() == key[0]
                    && a.cell.weights.map_or(String::new(), |w| fmt(w.w_race)) == key[2]
                    && a.cell.weights.map_or(String::new(), |w| fmt(w.w_country)) == key[3])
                .unwrap();
            let ms = stored.metrics[m].unwrap();
            assert!((ms.mean - mean).abs() <= 1e-9 && (ms.std - std).abs() <= 1e-9);
        }
    }

    let again = tempfile::tempdir().unwrap();
    emit_reports(&run_plan(&plan(), Some(1)).unwrap(), again.path()).unwrap();
    for f in ["sweep.csv", "aggregate.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }

    let reloaded = load_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(reloaded, result);
}

#[test]
fn charts_are_well_formed_with_one_line_per_metric() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_plan(&plan(), None).unwrap();
    let manifest = emit_reports(&result, dir.path()).unwrap();
    let charts: Vec<_> = manifest.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).collect();
    assert_eq!(charts.len(), 4);
    for path in charts {
        let text = std::fs::read_to_string(path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        let name = path.file_name().unwrap().to_string_lossy();
        let expected = if name.contains("combined") { 5 } else { 3 };
        assert_eq!(lines.len(), expected, "{name}");
        let mut metrics: Vec<_> = lines.iter().map(|n| n.attribute("data-metric").unwrap()).collect();
        metrics.dedup();
        assert_eq!(metrics.len(), expected);
        for l in lines {
            assert_eq!(l.attribute("points").unwrap().split(' ').count(), 3);
        }
    }
}

#[test]
fn poisoned_cell_leaves_the_rest_intact() {
    let clean = run_plan(&plan(), None).unwrap();
    let mut poisoned_plan = plan();
    poisoned_plan.weights.push(WeightPair::new(-1.0, 0.5));
    let poisoned = run_plan(&poisoned_plan, None).unwrap();

    let failed: Vec<_> = poisoned.failures().collect();
    assert_eq!(failed.len(), 3 * 3);
    for f in &failed {
        assert_eq!(f.cell.weights, Some(WeightPair::new(-1.0, 0.5)));
        assert!(f.error.as_deref().unwrap().contains("w_race"));
    }
    for run in &clean.runs {
        let twin = poisoned.runs.iter().find(|r| r.cell == run.cell && r.seed == run.seed).unwrap();
        assert_eq!(twin, run);
    }
    let agg = poisoned.aggregates.iter().find(|a| a.cell.weights == Some(WeightPair::new(-1.0, 0.5))).unwrap();
    assert_eq!((agg.n_ok, agg.n_failed), (0, 3));
    assert!(agg.metrics.values().all(Option::is_none));
}

#[test]
fn single_seed_has_zero_std() {
    let p = ExperimentPlan { seeds: vec![4], modes: vec![FairnessMode::RaceOnly], ..plan() };
    let result = run_plan(&p, None).unwrap();
    for a in &result.aggregates {
        assert!(a.metrics.values().flatten().all(|m| m.std == 0.0 && m.n == 1));
    }
}

#[test]
fn fair_data_lambda_zero_is_the_baseline() {
    let p = ExperimentPlan {
        source: DataSource::Synthetic { regime: BiasLevel::Fair, n_papers: 300 },
        lambdas: vec![0.0],
        seeds: vec![1],
        modes: vec![FairnessMode::RaceOnly, FairnessMode::CountryOnly],
        ..plan()
    };
    let result = run_plan(&p, None).unwrap();
    assert_eq!(result.runs.len(), 2);
    for r in &result.runs {
        let m = &r.summary.as_ref().unwrap().metrics;
        assert!(m.macro_gain.race.unwrap().abs() <= 5.0);
        assert!(m.macro_gain.country.unwrap().abs() <= 5.0);
    }
}

#[test]
fn unwritable_output_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let result = run_plan(&ExperimentPlan { seeds: vec![1], ..plan() }, None).unwrap();
    let err = emit_reports(&result, &blocker.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(!blocker.join("out").exists());
}

#[test]
fn missing_files_are_an_io_error_per_run() {
    let p = ExperimentPlan {
        source: DataSource::Files { papers: "nope/papers.csv".into(), authors: "nope/authors.csv".into() },
        seeds: vec![1],
        ..plan()
    };
    let result = run_plan(&p, None).unwrap();
    for r in &result.runs {
        let e = r.error.as_deref().unwrap();
        assert!(e.contains("nope/") && e.contains("No such file"), "{e}");
    }
}
