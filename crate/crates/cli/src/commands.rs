use std::fs;
use std::path::{Path, PathBuf};

use aact_core::data::{generate, read_dataset, write_dataset};
use aact_core::evaluation::{evaluate, predict, run_suite};
use aact_core::training::{
    check_gradients, checkpoint_load, checkpoint_save, sample_coordinates, train, Batch, GRADCHECK_TOLERANCE,
};
use aact_core::{rng, Dataset, EvalReport, ModelParams, Protocol, Suite, SuiteConfig};
use anyhow::{bail, ensure, Context, Result};

use crate::config::RunConfig;

pub const CONFIG_ECHO: &str = "config.txt";

fn prepare_dir(dir: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    write(&dir.join(CONFIG_ECHO), &config.echo())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

/// Writes the train split to `out`, the test split next to it as
/// `<stem>.test.<ext>`, and the config echo as `<stem>.config.txt`.
pub fn gen_data(config: &RunConfig, out: &Path) -> Result<()> {
    let (train, test) = generate(&config.data_config())?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    write_dataset(out, &train)?;
    let test_path = sibling(out, ".test");
    write_dataset(&test_path, &test)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write(&out.with_file_name(format!("{stem}.config.txt")), &config.echo())?;
    println!(
        "wrote {} training and {} test examples to {} and {}",
        train.len(),
        test.len(),
        out.display(),
        test_path.display()
    );
    Ok(())
}

fn load_or_generate(config: &RunConfig, path: Option<&Path>, test_split: bool) -> Result<Dataset> {
    match path {
        Some(p) => Ok(read_dataset(p)?),
        None => {
            let (train, test) = generate(&config.data_config())?;
            Ok(if test_split { test } else { train })
        }
    }
}

pub fn train_cmd(config: &RunConfig, data: Option<&Path>, val: Option<&Path>, out_dir: &Path) -> Result<()> {
    prepare_dir(out_dir, config)?;
    let train_set = load_or_generate(config, data, false)?;
    let validation = match val {
        Some(p) => read_dataset(p)?,
        None => Dataset {
            geometry: train_set.geometry,
            examples: Vec::new(),
        },
    };
    let (model, history) = train(&config.train_config(), &train_set, &validation)?;
    checkpoint_save(&model, out_dir.join("model.ckpt"))?;
    write(&out_dir.join("history.csv"), &history.to_csv())?;
    if let Some(last) = history.epochs.last() {
        let val = last.val_top1.map_or(String::new(), |v| format!(", validation Top-1 {v:.4}"));
        println!(
            "{} epochs: final total loss {:.4}, train Top-1 {:.4}{val}",
            history.epochs.len(),
            last.mean.total,
            last.train_top1
        );
    }
    println!("wrote {}", out_dir.join("model.ckpt").display());
    Ok(())
}

fn predictions_csv(model: &ModelParams, data: &Dataset) -> Result<String> {
    let preds = predict(model, data)?;
    let classes = model.config.num_classes;
    let mut out = String::from("index,target");
    for c in 0..classes {
        out.push_str(&format!(",p{c}"));
    }
    out.push('\n');
    for (i, (row, ex)) in preds.iter().zip(&data.examples).enumerate() {
        out.push_str(&format!("{i},{}", ex.a_f));
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn eval_cmd(config: &RunConfig, checkpoint: &Path, data: Option<&Path>, out_dir: &Path) -> Result<()> {
    prepare_dir(out_dir, config)?;
    let model = checkpoint_load(checkpoint)?;
    let test = load_or_generate(config, data, true)?;
    let g = test.geometry;
    let c = &model.config;
    ensure!(
        (g.feature_dim, g.num_classes, g.observed_len, g.future_len)
            == (c.feature_dim, c.num_classes, c.observed_len, c.future_len),
        "data geometry d={} A={} M={} N={} does not match the checkpoint (d={} A={} M={} N={})",
        g.feature_dim,
        g.num_classes,
        g.observed_len,
        g.future_len,
        c.feature_dim,
        c.num_classes,
        c.observed_len,
        c.future_len
    );
    let report = evaluate(&model, &test, config.protocol, config.seed)?;
    write(&out_dir.join("report.csv"), &report.to_csv())?;
    if config.protocol == Protocol::AtHorizon {
        write(&out_dir.join("predictions.csv"), &predictions_csv(&model, &test)?)?;
    }
    for row in report.sorted() {
        println!("{} {} {}: {:.4} (n={})", row.model, row.protocol, row.metric, row.value, row.n);
    }
    Ok(())
}

/// Prints the worst relative error of the configured model's gradients and
/// fails above the tolerance.
pub fn gradcheck_cmd(config: &RunConfig, out_dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = out_dir {
        prepare_dir(dir, config)?;
    }
    let mut data_config = config.data_config();
    data_config.train_examples = config.batch_size.clamp(1, 4);
    data_config.test_examples = 1;
    let (data, _) = generate(&data_config)?;
    let batch = Batch::new(&data.examples.iter().collect::<Vec<_>>())?;
    let tc = config.train_config();
    let params = ModelParams::init(tc.model_config(), &mut rng::seeded(rng::derive(config.seed, 0x1417)))?;
    let coords = sample_coordinates(
        &params,
        config.gradcheck_coords,
        &mut rng::seeded(rng::derive(config.seed, 0x6C4C)),
    );
    let summary = check_gradients(&params, &batch, &config.loss, Some(&coords))?;
    println!(
        "{}: max relative error {:.3e} (worst {}, {} coordinates, {} on ReLU kinks)",
        config.model, summary.max_error, summary.worst_param, summary.compared, summary.kinks
    );
    if summary.max_error.is_nan() || summary.max_error > GRADCHECK_TOLERANCE {
        bail!(
            "gradient check failed: relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            summary.max_error
        );
    }
    Ok(())
}

fn suite_cmd(config: &RunConfig, suite: Suite, out_dir: &Path) -> Result<()> {
    prepare_dir(out_dir, config)?;
    let mut sc = SuiteConfig::desk(suite, config.seeds.clone());
    sc.train = config.train_config();
    sc.data = config.data_config();
    let report = run_suite(&sc)?;
    write(&out_dir.join("report.csv"), &report.to_csv())?;
    let metrics = plot_metrics(&report);
    for metric in &metrics {
        write(&out_dir.join(format!("plot_{metric}.csv")), &report.plot_data(metric))?;
    }
    println!(
        "{}: {} rows over {} seeds written to {}",
        sc.suite.name(),
        report.rows.len(),
        config.seeds.len(),
        out_dir.display()
    );
    Ok(())
}

fn plot_metrics(report: &EvalReport) -> Vec<String> {
    let mut metrics: Vec<String> = report.rows.iter().map(|r| r.metric.clone()).collect();
    metrics.sort();
    metrics.dedup();
    metrics
}

pub fn ablate_cmd(config: &RunConfig, out_dir: &Path) -> Result<()> {
    suite_cmd(config, config.ablation_suite()?, out_dir)
}

pub fn sweep_horizon_cmd(config: &RunConfig, out_dir: &Path) -> Result<()> {
    suite_cmd(config, Suite::HorizonSweep(config.horizons.clone()), out_dir)
}
