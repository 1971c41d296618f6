use std::path::{Path, PathBuf};

use acgan::checkpoint::Checkpoint;
use acgan::config::ExperimentConfig;
use acgan::datapipe::write_montage_png;
use acgan::evalbench::{self, AnalysisInputs, CellSummary};
use acgan::latent::{self, Regime};
use acgan::netspec::NetRole;
use acgan::trainer::{self, CellKey, RunRecord, Variant, RECORD_FILE};
use acgan::{Error, Real, Result, SeedStream};

use crate::logging;

const RESOLVED_CONFIG: &str = "config.toml";

fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// Creates the run directory and stores the resolved config in it. A run
/// directory that already holds a different config is refused, so resumed
/// cells never mix settings.
fn prepare_run_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(RESOLVED_CONFIG);
    let text = cfg.to_toml_string();
    match std::fs::read_to_string(&path) {
        Ok(old) if old != text => {
            return Err(Error::Config(format!(
                "{} holds a different resolved config; use a fresh output_dir",
                dir.display()
            )))
        }
        Ok(_) => {}
        Err(_) => std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?,
    }
    logging::also_to(&dir.join("run.log"));
    Ok(dir)
}

pub fn train(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let cells = cfg.grid.cells();
    if cells.len() != 1 {
        return Err(Error::Config(format!(
            "train runs exactly one cell but the grid has {}; narrow it with --set grid.variants=[..] \
             --set grid.train_sizes=[..] --set grid.seeds=[..]",
            cells.len()
        )));
    }
    let spec = cfg.load_arch()?;
    let data = cfg.load_data()?;
    let dir = prepare_run_dir(&cfg)?;
    let (records, failures) =
        trainer::run_experiment::<Real>(&spec, &data, &cfg.grid, &cfg.trainer, &dir, 1)?;
    if let Some((_, e)) = failures.into_iter().next() {
        return Err(e);
    }
    let r = &records[0];
    println!(
        "{}",
        serde_json::json!({
            "cell": trainer::cell_dir(&dir, &r.key),
            "best_epoch": r.best_epoch,
            "best_val_accuracy": r.best_val_accuracy,
            "test_accuracy": r.test_accuracy,
        })
    );
    Ok(())
}

pub fn ablate(config: &Path, overrides: &[String], jobs: usize) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let spec = cfg.load_arch()?;
    let data = cfg.load_data()?;
    let dir = prepare_run_dir(&cfg)?;
    let (records, failures) =
        trainer::run_experiment::<Real>(&spec, &data, &cfg.grid, &cfg.trainer, &dir, jobs)?;
    for (key, e) in &failures {
        eprintln!("failed: {} ({e})", key.dir_name());
    }
    if records.is_empty() {
        if let Some((_, e)) = failures.into_iter().next() {
            return Err(e);
        }
    }
    report(&dir)
}

pub fn evaluate(config: &Path, overrides: &[String], checkpoint: &Path, test: bool) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let role = if ckpt
        .networks
        .iter()
        .any(|(r, _)| *r == NetRole::Discriminator)
    {
        NetRole::Discriminator
    } else {
        NetRole::BaselineCnn
    };
    let net = ckpt.network::<Real>(role)?;
    let data = cfg.load_data()?;
    if net.spec().image != data.train.shape || net.spec().num_classes != data.train.num_classes {
        return Err(Error::Checkpoint(
            "checkpoint architecture does not match the dataset".into(),
        ));
    }
    let (ds, idx) = if test {
        (&data.test, (0..data.test.len()).collect::<Vec<_>>())
    } else {
        (&data.train, data.val.indices.clone())
    };
    let acc = trainer::evaluate_accuracy(&net, ds, &idx, cfg.trainer.eval_batch)?;
    println!(
        "{}",
        serde_json::json!({ "split": if test { "test" } else { "val" }, "n": idx.len(), "accuracy": acc })
    );
    Ok(())
}

pub fn sample(
    checkpoint: &Path,
    count: usize,
    regime: Regime,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let gen = ckpt.network::<Real>(NetRole::Generator)?;
    let spec = gen.spec();
    let k = spec.num_classes;
    let labels: Vec<usize> = (0..count).map(|i| i % k).collect();
    let z = latent::sample::<Real>(count, spec.latent_dim, k, regime, SeedStream::new(seed))?
        .with_labels(labels)?;
    let max_abs = z.max_abs();
    log::info!(
        "{count} latents, regime {:?}, max |z| = {max_abs}",
        z.regime()
    );
    if let Some(threshold) = regime.threshold() {
        assert!(
            max_abs as f64 <= threshold,
            "sampler violated the truncation bound"
        );
    }
    let images = gen.predict_images(latent::condition(&z, k)?.values());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_montage_png(out, &images)?;
    let raw: Vec<u8> = images.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let raw_path = out.with_extension("f32");
    std::fs::write(&raw_path, raw).map_err(|e| Error::io(&raw_path, e))?;
    let meta = serde_json::json!({
        "shape": images.shape(),
        "labels": z.labels(),
        "regime": z.regime(),
        "max_abs_latent": max_abs,
        "seed": seed,
    });
    let meta_path = out.with_extension("json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;
    println!("{}", out.display());
    Ok(())
}

fn load_best(dir: &Path, key: &CellKey, role: NetRole) -> Result<acgan::Network32> {
    let path = trainer::cell_dir(dir, key).join("best.ckpt");
    if !path.is_file() {
        return Err(Error::Checkpoint(format!(
            "missing checkpoint {}",
            path.display()
        )));
    }
    Checkpoint::load(&path)?.network(role)
}

pub fn embed(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let dir = cfg.output_dir.clone();
    let a = &cfg.analysis;
    let key = |variant| CellKey {
        variant,
        train_size: a.train_size,
        seed: a.run_seed,
    };
    let cnn = load_best(&dir, &key(Variant::BaselineCnn), NetRole::BaselineCnn)?;
    let acgan_gen = load_best(&dir, &key(Variant::Acgan), NetRole::Generator)?;
    let wgpt_gen = load_best(&dir, &key(Variant::WacganGpt), NetRole::Generator)?;
    let data = cfg.load_data()?;
    let inputs = AnalysisInputs {
        cnn: &cnn,
        acgan_generator: &acgan_gen,
        wgpt_generator: &wgpt_gen,
        real: &data.test,
        per_origin: a.samples_per_origin,
        wgpt_regime: cfg.trainer.truncation.regime(cfg.trainer.tau),
    };
    let (reports, layout) = evalbench::dispersion_analysis(
        &inputs,
        &a.tsne,
        &a.tsne_seeds,
        SeedStream::new(a.run_seed),
    )?;
    let out = dir.join("analysis");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let p = out.join("dispersion.json");
    std::fs::write(&p, serde_json::to_string_pretty(&reports)? + "\n")
        .map_err(|e| Error::io(&p, e))?;
    if let Some(l) = &layout {
        let p = out.join("scatter.csv");
        std::fs::write(&p, evalbench::render_scatter_csv(l)?).map_err(|e| Error::io(&p, e))?;
    }
    for r in &reports {
        let triple: Vec<String> = r
            .by_origin
            .iter()
            .map(|(o, m, s)| format!("{}={m:.3}±{s:.3}", o.name()))
            .collect();
        println!(
            "tsne seed {}: {} ordering_holds={}",
            r.tsne_seed,
            triple.join(" "),
            r.ordering_holds
        );
    }
    Ok(())
}

fn read_records(run_dir: &Path) -> Result<Vec<RunRecord>> {
    let cells = run_dir.join("cells");
    let mut records = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&cells) {
        for e in entries.flatten() {
            let p = e.path().join(RECORD_FILE);
            if let Ok(bytes) = std::fs::read(&p) {
                records.push(serde_json::from_slice::<RunRecord>(&bytes)?);
            }
        }
    }
    records.sort_by_key(|r| r.key);
    Ok(records)
}

pub fn report(run_dir: &Path) -> Result<()> {
    let records = read_records(run_dir)?;
    if records.is_empty() {
        return Err(Error::Config(format!(
            "no run records under {}",
            run_dir.display()
        )));
    }
    let summaries: Vec<CellSummary> = evalbench::summarize(&records);
    let dispersions = match std::fs::read(run_dir.join("analysis").join("dispersion.json")) {
        Ok(b) => serde_json::from_slice(&b)?,
        Err(_) => Vec::new(),
    };
    let paths = evalbench::render_report(&run_dir.join("report"), &summaries, &dispersions, None)?;
    print!("{}", evalbench::render_accuracy_csv(&summaries));
    log::info!(
        "wrote {} and {}",
        paths.accuracy_csv.display(),
        paths.summary_json.display()
    );
    Ok(())
}
