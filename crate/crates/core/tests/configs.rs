use std::path::PathBuf;

use acgan::config::ExperimentConfig;
use acgan::trainer::{Models, TrainConfig, Variant};
use acgan::SeedStream;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_load_and_build() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let cfg =
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let spec = cfg
            .load_arch()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        for &v in &cfg.grid.variants {
            let mut tc = TrainConfig::new(v);
            tc.schedule = cfg.trainer.clone();
            Models::<f32>::new(&spec, &tc, SeedStream::new(0))
                .unwrap_or_else(|e| panic!("{} {v}: {e}", path.display()));
        }
        seen += 1;
    }
    assert!(seen >= 5, "only {seen} configs found");
}

#[test]
fn ablation_grid_covers_all_variants() {
    let cfg = ExperimentConfig::load(configs_dir().join("fmnist_ablation.toml")).unwrap();
    assert_eq!(cfg.grid.variants, Variant::ALL.to_vec());
    assert_eq!(cfg.grid.cells().len(), 5 * 5 * 3);
}
