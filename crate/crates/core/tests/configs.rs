use ltgate::config::ExperimentConfig;

#[test]
fn shipped_configs_load_and_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.model.layer_specs(cfg.data.classes).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
