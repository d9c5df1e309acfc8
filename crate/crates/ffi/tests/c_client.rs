use std::path::PathBuf;
use std::process::Command;

use funcnet::curvedata::SparseCurve;
use funcnet::funcnet::{count_params, ModelKind, TrainConfig};
use funcnet::simgen::{generate, KlConfig};
use funcnet::{Pipeline, PipelineConfig};

/// `target/<profile>`, where cargo leaves the static library.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_agrees_with_rust() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("libfuncnet_ffi.a");
    assert!(lib.is_file(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let sim = generate(&KlConfig {
        n_per_group: 25,
        ..KlConfig::two_group(8)
    })
    .unwrap();
    let cfg = PipelineConfig {
        train: TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    let p = Pipeline::fit(&sim.dataset, &cfg).unwrap();
    let model = dir.path().join("model.json");
    p.save(&model).unwrap();

    let exe = dir.path().join("predict");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/predict.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());

    let out = Command::new(&exe).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    let first: Vec<&str> = lines.next().unwrap().split(' ').collect();
    let curve = SparseCurve::new(vec![0.1, 0.35, 0.6, 0.9], vec![0.2, -0.4, 0.1, 0.3]).unwrap();
    let want = p.predict_curves(&[curve]).unwrap();
    assert_eq!(first[0].parse::<f64>().unwrap(), want.value);
    assert_eq!(first[1].parse::<i32>().unwrap(), i32::from(want.label.unwrap()));

    let gru = count_params(ModelKind::Gru, 32, 21, &[]).unwrap();
    assert_eq!(lines.next().unwrap(), format!("{gru} {}", env!("CARGO_PKG_VERSION")));
}
