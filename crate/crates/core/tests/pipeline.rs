use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use depthseg::inference::Criterion;
use depthseg::pipeline::PipelineConfig;
use depthseg::synth::{generate_corpus, list_scenes, SynthConfig};

const SMALL_CONFIG: &str = "\
# reduced settings for a quick end-to-end run
grid = 3
sigmas = 0.1
k_train = 30
k_test = 30
pca_rgb_sift = 16
pca_lbp = 16
pca_depth = 16
pca_spin = 16
pca_samples = 200
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn depthseg")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Relative path → contents for every file below `root`.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synthesis_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--out",
            d.to_str().unwrap(),
            "--count",
            "3",
            "--seed",
            "9",
            "--width",
            "64",
            "--height",
            "48",
        ]);
    }
    assert_eq!(snapshot(&a), snapshot(&b));
    let one = dir.path().join("one");
    ok(&["synth", "--out", one.to_str().unwrap(), "--count", "1"]);
    assert_eq!(list_scenes(&one).unwrap(), vec!["scene_0000"]);
    let dirs = std::fs::read_dir(&one)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(dirs, 1);
    for f in ["color.ppm", "depth.pgm", "intrinsics.txt", "labels.pgm"] {
        assert!(one.join("scene_0000").join(f).exists());
    }
}

#[test]
fn every_class_appears_in_fifty_scenes() {
    let config = SynthConfig {
        classes: 4,
        ..Default::default()
    };
    let scenes = generate_corpus(&config, 50, 3).unwrap();
    for class in 1..=4u32 {
        assert!(
            scenes
                .iter()
                .any(|s| s.objects.iter().any(|o| o.class_id == class)),
            "class {class} missing"
        );
    }
    for s in &scenes {
        for (i, a) in s.objects.iter().enumerate() {
            assert!(a.mask.area() >= 100);
            for b in &s.objects[..i] {
                assert!(!a.mask.overlaps(&b.mask));
            }
        }
    }
}

#[test]
fn config_files_and_overrides() {
    let mut c = PipelineConfig::from_text(SMALL_CONFIG).unwrap();
    assert_eq!(c.grid, 3);
    assert_eq!(c.sigmas, vec![0.1]);
    c.set("criterion", "overlap").unwrap();
    assert_eq!(c.criterion, Criterion::Overlap);
    let back = PipelineConfig::from_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
    let err = PipelineConfig::from_text("gamma = -1\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("gamma"), "{err}");
    assert!(c.set("lambda_range", "3,1").is_err() || c.validate().is_err());
}

#[test]
fn stages_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    std::fs::write(p("config.txt"), SMALL_CONFIG).unwrap();
    let cfg = p("config.txt");
    let base = ["--config", cfg.as_str()];
    let with =
        |rest: &[&str]| -> Vec<String> { base.iter().chain(rest).map(|s| s.to_string()).collect() };
    let go = |rest: &[&str]| {
        let args = with(rest);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    };

    go(&[
        "synth",
        "--out",
        &p("corpus"),
        "--count",
        "8",
        "--classes",
        "3",
        "--width",
        "96",
        "--height",
        "72",
        "--seed",
        "4",
    ]);
    let stages = |suffix: &str| {
        let o = |s: &str| format!("{}{suffix}", p(s));
        go(&["propose", "--corpus", &p("corpus"), "--out", &o("props")]);
        go(&[
            "describe",
            "--corpus",
            &p("corpus"),
            "--proposals",
            &o("props"),
            "--out",
            &o("desc"),
        ]);
        go(&[
            "train",
            "--corpus",
            &p("corpus"),
            "--proposals",
            &o("props"),
            "--descriptors",
            &o("desc"),
            "--out",
            &o("models"),
        ]);
        go(&[
            "predict",
            "--corpus",
            &p("corpus"),
            "--proposals",
            &o("props"),
            "--descriptors",
            &o("desc"),
            "--models",
            &o("models"),
            "--out",
            &o("pred"),
        ]);
        for crit in ["overlap", "overlap_confidence"] {
            go(&[
                "--criterion",
                crit,
                "infer",
                "--proposals",
                &o("props"),
                "--predictions",
                &o("pred"),
                "--out",
                &o(&format!("labels_{crit}")),
            ]);
            go(&[
                "eval",
                "--corpus",
                &p("corpus"),
                "--labelings",
                &o(&format!("labels_{crit}")),
                "--proposals",
                &o("props"),
                "--out",
                &o(&format!("eval_{crit}")),
            ]);
        }
    };
    stages("");
    let metrics = std::fs::read_to_string(p("eval_overlap/metrics.txt")).unwrap();
    let recall: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("mean_recall "))
        .expect("mean_recall line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&recall));
    assert!(metrics.contains("pool_upper_bound"));
    assert!(
        std::fs::read_to_string(p("eval_overlap_confidence/metrics.txt"))
            .unwrap()
            .contains("criterion overlap_confidence")
    );
    let overlays = std::fs::read_dir(p("eval_overlap/overlays"))
        .unwrap()
        .count();
    assert_eq!(overlays, 2);

    // re-running every stage into the same directories changes nothing
    let before: Vec<_> = [
        "props",
        "desc",
        "models",
        "pred",
        "labels_overlap",
        "eval_overlap",
    ]
    .iter()
    .map(|d| snapshot(Path::new(&p(d))))
    .collect();
    stages("");
    for (d, snap) in [
        "props",
        "desc",
        "models",
        "pred",
        "labels_overlap",
        "eval_overlap",
    ]
    .iter()
    .zip(&before)
    {
        assert_eq!(&snapshot(Path::new(&p(d))), snap, "{d} changed on re-run");
    }

    go(&["scene", "--corpus", &p("corpus"), "--out", &p("scene")]);
    assert!(std::fs::read_to_string(p("scene/scene_report.txt"))
        .unwrap()
        .contains("accuracy"));

    let missing = p("nowhere");
    let out = run(&with(&[
        "train",
        "--corpus",
        &p("corpus"),
        "--proposals",
        &p("props"),
        "--descriptors",
        &missing,
        "--out",
        &p("m2"),
    ])
    .iter()
    .map(String::as_str)
    .collect::<Vec<_>>());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("depthseg train") && err.contains("nowhere"),
        "{err}"
    );

    let out = run(&[
        "--set",
        "grid=0",
        "propose",
        "--corpus",
        &p("corpus"),
        "--out",
        &p("x"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}
