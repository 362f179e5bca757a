use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidkit"))
        .args(args)
        .current_dir(dir)
        .env("LIDKIT_THREADS", "1")
        .output()
        .expect("spawn lidkit")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_affine(dir: &Path, d: &str, n: &str, count: &str, out: &str) {
    ok(
        dir,
        &[
            "gen",
            "--family",
            "affine_gaussian",
            "--d",
            d,
            "--n",
            n,
            "--N",
            count,
            "--out",
            out,
        ],
    );
}

#[test]
fn gen_is_reproducible_and_validates() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    for out in ["a.lidc", "b.lidc"] {
        ok(
            dir,
            &[
                "gen",
                "--family",
                "hypersphere",
                "--d",
                "4",
                "--n",
                "16",
                "--N",
                "2000",
                "--seed",
                "0",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        std::fs::read(dir.join("a.lidc")).unwrap(),
        std::fs::read(dir.join("b.lidc")).unwrap()
    );
    assert_eq!(
        code(
            dir,
            &[
                "gen",
                "--family",
                "hypersphere",
                "--d",
                "20",
                "--n",
                "16",
                "--out",
                "x.lidc"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "gen",
                "--family",
                "no_such_family",
                "--d",
                "2",
                "--n",
                "4",
                "--out",
                "x.lidc"
            ]
        ),
        2
    );

    ok(
        dir,
        &[
            "gen",
            "--family",
            "hyperball",
            "--d",
            "2",
            "--n",
            "3",
            "--N",
            "5",
            "--out",
            "c.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.join("c.csv")).unwrap();
    assert!(text.starts_with("x0,x1,x2,true_lid\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn train_rejects_zero_batches() {
    let t = tempfile::tempdir().unwrap();
    gen_affine(t.path(), "2", "4", "50", "a.lidc");
    assert_eq!(
        code(
            t.path(),
            &[
                "train",
                "--cloud",
                "a.lidc",
                "--out",
                "m.lidm",
                "--batches",
                "0"
            ]
        ),
        2
    );
    assert!(!t.path().join("m.lidm").exists());
}

#[test]
fn train_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen_affine(dir, "2", "4", "200", "a.lidc");
    for out in ["m1.lidm", "m2.lidm"] {
        ok(
            dir,
            &[
                "train",
                "--cloud",
                "a.lidc",
                "--out",
                out,
                "--width",
                "16",
                "--depth",
                "2",
                "--batches",
                "200",
                "--seed",
                "5",
            ],
        );
    }
    assert_eq!(
        std::fs::read(dir.join("m1.lidm")).unwrap(),
        std::fs::read(dir.join("m2.lidm")).unwrap()
    );
    let losses = std::fs::read_to_string(dir.join("m1.lidm.loss.csv")).unwrap();
    assert!(losses.starts_with("batch,loss\n"));
    assert_eq!(losses.lines().count(), 201);
}

#[test]
fn trained_loss_approaches_noise_floor() {
    // For an affine Gaussian the optimal per-σ loss is d/(1+σ²); averaged
    // over log-uniform σ on [0.005, 1] it is about 3.738 for d = 4.
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen_affine(dir, "4", "8", "2000", "a.lidc");
    ok(
        dir,
        &[
            "train",
            "--cloud",
            "a.lidc",
            "--out",
            "m.lidm",
            "--width",
            "64",
            "--depth",
            "2",
            "--batches",
            "3000",
        ],
    );
    let losses: Vec<f64> = std::fs::read_to_string(dir.join("m.lidm.loss.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let tail = &losses[losses.len() - 500..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((mean - 3.738).abs() <= 1.0, "final loss {mean}");
}

#[test]
fn estimate_with_oracle() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen_affine(dir, "8", "32", "300", "a.lidc");
    let stdout = ok(
        dir,
        &[
            "estimate",
            "--cloud",
            "a.lidc",
            "--oracle",
            "affine",
            "--estimator",
            "dsm",
            "--sigma",
            "0.01",
            "--m",
            "256",
            "--out",
            "dsm",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary, json(&dir.join("dsm.json")));
    assert_eq!(summary["estimator"], "dsm");
    assert_eq!(summary["n_points"], 300);
    assert!(summary["mae"].as_f64().unwrap() <= 0.3);
    assert_eq!(summary["runtime_ms"].as_f64(), Some(0.0));

    let csv = std::fs::read_to_string(dir.join("dsm.csv")).unwrap();
    assert!(csv.starts_with("point_index,estimate,true_lid,score_evals,jvp_evals\n"));
    assert_eq!(csv.lines().count(), 301);

    ok(
        dir,
        &[
            "estimate",
            "--cloud",
            "a.lidc",
            "--oracle",
            "affine",
            "--estimator",
            "flipd",
            "--sigma",
            "0.01",
            "--out",
            "flipd",
        ],
    );
    assert!(json(&dir.join("flipd.json"))["mae"].as_f64().unwrap() <= 0.1);

    ok(
        dir,
        &[
            "estimate",
            "--cloud",
            "a.lidc",
            "--oracle",
            "affine",
            "--estimator",
            "nb",
            "--sigma",
            "0.01",
            "--m",
            "64",
            "--out",
            "nb",
        ],
    );
    assert!(json(&dir.join("nb.json"))["mae"].as_f64().unwrap() <= 1.0);
}

#[test]
fn estimate_error_codes() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen_affine(dir, "2", "4", "60", "a.lidc");
    let base = ["estimate", "--cloud", "a.lidc", "--out", "e"];
    // Parametric estimators need a field source.
    assert_eq!(code(dir, &[&base[..], &["--estimator", "dsm"]].concat()), 4);
    assert_eq!(
        code(
            dir,
            &[&base[..], &["--estimator", "bogus", "--oracle", "affine"]].concat()
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                &base[..],
                &["--estimator", "dsm", "--oracle", "affine", "--sigma", "-1"]
            ]
            .concat()
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[&base[..], &["--estimator", "mle", "--k", "100"]].concat()
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "estimate",
                "--cloud",
                "missing.lidc",
                "--estimator",
                "mle",
                "--out",
                "e"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[&base[..], &["--estimator", "mle", "--k", "10"]].concat()
        ),
        0
    );
}

#[test]
fn estimate_with_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen_affine(dir, "2", "4", "100", "a.lidc");
    ok(
        dir,
        &[
            "train",
            "--cloud",
            "a.lidc",
            "--out",
            "m.lidm",
            "--width",
            "16",
            "--depth",
            "2",
            "--batches",
            "100",
        ],
    );
    for est in ["dsm", "flipd", "nb", "eb"] {
        ok(
            dir,
            &[
                "estimate",
                "--cloud",
                "a.lidc",
                "--checkpoint",
                "m.lidm",
                "--estimator",
                est,
                "--out",
                est,
            ],
        );
        assert_eq!(json(&dir.join(format!("{est}.json")))["estimator"], est);
    }
    gen_affine(dir, "2", "6", "10", "wide.lidc");
    assert_eq!(
        code(
            dir,
            &[
                "estimate",
                "--cloud",
                "wide.lidc",
                "--checkpoint",
                "m.lidm",
                "--estimator",
                "dsm",
                "--out",
                "w"
            ]
        ),
        2
    );
    std::fs::write(dir.join("bad.lidm"), b"LIDM1 truncated").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "estimate",
                "--cloud",
                "a.lidc",
                "--checkpoint",
                "bad.lidm",
                "--estimator",
                "dsm",
                "--out",
                "w"
            ]
        ),
        2
    );
}

#[test]
fn bench_with_oracle() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    std::fs::write(
        dir.join("bench.json"),
        r#"{"manifolds": [{"family": "affine_gaussian", "d": 8, "n": 32, "N": 200}],
            "estimators": ["dsm"], "sigmas": [0.01], "m": [256],
            "field": {"oracle": "affine"}}"#,
    )
    .unwrap();
    let table = ok(dir, &["bench", "--config", "bench.json", "--out", "out"]);
    assert!(table.lines().last().unwrap().starts_with("Average"));
    let csv = std::fs::read_to_string(dir.join("out/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "manifold,d,n,estimator,sigma,m,mae,mean,stddev,score_evals,jvp_evals,runtime_ms"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(row[6].parse::<f64>().unwrap() <= 0.3);

    std::fs::write(
        dir.join("empty.json"),
        r#"{"manifolds": [], "estimators": ["dsm"], "field": {"oracle": "affine"}}"#,
    )
    .unwrap();
    assert_eq!(
        code(dir, &["bench", "--config", "empty.json", "--out", "out2"]),
        2
    );
}

#[test]
fn spectrum_of_point_mass_is_zero() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    ok(
        dir,
        &[
            "gen",
            "--family",
            "point_mixture",
            "--d",
            "0",
            "--n",
            "6",
            "--N",
            "10",
            "--anchors",
            "1",
            "--out",
            "p.lidc",
        ],
    );
    ok(
        dir,
        &[
            "spectrum", "--cloud", "p.lidc", "--oracle", "mixture", "--m", "8,64", "--out", "s",
        ],
    );
    let s = json(&dir.join("s.json"));
    for e in s["spectra"].as_array().unwrap() {
        assert!(e["trace"].as_f64().unwrap().abs() < 1e-18);
        assert_eq!(e["nb_lid"], 0);
    }
    let csv = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    assert!(csv.starts_with("m,rank,eigenvalue\n"));
}

#[test]
fn scaling_counts_evaluations() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(
        t.path(),
        &[
            "scaling", "--n", "16,32", "--m", "8", "--probes", "64", "--out", "s.csv",
        ],
    );
    assert_eq!(
        out,
        "d,n,m,dsm_score_evals,flipd_exact_jvp_evals,flipd_hutchinson_jvp_evals,peak_rss_kb\n\
         8,16,8,8,16,64,0\n16,32,8,8,32,64,0\n"
    );
}

#[test]
fn usage_errors_exit_two() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(t.path(), &[]), 2);
    assert_eq!(code(t.path(), &["frobnicate"]), 2);
    assert_eq!(code(t.path(), &["estimate", "--cloud", "x"]), 2);
}
