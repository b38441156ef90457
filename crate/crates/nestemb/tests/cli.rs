//! The `nestemb` binary: exit codes, artifacts, and config resolution.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn nestemb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestemb"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small synthetic triplets, pairs and docs plus a quickly trained model.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &[
            "data",
            "synth",
            "--kind",
            "triplets",
            "--clusters",
            "4",
            "--per-cluster",
            "40",
            "--seed",
            "3",
            "--out",
            "tri.csv",
        ][..],
        &[
            "data",
            "synth",
            "--kind",
            "pairs",
            "--clusters",
            "4",
            "--count",
            "60",
            "--seed",
            "3",
            "--out",
            "pairs.csv",
        ],
        &[
            "data",
            "synth",
            "--kind",
            "docs",
            "--clusters",
            "4",
            "--count",
            "50",
            "--seed",
            "3",
            "--out",
            "docs.csv",
        ],
        &[
            "train",
            "--triplets",
            "tri.csv",
            "--out",
            "m.mxem",
            "--ladder",
            "32,16,8",
            "--feature-bits",
            "10",
            "--batch",
            "32",
            "--lr",
            "0.005",
        ],
    ] {
        let out = nestemb(args, d);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    }
    dir
}

#[test]
fn train_writes_model_and_report() {
    let dir = workspace();
    let d = dir.path();
    let size = std::fs::metadata(d.join("m.mxem")).unwrap().len();
    assert_eq!(
        size,
        (nestemb::format::model_header_len(3) + 4 * 32 * 1024) as u64
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.report.json")).unwrap()).unwrap();
    let first = report["batch_losses"][0].as_f64().unwrap();
    let mean = report["epoch_mean_losses"][0].as_f64().unwrap();
    assert!(mean < first, "{mean} vs {first}");
    assert_eq!(report["batch_losses"].as_array().unwrap().len(), 5);
    assert_eq!(report["config"]["ladder"], serde_json::json!([32, 16, 8]));
    assert_eq!(report["config"]["batch"], 32);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = nestemb(&["train", "--out", "m.mxem"], d);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--triplets"), "{}", stderr(&out));
    assert_eq!(
        code(&nestemb(
            &["train", "--triplets", "t.csv", "--out", "m", "--batch", "0"],
            d
        )),
        2
    );
    assert_eq!(
        code(&nestemb(
            &[
                "train",
                "--triplets",
                "t.csv",
                "--out",
                "m",
                "--ladder",
                "8,16"
            ],
            d
        )),
        2
    );
    assert_eq!(
        code(&nestemb(
            &[
                "train",
                "--triplets",
                "t.csv",
                "--out",
                "m",
                "--dim",
                "64",
                "--ladder",
                "32,16"
            ],
            d
        )),
        2
    );
    assert_eq!(
        code(&nestemb(
            &[
                "train",
                "--triplets",
                "t.csv",
                "--out",
                "m",
                "--batch",
                "lots"
            ],
            d
        )),
        2
    );
    assert_eq!(code(&nestemb(&["frobnicate"], d)), 2);
    assert_eq!(code(&nestemb(&["--help"], d)), 0);
}

#[test]
fn missing_data_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&nestemb(
            &["train", "--triplets", "absent.csv", "--out", "m.mxem"],
            dir.path()
        )),
        1
    );
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(
        d.join("run.conf"),
        "# test\nbatch = 64\nladder=32,16\nfeature-bits=10\nepochs=2\n",
    )
    .unwrap();
    let out = nestemb(
        &[
            "--config",
            "run.conf",
            "train",
            "--triplets",
            "tri.csv",
            "--out",
            "c.mxem",
            "--batch",
            "80",
            "--verbose",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("resolved config"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("c.report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["batch"], 80); // flag wins
    assert_eq!(report["config"]["epochs"], 2); // file beats default
    assert_eq!(report["config"]["ladder"], serde_json::json!([32, 16]));
    assert_eq!(report["config"]["seed"], 42); // default
    assert_eq!(report["batch_losses"].as_array().unwrap().len(), 4);

    std::fs::write(d.join("bad.conf"), "bogus=1\n").unwrap();
    assert_eq!(
        code(&nestemb(
            &[
                "--config",
                "bad.conf",
                "train",
                "--triplets",
                "tri.csv",
                "--out",
                "x"
            ],
            d
        )),
        2
    );
}

#[test]
fn preset_flag_sets_the_five_step_ladder() {
    let dir = workspace();
    let d = dir.path();
    let out = nestemb(
        &[
            "train",
            "--preset",
            "paper",
            "--triplets",
            "tri.csv",
            "--out",
            "p.mxem",
            "--feature-bits",
            "6",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("p.report.json")).unwrap()).unwrap();
    assert_eq!(
        report["config"]["ladder"],
        serde_json::json!([768, 512, 256, 128, 64])
    );
    assert_eq!(report["config"]["batch"], 128);
    assert_eq!(report["config"]["epochs"], 1);
}

#[test]
fn eval_writes_json_and_csv() {
    let dir = workspace();
    let d = dir.path();
    let out = nestemb(
        &[
            "eval",
            "--model",
            "m.mxem",
            "--pairs",
            "pairs.csv",
            "--out",
            "ev.json",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(d.join("ev.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dimension,pearson_cosine,spearman_cosine,pearson_manhattan,spearman_manhattan,pearson_euclidean,spearman_euclidean,pearson_dot,spearman_dot,pearson_max,spearman_max"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        vec![32.0, 16.0, 8.0]
    );
    for r in &rows {
        assert_eq!(
            r[9],
            [r[1], r[3], r[5], r[7]]
                .into_iter()
                .fold(f64::MIN, f64::max)
        );
        assert_eq!(
            r[10],
            [r[2], r[4], r[6], r[8]]
                .into_iter()
                .fold(f64::MIN, f64::max)
        );
    }
    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("ev.json")).unwrap()).unwrap();
    assert_eq!(
        json["dimensions"]["16"]["max"]["pearson"].as_f64().unwrap(),
        rows[1][9]
    );
    assert_eq!(json["config"]["dims"], serde_json::json!([32, 16, 8]));

    let sub = nestemb(
        &[
            "eval",
            "--model",
            "m.mxem",
            "--pairs",
            "pairs.csv",
            "--out",
            "ev2.json",
            "--dims",
            "16",
        ],
        d,
    );
    assert_eq!(code(&sub), 0);
    assert_eq!(
        std::fs::read_to_string(d.join("ev2.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    assert_eq!(
        code(&nestemb(
            &[
                "eval",
                "--model",
                "m.mxem",
                "--pairs",
                "pairs.csv",
                "--out",
                "e.json",
                "--dims",
                "12"
            ],
            d
        )),
        2
    );
}

#[test]
fn eval_with_constant_gold_exits_1() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(
        d.join("flat.csv"),
        "sentence1,sentence2,score\nا ب,ب ج,0.5\nد ه,و ز,0.5\nح ط,ي ك,0.5\n",
    )
    .unwrap();
    let out = nestemb(
        &[
            "eval", "--model", "m.mxem", "--pairs", "flat.csv", "--out", "f.json",
        ],
        d,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("constant"), "{}", stderr(&out));
}

#[test]
fn search_funnel_and_exact() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(
        code(&nestemb(
            &["index", "--model", "m.mxem", "--docs", "docs.csv", "--out", "c.bin"],
            d
        )),
        0
    );
    let query = "في الكتاب";
    let full = nestemb(
        &[
            "search",
            "--model",
            "m.mxem",
            "--corpus",
            "c.bin",
            "--query",
            query,
            "--shortlist-dim",
            "8",
            "--shortlist-size",
            "50",
            "--k",
            "5",
            "--with-exact",
        ],
        d,
    );
    assert_eq!(code(&full), 0, "{}", stderr(&full));
    let text = stdout(&full);
    assert_eq!(text.lines().filter(|l| l.contains("doc-")).count(), 5);
    assert!(text.contains("recall@5: 1\n"), "{text}");

    let many = nestemb(
        &[
            "search",
            "--model",
            "m.mxem",
            "--corpus",
            "c.bin",
            "--query",
            query,
            "--k",
            "80",
            "--shortlist-size",
            "100",
        ],
        d,
    );
    assert_eq!(code(&many), 0);
    assert!(stderr(&many).contains("warning"));
    assert_eq!(stdout(&many).lines().count(), 50);

    // A different model cannot search this corpus.
    assert_eq!(
        code(&nestemb(
            &[
                "train",
                "--triplets",
                "tri.csv",
                "--out",
                "other.mxem",
                "--ladder",
                "32,16,8",
                "--feature-bits",
                "10",
                "--seed",
                "9"
            ],
            d
        )),
        0
    );
    let out = nestemb(
        &[
            "search",
            "--model",
            "other.mxem",
            "--corpus",
            "c.bin",
            "--query",
            query,
        ],
        d,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("corpus was built with model"));
}

#[test]
fn data_validate_synth_split() {
    let dir = workspace();
    let d = dir.path();
    let out = nestemb(
        &[
            "data", "validate", "--schema", "triplet", "--input", "tri.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("160 rows"), "{}", stdout(&out));

    for name in ["a.csv", "b.csv"] {
        assert_eq!(
            code(&nestemb(
                &[
                    "data",
                    "synth",
                    "--clusters",
                    "3",
                    "--per-cluster",
                    "5",
                    "--seed",
                    "11",
                    "--out",
                    name
                ],
                d
            )),
            0
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );

    let out = nestemb(
        &[
            "data",
            "split",
            "--schema",
            "triplet",
            "--input",
            "tri.csv",
            "--out-dir",
            "parts",
            "--fractions",
            "0.5,0.25,0.25",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = nestemb(
        &[
            "data",
            "validate",
            "--schema",
            "triplet",
            "--split-dir",
            "parts",
        ],
        d,
    );
    assert_eq!(code(&v), 0);
    assert!(
        stdout(&v).contains("train      actual       80"),
        "{}",
        stdout(&v)
    );
    let published = nestemb(
        &[
            "data",
            "validate",
            "--schema",
            "triplet",
            "--split-dir",
            "parts",
            "--expect-published",
        ],
        d,
    );
    assert_eq!(code(&published), 1);
    assert!(stdout(&published).contains("FAIL"));

    assert_eq!(
        code(&nestemb(
            &[
                "data",
                "split",
                "--schema",
                "triplet",
                "--input",
                "tri.csv",
                "--out-dir",
                "p2",
                "--fractions",
                "0.5,0.5,0.5"
            ],
            d
        )),
        2
    );
    std::fs::write(d.join("broken.csv"), "anchor,positive\nا,ب\n").unwrap();
    assert_eq!(
        code(&nestemb(
            &[
                "data",
                "validate",
                "--schema",
                "triplet",
                "--input",
                "broken.csv"
            ],
            d
        )),
        1
    );
}

#[test]
fn serve_bad_address_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nestemb(
        &["serve", "--models", ".", "--listen", "not-an-address"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert_eq!(
        code(&nestemb(&["serve", "--models", "missing-dir"], dir.path())),
        2
    );
}

#[test]
fn serve_answers_and_shuts_down_cleanly() {
    let dir = workspace();
    let d = dir.path();
    std::fs::create_dir(d.join("models")).unwrap();
    std::fs::rename(d.join("m.mxem"), d.join("models/desk.mxem")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_nestemb"))
        .args(["serve", "--models", "models", "--listen", "127.0.0.1:0"])
        .current_dir(d)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect(&line)
        .to_owned();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (health, models): (Value, Value) = rt.block_on(async {
        let c = reqwest::Client::new();
        let h = c
            .get(format!("http://{addr}/v1/health"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let m = c
            .get(format!("http://{addr}/v1/models"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        (h, m)
    });
    assert_eq!(health["status"], "ok");
    assert_eq!(health["models_loaded"], 1);
    assert_eq!(models["models"][0]["model_id"], "desk");

    Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(10);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(std::time::Instant::now() < deadline, "server did not stop");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(status.code(), Some(0));
    let mut log = String::new();
    std::io::Read::read_to_string(&mut child.stderr.take().unwrap(), &mut log).unwrap();
    assert!(
        log.contains("route=\"/v1/health\"") || log.contains("route=/v1/health"),
        "{log}"
    );
    assert!(log.contains("latency_ms"));
}
