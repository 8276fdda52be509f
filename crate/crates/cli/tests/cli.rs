use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXAMPLE_STORY: &str = "As a site member, I want to access to the Facebook profiles of other members \
                    so that I can share my experiences with them";

fn privstory(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privstory"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = privstory(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stories(dir: &Path, n: usize) -> PathBuf {
    let n = n.to_string();
    ok(&["gen-stories", "--n", &n, "--seed", "3", "--out", "c.jsonl"], dir);
    dir.join("c.jsonl")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

const COMMANDS: [&str; 15] = [
    "",
    "ingest",
    "dict",
    "dict inspect",
    "dict export",
    "featurize",
    "train",
    "pretrain",
    "transfer",
    "evaluate",
    "mcnemar",
    "predict",
    "report",
    "gen-surrogate",
    "gen-stories",
];

#[test]
fn help_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for cmd in COMMANDS {
        let mut args: Vec<&str> = cmd.split_whitespace().collect();
        args.push("--help");
        let text = ok(&args, tmp.path());
        let name = if cmd.is_empty() { "privstory".to_string() } else { cmd.replace(' ', "_") };
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(text, want, "help for `{cmd}` changed; rerun with UPDATE_GOLDEN=1");
    }
}

#[test]
fn help_lists_every_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let expect: [(&str, &[&str]); 5] = [
        (
            "evaluate",
            &[
                "--corpus", "--format", "--manifest", "--dictionary", "--annotate-privacy", "--protocol",
                "--pipeline-config", "--nlp-shallow-repr", "--pretrained", "--unfreeze-top", "--seed",
                "--models", "--repeats", "--k", "--jobs", "--alpha", "--out",
            ],
        ),
        ("predict", &["--model", "--annotations", "--json", "[TEXT]"]),
        (
            "pretrain",
            &["--corpus", "--surrogate", "--protocol", "--pipeline-config", "--allow-small", "--seed", "--out"],
        ),
        ("mcnemar", &["--results", "--a", "--b", "--alpha"]),
        ("featurize", &["--features", "--seq-len", "--min-count", "--nlp-shallow-repr", "--out"]),
    ];
    for (cmd, flags) in expect {
        let text = ok(&[cmd, "--help"], tmp.path());
        for f in flags {
            assert!(text.contains(f), "`{cmd} --help` lacks {f}");
        }
    }
}

#[test]
fn evaluate_writes_one_record_per_cell_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    stories(dir, 200);
    let args = |out: &'static str| {
        [
            "evaluate", "--corpus", "c.jsonl", "--models", "lr_pw,cnn_pw", "--repeats", "2", "--k", "5", "--seed",
            "42", "--out", out,
        ]
    };
    ok(&args("a"), dir);
    let mut runs = 0;
    for model in ["lr_pw", "cnn_pw"] {
        let files = std::fs::read_dir(dir.join("a/runs").join(model)).unwrap().count();
        runs += files;
        assert!(dir.join("a/summary").join(format!("{model}.json")).exists());
    }
    assert_eq!(runs, 20);
    assert!(dir.join("a/mcnemar/cnn_pw_vs_lr_pw.json").exists());
    assert!(dir.join("a/plan.json").exists());

    ok(&args("b"), dir);
    for model in ["lr_pw", "cnn_pw"] {
        for r in 0..2 {
            for f in 0..5 {
                let rel = format!("runs/{model}/{r}-{f}.jsonl");
                let a = std::fs::read(dir.join("a").join(&rel)).unwrap();
                let b = std::fs::read(dir.join("b").join(&rel)).unwrap();
                assert_eq!(a, b, "{rel}");
            }
        }
    }
    for rel in ["report.md", "plan.json", "mcnemar/cnn_pw_vs_lr_pw.json"] {
        assert_eq!(
            std::fs::read(dir.join("a").join(rel)).unwrap(),
            std::fs::read(dir.join("b").join(rel)).unwrap(),
            "{rel}"
        );
    }

    let report = ok(&["report", "--results", "a", "--out", "r.md"], dir);
    assert!(report.contains("| LR_PW |") && report.contains("| CNN_PW |"));
    let mc = ok(&["mcnemar", "--results", "a", "--a", "cnn_pw", "--b", "lr_pw"], dir);
    assert!(mc.contains("cnn_pw vs lr_pw"), "{mc}");
}

#[test]
fn missing_dictionary_exits_3_and_names_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    stories(tmp.path(), 60);
    let out = privstory(
        &["evaluate", "--corpus", "c.jsonl", "--dictionary", "absent.txt", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("--dictionary"), "{}", stderr(&out));
}

#[test]
fn exit_codes_for_usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(privstory(&["no-such-command"], dir).status.code(), Some(3));
    assert_eq!(privstory(&["evaluate"], dir).status.code(), Some(3));

    std::fs::write(dir.join("bad.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let out = privstory(&["ingest", "--corpus", "bad.jsonl"], dir);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("--corpus"));

    stories(dir, 60);
    let out = privstory(&["evaluate", "--corpus", "c.jsonl", "--models", "lr_pw", "--k", "40", "--out", "r"], dir);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let out = privstory(&["train", "--corpus", "c.jsonl", "--model", "xgb_pw", "--out", "m"], dir);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn predict_lists_matched_privacy_words() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    stories(dir, 200);
    ok(&["train", "--corpus", "c.jsonl", "--model", "rf_pw", "--out", "m"], dir);
    let text = ok(&["predict", "--model", "m", EXAMPLE_STORY], dir);
    assert!(text.contains("OpenVisible: access, share"), "{text}");

    let json = ok(&["predict", "--model", "m", "--json", EXAMPLE_STORY], dir);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["matched"]["OpenVisible"], serde_json::json!(["access", "share"]));
    let score = v["score"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));
    assert_eq!(v["label"].as_u64().unwrap(), u64::from(score > 0.5));
    assert_eq!(ok(&["predict", "--model", "m", "--json", EXAMPLE_STORY], dir), json);

    let out = privstory(&["predict", "--model", "m", "  "], dir);
    assert_eq!(out.status.code(), Some(3));
    let out = privstory(&["predict", "--model", "m"], dir);
    assert_eq!(out.status.code(), Some(3));

    ok(&["train", "--corpus", "c.jsonl", "--model", "lr_nlp", "--out", "n"], dir);
    let out = privstory(&["predict", "--model", "n", EXAMPLE_STORY], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("annotations required"), "{}", stderr(&out));
    let lines = ok(&["predict", "--model", "n", "--annotations", "c.jsonl", "--json"], dir);
    assert_eq!(lines.lines().count(), 200);
}

#[test]
fn pretrain_and_transfer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    stories(dir, 120);
    let out = privstory(&["pretrain", "--surrogate", "120", "--out", "p.ckpt"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("allow"), "{}", stderr(&out));
    let a = ok(&["pretrain", "--surrogate", "240", "--seed", "9", "--out", "p.ckpt"], dir);
    let b = ok(&["pretrain", "--surrogate", "240", "--seed", "9", "--out", "q.ckpt"], dir);
    assert_eq!(a, b);
    assert_eq!(std::fs::read(dir.join("p.ckpt")).unwrap(), std::fs::read(dir.join("q.ckpt")).unwrap());

    let t = ok(&["transfer", "--corpus", "c.jsonl", "--pretrained", "p.ckpt", "--out", "tl"], dir);
    assert!(t.contains("tok_embedding, tok_conv, dep_embedding, dep_conv"), "{t}");
    let t = ok(
        &["transfer", "--corpus", "c.jsonl", "--pretrained", "p.ckpt", "--unfreeze-top", "1", "--out", "tl1"],
        dir,
    );
    assert!(!t.contains("dep_conv"), "{t}");
    let lines = ok(&["predict", "--model", "tl", "--annotations", "c.jsonl", "--json"], dir);
    assert_eq!(lines.lines().count(), 120);
}

#[test]
fn ingest_featurize_and_dictionary_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    stories(dir, 80);
    let text = ok(&["ingest", "--corpus", "c.jsonl", "--annotate-privacy", "--out", "c.csv"], dir);
    assert!(text.starts_with("80 stories"), "{text}");
    let again = ok(&["ingest", "--corpus", "c.csv"], dir);
    assert_eq!(text, again);

    ok(&["featurize", "--corpus", "c.jsonl", "--out", "pw.csv"], dir);
    let csv = std::fs::read_to_string(dir.join("pw.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 2 + 8);
    ok(&["featurize", "--corpus", "c.jsonl", "--features", "nlp", "--out", "nlp.csv"], dir);
    ok(&["featurize", "--corpus", "c.jsonl", "--features", "encoded", "--out", "enc.bin"], dir);
    assert!(dir.join("enc.bin").exists());

    let table = ok(&["dict", "inspect"], dir);
    assert!(table.contains("OpenVisible") && table.contains("seed-1.0"), "{table}");
    assert_eq!(table.lines().filter(|l| !l.is_empty()).count(), 2 + 8);
    ok(&["dict", "export", "--out", "d.txt"], dir);
    assert_eq!(ok(&["dict", "inspect", "--dictionary", "d.txt"], dir), table);
}
