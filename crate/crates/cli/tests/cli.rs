use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jure::data::{generate_synthetic, write_csv, AnomalyKind, SyntheticSpec};

const SMALL: &str = "\
# quick settings
window = 16
hidden = 8
max_epochs = 2
train_stride = 8
batch_size = 32
vus_buffers = 0,10
";

fn jure(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jure"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run jure")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(kind: AnomalyKind) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = generate_synthetic(&SyntheticSpec::new(kind), 0).unwrap();
    write_csv(&train, dir.path().join("train.csv")).unwrap();
    write_csv(&test, dir.path().join("test.csv")).unwrap();
    fs::write(
        dir.path().join("run.conf"),
        format!(
            "{SMALL}train_file = train.csv\ntest_file = test.csv\nout_dir = out\nsigma = 0.2\n"
        ),
    )
    .unwrap();
    dir
}

#[test]
fn train_score_eval_with_flag_over_file_precedence() {
    let dir = setup(AnomalyKind::AmplitudeSpike);
    let d = dir.path();
    let t = jure(d, &["train", "--config", "run.conf", "--sigma", "0"]);
    assert!(t.status.success(), "{}", stderr(&t));
    let report = fs::read_to_string(d.join("out/train_report.txt")).unwrap();
    assert!(report.lines().any(|l| l == "# sigma = 0"));
    assert!(report.lines().any(|l| l == "# window = 16"));

    let s = jure(d, &["score", "--config", "run.conf"]);
    assert!(s.status.success(), "{}", stderr(&s));
    assert!(stderr(&s).contains("windows/s"));
    let e = jure(d, &["eval", "--config", "run.conf", "--ucr", "true"]);
    assert!(e.status.success(), "{}", stderr(&e));
    let kv = fs::read_to_string(d.join("out/metrics.kv")).unwrap();
    assert!(kv.lines().any(|l| l.starts_with("mean.ucr_score = ")));
    assert!(String::from_utf8_lossy(&e.stdout).contains("metrics.txt"));
}

#[test]
fn repeated_invocations_write_identical_artifacts() {
    let dir = setup(AnomalyKind::TrendShift);
    let d = dir.path();
    let mut snaps = Vec::new();
    for _ in 0..2 {
        for cmd in ["train", "score", "eval"] {
            assert!(jure(d, &[cmd, "--config", "run.conf", "--seed", "7"])
                .status
                .success());
        }
        let files = ["model.jure", "train_report.txt", "scores.csv", "metrics.kv"];
        snaps.push(files.map(|f| fs::read(d.join("out").join(f)).unwrap()));
    }
    assert!(snaps[0] == snaps[1]);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = setup(AnomalyKind::GradientNoise);
    let d = dir.path();

    let bad_value = jure(d, &["train", "--config", "run.conf", "--kernel", "4"]);
    assert_eq!(bad_value.status.code(), Some(2));

    let variant = jure(d, &["train", "--config", "run.conf", "--variant", "nope"]);
    assert_eq!(variant.status.code(), Some(2));
    assert!(stderr(&variant).contains("no_zero_init"));

    let missing = jure(
        d,
        &[
            "train",
            "--config",
            "run.conf",
            "--train-file",
            "absent.csv",
        ],
    );
    assert_eq!(missing.status.code(), Some(3));
    assert!(!d.join("out/model.jure").exists());

    let no_config = jure(d, &["train", "--config", "absent.conf"]);
    assert_eq!(no_config.status.code(), Some(2));

    let diverge = jure(d, &["train", "--config", "run.conf", "--lr", "1e150"]);
    assert_eq!(diverge.status.code(), Some(4), "{}", stderr(&diverge));
    assert!(!d.join("out/model.jure").exists());

    let axis = jure(
        d,
        &[
            "sweep", "--config", "run.conf", "--axis", "lr", "--values", "1",
        ],
    );
    assert_eq!(axis.status.code(), Some(2));
}

#[test]
fn truncated_checkpoint_is_a_data_error() {
    let dir = setup(AnomalyKind::AmplitudeSpike);
    let d = dir.path();
    assert!(jure(d, &["train", "--config", "run.conf"]).status.success());
    let path = d.join("out/model.jure");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let s = jure(d, &["score", "--config", "run.conf"]);
    assert_eq!(s.status.code(), Some(3), "{}", stderr(&s));
}

#[test]
fn ablate_and_sweep_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.conf"),
        format!("{SMALL}synthetic = amplitude_spike\nmax_epochs = 1\n"),
    )
    .unwrap();

    let a = jure(
        d,
        &[
            "ablate",
            "--config",
            "run.conf",
            "--variants",
            "amp_only,two_blocks",
        ],
    );
    assert!(a.status.success(), "{}", stderr(&a));
    let table = fs::read_to_string(d.join("ablation.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("full\t"));
    assert!(rows[3].starts_with("two_blocks\t") && rows[3].ends_with("n_blocks=2"));

    let s = jure(
        d,
        &[
            "sweep", "--config", "run.conf", "--axis", "w-corr", "--values", "0,0.25",
        ],
    );
    assert!(s.status.success(), "{}", stderr(&s));
    let sweep = fs::read_to_string(d.join("sweep_w_corr.tsv")).unwrap();
    assert!(sweep.starts_with(&format!("# tool = {}", jure::config::TOOL_VERSION)));
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 3);
}
