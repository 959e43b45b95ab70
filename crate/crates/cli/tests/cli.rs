use std::path::Path;
use std::process::{Command, Output};

use gradfield_cli::config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradfield"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_config_key_with_its_default() {
    let commands: [(&str, &[&[config::Key]]); 7] = [
        ("gen-data", config::GEN_DATA),
        ("train", config::TRAIN),
        ("sample", config::SAMPLE),
        ("extract", config::EXTRACT),
        ("render", config::RENDER),
        ("eval", config::EVAL),
        ("field-viz", config::FIELD_VIZ),
    ];
    for (name, groups) in commands {
        let help = String::from_utf8(ok(&[name, "--help"]).stdout).unwrap();
        for key in config::schema(groups) {
            assert!(help.contains(&format!("{}={}", key.name, key.default)), "{name}: {}", key.name);
        }
    }
}

#[test]
fn readme_documents_every_command() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    for name in ["gen-data", "train", "sample", "extract", "render", "eval", "field-viz"] {
        assert!(readme.contains(&format!("gradfield {name}")), "{name}");
    }
}

#[test]
fn eval_of_a_cloud_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--out", p(&data), "--set", "n_points=200"]);
    let shape = data.join("shape_000.xyz");
    let out = ok(&["eval", "--out", p(&dir.path().join("e")), p(&shape), p(&shape)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\ncd=0.00000000000000000e0\n"), "{text}");
    assert!(text.contains("\nemd=0.00000000000000000e0\n"), "{text}");
    assert!(dir.path().join("e/metrics.csv").exists());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sample", "--out", p(dir.path()), "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error code=2 kind=config:"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let missing = dir.path().join("missing.xyz");
    let out = run(&["eval", "--out", p(dir.path()), p(&missing), p(&missing)]);
    assert_eq!(out.status.code(), Some(3));

    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--set", "n_points=50"]);
    let cloud = data.join("shape_000.xyz");
    let out = run(&[
        "sample",
        "--out",
        p(&dir.path().join("s")),
        "--set",
        &format!("cloud={}", p(&cloud)),
        "--set",
        "alpha=1e300",
        "--set",
        "n=5",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# two squares\nshape=square\ncount=2\nn_points=40\nseed=4\n").unwrap();
    let out_dir = dir.path().join("o");
    ok(&["gen-data", "--config", p(&cfg), "--seed", "5", "--out", p(&out_dir)]);
    let resolved = std::fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(resolved.contains("seed=5\n") && resolved.contains("shape=square\n"));
    assert!(out_dir.join("shape_001.xyz").exists());
}

#[test]
fn field_viz_writes_one_arrow_row_per_probe() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--set", "n_points=100"]);
    let viz = dir.path().join("v");
    ok(&[
        "field-viz",
        "--out",
        p(&viz),
        "--set",
        &format!("cloud={}", p(&data.join("shape_000.xyz"))),
        "--set",
        "sigmas=1,0.1",
        "--set",
        "arrows=5",
        "--set",
        "resolution=8",
    ]);
    let csv = std::fs::read_to_string(viz.join("arrows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 25);
    let svg = std::fs::read_to_string(viz.join("field.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("sigma = 0.1"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--set", "n_points=120"]);
    let cloud = format!("cloud={}", p(&data.join("shape_000.xyz")));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("s{k}"));
        ok(&["sample", "--seed", "3", "--out", p(&out), "--set", &cloud, "--set", "n=50"]);
        outputs.push(std::fs::read(out.join("samples.xyz")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn train_then_sample_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--set", "count=2", "--set", "n_points=64", "--set", "normalize=true"]);
    let model = dir.path().join("m");
    ok(&[
        "train",
        "--out",
        p(&model),
        "--set",
        &format!("data={}", p(&data)),
        "--set",
        "epochs=2",
        "--set",
        "batch_shapes=2",
        "--set",
        "latent_dim=4",
        "--set",
        "encoder_hidden=8",
        "--set",
        "decoder_hidden=8",
        "--set",
        "decoder_blocks=1",
    ]);
    assert!(model.join("checkpoint/params.bin").exists());
    assert_eq!(std::fs::read_to_string(model.join("loss.csv")).unwrap().lines().count(), 3);
    let samples = dir.path().join("s");
    ok(&[
        "sample",
        "--out",
        p(&samples),
        "--set",
        &format!("checkpoint={}", p(&model.join("checkpoint"))),
        "--set",
        "latent=gaussian",
        "--set",
        &format!("data={}", p(&data)),
        "--set",
        "n=20",
    ]);
    let manifest = std::fs::read_to_string(samples.join("manifest.txt")).unwrap();
    assert!(manifest.contains("latent_sampler=gaussian-latent"), "{manifest}");
    assert!(manifest.contains("field=learned"));

    // unnormalized training data is a data error
    let raw = dir.path().join("raw");
    ok(&["gen-data", "--out", p(&raw), "--set", "n_points=20", "--set", "radius=2"]);
    let out = run(&["train", "--out", p(&dir.path().join("m2")), "--set", &format!("data={}", p(&raw))]);
    assert_eq!(out.status.code(), Some(3));
}
