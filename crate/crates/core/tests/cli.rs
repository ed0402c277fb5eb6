use headmotion::conditioning::synth_speech;
use headmotion::motion::read_motion_jsonl;
use headmotion::service::write_wav;
use headmotion::streaming::{BenchSummary, Stage};
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_headmotion"))
        .args(args)
        .current_dir(dir)
        .env("HEADMOTION_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn probe_dim_45_moves_only_keypoint_15_x() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["probe-dim", "--dim", "45", "--eps", "0.05", "--out", "probe.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("keypoint 15"));
    assert!(text.contains("isolated: true"));
    let report: headmotion::motion::ProbeReport =
        serde_json::from_slice(&std::fs::read(dir.path().join("probe.json")).unwrap()).unwrap();
    assert_eq!(report.moved.len(), 2);
    assert!(report.moved.iter().all(|d| d.keypoint == 15 && d.axis == 0 && (d.delta - d.offset).abs() < 1e-12));
    assert!(!cli(dir.path(), &["probe-dim", "--dim", "63"]).status.success());
}

#[test]
fn errors_are_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["generate", "--ckpt", "missing", "--audio", "a.wav", "--out", "m.jsonl"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint missing does not exist"), "{}", stderr(&o));
    let o = cli(dir.path(), &["serve", "--ckpt", "missing"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint"));

    std::fs::write(dir.path().join("bad.toml"), "epochs = 1\nlearning_rat = 0.1\n[extra]\nk = 1\n").unwrap();
    let o = cli(dir.path(), &["train", "--config", "bad.toml", "--out", "ck"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown keys: extra, learning_rat"), "{}", stderr(&o));
}

#[test]
fn train_then_generate_with_10_and_50_steps() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.toml"), "epochs = 3\nn_clips = 24\nseed = 5\n").unwrap();
    let o = cli(dir.path(), &["train", "--config", "t.toml", "--out", "ck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "params.bin", "metrics.jsonl"] {
        assert!(dir.path().join("ck").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("ck/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);

    write_wav(&dir.path().join("a.wav"), &synth_speech(4, 16_000 * 4)).unwrap();
    std::fs::write(dir.path().join("id.json"), serde_json::to_string(&headmotion::motion::default_template()).unwrap())
        .unwrap();
    let mut outs = Vec::new();
    for steps in ["10", "50"] {
        let out = format!("m{steps}.jsonl");
        let o = cli(
            dir.path(),
            &["generate", "--ckpt", "ck", "--audio", "a.wav", "--identity", "id.json", "--steps", steps, "--seed", "3", "--out", &out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let (h, frames) = read_motion_jsonl(BufReader::new(std::fs::File::open(dir.path().join(&out)).unwrap())).unwrap();
        assert_eq!(h.dims, 265);
        assert_eq!(frames.len(), 100);
        outs.push(frames);
    }
    let per_frame: f64 =
        outs[0].iter().zip(&outs[1]).map(|(a, b)| rmse(&a.values[..63], &b.values[..63])).sum::<f64>() / 100.0;
    assert!(per_frame.is_finite() && per_frame > 0.0);
}

#[test]
fn bench_table3_reproduces_module_rtfs() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &["bench", "--simulate", "table3", "--seconds", "4", "--generator", "hold", "--log", "t.jsonl", "--summary", "s.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("end-to-end rtf"));
    let s: BenchSummary = serde_json::from_slice(&std::fs::read(dir.path().join("s.json")).unwrap()).unwrap();
    for (stage, want) in [(Stage::Extract, 0.115), (Stage::Generate, 0.31), (Stage::Render, 0.375)] {
        let got = s.rtf(stage);
        assert!((got / want - 1.0).abs() < 0.15, "{stage:?} {got}");
    }
    assert!(s.ffd_ms < 400.0 && s.end_to_end_rtf < 1.0);
    let log = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"frame_emitted\"")).count(), 100);
}
