use std::path::Path;
use std::process::{Command, Output};

use vowelprobe::convenc::{extract_activations, trace_to_container, EncoderArch, WeightStore};
use vowelprobe::signal::decode_audio;

fn vp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vowelprobe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn staged_pipeline_on_synthetic_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |n: &str| tmp.path().join(n);
    ok(&vp(&[
        "synth",
        "-o",
        s(&d("corpus")),
        "--speakers",
        "2",
        "--seed",
        "3",
    ]));
    let prep = ok(&vp(&[
        "prepare",
        "--corpus",
        s(&d("corpus")),
        "-o",
        s(&d("prep")),
    ]));
    assert!(prep.contains("front"));
    ok(&vp(&[
        "features",
        "--segments",
        s(&d("prep")),
        "--random-weights",
        "4",
        "-o",
        s(&d("feat")),
    ]));
    assert!(d("feat/features.json").exists());
    let cfg = d("grid.conf");
    std::fs::write(
        &cfg,
        "# small grid\nc_values = 1, 10\nkernels = rbf\nsets = mfcc,layer1\nfolds = 3\n",
    )
    .unwrap();
    let train = ok(&vp(&[
        "--config",
        s(&cfg),
        "train",
        "--features",
        s(&d("feat")),
        "-o",
        s(&d("train")),
    ]));
    assert!(train.contains("MFCC") && train.contains("Layer 1"));
    let acc = std::fs::read_to_string(d("train/accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 3);
    let mi = ok(&vp(&[
        "mi",
        "--features",
        s(&d("feat")),
        "-o",
        s(&d("mi")),
        "-s",
        "mi_pairs=20",
    ]));
    assert_eq!(mi.lines().count(), 7);
    ok(&vp(&[
        "report",
        "--summary",
        s(&d("train/summary.json")),
        "-o",
        s(&d("rep")),
    ]));
    assert!(d("rep/accuracy.svg").exists());
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_key = vp(&["-s", "nonsense=1", "synth", "-o", s(&tmp.path().join("c"))]);
    assert_eq!(bad_key.status.code(), Some(2));
    let missing = vp(&[
        "train",
        "--features",
        s(&tmp.path().join("absent")),
        "-o",
        s(tmp.path()),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let usage = vp(&["train"]);
    assert_eq!(usage.status.code(), Some(2));
    let no_weights = vp(&[
        "run",
        "--corpus",
        s(tmp.path()),
        "-o",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(no_weights.status.code(), Some(2));
}

#[test]
fn verify_trace_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w.w2cv");
    ok(&vp(&["random-weights", "-o", s(&w), "--seed", "9"]));
    ok(&vp(&[
        "synth",
        "-o",
        s(&tmp.path().join("c")),
        "--speakers",
        "1",
        "--utterances",
        "1",
        "--vowels",
        "2",
    ]));
    let wav = walk(&tmp.path().join("c"), "WAV");
    let store =
        WeightStore::<f32>::load(&std::fs::read(&w).unwrap(), &EncoderArch::default()).unwrap();
    let audio = decode_audio::<f32>(&std::fs::read(&wav).unwrap()).unwrap();
    let acts = extract_activations(&store, &audio.samples).unwrap();
    let trace = tmp.path().join("t.w2cv");
    std::fs::write(&trace, trace_to_container(&acts)).unwrap();
    ok(&vp(&[
        "verify-trace",
        "--weights",
        s(&w),
        "--wav",
        s(&wav),
        "--trace",
        s(&trace),
    ]));

    let other = tmp.path().join("w2.w2cv");
    ok(&vp(&["random-weights", "-o", s(&other), "--seed", "10"]));
    let out = vp(&[
        "verify-trace",
        "--weights",
        s(&other),
        "--wav",
        s(&wav),
        "--trace",
        s(&trace),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn walk(dir: &Path, ext: &str) -> std::path::PathBuf {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            return walk(&p, ext);
        }
        if p.extension().is_some_and(|x| x == ext) {
            return p;
        }
    }
    panic!("no .{ext} under {}", dir.display());
}
