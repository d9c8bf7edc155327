use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hypercloud::hypercube::{load_tiles, save_cube, save_mask, HyperCube, MASK_EXT};
use hypercloud::metrics::EvalReport;
use hypercloud::models::{build_liunet_1d, ModelKind};
use hypercloud::pipeline::{spectral_input_length, TrainedModel, WEIGHTS_FILE};
use hypercloud::synth::{self, SynthConfig};
use tempfile::TempDir;

fn hypercloud(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypercloud"))
        .args(args)
        .env_remove("HYPERCLOUD_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hypercloud(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a synthetic scene and its mask; returns their paths.
fn write_scene(
    dir: &Path,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
) -> (String, String) {
    let (cube, mask) = synth::scene(&SynthConfig::new(height, width, channels), seed).unwrap();
    let cube_path = dir.join("scene.hsc");
    let mask_path = dir.join("scene.msk");
    save_cube(&cube, &cube_path).unwrap();
    save_mask(&mask, &mask_path).unwrap();
    (p(&cube_path).into(), p(&mask_path).into())
}

#[test]
fn tile_254_by_1000_gives_three_tiles() {
    let tmp = TempDir::new().unwrap();
    let cube = HyperCube::from_fn(254, 1000, 2, |r, c, b| (r + c + b) as f32).unwrap();
    let scene = tmp.path().join("wide.hsc");
    save_cube(&cube, &scene).unwrap();
    let out = tmp.path().join("tiles");
    ok(&["tile", p(&scene), "--out", p(&out)]);
    let tiles = load_tiles(&out).unwrap();
    assert_eq!(tiles.len(), 3);
    let origins: Vec<_> = tiles.iter().map(|t| t.origin).collect();
    assert_eq!(origins, vec![(0, 0), (0, 254), (0, 508)]);
    assert!(tiles
        .iter()
        .all(|t| t.scene_id == "wide" && t.mask.is_none()));
}

#[test]
fn zero_learning_rate_saves_initial_weights() {
    let tmp = TempDir::new().unwrap();
    let (cube, mask) = write_scene(tmp.path(), 24, 60, 4, 5);
    let tiles = tmp.path().join("tiles");
    ok(&[
        "tile",
        &cube,
        "--mask",
        &mask,
        "--tile-size",
        "12",
        "--out",
        p(&tiles),
    ]);
    let bands = tmp.path().join("bands.json");
    ok(&[
        "select",
        p(&tiles),
        "--mode",
        "every2nd",
        "--out",
        p(&bands),
    ]);
    let model = tmp.path().join("model");
    ok(&[
        "train",
        p(&tiles),
        "--bands",
        p(&bands),
        "--model",
        "liunet1d",
        "--out",
        p(&model),
        "--epochs",
        "2",
        "--lr",
        "0",
        "--seed",
        "9",
        "--threads",
        "1",
    ]);
    let trained = TrainedModel::load(&model).unwrap();
    assert_eq!(trained.bands.channel_indices, vec![0, 2]);
    let mut init = build_liunet_1d(spectral_input_length(2)).unwrap();
    init.initialize(9);
    assert_eq!(trained.graph, init);
}

#[test]
fn eval_of_identical_masks_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("masks");
    fs::create_dir(&dir).unwrap();
    for i in 0..4 {
        let (_, mask) = synth::scene(&SynthConfig::new(16, 16, 3), i).unwrap();
        save_mask(&mask, dir.join(format!("t{i}.{MASK_EXT}"))).unwrap();
    }
    let report = tmp.path().join("report.json");
    let text = ok(&[
        "eval",
        "--pred",
        p(&dir),
        "--truth",
        p(&dir),
        "--kind",
        "unet2dsimple",
        "--channels",
        "5",
        "--out",
        p(&report),
    ]);
    assert!(text.contains("5 ch"), "{text}");
    let report = EvalReport::load(&report).unwrap();
    let entry = &report.entries[0];
    assert_eq!(entry.model, ModelKind::UNet2dSimple);
    assert!(entry.val.is_none());
    let test = entry.test.as_ref().unwrap();
    assert_eq!(test.tiles, 4);
    assert_eq!(test.segmentation.pixel_accuracy, 1.0);
    assert_eq!(test.segmentation.dice_macro, Some(1.0));
    assert_eq!(test.classification.accuracy, 1.0);
}

#[test]
fn every_value_flag_documents_its_default() {
    // flags without a default must be required or documented as optional inputs
    let optional_without_default = [
        ("tile", "--mask"),
        ("tile", "--scene-id"),
        ("select", "--wavelengths"),
        ("eval", "--model"),
        ("eval", "--kind"),
        ("eval", "--channels"),
        ("eval", "--split"),
        ("report", "--out"),
        ("report", "--text"),
    ];
    for cmd in [
        "tile",
        "select",
        "train",
        "infer",
        "eval",
        "bench",
        "composite",
        "report",
        "stats",
    ] {
        let help = ok(&[cmd, "--help"]);
        let usage_line = help
            .lines()
            .find(|l| l.starts_with("Usage:"))
            .unwrap()
            .to_string();
        // long help puts each flag's description and default in an indented block
        let mut blocks: Vec<String> = Vec::new();
        for line in help.lines() {
            let t = line.trim_start();
            if t.starts_with("--") || t.starts_with("-h,") {
                blocks.push(t.to_string());
            } else if let Some(b) = blocks.last_mut() {
                b.push('\n');
                b.push_str(t);
            }
        }
        for block in &blocks {
            let mut words = block.split_whitespace();
            let flag = words.next().unwrap();
            let takes_value = words.next().is_some_and(|w| w.starts_with('<'));
            if !takes_value {
                continue;
            }
            let required = usage_line.contains(&format!("{flag} <"));
            let documented = block.contains("[default:");
            assert!(
                required || documented || optional_without_default.contains(&(cmd, flag)),
                "{cmd} {flag} has no documented default"
            );
        }
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = TempDir::new().unwrap();
    let usage = hypercloud(&["tile"]);
    assert_eq!(usage.status.code(), Some(2));

    let missing = hypercloud(&[
        "tile",
        p(&tmp.path().join("nope.hsc")),
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(
        stderr
            .lines()
            .any(|l| l.starts_with("error: kind=IoFailure code=3 ")),
        "{stderr}"
    );

    let garbage = tmp.path().join("bad.hsc");
    fs::write(&garbage, b"not a cube").unwrap();
    let bad = hypercloud(&["tile", p(&garbage), "--out", p(tmp.path())]);
    assert_eq!(bad.status.code(), Some(3));

    let eval = hypercloud(&[
        "eval",
        "--pred",
        p(tmp.path()),
        "--truth",
        p(tmp.path()),
        "--out",
        "x.json",
    ]);
    assert_eq!(eval.status.code(), Some(2));
}

#[test]
fn composite_writes_ppm() {
    let tmp = TempDir::new().unwrap();
    let (cube, _) = write_scene(tmp.path(), 8, 10, 6, 1);
    let out = tmp.path().join("rgb.ppm");
    ok(&[
        "composite",
        &cube,
        "--rgb",
        "4,2,0",
        "--aux",
        "1,5",
        "--out",
        p(&out),
    ]);
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P6\n10 8\n255\n"));
    assert_eq!(bytes.len(), b"P6\n10 8\n255\n".len() + 8 * 10 * 3);
    let bad = hypercloud(&[
        "composite",
        &cube,
        "--rgb",
        "4,2,9",
        "--aux",
        "1,5",
        "--out",
        p(&out),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

/// Runs the whole workflow in `dir` and returns the bytes of its outputs
/// that must not depend on timing.
fn run_workflow(dir: &Path, seed: &str) -> (Vec<u8>, Vec<u8>, String) {
    let (cube, mask) = write_scene(dir, 40, 100, 10, 77);
    let tiles = dir.join("tiles");
    ok(&[
        "tile",
        &cube,
        "--mask",
        &mask,
        "--tile-size",
        "20",
        "--out",
        p(&tiles),
    ]);
    let stats = ok(&["stats", p(&tiles)]);
    assert!(stats.contains("\"tile_count\": 10"), "{stats}");
    let bands = dir.join("bands.json");
    ok(&[
        "select",
        p(&tiles),
        "--mode",
        "perclass",
        "--out",
        p(&bands),
    ]);
    let model = dir.join("model");
    ok(&[
        "train",
        p(&tiles),
        "--bands",
        p(&bands),
        "--model",
        "liunet1d",
        "--out",
        p(&model),
        "--epochs",
        "3",
        "--seed",
        seed,
        "--threads",
        "1",
    ]);
    let preds = dir.join("pred");
    ok(&[
        "infer",
        p(&tiles),
        "--model",
        p(&model),
        "--out",
        p(&preds),
        "--set",
        "all",
    ]);
    let eval = dir.join("eval.json");
    ok(&[
        "eval",
        "--pred",
        p(&preds),
        "--truth",
        p(&tiles),
        "--model",
        p(&model),
        "--split",
        p(&model.join("split.json")),
        "--out",
        p(&eval),
    ]);
    let bench = dir.join("bench.json");
    ok(&[
        "bench",
        p(&tiles),
        "--model",
        p(&model),
        "--max-tiles",
        "2",
        "--out",
        p(&bench),
    ]);
    let table = ok(&["report", p(&eval), p(&bench)]);
    assert!(table.contains("Params"), "{table}");

    let report = EvalReport::load(&eval).unwrap();
    let test = report.entries[0].test.as_ref().unwrap();
    assert_eq!(test.tiles, 1);
    assert_eq!(report.entries[0].val.as_ref().unwrap().tiles, 2);
    assert!(test.segmentation.pixel_accuracy > 0.9, "{test:?}");
    (
        fs::read(model.join(WEIGHTS_FILE)).unwrap(),
        fs::read(&eval).unwrap(),
        table,
    )
}

#[test]
fn end_to_end_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (wa, ea, _) = run_workflow(a.path(), "4");
    let (wb, eb, _) = run_workflow(b.path(), "4");
    assert_eq!(wa, wb);
    assert_eq!(ea, eb);
}

#[test]
fn seed_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let (cube, mask) = write_scene(tmp.path(), 24, 60, 4, 5);
    let tiles = tmp.path().join("tiles");
    ok(&[
        "tile",
        &cube,
        "--mask",
        &mask,
        "--tile-size",
        "12",
        "--out",
        p(&tiles),
    ]);
    let bands = tmp.path().join("bands.json");
    ok(&["select", p(&tiles), "--mode", "single", "--out", p(&bands)]);
    let model = tmp.path().join("model");
    let out = Command::new(env!("CARGO_BIN_EXE_hypercloud"))
        .args([
            "train",
            p(&tiles),
            "--bands",
            p(&bands),
            "--model",
            "liunet1d",
            "--out",
            p(&model),
        ])
        .args(["--epochs", "1", "--lr", "0"])
        .env("HYPERCLOUD_SEED", "21")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trained = TrainedModel::load(&model).unwrap();
    let mut init = build_liunet_1d(spectral_input_length(1)).unwrap();
    init.initialize(21);
    assert_eq!(trained.graph, init);
    let split = fs::read_to_string(model.join("split.json")).unwrap();
    assert!(split.contains("\"seed\": 21"), "{split}");
}
