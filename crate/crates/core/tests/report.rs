use std::path::PathBuf;

use hypercloud::hypercube::ClassMask;
use hypercloud::metrics::*;
use hypercloud::models::{build_liunet_1d, build_unet2d_simple, size_report, ModelKind};
use hypercloud::pipeline::BenchResult;
use hypercloud::Error;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn masks(seed: u64, n: usize) -> Vec<ClassMask> {
    (0..n)
        .map(|i| {
            let s = seed * 31 + i as u64;
            ClassMask::from_fn(8, 8, |r, c| (((r * 3 + c * 5) as u64 + s) % 7 % 3) as u8).unwrap()
        })
        .collect()
}

/// Fixed report covering both models and three channel counts.
fn sample_report() -> EvalReport {
    let mut report = EvalReport::new(DEFAULT_CLOUDY_THRESHOLD);
    for (i, model) in [ModelKind::LiuNet1d, ModelKind::UNet2dSimple]
        .into_iter()
        .enumerate()
    {
        for (j, channels) in [1usize, 6, 98].into_iter().enumerate() {
            let seed = (i * 3 + j) as u64;
            let truth = masks(seed, 5);
            let pred = masks(seed + 1, 5);
            let mut entry = EvalEntry::new(model, channels);
            entry.val = Some(evaluate_split(&pred, &truth, DEFAULT_CLOUDY_THRESHOLD).unwrap());
            if channels != 6 || model == ModelKind::UNet2dSimple {
                entry.test =
                    Some(evaluate_split(&truth, &truth, DEFAULT_CLOUDY_THRESHOLD).unwrap());
            }
            let graph = match model {
                ModelKind::LiuNet1d => build_liunet_1d(91.max(channels)).unwrap(),
                ModelKind::UNet2dSimple => build_unet2d_simple(channels).unwrap(),
            };
            let t = 0.001 * (1 + i * 100 + j) as f64;
            entry.bench = Some(BenchResult {
                model,
                channels,
                tiles: 4,
                repetitions: 2,
                mean_seconds: t,
                min_seconds: t * 0.9,
                max_seconds: t * 1.2,
                size: size_report(&graph),
            });
            report.insert(entry);
        }
    }
    report
}

#[test]
fn report_matches_golden_file() {
    let text = render_report(&sample_report()).unwrap();
    let path = golden("report.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, expected);
}

#[test]
fn json_round_trip_is_identity() {
    let r = sample_report();
    let text = r.to_json().unwrap();
    let back = EvalReport::from_json(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn single_entry_renders_one_row_group() {
    let mut r = EvalReport::new(DEFAULT_CLOUDY_THRESHOLD);
    let m = masks(0, 2);
    let mut e = EvalEntry::new(ModelKind::LiuNet1d, 6);
    e.test = Some(evaluate_split(&m, &m, DEFAULT_CLOUDY_THRESHOLD).unwrap());
    r.insert(e);
    let text = render_report(&r).unwrap();
    assert_eq!(text.matches("1D LiuNet").count(), 1);
    assert!(!text.contains("2D UNet-Simple"));
    assert!(text.contains("- / 100.00"));
    assert!(!text.contains("Time [s]"));
}

#[test]
fn empty_report_and_schema_errors() {
    assert!(matches!(
        render_report(&EvalReport::new(0.7)),
        Err(Error::EmptyReport)
    ));
    let mut r = sample_report();
    r.schema = "evalreport/0".into();
    assert!(EvalReport::from_json(&r.to_json().unwrap()).is_err());
}

#[test]
fn merge_fills_missing_fields() {
    let m = masks(2, 3);
    let s = evaluate_split(&m, &m, 0.7).unwrap();
    let mut a = EvalReport::new(0.7);
    let mut e = EvalEntry::new(ModelKind::UNet2dSimple, 6);
    e.val = Some(s.clone());
    a.insert(e);
    let mut b = EvalReport::new(0.7);
    let mut e = EvalEntry::new(ModelKind::UNet2dSimple, 6);
    e.test = Some(s.clone());
    b.insert(e);
    b.insert(EvalEntry::new(ModelKind::LiuNet1d, 1));
    let merged = EvalReport::merge([a, b]).unwrap();
    assert_eq!(merged.entries.len(), 2);
    assert_eq!(merged.entries[0].model, ModelKind::LiuNet1d);
    assert_eq!(merged.entries[1].val.as_ref(), Some(&s));
    assert_eq!(merged.entries[1].test.as_ref(), Some(&s));
    assert!(EvalReport::merge(Vec::new()).is_err());
    assert!(EvalReport::merge([EvalReport::new(0.7), EvalReport::new(0.5)]).is_err());
}
