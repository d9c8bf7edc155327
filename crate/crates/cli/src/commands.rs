use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use hypercloud::bandselect::{select_from_tiles, BandSelection};
use hypercloud::hypercube::{
    class_distribution, load_cube, load_mask, load_tiles, load_wavelengths, rgb_composite,
    save_mask, save_ppm, save_tiles, tile_scene, Tile, MASK_EXT,
};
use hypercloud::metrics::{evaluate_split, render_report, EvalEntry, EvalReport};
use hypercloud::models::ModelKind;
use hypercloud::pipeline::{
    benchmark, infer_tile, split_by_scene, split_dataset, train, with_threads, SplitPlan,
    SplitRole, TrainConfig, TrainedModel,
};
use hypercloud::Error;

use crate::{
    BenchArgs, CliError, Command, CompositeArgs, EvalArgs, InferArgs, ReportArgs, SelectArgs,
    SetArg, StatsArgs, TileArgs, TrainArgs,
};

/// File written next to a trained bundle recording its tile split.
pub const SPLIT_FILE: &str = "split.json";

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Tile(a) => cmd_tile(a),
        Command::Select(a) => {
            let threads = a.threads.threads;
            pooled(threads, move || cmd_select(a))
        }
        Command::Train(a) => {
            let threads = a.threads.threads;
            pooled(threads, move || cmd_train(a))
        }
        Command::Infer(a) => {
            let threads = a.threads.threads;
            pooled(threads, move || cmd_infer(a))
        }
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => {
            let threads = a.threads.threads;
            pooled(threads, move || cmd_bench(a))
        }
        Command::Composite(a) => cmd_composite(a),
        Command::Report(a) => cmd_report(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn pooled(threads: usize, f: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    let threads = (threads > 0).then_some(threads);
    with_threads(threads, f)?
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn cmd_tile(a: TileArgs) -> Result<(), CliError> {
    let scene = load_cube(&a.scene)?;
    let mask = a.mask.as_ref().map(load_mask).transpose()?;
    let scene_id = match a.scene_id {
        Some(id) => id,
        None => a
            .scene
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| usage("cannot derive a scene id from the file name; pass --scene-id"))?
            .to_string(),
    };
    let tiles = tile_scene(&scene, mask.as_ref(), a.tile_size, &scene_id)?;
    fs::create_dir_all(&a.out)?;
    save_tiles(&tiles, &a.out)?;
    println!(
        "wrote {} tiles of {}x{} to {}",
        tiles.len(),
        a.tile_size,
        a.tile_size,
        a.out.display()
    );
    Ok(())
}

fn cmd_select(a: SelectArgs) -> Result<(), CliError> {
    let tiles = load_tiles(&a.tiles)?;
    let mut selection = select_from_tiles(&tiles, a.mode.into(), a.threshold, a.pixel_stride)?;
    let table = match &a.wavelengths {
        Some(path) => Some(load_wavelengths(path)?),
        None => tiles[0].cube.wavelengths_nm().map(<[f64]>::to_vec),
    };
    if let Some(table) = table {
        selection.attach_wavelengths(&table)?;
    }
    selection.save(&a.out)?;
    println!(
        "{}: {} channels {:?}",
        selection.method,
        selection.len(),
        selection.channel_indices
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let bands = BandSelection::load(&a.bands)?;
    let tiles = load_tiles(&a.tiles)?;
    let plan = if a.by_scene {
        let pairs: Vec<(String, String)> =
            tiles.iter().map(|t| (t.id(), t.scene_id.clone())).collect();
        split_by_scene(&pairs, a.seed)?
    } else {
        let ids: Vec<String> = tiles.iter().map(Tile::id).collect();
        split_dataset(&ids, a.seed)?
    };
    let (train_tiles, val_tiles) = partition(tiles, &plan);

    let mut config = TrainConfig::new(a.model.into(), bands);
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.learning_rate = a.lr;
    config.seed = a.seed;
    config.pixel_stride = a.pixel_stride;
    config.standardize = !a.raw_inputs;

    let trained = train(&config, &train_tiles, &val_tiles)?;
    fs::create_dir_all(&a.out)?;
    trained.save(&a.out)?;
    plan.save(a.out.join(SPLIT_FILE))?;
    if let Some(log) = &trained.log {
        for e in &log.epochs {
            match e.val_loss {
                Some(v) => println!(
                    "epoch {:>3}  train {:.6}  val {:.6}  {:.1}s",
                    e.epoch, e.train_loss, v, e.seconds
                ),
                None => println!(
                    "epoch {:>3}  train {:.6}  {:.1}s",
                    e.epoch, e.train_loss, e.seconds
                ),
            }
        }
    }
    println!(
        "trained {} on {} channels ({} train / {} val / {} test tiles) -> {}",
        trained.kind,
        trained.bands.len(),
        plan.train.len(),
        plan.val.len(),
        plan.test.len(),
        a.out.display()
    );
    Ok(())
}

/// Train and validation tiles of `plan`; test tiles are dropped.
fn partition(tiles: Vec<Tile>, plan: &SplitPlan) -> (Vec<Tile>, Vec<Tile>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for t in tiles {
        match plan.role_of(&t.id()) {
            Some(SplitRole::Train) => train.push(t),
            Some(SplitRole::Val) => val.push(t),
            _ => {}
        }
    }
    (train, val)
}

fn roles(set: SetArg) -> Option<&'static [SplitRole]> {
    match set {
        SetArg::All => None,
        SetArg::Train => Some(&[SplitRole::Train]),
        SetArg::Val => Some(&[SplitRole::Val]),
        SetArg::Test => Some(&[SplitRole::Test]),
        SetArg::Heldout => Some(&[SplitRole::Val, SplitRole::Test]),
    }
}

/// Tiles of `dir` restricted to `set`, using the split stored with the model.
fn tiles_for_set(dir: &Path, model_dir: &Path, set: SetArg) -> Result<Vec<Tile>, CliError> {
    let tiles = load_tiles(dir)?;
    let Some(wanted) = roles(set) else {
        return Ok(tiles);
    };
    let split_path = model_dir.join(SPLIT_FILE);
    if !split_path.exists() {
        return Err(usage(format!(
            "{} not found; use --set all for a model without a split",
            split_path.display()
        )));
    }
    let plan = SplitPlan::load(&split_path)?;
    let chosen: Vec<Tile> = tiles
        .into_iter()
        .filter(|t| plan.role_of(&t.id()).is_some_and(|r| wanted.contains(&r)))
        .collect();
    if chosen.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no tiles of {} belong to the requested set",
            dir.display()
        ))
        .into());
    }
    Ok(chosen)
}

fn cmd_infer(a: InferArgs) -> Result<(), CliError> {
    let model = TrainedModel::load(&a.model)?;
    let tiles = tiles_for_set(&a.tiles, &a.model, a.set)?;
    fs::create_dir_all(&a.out)?;
    for tile in &tiles {
        let pred = infer_tile(model.kind, &model.graph, &tile.cube, &model.input)?;
        save_mask(&pred.mask, a.out.join(format!("{}.{MASK_EXT}", tile.id())))?;
    }
    println!("segmented {} tiles -> {}", tiles.len(), a.out.display());
    Ok(())
}

/// Stems of the mask files in `dir`, sorted.
fn mask_ids(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(MASK_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn mask_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{MASK_EXT}"))
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let (kind, channels) = match (&a.model, a.kind, a.channels) {
        (Some(dir), None, None) => {
            let m = TrainedModel::load(dir)?;
            (m.kind, m.bands.len())
        }
        (None, Some(kind), Some(channels)) => (ModelKind::from(kind), channels),
        _ => return Err(usage("pass either --model or both --kind and --channels")),
    };
    let ids = mask_ids(&a.pred)?;
    if ids.is_empty() {
        return Err(
            Error::EmptyInput(format!("no predicted masks in {}", a.pred.display())).into(),
        );
    }
    let (val_ids, test_ids): (Vec<String>, Vec<String>) = match &a.split {
        Some(path) => {
            let plan = SplitPlan::load(path)?;
            let val: BTreeSet<&String> = plan.val.iter().collect();
            let test: BTreeSet<&String> = plan.test.iter().collect();
            (
                ids.iter().filter(|i| val.contains(i)).cloned().collect(),
                ids.iter().filter(|i| test.contains(i)).cloned().collect(),
            )
        }
        None => (Vec::new(), ids),
    };
    if val_ids.is_empty() && test_ids.is_empty() {
        return Err(Error::EmptyInput(
            "no predictions fall in the validation or test split".into(),
        )
        .into());
    }
    let score = |set: &[String]| -> Result<_, CliError> {
        if set.is_empty() {
            return Ok(None);
        }
        let mut preds = Vec::with_capacity(set.len());
        let mut truths = Vec::with_capacity(set.len());
        for id in set {
            preds.push(load_mask(mask_path(&a.pred, id))?);
            truths.push(load_mask(mask_path(&a.truth, id))?);
        }
        Ok(Some(evaluate_split(&preds, &truths, a.threshold)?))
    };
    let mut entry = EvalEntry::new(kind, channels);
    entry.val = score(&val_ids)?;
    entry.test = score(&test_ids)?;
    let mut report = EvalReport::new(a.threshold);
    report.insert(entry);
    report.save(&a.out)?;
    print!("{}", render_report(&report)?);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let model = TrainedModel::load(&a.model)?;
    let set = if a.set == SetArg::Heldout && !a.model.join(SPLIT_FILE).exists() {
        SetArg::All
    } else {
        a.set
    };
    let mut tiles = tiles_for_set(&a.tiles, &a.model, set)?;
    if a.max_tiles > 0 {
        tiles.truncate(a.max_tiles);
    }
    let cubes: Vec<_> = tiles.into_iter().map(|t| t.cube).collect();
    let result = benchmark(
        model.kind,
        &model.graph,
        &cubes,
        &model.input,
        a.repetitions,
    )?;
    println!(
        "{} {} ch: {:.4} s/tile over {} tiles x {} (min {:.4}, max {:.4}); {} params, {:.3} MB on disk",
        result.model,
        result.channels,
        result.mean_seconds,
        result.tiles,
        result.repetitions,
        result.min_seconds,
        result.max_seconds,
        result.size.parameter_count,
        result.size.megabytes_on_disk()
    );
    let mut entry = EvalEntry::new(model.kind, model.bands.len());
    entry.bench = Some(result);
    let mut report = EvalReport::new(hypercloud::metrics::DEFAULT_CLOUDY_THRESHOLD);
    report.insert(entry);
    report.save(&a.out)?;
    Ok(())
}

fn cmd_composite(a: CompositeArgs) -> Result<(), CliError> {
    let cube = load_cube(&a.cube)?;
    let rgb: [usize; 3] = a
        .rgb
        .as_slice()
        .try_into()
        .map_err(|_| usage("--rgb takes three bands"))?;
    let aux: [usize; 2] = a
        .aux
        .as_slice()
        .try_into()
        .map_err(|_| usage("--aux takes two bands"))?;
    let image = rgb_composite(&cube, rgb, aux, a.aux_fraction)?;
    save_ppm(&image, &a.out)?;
    println!(
        "wrote {}x{} composite to {}",
        image.width,
        image.height,
        a.out.display()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let reports = a
        .reports
        .iter()
        .map(EvalReport::load)
        .collect::<Result<Vec<_>, _>>()?;
    let merged = EvalReport::merge(reports)?;
    let text = render_report(&merged)?;
    print!("{text}");
    if let Some(out) = &a.out {
        merged.save(out)?;
    }
    if let Some(path) = &a.text {
        fs::write(path, &text)?;
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let tiles = load_tiles(&a.tiles)?;
    let masks: Vec<_> = tiles.into_iter().filter_map(|t| t.mask).collect();
    let stats = class_distribution(&masks)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).map_err(|e| CliError::Core(e.into()))?
    );
    Ok(())
}
