use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TILES: usize = 10;
pub const TRAIN_FRACTION: f64 = 0.7;
pub const VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

/// Train/validation/test partition of tile ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn role_of(&self, id: &str) -> Option<SplitRole> {
        if self.train.iter().any(|t| t == id) {
            Some(SplitRole::Train)
        } else if self.val.iter().any(|t| t == id) {
            Some(SplitRole::Val)
        } else if self.test.iter().any(|t| t == id) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, role: SplitRole) -> &[String] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Val => &self.val,
            SplitRole::Test => &self.test,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn sorted_unique(ids: &[String]) -> Result<Vec<String>> {
    let set: BTreeSet<&String> = ids.iter().collect();
    if set.len() != ids.len() {
        return Err(Error::InvalidArgument("duplicate tile ids".into()));
    }
    Ok(set.into_iter().cloned().collect())
}

/// Cut sizes `(floor(0.7n), floor(0.2n))`, computed in integers.
fn cut_sizes(n: usize) -> (usize, usize) {
    (n * 7 / 10, n * 2 / 10)
}

/// Seeded uniform shuffle of the ids followed by a contiguous 70/20/10 cut.
/// Ids are sorted first so the plan does not depend on input order.
pub fn split_dataset(tile_ids: &[String], seed: u64) -> Result<SplitPlan> {
    if tile_ids.len() < MIN_TILES {
        return Err(Error::TooFewTiles {
            needed: MIN_TILES,
            got: tile_ids.len(),
        });
    }
    let mut ids = sorted_unique(tile_ids)?;
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val) = cut_sizes(ids.len());
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SplitPlan {
        seed,
        train: ids,
        val,
        test,
    })
}

/// Scene-level variant: whole scenes are shuffled and assigned so no scene
/// contributes tiles to more than one set. Each scene goes to the set whose
/// tile count is furthest below its 70/20/10 target, so sizes only
/// approximate the ratio.
pub fn split_by_scene(tiles: &[(String, String)], seed: u64) -> Result<SplitPlan> {
    if tiles.len() < MIN_TILES {
        return Err(Error::TooFewTiles {
            needed: MIN_TILES,
            got: tiles.len(),
        });
    }
    let ids: Vec<String> = tiles.iter().map(|(id, _)| id.clone()).collect();
    sorted_unique(&ids)?;
    let mut by_scene: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (id, scene) in tiles {
        by_scene.entry(scene).or_default().push(id.clone());
    }
    if by_scene.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "scene-level split needs at least 3 scenes, got {}",
            by_scene.len()
        )));
    }
    let mut scenes: Vec<(&str, Vec<String>)> = by_scene.into_iter().collect();
    scenes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = tiles.len() as f64;
    let targets = [
        TRAIN_FRACTION * n,
        VAL_FRACTION * n,
        (1.0 - TRAIN_FRACTION - VAL_FRACTION) * n,
    ];
    let mut sets: [Vec<String>; 3] = Default::default();
    for (i, (_, mut members)) in scenes.into_iter().enumerate() {
        // the first three scenes seed one set each so none stays empty
        let slot = if i < 3 {
            i
        } else {
            (0..3)
                .max_by(|&a, &b| {
                    let da = targets[a] - sets[a].len() as f64;
                    let db = targets[b] - sets[b].len() as f64;
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("three sets")
        };
        members.sort();
        sets[slot].extend(members);
    }
    let [train, val, test] = sets;
    Ok(SplitPlan {
        seed,
        train,
        val,
        test,
    })
}
