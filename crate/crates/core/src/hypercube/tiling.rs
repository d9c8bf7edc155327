use std::fs;
use std::path::Path;

use super::io::{load_cube, load_mask, save_cube, save_mask};
use super::{ClassMask, HyperCube};
use crate::error::{Error, Result};

pub const CUBE_EXT: &str = "hsc";
pub const MASK_EXT: &str = "msk";

/// Square crop of a scene, the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub cube: HyperCube,
    pub mask: Option<ClassMask>,
    /// (row, col) of the top-left pixel in the parent scene.
    pub origin: (usize, usize),
    pub scene_id: String,
}

impl Tile {
    /// Stand-alone tile not cut from a larger scene.
    pub fn standalone(id: impl Into<String>, cube: HyperCube, mask: Option<ClassMask>) -> Self {
        Self {
            cube,
            mask,
            origin: (0, 0),
            scene_id: id.into(),
        }
    }

    /// Identifier encoding the scene and origin, used for file names.
    pub fn id(&self) -> String {
        format!(
            "{}_r{:05}_c{:05}",
            self.scene_id, self.origin.0, self.origin.1
        )
    }

    /// Inverse of [`Tile::id`]: `(scene, row, col)`.
    pub fn parse_id(id: &str) -> Option<(&str, usize, usize)> {
        let (rest, col) = id.rsplit_once("_c")?;
        let (scene, row) = rest.rsplit_once("_r")?;
        if scene.is_empty() {
            return None;
        }
        Some((scene, row.parse().ok()?, col.parse().ok()?))
    }
}

/// Writes `<id>.hsc` (and `<id>.msk` when a mask is present) per tile,
/// creating `dir` if needed.
pub fn save_tiles(tiles: &[Tile], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for t in tiles {
        let id = t.id();
        save_cube(&t.cube, dir.join(format!("{id}.{CUBE_EXT}")))?;
        if let Some(m) = &t.mask {
            save_mask(m, dir.join(format!("{id}.{MASK_EXT}")))?;
        }
    }
    Ok(())
}

/// Loads every `.hsc` in `dir` (sorted by file name) with its sibling
/// `.msk` if one exists. File stems that do not follow the tile id pattern
/// become stand-alone tiles named after the stem.
pub fn load_tiles(dir: impl AsRef<Path>) -> Result<Vec<Tile>> {
    let dir = dir.as_ref();
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(CUBE_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    let mut tiles = Vec::with_capacity(stems.len());
    for stem in stems {
        let cube = load_cube(dir.join(format!("{stem}.{CUBE_EXT}")))?;
        let mask_path = dir.join(format!("{stem}.{MASK_EXT}"));
        let mask = if mask_path.exists() {
            Some(load_mask(mask_path)?)
        } else {
            None
        };
        if let Some(m) = &mask {
            if m.height() != cube.height() || m.width() != cube.width() {
                return Err(Error::DimMismatch(format!(
                    "mask of {stem} is {}x{}, cube is {}x{}",
                    m.height(),
                    m.width(),
                    cube.height(),
                    cube.width()
                )));
            }
        }
        tiles.push(match Tile::parse_id(&stem) {
            Some((scene, row, col)) => Tile {
                cube,
                mask,
                origin: (row, col),
                scene_id: scene.to_string(),
            },
            None => Tile::standalone(stem, cube, mask),
        });
    }
    Ok(tiles)
}

/// Cuts a scene into a non-overlapping grid of `tile_size` squares starting
/// at (0,0). Leftover rows and columns that do not fill a tile are dropped.
pub fn tile_scene(
    scene: &HyperCube,
    mask: Option<&ClassMask>,
    tile_size: usize,
    scene_id: &str,
) -> Result<Vec<Tile>> {
    if tile_size == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    if scene.width() < tile_size {
        return Err(Error::TileTooLarge {
            tile_size,
            width: scene.width(),
        });
    }
    if let Some(m) = mask {
        if m.height() != scene.height() || m.width() != scene.width() {
            return Err(Error::DimMismatch(format!(
                "mask {}x{} does not match scene {}x{}",
                m.height(),
                m.width(),
                scene.height(),
                scene.width()
            )));
        }
    }

    let rows = scene.height() / tile_size;
    let cols = scene.width() / tile_size;
    let mut tiles = Vec::with_capacity(rows * cols);
    for tr in 0..rows {
        for tc in 0..cols {
            let (r, c) = (tr * tile_size, tc * tile_size);
            tiles.push(Tile {
                cube: scene.crop(r, c, tile_size, tile_size)?,
                mask: mask
                    .map(|m| m.crop(r, c, tile_size, tile_size))
                    .transpose()?,
                origin: (r, c),
                scene_id: scene_id.to_string(),
            });
        }
    }
    Ok(tiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scene(h: usize, w: usize) -> HyperCube {
        HyperCube::from_fn(h, w, 1, |r, c, _| (r * w + c) as f32).unwrap()
    }

    #[test]
    fn long_strip_gives_three_tiles() {
        let tiles = tile_scene(&scene(1000, 254), None, 254, "s").unwrap();
        let origins: Vec<_> = tiles.iter().map(|t| t.origin).collect();
        assert_eq!(origins, vec![(0, 0), (254, 0), (508, 0)]);
        assert!(tiles.iter().all(|t| t.mask.is_none()));
    }

    #[test]
    fn ids_parse_back() {
        let tiles = tile_scene(&scene(508, 254), None, 254, "EO1_scene_x").unwrap();
        let id = tiles[1].id();
        assert_eq!(id, "EO1_scene_x_r00254_c00000");
        assert_eq!(Tile::parse_id(&id), Some(("EO1_scene_x", 254, 0)));
        assert_eq!(Tile::parse_id("plain"), None);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = scene(508, 254);
        let mask = ClassMask::from_fn(508, 254, |r, _| (r % 3) as u8).unwrap();
        let mut tiles = tile_scene(&s, Some(&mask), 254, "a").unwrap();
        tiles[1].mask = None;
        save_tiles(&tiles, dir.path()).unwrap();
        assert_eq!(load_tiles(dir.path()).unwrap(), tiles);
    }

    #[test]
    fn exact_fit_is_single_tile() {
        let tiles = tile_scene(&scene(254, 254), None, 254, "s").unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].origin, (0, 0));
    }

    #[test]
    fn short_scene_gives_no_tiles() {
        let tiles = tile_scene(&scene(253, 254), None, 254, "s").unwrap();
        assert!(tiles.is_empty());
    }

    #[test]
    fn narrow_scene_is_rejected() {
        assert!(matches!(
            tile_scene(&scene(300, 253), None, 254, "s"),
            Err(Error::TileTooLarge { .. })
        ));
    }

    #[test]
    fn mask_crop_follows_tile() {
        let cube = scene(8, 4);
        let mask = ClassMask::from_fn(8, 4, |r, c| ((r / 4 + c / 2) % 3) as u8).unwrap();
        let tiles = tile_scene(&cube, Some(&mask), 2, "s").unwrap();
        assert_eq!(tiles.len(), 8);
        for t in &tiles {
            let m = t.mask.as_ref().unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert_eq!(m.get(r, c), mask.get(t.origin.0 + r, t.origin.1 + c));
                    assert_eq!(
                        t.cube.value(r, c, 0),
                        cube.value(t.origin.0 + r, t.origin.1 + c, 0)
                    );
                }
            }
        }
        assert_eq!(tiles[3].id(), "s_r00002_c00002");
    }

    proptest! {
        #[test]
        fn tile_count_and_disjoint_grid(h in 1usize..40, w in 1usize..40, ts in 1usize..12) {
            prop_assume!(w >= ts);
            let tiles = tile_scene(&scene(h, w), None, ts, "p").unwrap();
            prop_assert_eq!(tiles.len(), (h / ts) * (w / ts));
            let mut covered = vec![false; h * w];
            for t in &tiles {
                prop_assert!(t.origin.0 + ts <= h && t.origin.1 + ts <= w);
                for r in t.origin.0..t.origin.0 + ts {
                    for c in t.origin.1..t.origin.1 + ts {
                        prop_assert!(!covered[r * w + c]);
                        covered[r * w + c] = true;
                    }
                }
            }
        }
    }
}
