//! Dataset manifests and the on-disk patch store.
//!
//! A store directory holds `manifest.toml` (the resolved manifest),
//! `index.csv` (one row per patch tuple) and `patches/`, with one `MCSR1`
//! file per tuple containing the tensors `lr`, `hr`, `ref`, `lr2` (factor 4
//! only), `factor` and `kept_side`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use mcsr_autodiff::{io as tensor_io, ParamSet, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kspace::{degrade, normalize01, patchify, DegradeSpec};
use crate::phantom::{load_pair, make_phantom_pair_sized, ContrastPair, PHANTOM_SIDE};

pub const PATCH_SIDE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One image pair: either a synthetic phantom (`seed`) or two registered
/// files (`primary`, `reference`, relative to the manifest's directory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSource {
    pub id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

fn default_patch() -> usize {
    PATCH_SIDE
}

fn default_side() -> usize {
    PHANTOM_SIDE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub factors: Vec<u32>,
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    /// Canvas side for synthetic pairs.
    #[serde(default = "default_side")]
    pub phantom_side: usize,
    pub pairs: Vec<PairSource>,
}

impl DatasetManifest {
    /// Synthetic manifest with consecutive seeds: `n_train` training pairs
    /// starting at `first_seed`, then `n_test` test pairs.
    pub fn synthetic(n_train: usize, n_test: usize, first_seed: u64, factors: &[u32]) -> Self {
        let pairs = (0..n_train + n_test)
            .map(|k| {
                let seed = first_seed + k as u64;
                PairSource {
                    id: format!("ph{seed:05}"),
                    split: if k < n_train { Split::Train } else { Split::Test },
                    seed: Some(seed),
                    primary: None,
                    reference: None,
                }
            })
            .collect();
        DatasetManifest {
            factors: factors.to_vec(),
            patch_size: PATCH_SIDE,
            phantom_side: PHANTOM_SIDE,
            pairs,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is serializable")
    }

    /// Checks factors, source completeness, unique ids and train/test
    /// disjointness by seed and by file.
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Dataset("no factors requested".into()));
        }
        for &f in &self.factors {
            DegradeSpec::new(f)?;
        }
        if self.patch_size == 0 {
            return Err(Error::Dataset("patch_size must be positive".into()));
        }
        let mut ids = HashSet::new();
        let mut train_keys = HashSet::new();
        let mut test_keys = HashSet::new();
        for p in &self.pairs {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate pair id {:?}", p.id)));
            }
            let keys: Vec<String> = match (p.seed, &p.primary, &p.reference) {
                (Some(s), None, None) => vec![format!("seed:{s}")],
                (None, Some(a), Some(b)) => vec![format!("file:{}", a.display()), format!("file:{}", b.display())],
                _ => {
                    return Err(Error::Dataset(format!(
                        "pair {:?} needs either `seed` or both `primary` and `reference`",
                        p.id
                    )))
                }
            };
            let (mine, other) = match p.split {
                Split::Train => (&mut train_keys, &test_keys),
                Split::Test => (&mut test_keys, &train_keys),
            };
            for k in keys {
                if other.contains(&k) {
                    return Err(Error::Dataset(format!("{k} appears in both train and test splits")));
                }
                mine.insert(k);
            }
        }
        Ok(())
    }

    /// Manifest for fold `fold` of `k`-fold cross-validation: pairs are dealt
    /// into `k` contiguous groups in manifest order and group `fold` becomes
    /// the test split.
    pub fn kfold(&self, k: usize, fold: usize) -> Result<Self> {
        let n = self.pairs.len();
        if k < 2 || fold >= k || n < k {
            return Err(Error::InvalidArgument(format!("fold {fold} of {k} over {n} pairs")));
        }
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let mut out = self.clone();
        for (i, p) in out.pairs.iter_mut().enumerate() {
            p.split = if (lo..hi).contains(&i) {
                Split::Test
            } else {
                Split::Train
            };
        }
        out.validate()?;
        Ok(out)
    }
}

/// One row of `index.csv`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRow {
    pub pair_id: String,
    pub split: Split,
    pub factor: u32,
    pub patch_row: usize,
    pub patch_col: usize,
    pub kept_side: usize,
    pub file: String,
}

/// Aligned patches at one grid position.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTuple {
    pub pair_id: String,
    pub split: Split,
    pub factor: u32,
    pub row: usize,
    pub col: usize,
    pub lr: Image,
    /// 2-fold-degraded patch, the intermediate target for factor 4.
    pub lr2: Option<Image>,
    pub hr: Image,
    pub reference: Image,
}

/// Normalized images of one pair and their degraded versions.
struct Prepared {
    hr: Image,
    reference: Image,
    lr: Vec<(u32, Image)>,
    lr2: Option<Image>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn source_pair(m: &DatasetManifest, src: &PairSource, base: &Path) -> Result<ContrastPair> {
    match (src.seed, &src.primary, &src.reference) {
        (Some(seed), _, _) => Ok(make_phantom_pair_sized(seed, m.phantom_side)),
        (None, Some(a), Some(b)) => load_pair(resolve(base, a), resolve(base, b)),
        _ => Err(Error::Dataset(format!("pair {:?} has no source", src.id))),
    }
}

fn prepare(m: &DatasetManifest, src: &PairSource, base: &Path) -> Result<Prepared> {
    let pair = source_pair(m, src, base)?;
    let hr = normalize01(&pair.primary_hr);
    let reference = normalize01(&pair.reference_hr);
    let mut lr = Vec::new();
    for &f in &m.factors {
        lr.push((f, degrade(&hr, &DegradeSpec::new(f)?)?));
    }
    let lr2 = if m.factors.contains(&4) {
        Some(match lr.iter().find(|(f, _)| *f == 2) {
            Some((_, img)) => img.clone(),
            None => degrade(&hr, &DegradeSpec::new(2)?)?,
        })
    } else {
        None
    };
    Ok(Prepared { hr, reference, lr, lr2 })
}

/// Generates every pair (in parallel), then writes the store
/// single-threaded in manifest order.
pub fn build_dataset(manifest: &DatasetManifest, base_dir: &Path, out_dir: &Path) -> Result<PatchStore> {
    manifest.validate()?;
    let prepared: Vec<Result<Prepared>> = manifest
        .pairs
        .par_iter()
        .map(|src| prepare(manifest, src, base_dir))
        .collect();

    let patch_dir = out_dir.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let ps = manifest.patch_size;
    let mut rows = Vec::new();
    for (src, prep) in manifest.pairs.iter().zip(prepared) {
        let prep = prep?;
        let (h, w) = (prep.hr.height(), prep.hr.width());
        if !prep.reference.same_size(&prep.hr) {
            return Err(Error::SizeMismatch(format!(
                "pair {:?}: contrasts differ in size",
                src.id
            )));
        }
        let cols = w / ps.max(1);
        let hr_p = patchify(&prep.hr, ps)?;
        let ref_p = patchify(&prep.reference, ps)?;
        let lr2_p = prep.lr2.as_ref().map(|i| patchify(i, ps)).transpose()?;
        for (factor, lr) in &prep.lr {
            let kept = DegradeSpec::new(*factor)?.kept_side(h.max(w));
            let lr_p = patchify(lr, ps)?;
            for k in 0..hr_p.len() {
                let (r, c) = (k / cols, k % cols);
                let file = format!("{}_x{}_r{}_c{}.mcsr", src.id, factor, r, c);
                let mut t = ParamSet::new();
                t.push("lr", lr_p[k].to_tensor());
                t.push("hr", hr_p[k].to_tensor());
                t.push("ref", ref_p[k].to_tensor());
                if *factor == 4 {
                    if let Some(l2) = &lr2_p {
                        t.push("lr2", l2[k].to_tensor());
                    }
                }
                t.push("factor", Tensor::scalar(*factor as f64));
                t.push("kept_side", Tensor::scalar(kept as f64));
                let path = patch_dir.join(&file);
                tensor_io::save(&path, t.iter())?;
                rows.push(IndexRow {
                    pair_id: src.id.clone(),
                    split: src.split,
                    factor: *factor,
                    patch_row: r,
                    patch_col: c,
                    kept_side: kept,
                    file: format!("patches/{file}"),
                });
            }
        }
    }

    let index_path = out_dir.join("index.csv");
    let mut wtr = csv::Writer::from_path(&index_path)?;
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io(&index_path, e))?;
    let mpath = out_dir.join("manifest.toml");
    fs::write(&mpath, manifest.to_toml()).map_err(|e| Error::io(&mpath, e))?;
    Ok(PatchStore {
        dir: out_dir.to_path_buf(),
        manifest: manifest.clone(),
        rows,
    })
}

/// An opened patch store.
#[derive(Clone, Debug)]
pub struct PatchStore {
    dir: PathBuf,
    manifest: DatasetManifest,
    rows: Vec<IndexRow>,
}

impl PatchStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = DatasetManifest::load(dir.join("manifest.toml"))?;
        let index_path = dir.join("index.csv");
        let mut rdr = csv::Reader::from_path(&index_path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<IndexRow>, _>>()?;
        Ok(PatchStore { dir, manifest, rows })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn rows(&self) -> &[IndexRow] {
        &self.rows
    }

    /// Index rows of one split and factor, in store order.
    pub fn select(&self, split: Split, factor: u32) -> Vec<&IndexRow> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.factor == factor)
            .collect()
    }

    /// Pair ids of a split, in manifest order.
    pub fn pair_ids(&self, split: Split) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter(|r| r.split == split && seen.insert(r.pair_id.clone()))
            .map(|r| r.pair_id.clone())
            .collect()
    }

    pub fn load_tuple(&self, row: &IndexRow) -> Result<PatchTuple> {
        let path = self.dir.join(&row.file);
        let set: ParamSet = tensor_io::load(&path)?.into_iter().collect();
        let img = |name: &str| -> Result<Image> {
            let t = set
                .get(name)
                .ok_or_else(|| Error::format(&path, format!("missing tensor {name:?}")))?;
            Image::from_tensor(t)
        };
        Ok(PatchTuple {
            pair_id: row.pair_id.clone(),
            split: row.split,
            factor: row.factor,
            row: row.patch_row,
            col: row.patch_col,
            lr: img("lr")?,
            lr2: if set.get("lr2").is_some() {
                Some(img("lr2")?)
            } else {
                None
            },
            hr: img("hr")?,
            reference: img("ref")?,
        })
    }

    pub fn load(&self, split: Split, factor: u32) -> Result<Vec<PatchTuple>> {
        self.select(split, factor)
            .into_iter()
            .map(|r| self.load_tuple(r))
            .collect()
    }

    /// Patch grid shape (rows, cols) of one pair at one factor.
    pub fn grid(&self, pair_id: &str, factor: u32) -> (usize, usize) {
        self.rows
            .iter()
            .filter(|r| r.pair_id == pair_id && r.factor == factor)
            .fold((0, 0), |(h, w), r| (h.max(r.patch_row + 1), w.max(r.patch_col + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_toml_round_trip() {
        let m = DatasetManifest::synthetic(3, 2, 10, &[2, 4]);
        let back = DatasetManifest::from_toml(&m.to_toml()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn overlap_and_bad_sources_rejected() {
        let mut m = DatasetManifest::synthetic(2, 1, 0, &[2]);
        m.pairs[2].seed = Some(0);
        assert!(m.validate().is_err());
        let mut m = DatasetManifest::synthetic(1, 1, 0, &[2]);
        m.pairs[0].primary = Some("a.pgm".into());
        assert!(m.validate().is_err());
        let m = DatasetManifest::synthetic(1, 1, 0, &[5]);
        assert!(m.validate().is_err());
        let mut m = DatasetManifest::synthetic(2, 0, 0, &[2]);
        m.pairs[1].id = m.pairs[0].id.clone();
        assert!(m.validate().is_err());
    }

    #[test]
    fn kfold_covers_every_pair_once() {
        let m = DatasetManifest::synthetic(23, 0, 0, &[2]);
        let mut seen = [0; 23];
        for fold in 0..10 {
            let f = m.kfold(10, fold).unwrap();
            for (i, p) in f.pairs.iter().enumerate() {
                if p.split == Split::Test {
                    seen[i] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(m.kfold(10, 10).is_err());
    }

    #[test]
    fn unknown_manifest_key_rejected() {
        let text = "factors = [2]\nbogus = 1\npairs = []\n";
        assert!(DatasetManifest::from_toml(text).is_err());
    }
}
