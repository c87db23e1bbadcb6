use std::collections::HashSet;

use mcsr::dataset::*;
use mcsr::image::write_pgm;
use mcsr::kspace::{degrade, normalize01, DegradeSpec};
use mcsr::phantom::make_phantom_pair;

#[test]
fn ten_pairs_at_factor_two_give_160_aligned_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest::synthetic(8, 2, 100, &[2]);
    let store = build_dataset(&m, dir.path(), dir.path()).unwrap();
    assert_eq!(store.rows().len(), 160);

    let reopened = PatchStore::open(dir.path()).unwrap();
    assert_eq!(reopened.rows(), store.rows());
    assert_eq!(reopened.manifest(), &m);
    assert_eq!(reopened.grid("ph00100", 2), (4, 4));

    // Independently recompute the LR image of one pair and compare cells.
    let hr = normalize01(&make_phantom_pair(103).primary_hr);
    let lr = degrade(&hr, &DegradeSpec::new(2).unwrap()).unwrap();
    for row in reopened.rows().iter().filter(|r| r.pair_id == "ph00103") {
        let t = reopened.load_tuple(row).unwrap();
        let (r0, c0) = (row.patch_row * 64, row.patch_col * 64);
        assert_eq!(t.lr, lr.crop(r0, c0, 64, 64).unwrap());
        assert_eq!(t.hr, hr.crop(r0, c0, 64, 64).unwrap());
        assert!(t.lr2.is_none());
        assert_eq!(row.kept_side, 128);
    }
    for t in reopened.load(Split::Train, 2).unwrap() {
        for img in [&t.lr, &t.hr, &t.reference] {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn splits_never_share_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest::synthetic(3, 2, 0, &[2, 4]);
    let store = build_dataset(&m, dir.path(), dir.path()).unwrap();
    let train: HashSet<String> = store.pair_ids(Split::Train).into_iter().collect();
    let test: HashSet<String> = store.pair_ids(Split::Test).into_iter().collect();
    assert_eq!((train.len(), test.len()), (3, 2));
    assert!(train.is_disjoint(&test));
    assert_eq!(store.select(Split::Test, 4).len(), 32);

    // Factor 4 tuples carry the 2-fold intermediate target.
    let t = store.load_tuple(store.select(Split::Train, 4)[5]).unwrap();
    let hr = normalize01(&make_phantom_pair(0).primary_hr);
    let lr2 = degrade(&hr, &DegradeSpec::new(2).unwrap()).unwrap();
    assert_eq!(t.lr2.unwrap(), lr2.crop(64, 64, 64, 64).unwrap());
}

#[test]
fn build_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = DatasetManifest::synthetic(2, 0, 9, &[3]);
    let sa = build_dataset(&m, a.path(), a.path()).unwrap();
    build_dataset(&m, b.path(), b.path()).unwrap();
    for row in sa.rows() {
        let x = std::fs::read(a.path().join(&row.file)).unwrap();
        let y = std::fs::read(b.path().join(&row.file)).unwrap();
        assert_eq!(x, y);
    }
    assert_eq!(
        std::fs::read(a.path().join("index.csv")).unwrap(),
        std::fs::read(b.path().join("index.csv")).unwrap()
    );
    assert_eq!(sa.rows()[0].kept_side, 85);
}

#[test]
fn file_backed_pairs_and_overlap_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let p = make_phantom_pair(5);
    write_pgm(dir.path().join("t2.pgm"), &p.primary_hr).unwrap();
    write_pgm(dir.path().join("pd.pgm"), &p.reference_hr).unwrap();
    let text = r#"
factors = [2]

[[pairs]]
id = "subj1"
split = "train"
primary = "t2.pgm"
reference = "pd.pgm"
"#;
    let m = DatasetManifest::from_toml(text).unwrap();
    let out = dir.path().join("store");
    let store = build_dataset(&m, dir.path(), &out).unwrap();
    assert_eq!(store.rows().len(), 16);

    let overlap = format!(
        "{text}\n[[pairs]]\nid = \"subj2\"\nsplit = \"test\"\nprimary = \"t2.pgm\"\nreference = \"other.pgm\"\n"
    );
    assert!(DatasetManifest::from_toml(&overlap).is_err());

    let missing = text.replace("t2.pgm", "nope.pgm");
    let m = DatasetManifest::from_toml(&missing).unwrap();
    assert!(build_dataset(&m, dir.path(), &dir.path().join("s2")).is_err());
}
