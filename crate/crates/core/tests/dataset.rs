use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use tinypy::corpus::{hardest_indices, read_split, Split};
use tinypy::{build_leveled, classify, read_dataset, top_fraction_hardest, write_dataset, AnnotatedSnippet, CorpusError, DifficultyLevel, SplitFractions};

fn multiset<'a>(xs: impl IntoIterator<Item = &'a AnnotatedSnippet>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in xs {
        *m.entry(s.render()).or_default() += 1;
    }
    m
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn table_shape_and_all_permutation() {
    let ds = build_leveled(4000, SplitFractions::default(), 1).unwrap();
    for l in DifficultyLevel::ALL {
        let s = ds.level(l);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3400, 520, 80));
        for x in s.train.iter().chain(&s.val).chain(&s.test) {
            assert_eq!(classify(x.score.om), l);
            assert_eq!(x.level, l);
        }
    }
    for split in Split::ALL {
        let all = ds.all.get(split);
        assert_eq!(all.len(), 3 * ds.levels[0].get(split).len());
        assert_eq!(multiset(all), multiset(ds.levels.iter().flat_map(|s| s.get(split))));
    }
    let small = build_leveled(1000, SplitFractions::default(), 2).unwrap();
    assert_eq!((small.levels[1].train.len(), small.levels[1].val.len(), small.levels[1].test.len()), (850, 130, 20));
}

#[test]
fn write_read_write_is_byte_stable() {
    let ds = build_leveled(340, SplitFractions::default(), 9).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(&ds, a.path()).unwrap();
    let back = read_dataset(a.path()).unwrap();
    assert_eq!(back.levels, ds.levels);
    assert_eq!(back.all, ds.all);
    write_dataset(&back, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 13);
    assert_eq!(ta, tb);
    assert!(ta.contains_key("hard/test.txt") && ta.contains_key("all/train.txt"));

    let again = tempfile::tempdir().unwrap();
    write_dataset(&build_leveled(340, SplitFractions::default(), 9).unwrap(), again.path()).unwrap();
    assert_eq!(tree(again.path()), ta);
}

#[test]
fn malformed_files_report_offsets() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("easy")).unwrap();
    fs::write(dir.path().join("easy/train.txt"), "a = 5\nprint(a)\n# output\n# 5\n").unwrap();
    match read_split(dir.path(), Some(DifficultyLevel::Easy), Split::Train) {
        Err(CorpusError::Malformed { offset, .. }) => assert_eq!(offset, 28),
        other => panic!("{other:?}"),
    }
    // a hard snippet stored under easy breaks level purity
    let hard = "for a in range(2) :\n    for a in range(2) :\n        print(a)\n# output\n# 0\n# 1\n# 0\n# 1\n\n";
    fs::write(dir.path().join("easy/train.txt"), format!("a = 1\n# output\n\n{hard}")).unwrap();
    match read_split(dir.path(), Some(DifficultyLevel::Easy), Split::Train) {
        Err(CorpusError::Malformed { offset, .. }) => assert_eq!(offset, 16),
        other => panic!("{other:?}"),
    }
}

fn snippet_with(om: f64, cc: f64) -> AnnotatedSnippet {
    let mut s = AnnotatedSnippet::from_rendered("a = 1\n# output\n\n").unwrap();
    s.score.om = om;
    s.score.cc = cc;
    s
}

#[test]
fn hardest_selection() {
    let xs: Vec<_> = [1.0, 1.5, 1.8, 1.2].iter().map(|&om| snippet_with(om, 1.0)).collect();
    assert_eq!(hardest_indices(&xs, 0.5), vec![2, 1]);
    assert_eq!(top_fraction_hardest(&xs, 1.0).len(), 4);
    let flat: Vec<_> = (0..6).map(|_| snippet_with(1.0, 1.0)).collect();
    assert_eq!(hardest_indices(&flat, 0.5), vec![0, 1, 2]);
    let ties = vec![snippet_with(2.0, 1.0), snippet_with(2.0, 3.0), snippet_with(1.0, 5.0)];
    assert_eq!(hardest_indices(&ties, 0.34), vec![1, 0]);
}
