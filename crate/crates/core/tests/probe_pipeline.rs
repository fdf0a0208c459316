use planshift::probe::synthetic::{noise_dump, planted_offset_dump, SyntheticSpec};
use planshift::probe::{
    build_offset_dataset, export_curves, fit_offset_curve, fit_position_curve, read_curves, read_dump,
    read_dump_layers, save_dump, ProbeConfig, RoleFilter,
};
use planshift::{Error, ErrorKind};

fn small(layers: Vec<usize>) -> SyntheticSpec {
    SyntheticSpec {
        trials: 6,
        samples: 12,
        hidden_dim: 12,
        layers,
        ..Default::default()
    }
}

#[test]
fn dump_file_round_trip_and_layer_subset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.plnd");
    let dump = planted_offset_dump(&small(vec![15, 16, 17]), 2).unwrap();
    save_dump(&path, &dump).unwrap();
    assert_eq!(read_dump(&path).unwrap(), dump);

    let part = read_dump_layers(&path, Some(&[16])).unwrap();
    assert_eq!(part.layer_indices, vec![15, 16, 17]);
    for (a, b) in part.trials.iter().zip(&dump.trials) {
        assert_eq!(a.matrices.len(), 1);
        assert_eq!(a.matrices[&16], b.matrices[&16]);
    }
    // a layer that was not loaded cannot be probed
    assert!(build_offset_dataset(&part, 15, 0, RoleFilter::All).is_err());
}

#[test]
fn truncated_file_is_rejected_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.plnd");
    save_dump(&path, &noise_dump(&small(vec![0])).unwrap()).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
    let err = read_dump(&path).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Format);
}

#[test]
fn trial_order_does_not_matter() {
    let dump = planted_offset_dump(&small(vec![0]), 2).unwrap();
    let mut shuffled = dump.clone();
    shuffled.trials.reverse();
    shuffled.trials.swap(1, 4);

    let rows = |d: &planshift::probe::EmbeddingDump| {
        let ds = build_offset_dataset(d, 0, 5, RoleFilter::All).unwrap();
        let mut v: Vec<((i64, usize), Vec<u64>, u64)> = ds
            .origin
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                (
                    o,
                    ds.x.row(i).iter().map(|f| f.to_bits()).collect(),
                    ds.y[i].to_bits(),
                )
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(rows(&dump), rows(&shuffled));

    let config = ProbeConfig {
        max_offset: 10,
        ..Default::default()
    };
    let a = fit_offset_curve(&dump, 0, &config).unwrap();
    let b = fit_offset_curve(&shuffled, 0, &config).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.n_examples, q.n_examples);
        assert!((p.r_squared - q.r_squared).abs() < 1e-6, "{p:?} vs {q:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dump = planted_offset_dump(&small(vec![0]), 2).unwrap();
    let one = ProbeConfig {
        max_offset: 20,
        threads: Some(1),
        ..Default::default()
    };
    let four = ProbeConfig {
        threads: Some(4),
        ..one.clone()
    };
    assert_eq!(
        fit_offset_curve(&dump, 0, &one).unwrap(),
        fit_offset_curve(&dump, 0, &four).unwrap()
    );
}

#[test]
fn offsets_past_the_grid_are_skipped() {
    // 12 samples span 36 tokens, so only offsets 0..=34 leave two or more rows per trial
    let dump = noise_dump(&small(vec![0])).unwrap();
    let curve = fit_offset_curve(&dump, 0, &ProbeConfig::default()).unwrap();
    assert_eq!(curve.points.len() + curve.skipped.len(), 173);
    assert_eq!(curve.points.last().unwrap().x, 35);
    assert_eq!(curve.skipped.first(), Some(&36));
}

#[test]
fn position_curve_grid_and_skips() {
    let dump = noise_dump(&small(vec![0])).unwrap();
    let curve = fit_position_curve(&dump, 0, &ProbeConfig::default()).unwrap();
    assert!(curve.points.iter().all(|p| p.x % 3 == 1 && p.n_examples == 6));
    // q + 8 must stay inside 36 tokens: q in {1, 4, ..., 25}
    assert_eq!(curve.points.len(), 9);
    assert_eq!(curve.points.len() + curve.skipped.len(), 58);
    assert_eq!(*curve.skipped.last().unwrap(), 3 * 57 + 1);
}

#[test]
fn single_trial_position_probe_fails() {
    let dump = noise_dump(&SyntheticSpec {
        trials: 1,
        ..small(vec![0])
    })
    .unwrap();
    assert!(matches!(
        fit_position_curve(&dump, 0, &ProbeConfig::default()),
        Err(Error::InvalidData(_))
    ));
}

#[test]
fn role_filtered_curves() {
    let dump = planted_offset_dump(&small(vec![0]), 2).unwrap();
    let config = ProbeConfig {
        max_offset: 6,
        role_filter: RoleFilter::Comma,
        ..Default::default()
    };
    let curve = fit_offset_curve(&dump, 0, &config).unwrap();
    // one comma per sample, and a comma 6 tokens ahead exists for 10 of 12 samples
    assert_eq!(curve.points[6].n_examples, 6 * 10);
    assert_eq!(curve.points[0].n_examples, 6 * 12);
}

#[test]
fn eleven_layers_export_and_reload() {
    let layers: Vec<usize> = (15..=25).collect();
    let dump = noise_dump(&small(layers.clone())).unwrap();
    let config = ProbeConfig {
        max_offset: 3,
        cv_folds: Some(3),
        ..Default::default()
    };
    let curves: Vec<_> = layers
        .iter()
        .map(|&l| fit_offset_curve(&dump, l, &config).unwrap())
        .collect();
    assert_eq!(curves.len(), 11);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    export_curves(&curves, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_curves(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), 11);
    assert_eq!(back.iter().map(|c| c.layer).collect::<Vec<_>>(), layers);
    assert_eq!(back[0].points, curves[0].points);
}
