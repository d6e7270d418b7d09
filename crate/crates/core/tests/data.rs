use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use sparsae::data::{
    convert_strokes, format_point_cloud, format_strokes, line_cells, parse_point_clouds, parse_strokes, random_affine,
    rasterize, synth_sparse, voxelize, Affine, AffineConfig, PointCloudSample, StrokeSample, SynthStyle, VoxelGrid,
};
use sparsae::{Coord, Error};

#[test]
fn stroke_record() {
    let s = parse_strokes("7;0,0 10,10|10,0 0,10\n").unwrap();
    assert_eq!(
        s,
        vec![StrokeSample {
            label: 7,
            strokes: vec![vec![[0.0, 0.0], [10.0, 10.0]], vec![[10.0, 0.0], [0.0, 10.0]]],
        }]
    );
    assert!(matches!(parse_strokes("1;0,0\n3;0,0 1,1||2,2"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_strokes("x;0,0"), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn line_draw_and_dot() {
    assert_eq!(line_cells([0, 0], [3, 0]), vec![[0, 0], [1, 0], [2, 0], [3, 0]]);
    let dot = StrokeSample {
        label: 0,
        strokes: vec![vec![[5.0, 5.0]]],
    };
    let t = rasterize(&dot, 16).unwrap();
    assert_eq!(t.sites().coords(), &[Coord::new(0, &[8, 8])]);
    assert_eq!(t.row(0), &[1.0]);
    assert!(rasterize(&dot, 4).is_err());
}

#[test]
fn point_cloud_voxelization() {
    let one = PointCloudSample {
        d: 3,
        points: vec![vec![0.3, 0.2, 0.9]],
        features: vec![],
        labels: vec![None],
    };
    let v = voxelize(&one, &VoxelGrid::cube(3, 4, 1.0), None, false).unwrap();
    assert_eq!(v.tensor.num_active(), 1);
    let two = PointCloudSample {
        d: 2,
        points: vec![vec![0.1, 0.1], vec![0.4, 0.2]],
        features: vec![vec![0.0], vec![2.0]],
        labels: vec![Some(1), Some(1)],
    };
    let v = voxelize(&two, &VoxelGrid::cube(2, 4, 0.5), None, false).unwrap();
    assert_eq!(v.tensor.row(0), &[1.0]);
    assert_eq!(v.site_labels, vec![Some(1)]);
    let empty = PointCloudSample {
        d: 2,
        points: vec![],
        features: vec![],
        labels: vec![],
    };
    assert!(matches!(voxelize(&empty, &VoxelGrid::cube(2, 4, 1.0), None, false), Err(Error::EmptyCloud)));
}

#[test]
fn synthetic_generators() {
    let e = synth_sparse(2, 16, SynthStyle::Bernoulli { p: 0.0 }, 1).unwrap();
    assert_eq!(e.tensor.num_active(), 0);
    let (p, n) = (0.2, 32 * 32);
    let b = synth_sparse(2, 32, SynthStyle::Bernoulli { p }, 2).unwrap();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((b.tensor.occupancy() - p).abs() <= 3.0 * sigma);
    let a = synth_sparse(3, 8, SynthStyle::Shell, 3).unwrap();
    assert_eq!(a.tensor.sites(), synth_sparse(3, 8, SynthStyle::Shell, 3).unwrap().tensor.sites());
}

#[test]
fn affine_transforms() {
    let id = random_affine(2, &AffineConfig::identity(), 9);
    assert_eq!(id, Affine::identity(2));
    let cfg = AffineConfig::planar();
    assert_eq!(random_affine(2, &cfg, 4), random_affine(2, &cfg, 4));
    let r = Affine::rotation(2, FRAC_PI_2);
    let (a, b) = (r.apply(&[0.0, 0.0], &[0.0, 0.0], 1.0), r.apply(&[3.0, 0.0], &[0.0, 0.0], 1.0));
    assert!((a[0] - b[0]).abs() < 1e-12 && ((b[1] - a[1]).abs() - 3.0).abs() < 1e-12);
}

#[test]
fn pen_trace_conversion() {
    let text = ".SEGMENT DIGIT \"3\"\n.PEN_DOWN\n 10 10\n 20 15\n.PEN_UP\n.PEN_DOWN\n 1 1\n.PEN_UP\n";
    let (source, samples) = convert_strokes(text).unwrap();
    assert!(!source.is_empty());
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].label, 3);
    assert_eq!(samples[0].strokes.len(), 2);
}

fn stroke_sample() -> impl Strategy<Value = StrokeSample> {
    let point = (-500i32..500, -500i32..500).prop_map(|(x, y)| [x as f64 / 4.0, y as f64 / 4.0]);
    (0usize..10, prop::collection::vec(prop::collection::vec(point, 1..6), 1..4))
        .prop_map(|(label, strokes)| StrokeSample { label, strokes })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn strokes_round_trip(samples in prop::collection::vec(stroke_sample(), 1..5)) {
        prop_assert_eq!(parse_strokes(&format_strokes(&samples)).unwrap(), samples);
    }

    #[test]
    fn lines_are_eight_connected(a in (-40i64..40, -40i64..40), b in (-40i64..40, -40i64..40)) {
        let cells = line_cells([a.0, a.1], [b.0, b.1]);
        prop_assert_eq!(cells[0], [a.0, a.1]);
        prop_assert_eq!(*cells.last().unwrap(), [b.0, b.1]);
        for w in cells.windows(2) {
            prop_assert_eq!((w[0][0] - w[1][0]).abs().max((w[0][1] - w[1][1]).abs()), 1);
        }
    }

    #[test]
    fn rasterized_strokes_stay_in_grid(s in stroke_sample(), grid in 8usize..40) {
        if let Ok(t) = rasterize(&s, grid) {
            prop_assert!(t.num_active() >= 1);
            prop_assert!(t.features().iter().all(|&v| v == 1.0));
            prop_assert!(t.sites().coords().iter().all(|c| c.pos[..2].iter().all(|&v| v >= 0 && (v as usize) < grid)));
        }
    }

    #[test]
    fn voxelization_matches_binning_oracle(
        pts in prop::collection::vec((0.0f64..4.0, 0.0f64..4.0, prop::option::of(0usize..3), -1.0f64..1.0), 1..60)
    ) {
        let s = PointCloudSample {
            d: 2,
            points: pts.iter().map(|p| vec![p.0, p.1]).collect(),
            features: pts.iter().map(|p| vec![p.3]).collect(),
            labels: pts.iter().map(|p| p.2).collect(),
        };
        let v = voxelize(&s, &VoxelGrid::cube(2, 8, 0.5), None, false).unwrap();
        prop_assert_eq!(v.counts.iter().sum::<usize>(), pts.len());
        let mut cells: BTreeMap<[i32; 2], (Vec<f64>, BTreeMap<usize, usize>)> = BTreeMap::new();
        for p in &pts {
            let e = cells.entry([(p.0 / 0.5).floor() as i32, (p.1 / 0.5).floor() as i32]).or_default();
            e.0.push(p.3);
            if let Some(l) = p.2 {
                *e.1.entry(l).or_default() += 1;
            }
        }
        prop_assert_eq!(v.tensor.num_active(), cells.len());
        for (cell, (feats, votes)) in &cells {
            let row = v.tensor.sites().row(&Coord::new(0, cell)).unwrap();
            let mean = feats.iter().sum::<f64>() / feats.len() as f64;
            prop_assert!((v.tensor.row(row)[0] - mean).abs() < 1e-12);
            let best = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&l, _)| l);
            prop_assert_eq!(v.site_labels[row], best);
        }
    }

    #[test]
    fn point_clouds_round_trip(
        pts in prop::collection::vec((-100i32..100, -100i32..100, -100i32..100, prop::option::of(0usize..5)), 1..30),
        with_features in any::<bool>()
    ) {
        let s = PointCloudSample {
            d: 3,
            points: pts.iter().map(|p| vec![p.0 as f64 / 8.0, p.1 as f64 / 8.0, p.2 as f64]).collect(),
            features: pts.iter().map(|p| if with_features { vec![p.0 as f64 * 0.25] } else { vec![] }).collect(),
            labels: pts.iter().map(|p| p.3).collect(),
        };
        let text = format_point_cloud(&s);
        prop_assert_eq!(parse_point_clouds(&text).unwrap(), vec![s.clone()]);
        let bare = PointCloudSample { features: vec![], ..s.clone() };
        prop_assert_eq!(format_point_cloud(&bare).lines().count(), pts.len() + 1);
    }

    #[test]
    fn affine_is_seed_pure(seed in any::<u64>()) {
        prop_assert_eq!(random_affine(3, &AffineConfig::scene(), seed), random_affine(3, &AffineConfig::scene(), seed));
    }
}
