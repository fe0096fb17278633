use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::InitScheme;
use crate::embedding::{class_embeddings, fixture_table, OovPolicy};
use crate::hierarchy::{
    cavitation_tree, counts_from_leaf_totals, LabelTree, MatrixPipeline, PipelineParams,
};
use crate::model::train::{Dataset, Example};

fn graph(tree: &LabelTree) -> (ClassEmbeddings, Matrix) {
    let emb = class_embeddings(tree, &fixture_table(), OovPolicy::Skip).unwrap();
    let totals: Vec<_> = tree.leaves().into_iter().map(|l| (l, 10)).collect();
    let counts = counts_from_leaf_totals(tree, &totals).unwrap();
    let pipe = MatrixPipeline::build(tree, &counts, PipelineParams::default()).unwrap();
    (emb, pipe.rehkcm)
}

fn image_config(h: usize, w: usize, head: HeadKind) -> ModelConfig {
    ModelConfig {
        input: InputKind::Spectrogram {
            height: h,
            width: w,
        },
        feature: FeatureLearnerConfig {
            blocks: vec![ConvBlock::new(4, 3, 2, 1), ConvBlock::new(8, 3, 1, 1)],
            slope: DEFAULT_SLOPE,
            input_scale: 1.0 / 40.0,
        },
        head,
        gcn: GcnConfig {
            layer_dims: vec![6, 8],
            slope: DEFAULT_SLOPE,
        },
        init: InitScheme::default(),
    }
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn constant_input_identity_conv_gives_constant_features() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let config = ModelConfig {
        input: InputKind::Spectrogram {
            height: 5,
            width: 5,
        },
        feature: FeatureLearnerConfig {
            blocks: vec![ConvBlock::new(3, 1, 1, 0)],
            slope: DEFAULT_SLOPE,
            input_scale: 1.0,
        },
        head: HeadKind::Linear,
        gcn: GcnConfig::default(),
        init: InitScheme::default(),
    };
    let mut model = HkgModel::new(config, &emb, &adj, 0).unwrap();
    model.params[0].data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    model.params[1].data = vec![0.0; 3];
    let x = Tensor {
        shape: vec![1, 3, 5, 5],
        data: vec![-7.0; 75],
    };
    let f = model.feature_forward(&x).unwrap();
    assert_eq!(f.data, vec![-7.0 * DEFAULT_SLOPE; 3]);
}

#[test]
fn pooled_features_ignore_position_of_the_peak() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let mut config = image_config(6, 6, HeadKind::Gcn);
    config.feature.blocks = vec![ConvBlock::new(8, 1, 1, 0)];
    let model = HkgModel::new(config, &emb, &adj, 3).unwrap();
    let with_peak_at = |r: usize, c: usize| {
        let mut data = vec![-30.0; 108];
        for ch in 0..3 {
            data[ch * 36 + r * 6 + c] = 0.0;
        }
        Tensor {
            shape: vec![1, 3, 6, 6],
            data,
        }
    };
    let a = model.feature_forward(&with_peak_at(1, 2)).unwrap();
    let b = model.feature_forward(&with_peak_at(4, 5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pooled_features_match_brute_force_max() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let mut config = image_config(7, 5, HeadKind::Gcn);
    config.feature.blocks = vec![ConvBlock::new(8, 3, 2, 1)];
    let model = HkgModel::new(config, &emb, &adj, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(&[2, 3, 7, 5], &mut rng);
    let f = model.feature_forward(&x).unwrap();
    let (w, b) = (&model.params[0].data, &model.params[1].data);
    let (oh, ow) = (4, 3);
    for n in 0..2 {
        for o in 0..8 {
            let mut best = f64::NEG_INFINITY;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b[o];
                    for c in 0..3 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (y * 2 + ky) as isize - 1;
                                let ix = (xo * 2 + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 7 || ix >= 5 {
                                    continue;
                                }
                                let v = x.data[((n * 3 + c) * 7 + iy as usize) * 5 + ix as usize]
                                    / 40.0;
                                acc += w[((o * 3 + c) * 3 + ky) * 3 + kx] * v;
                            }
                        }
                    }
                    let act = if acc > 0.0 { acc } else { DEFAULT_SLOPE * acc };
                    best = best.max(act);
                }
            }
            assert!((f.data[n * 8 + o] - best).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_graph_passes_embeddings_through() {
    let e = Tensor::new(
        vec![3, 4],
        vec![0.1, 0.2, 0.0, 0.3, 0.5, 0.0, 0.1, 0.9, 0.0, 0.4, 0.4, 0.2],
    )
    .unwrap();
    let eye = |n: usize| Tensor {
        shape: vec![n, n],
        data: (0..n * n)
            .map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 })
            .collect(),
    };
    let c = gcn_forward(&e, &eye(3), &[eye(4), eye(4)], DEFAULT_SLOPE).unwrap();
    assert_eq!(c, e);
}

#[test]
fn zero_eta_keeps_rows_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let adj = Tensor {
        shape: vec![3, 3],
        data: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };
    let ws = [
        random_tensor(&[4, 5], &mut rng),
        random_tensor(&[5, 6], &mut rng),
    ];
    let e1 = random_tensor(&[3, 4], &mut rng);
    let mut e2 = e1.clone();
    e2.data[4..8].iter_mut().for_each(|v| *v += 1.0);
    let c1 = gcn_forward(&e1, &adj, &ws, DEFAULT_SLOPE).unwrap();
    let c2 = gcn_forward(&e2, &adj, &ws, DEFAULT_SLOPE).unwrap();
    assert_eq!(c1.data[..6], c2.data[..6]);
    assert_eq!(c1.data[12..], c2.data[12..]);
    assert_ne!(c1.data[6..12], c2.data[6..12]);
}

#[test]
fn two_sibling_graph_matches_hand_product() {
    // Reweighted matrix of a two-leaf tree: identity scaled on the diagonal.
    let d = 0.6;
    let adj = Tensor::new(vec![2, 2], vec![d, 0.0, 0.0, d]).unwrap();
    let e = Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let w0 = Tensor::new(vec![2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
    let w1 = Tensor::new(vec![2, 1], vec![2.0, -1.0]).unwrap();
    let c = gcn_forward(&e, &adj, &[w0.clone(), w1.clone()], DEFAULT_SLOPE).unwrap();
    let lrelu = |x: f64| if x > 0.0 { x } else { DEFAULT_SLOPE * x };
    for r in 0..2 {
        let h: Vec<f64> = (0..2)
            .map(|j| lrelu(d * (e.data[r * 2] * w0.data[j] + e.data[r * 2 + 1] * w0.data[2 + j])))
            .collect();
        let want = d * (h[0] * w1.data[0] + h[1] * w1.data[1]);
        assert!((c.data[r] - want).abs() < 1e-15);
    }
}

#[test]
fn relabeling_classes_permutes_classifier_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e = random_tensor(&[4, 3], &mut rng);
    let adj = random_tensor(&[4, 4], &mut rng);
    let ws = [
        random_tensor(&[3, 5], &mut rng),
        random_tensor(&[5, 2], &mut rng),
    ];
    let perm = [2usize, 0, 3, 1];
    let pe = Tensor {
        shape: vec![4, 3],
        data: perm
            .iter()
            .flat_map(|&i| e.data[i * 3..i * 3 + 3].to_vec())
            .collect(),
    };
    let padj = Tensor {
        shape: vec![4, 4],
        data: perm
            .iter()
            .flat_map(|&i| perm.iter().map(move |&j| (i, j)))
            .map(|(i, j)| adj.data[i * 4 + j])
            .collect(),
    };
    let c = gcn_forward(&e, &adj, &ws, DEFAULT_SLOPE).unwrap();
    let pc = gcn_forward(&pe, &padj, &ws, DEFAULT_SLOPE).unwrap();
    for (r, &i) in perm.iter().enumerate() {
        for k in 0..2 {
            assert!((pc.data[r * 2 + k] - c.data[i * 2 + k]).abs() < 1e-12);
        }
    }
}

#[test]
fn predict_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_tensor(&[3, 6], &mut rng);
    let c = random_tensor(&[5, 6], &mut rng);
    let s = predict(&f, &c).unwrap();
    for b in 0..3 {
        for k in 0..5 {
            let dot: f64 = (0..6).map(|j| f.data[b * 6 + j] * c.data[k * 6 + j]).sum();
            assert!((s.data[b * 5 + k] - dot).abs() < 1e-12);
        }
    }
    for alpha in [0.5, 2.0, -4.0] {
        let fa = Tensor {
            shape: f.shape.clone(),
            data: f.data.iter().map(|v| alpha * v).collect(),
        };
        let sa = predict(&fa, &c).unwrap();
        assert!(sa.data.iter().zip(&s.data).all(|(a, b)| *a == alpha * b));
    }
    let f1 = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
    let c1 = Tensor::new(vec![2, 2], vec![0.0, 3.0, 1.0, 1.0]).unwrap();
    assert_eq!(predict(&f1, &c1).unwrap().data, vec![0.0, 1.0]);
    assert!(predict(&f1, &Tensor::zeros(&[2, 3])).is_err());
}

#[test]
fn loss_properties() {
    let t = Tensor::new(vec![1, 3], vec![1.0, 0.0, 1.0]).unwrap();
    assert!(
        (bce_loss(&Tensor::zeros(&[1, 3]), &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-15
    );
    let confident = Tensor::new(vec![1, 3], vec![60.0, -60.0, 60.0]).unwrap();
    assert!(bce_loss(&confident, &t).unwrap() < 1e-20);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let s = random_tensor(&[2, 5], &mut rng);
        let s = Tensor {
            shape: s.shape,
            data: s.data.iter().map(|v| 6.0 * v).collect(),
        };
        let l = Tensor {
            shape: vec![2, 5],
            data: (0..10)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect(),
        };
        let naive = -s
            .data
            .iter()
            .zip(&l.data)
            .map(|(&x, &y)| {
                let p = 1.0 / (1.0 + (-x).exp());
                y * p.ln() + (1.0 - y) * (1.0 - p).ln()
            })
            .sum::<f64>()
            / 10.0;
        let got = bce_loss(&s, &l).unwrap();
        assert!(got >= 0.0);
        assert!((got - naive).abs() < 1e-10);
    }
    let bad = Tensor::new(vec![1, 1], vec![f64::INFINITY]).unwrap();
    assert!(matches!(
        bce_loss(&bad, &Tensor::zeros(&[1, 1])),
        Err(HkgError::Numeric(_))
    ));
}

#[test]
fn gcn_width_must_match_features() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let mut config = image_config(8, 8, HeadKind::Gcn);
    config.gcn.layer_dims = vec![6, 7];
    assert!(matches!(
        HkgModel::new(config, &emb, &adj, 0),
        Err(HkgError::Config(_))
    ));
}

fn toy_dataset(tree: &LabelTree, n_per_leaf: usize, h: usize, w: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for (li, leaf) in tree.leaves().into_iter().enumerate() {
        for _ in 0..n_per_leaf {
            let plane: Vec<f64> = (0..h * w)
                .map(|i| {
                    let col = i % w;
                    let hot = col * tree.leaves().len() / w == li;
                    (if hot { -5.0 } else { -40.0 }) + rng.random_range(-3.0..3.0)
                })
                .collect();
            let input = [plane.clone(), plane.clone(), plane].concat();
            examples.push(Example { input, leaf });
        }
    }
    Dataset::new(
        InputKind::Spectrogram {
            height: h,
            width: w,
        },
        examples,
    )
    .unwrap()
}

#[test]
fn single_batch_overfits() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let data = toy_dataset(&tree, 4, 16, 16, 1);
    assert_eq!(data.len(), 16);
    let config = ModelConfig {
        input: InputKind::Spectrogram {
            height: 16,
            width: 16,
        },
        feature: FeatureLearnerConfig::default(),
        head: HeadKind::Gcn,
        gcn: GcnConfig::default(),
        init: InitScheme::default(),
    };
    let mut model = HkgModel::new(config, &emb, &adj, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &tree, &data, &data, &cfg, None, None).unwrap();
    let last = report.history.last().unwrap();
    assert!(
        last.train_loss < 0.01,
        "final train loss {}",
        last.train_loss
    );
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let data = toy_dataset(&tree, 2, 8, 8, 2);
    let mut model = HkgModel::new(image_config(8, 8, HeadKind::Gcn), &emb, &adj, 2).unwrap();
    let before = model.clone();
    let mut cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    cfg.sgd.lr = 0.0;
    train(&mut model, &tree, &data, &data, &cfg, None, None).unwrap();
    assert_eq!(model, before);
}

#[test]
fn checkpoints_resume_and_reproduce() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let data = toy_dataset(&tree, 3, 8, 8, 3);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 5,
        seed: 7,
        augment: vec![crate::signal::Augment::FlipV],
        ..TrainConfig::default()
    };
    let fresh = || HkgModel::new(image_config(8, 8, HeadKind::Linear), &emb, &adj, 7).unwrap();

    let full = tempfile::tempdir().unwrap();
    let mut m1 = fresh();
    let r1 = train(&mut m1, &tree, &data, &data, &cfg, Some(full.path()), None).unwrap();
    assert_eq!(r1.history.len(), 4);

    // Same run again: byte-identical artifacts.
    let again = tempfile::tempdir().unwrap();
    let mut m2 = fresh();
    train(&mut m2, &tree, &data, &data, &cfg, Some(again.path()), None).unwrap();
    for e in 1..=4 {
        let a = std::fs::read(checkpoint_path(full.path(), e)).unwrap();
        let b = std::fs::read(checkpoint_path(again.path(), e)).unwrap();
        assert_eq!(a, b, "epoch {e}");
    }

    // Stop after 2 epochs, resume to 4: same final state and history.
    let split = tempfile::tempdir().unwrap();
    let mut m3 = fresh();
    let short = TrainConfig {
        epochs: 2,
        ..cfg.clone()
    };
    train(
        &mut m3,
        &tree,
        &data,
        &data,
        &short,
        Some(split.path()),
        None,
    )
    .unwrap();
    let ck = checkpoint_path(split.path(), 2);
    let mut m4 = fresh();
    let r4 = train(
        &mut m4,
        &tree,
        &data,
        &data,
        &cfg,
        Some(split.path()),
        Some(&ck),
    )
    .unwrap();
    assert_eq!(r4.history.first().unwrap().epoch, 3);
    assert_eq!(m4, m1);
    let h_full = std::fs::read(full.path().join(HISTORY_FILE)).unwrap();
    let h_split = std::fs::read(split.path().join(HISTORY_FILE)).unwrap();
    assert_eq!(h_full, h_split);

    let loaded = HkgModel::read_from(
        &crate::autodiff::Checkpoint::load(&checkpoint_path(full.path(), 4)).unwrap(),
    )
    .unwrap();
    assert_eq!(loaded, m1);
}

#[test]
fn node_order_mismatch_is_reported() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let model = HkgModel::new(image_config(8, 8, HeadKind::Gcn), &emb, &adj, 0).unwrap();
    let other = crate::hierarchy::bearing_tree();
    assert!(matches!(
        model.check_node_order(&other.class_names()),
        Err(HkgError::TreeMismatch(_))
    ));
}

#[test]
fn divergence_names_last_checkpoint() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let data = toy_dataset(&tree, 2, 8, 8, 4);
    let mut model = HkgModel::new(image_config(8, 8, HeadKind::Gcn), &emb, &adj, 4).unwrap();
    let mut cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    cfg.sgd.lr = 1e6;
    let dir = tempfile::tempdir().unwrap();
    match train(
        &mut model,
        &tree,
        &data,
        &data,
        &cfg,
        Some(dir.path()),
        None,
    ) {
        Err(HkgError::Divergence(msg)) => assert!(msg.contains("last good checkpoint"), "{msg}"),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn feature_input_trains_with_linear_head() {
    let tree = cavitation_tree();
    let (emb, adj) = graph(&tree);
    let config = ModelConfig {
        input: InputKind::Features { dim: 4 },
        feature: FeatureLearnerConfig::default(),
        head: HeadKind::Linear,
        gcn: GcnConfig::default(),
        init: InitScheme::default(),
    };
    let mut model = HkgModel::new(config, &emb, &adj, 0).unwrap();
    assert_eq!(model.params.len(), 1);
    let examples: Vec<Example> = tree
        .leaves()
        .into_iter()
        .enumerate()
        .map(|(i, leaf)| Example {
            input: (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
            leaf,
        })
        .collect();
    let data = Dataset::new(InputKind::Features { dim: 4 }, examples).unwrap();
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let r = train(&mut model, &tree, &data, &data, &cfg, None, None).unwrap();
    assert_eq!(r.history.last().unwrap().val_metrics.leaf_accuracy, 1.0);
}
