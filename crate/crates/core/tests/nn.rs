use abagnn::aba::{example_framework, RawAbaf};
use abagnn::depgraph::{build_dependency_graph, DepGraph};
use abagnn::nn::layers::{gat_forward, AttentionParams, AttentionShape};
use abagnn::nn::{
    batch_gradient, class_weights, gat_layer, gcn_layer, read_checkpoint, train, write_checkpoint, AttentionScore,
    Dropout, GraphInput, Kernel, KernelParams, Model, ModelConfig, NnError, RelationEdges, Sample,
};
use abagnn_testkit::tiny_config;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edges(n: usize, mut e: Vec<(usize, usize)>) -> RelationEdges<f64> {
    e.sort_by_key(|&(s, d)| (d, s));
    let mut offsets = vec![0; n + 1];
    for &(_, d) in &e {
        offsets[d + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut ind = vec![0usize; n];
    let mut outd = vec![0usize; n];
    for &(s, d) in &e {
        outd[s] += 1;
        ind[d] += 1;
    }
    let gcn_coef = e
        .iter()
        .map(|&(s, d)| 1.0 / ((ind[d] * outd[s]) as f64).sqrt())
        .collect();
    RelationEdges {
        edges: e,
        offsets,
        gcn_coef,
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0))
}

#[test]
fn gcn_self_loop_identity() {
    let rels = [edges(1, vec![(0, 0)]), edges(1, vec![]), edges(1, vec![])];
    let h = array![[0.3, -1.2]];
    let eye = Array2::<f64>::eye(2);
    let out = gcn_layer(&h, &rels, &[eye.clone(), eye.clone(), eye]).unwrap();
    assert_eq!(out, h);
}

#[test]
fn gcn_attack_edge_copies_source() {
    let rels = [edges(2, vec![]), edges(2, vec![]), edges(2, vec![(0, 1)])];
    let h = Array2::<f64>::eye(2);
    let eye = Array2::<f64>::eye(2);
    let out = gcn_layer(&h, &rels, &[eye.clone(), eye.clone(), eye]).unwrap();
    assert_eq!(out, array![[0.0, 0.0], [1.0, 0.0]]);
}

fn dense_gcn_oracle(h: &Array2<f64>, rels: &[RelationEdges<f64>], ws: &[Array2<f64>]) -> Array2<f64> {
    let n = h.nrows();
    let mut out = Array2::zeros((n, ws[0].ncols()));
    for (rel, w) in rels.iter().zip(ws) {
        let mut a = vec![vec![0.0; n]; n];
        for &(s, d) in &rel.edges {
            a[d][s] += 1.0;
        }
        let indeg: Vec<f64> = (0..n).map(|i| a[i].iter().sum()).collect();
        let outdeg: Vec<f64> = (0..n).map(|j| (0..n).map(|i| a[i][j]).sum()).collect();
        let inv = |d: f64| if d == 0.0 { 0.0 } else { 1.0 / d.sqrt() };
        for i in 0..n {
            for c in 0..w.ncols() {
                let mut acc = 0.0;
                for j in 0..n {
                    let norm = inv(indeg[i]) * a[i][j] * inv(outdeg[j]);
                    for k in 0..h.ncols() {
                        acc += norm * h[[j, k]] * w[[k, c]];
                    }
                }
                out[[i, c]] += acc;
            }
        }
    }
    out
}

#[test]
fn gcn_matches_dense_oracle_on_example_graph() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random(&mut rng, input.num_nodes(), 6);
    let ws: Vec<Array2<f64>> = (0..3).map(|_| random(&mut rng, 6, 4)).collect();
    let fast = gcn_layer(&h, &input.relations, &ws).unwrap();
    let slow = dense_gcn_oracle(&h, &input.relations, &ws);
    assert!((&fast - &slow).iter().all(|x| x.abs() < 1e-10));
    let scaled = gcn_layer(&(&h * 2.5), &input.relations, &ws).unwrap();
    assert!((&scaled - &(&fast * 2.5)).iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn gcn_rejects_bad_shapes() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let h = Array2::<f64>::zeros((3, 4));
    let ws = vec![Array2::<f64>::zeros((4, 4)); 3];
    assert!(matches!(
        gcn_layer(&h, &input.relations, &ws),
        Err(NnError::ShapeMismatch(_))
    ));
}

fn attention(rng: &mut ChaCha8Rng, input: usize, shape: &AttentionShape) -> AttentionParams<f64> {
    let kh = shape.heads * shape.head_dim;
    match shape.score {
        AttentionScore::V2 => AttentionParams {
            w_src: random(rng, input, kh),
            w_dst: random(rng, input, kh),
            att: random(rng, shape.heads, shape.head_dim),
        },
        AttentionScore::V1 => AttentionParams {
            w_src: random(rng, input, kh),
            w_dst: Array2::zeros((0, 0)),
            att: random(rng, shape.heads, 2 * shape.head_dim),
        },
    }
}

#[test]
fn single_neighbour_gets_full_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rel = edges(2, vec![(0, 1)]);
    let shape = AttentionShape {
        heads: 3,
        head_dim: 2,
        concat: true,
        score: AttentionScore::V2,
    };
    let p = attention(&mut rng, 4, &shape);
    let h = random(&mut rng, 2, 4);
    let (_, cache) = gat_forward(&h, &rel, &p, &shape);
    assert!(cache.alpha.iter().all(|&a| (a - 1.0).abs() < 1e-15));
}

#[test]
fn identical_neighbours_split_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rel = edges(3, vec![(0, 2), (1, 2)]);
    let shape = AttentionShape {
        heads: 2,
        head_dim: 3,
        concat: false,
        score: AttentionScore::V2,
    };
    let p = attention(&mut rng, 2, &shape);
    let h = array![[0.4, -0.7], [0.4, -0.7], [1.0, 2.0]];
    let (_, cache) = gat_forward(&h, &rel, &p, &shape);
    assert!(cache.alpha.iter().all(|&a| (a - 0.5).abs() < 1e-15));
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

/// Edge-by-edge accumulation with explicit exponentials.
fn gat_oracle(
    h: &Array2<f64>,
    rel: &RelationEdges<f64>,
    p: &AttentionParams<f64>,
    shape: &AttentionShape,
) -> (Array2<f64>, Vec<Vec<f64>>) {
    let n = h.nrows();
    let hd = shape.head_dim;
    let ws = h.dot(&p.w_src);
    let wd = if shape.score == AttentionScore::V2 {
        h.dot(&p.w_dst)
    } else {
        Array2::zeros((0, 0))
    };
    let mut out = Array2::zeros((n, shape.out_dim()));
    let mut alpha = vec![vec![0.0; shape.heads]; rel.edges.len()];
    for i in 0..n {
        for k in 0..shape.heads {
            let incoming: Vec<usize> = (0..rel.edges.len()).filter(|&e| rel.edges[e].1 == i).collect();
            let raw: Vec<f64> = incoming
                .iter()
                .map(|&e| {
                    let j = rel.edges[e].0;
                    match shape.score {
                        AttentionScore::V2 => (0..hd)
                            .map(|c| p.att[[k, c]] * leaky(wd[[i, k * hd + c]] + ws[[j, k * hd + c]]))
                            .sum::<f64>(),
                        AttentionScore::V1 => leaky(
                            (0..hd)
                                .map(|c| p.att[[k, c]] * ws[[i, k * hd + c]] + p.att[[k, hd + c]] * ws[[j, k * hd + c]])
                                .sum::<f64>(),
                        ),
                    }
                })
                .collect();
            let z: f64 = raw.iter().map(|s| s.exp()).sum();
            for (&e, s) in incoming.iter().zip(&raw) {
                let a = s.exp() / z;
                alpha[e][k] = a;
                let j = rel.edges[e].0;
                for c in 0..hd {
                    let v = a * ws[[j, k * hd + c]];
                    if shape.concat {
                        out[[i, k * hd + c]] += v;
                    } else {
                        out[[i, c]] += v / shape.heads as f64;
                    }
                }
            }
        }
    }
    (out, alpha)
}

#[test]
#[allow(clippy::needless_range_loop)]
fn gat_matches_edge_oracle_and_normalises() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut e = Vec::new();
    for s in 0..6 {
        for d in 0..6 {
            if rng.gen_bool(0.4) {
                e.push((s, d));
            }
        }
    }
    let rel = edges(6, e);
    for score in [AttentionScore::V2, AttentionScore::V1] {
        for concat in [true, false] {
            let shape = AttentionShape {
                heads: 3,
                head_dim: 2,
                concat,
                score,
            };
            let p = attention(&mut rng, 5, &shape);
            let h = random(&mut rng, 6, 5);
            let (out, cache) = gat_forward(&h, &rel, &p, &shape);
            let (expect, alpha) = gat_oracle(&h, &rel, &p, &shape);
            assert!((&out - &expect).iter().all(|x| x.abs() < 1e-10));
            for i in 0..6 {
                let range = rel.incoming(i);
                if range.is_empty() {
                    continue;
                }
                for k in 0..3 {
                    let s: f64 = range.clone().map(|e| cache.alpha[[e, k]]).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                    for e in range.clone() {
                        assert!((cache.alpha[[e, k]] - alpha[e][k]).abs() < 1e-12);
                    }
                }
            }
            let all = gat_layer(&h, std::slice::from_ref(&rel), &[p], &shape).unwrap();
            assert_eq!(all, out);
        }
    }
}

fn zero_heads(model: &mut Model<f64>) {
    for h in model.params.heads.iter_mut() {
        h.weight.fill(0.0);
        h.bias.fill(0.0);
    }
}

#[test]
fn zero_heads_give_one_half() {
    let abaf = example_framework();
    for kernel in [Kernel::Gcn, Kernel::Gat] {
        let mut model = Model::<f64>::new(tiny_config(kernel)).unwrap();
        zero_heads(&mut model);
        let out = model.forward(&GraphInput::from_abaf(&abaf), Dropout::Off).unwrap();
        assert!(out.probs.iter().all(|&p| p == 0.5));
        let pred = model.predict(&abaf).unwrap();
        assert!(pred.labels.iter().all(|&l| l));
    }
}

#[test]
fn no_dropout_train_equals_infer() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let model = Model::<f64>::new(tiny_config(Kernel::Gat)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = model.forward(&input, Dropout::Sample(&mut rng)).unwrap();
    let b = model.forward(&input, Dropout::Off).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn too_many_nodes() {
    let mut cfg = tiny_config(Kernel::Gcn);
    cfg.max_nodes = 12;
    let model = Model::<f64>::new(cfg).unwrap();
    assert!(matches!(
        model.predict(&example_framework()),
        Err(NnError::TooManyNodes { nodes: 13, max: 12 })
    ));
}

#[test]
fn residual_blocks_reduce_to_identity() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let mut model = Model::<f64>::new(tiny_config(Kernel::Gcn)).unwrap();
    for b in model.params.blocks.iter_mut() {
        if let KernelParams::Gcn(ws) = &mut b.kernel {
            ws.iter_mut().for_each(|w| w.fill(0.0));
        }
        b.norm_gain.fill(0.0);
    }
    let out = model.forward(&input, Dropout::Off).unwrap();
    for bt in &out.trace.blocks {
        assert_eq!(bt.input, out.trace.blocks[0].input);
    }
    assert_eq!(out.trace.output, out.trace.blocks[0].input);
}

#[test]
fn canonical_input_ignores_declaration_order() {
    let abaf = example_framework();
    let model = Model::<f64>::new(tiny_config(Kernel::Gat)).unwrap();
    let mut raw = abaf.to_raw();
    raw.contraries.reverse();
    for (_, body) in raw.rules.iter_mut() {
        body.reverse();
    }
    let shuffled = raw.validate().unwrap();
    let g = build_dependency_graph(&abaf);
    let mut edges = g.edges().to_vec();
    edges.reverse();
    let rebuilt = DepGraph::from_parts(g.nodes().to_vec(), edges);
    let a = model.forward(&GraphInput::from_abaf(&abaf), Dropout::Off).unwrap();
    let b = model.forward(&GraphInput::from_abaf(&shuffled), Dropout::Off).unwrap();
    let c = model.forward(&GraphInput::from_graph(&rebuilt), Dropout::Off).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.logits, c.logits);
}

fn check_gradients(cfg: ModelConfig) {
    let (worst, at) = abagnn_testkit::worst_gradient_error(cfg);
    assert!(worst <= 1e-4, "worst relative error {worst} at {at}");
}

#[test]
fn gcn_gradients_match_finite_differences() {
    check_gradients(ModelConfig {
        dropout: 0.2,
        ..tiny_config(Kernel::Gcn)
    });
}

#[test]
fn gat_gradients_match_finite_differences() {
    check_gradients(ModelConfig {
        dropout: 0.2,
        ..tiny_config(Kernel::Gat)
    });
}

#[test]
fn gat_v1_gradients_match_finite_differences() {
    check_gradients(ModelConfig {
        attention: AttentionScore::V1,
        ..tiny_config(Kernel::Gat)
    });
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let model = Model::<f64>::new(tiny_config(Kernel::Gat)).unwrap();
    let out = model.forward(&input, Dropout::Off).unwrap();
    let g = model.backward(&input, &out.trace, &vec![0.0; input.num_nodes()]);
    assert!(g.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
}

fn example_sample() -> Sample<f64> {
    Sample::new(&example_framework(), vec![true, true, true, true]).unwrap()
}

#[test]
fn duplicated_graph_doubles_gradient() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..tiny_config(Kernel::Gcn)
    };
    let model = Model::<f64>::new(cfg).unwrap();
    let other = Sample::new(
        &RawAbaf::named(&["x", "y", "z"])
            .assume("x", "y")
            .rule("y", &["z"])
            .validate()
            .unwrap(),
        vec![true],
    )
    .unwrap();
    let s = example_sample();
    let w = class_weights([&[true, false][..]], 1.0);
    for sample in [&s, &other] {
        let (l1, g1) = batch_gradient(&model, &[sample], w, None).unwrap();
        let (l2, g2) = batch_gradient(&model, &[sample, sample], w, None).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            assert_eq!(&(*a * 2.0), b);
        }
    }
}

fn small_corpus() -> Vec<Sample<f64>> {
    use abagnn::aba::{stable_extensions, Limits};
    use abagnn::datagen::{generate_abaf, GenParams};
    (0..8)
        .map(|seed| {
            let abaf = generate_abaf(&GenParams {
                n_atoms: 10,
                assumption_ratio: 0.4,
                max_rules_per_head: 2,
                max_body_len: 2,
                seed,
            })
            .unwrap();
            let labels = stable_extensions(&abaf, &Limits::unbounded()).unwrap().labels(&abaf);
            Sample::new(&abaf, labels).unwrap()
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = small_corpus();
    let cfg = ModelConfig {
        learn_rate: 0.0,
        epochs: 3,
        batch_size: 3,
        ..tiny_config(Kernel::Gcn)
    };
    let (model, _) = train(&data[..6], &data[6..], cfg.clone()).unwrap();
    assert_eq!(model.params, Model::<f64>::new(cfg).unwrap().params);
}

#[test]
fn training_is_deterministic() {
    let data = small_corpus();
    let cfg = ModelConfig {
        epochs: 5,
        batch_size: 2,
        dropout: 0.2,
        ..tiny_config(Kernel::Gat)
    };
    let (m1, r1) = train(&data[..6], &data[6..], cfg.clone()).unwrap();
    let (m2, r2) = train(&data[..6], &data[6..], cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    let best = r1.best_validation_loss();
    assert!(r1.epochs[r1.best_epoch..].iter().all(|e| e.validation_loss >= best));
}

#[test]
fn training_needs_validation_data() {
    let data = small_corpus();
    assert!(matches!(
        train(&data, &[], tiny_config(Kernel::Gcn)),
        Err(NnError::NoValidationData)
    ));
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let abaf = example_framework();
    for kernel in [Kernel::Gcn, Kernel::Gat] {
        let model = Model::<f64>::new(tiny_config(kernel)).unwrap();
        let text = write_checkpoint(&model);
        let back: Model<f64> = read_checkpoint(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(write_checkpoint(&back), text);
        assert_eq!(back.predict(&abaf).unwrap(), model.predict(&abaf).unwrap());
    }
    let m32 = Model::<f32>::new(tiny_config(Kernel::Gat)).unwrap();
    let back: Model<f32> = read_checkpoint(&write_checkpoint(&m32)).unwrap();
    assert_eq!(back, m32);
    assert!(read_checkpoint::<f64>(&write_checkpoint(&m32)).is_err());
}

#[test]
fn checkpoint_rejects_wrong_shapes() {
    let model = Model::<f64>::new(tiny_config(Kernel::Gcn)).unwrap();
    let text = write_checkpoint(&model).replace("hidden_dim = 8", "hidden_dim = 6");
    assert!(matches!(read_checkpoint::<f64>(&text), Err(NnError::Checkpoint(_))));
    let truncated: String = write_checkpoint(&model)
        .lines()
        .take(20)
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(read_checkpoint::<f64>(&truncated).is_err());
}

#[test]
fn golden_logits() {
    let input = GraphInput::<f64>::from_abaf(&example_framework());
    let mut rendered = String::new();
    for kernel in [Kernel::Gcn, Kernel::Gat] {
        let model = Model::<f64>::new(tiny_config(kernel)).unwrap();
        let out = model.forward(&input, Dropout::Off).unwrap();
        rendered.push_str(&format!("{kernel}"));
        for z in &out.logits {
            rendered.push_str(&format!(" {:016x}", z.to_bits()));
        }
        rendered.push('\n');
    }
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_logits.txt");
    let golden = std::fs::read_to_string(path).expect("golden file");
    assert_eq!(rendered, golden);
}

#[test]
fn single_precision_forward_tracks_double() {
    let abaf = example_framework();
    let m64 = Model::<f64>::new(tiny_config(Kernel::Gat)).unwrap();
    let m32 = Model::<f32>::new(tiny_config(Kernel::Gat)).unwrap();
    let a = m64.predict(&abaf).unwrap();
    let b = m32.predict(&abaf).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert!((x - y).abs() < 1e-4);
    }
}
