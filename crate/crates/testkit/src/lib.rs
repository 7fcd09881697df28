//! Test-only helpers shared by the integration and acceptance suites.

use std::collections::BTreeSet;

use abagnn::aba::{Abaf, AtomId, RawAbaf};
use abagnn::nn::{ClassWeights, Dropout, GraphInput, Model, ModelConfig};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random flat framework with `n_atoms` atoms and `n_assumptions` assumptions.
/// Unlike the corpus generator, contraries may be assumptions and atoms are
/// shuffled so assumptions are not a prefix.
pub fn random_framework(rng: &mut ChaCha8Rng, n_atoms: usize, n_assumptions: usize) -> Abaf {
    assert!(n_assumptions >= 1 && n_assumptions <= n_atoms);
    let mut ids: Vec<usize> = (0..n_atoms).collect();
    ids.shuffle(rng);
    let assumptions: Vec<usize> = ids[..n_assumptions].to_vec();
    let claims: Vec<usize> = ids[n_assumptions..].to_vec();
    let mut raw = RawAbaf::named(&(0..n_atoms).map(|i| format!("x{i}")).collect::<Vec<_>>());
    for &a in &assumptions {
        let c = if claims.is_empty() || rng.gen_bool(0.2) {
            ids[rng.gen_range(0..n_atoms)]
        } else {
            claims[rng.gen_range(0..claims.len())]
        };
        raw.assumptions.push(a);
        raw.contraries.push((a, c));
    }
    if !claims.is_empty() {
        let n_rules = rng.gen_range(0..=2 * claims.len());
        for _ in 0..n_rules {
            let h = claims[rng.gen_range(0..claims.len())];
            let len = rng.gen_range(0..=3.min(n_atoms));
            let body: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n_atoms)).collect();
            raw.rules.push((h, body));
        }
    }
    raw.validate().expect("random framework is flat")
}

/// Seeded framework of at most `max_atoms` atoms and `max_assumptions` assumptions.
pub fn seeded_framework(seed: u64, max_atoms: usize, max_assumptions: usize) -> Abaf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_atoms);
    let k = rng.gen_range(1..=n.min(max_assumptions));
    random_framework(&mut rng, n, k)
}

/// Is `p` the root of some finite derivation tree whose leaves are in `s`?
/// Searched depth-first with the atoms on the current branch excluded, which
/// is exactly tree-derivability.
fn tree_derivable(abaf: &Abaf, s: &BTreeSet<AtomId>, p: AtomId, branch: &mut Vec<AtomId>) -> bool {
    if s.contains(&p) {
        return true;
    }
    if branch.contains(&p) {
        return false;
    }
    branch.push(p);
    let found = abaf
        .rules()
        .iter()
        .filter(|r| r.head == p)
        .any(|r| r.body.iter().all(|&b| tree_derivable(abaf, s, b, branch)));
    branch.pop();
    found
}

/// Every stable extension by testing all `2^|A|` subsets, with derivations
/// checked by explicit tree search. Result is sorted.
pub fn brute_force_stable(abaf: &Abaf) -> Vec<BTreeSet<AtomId>> {
    let a = abaf.assumptions();
    assert!(a.len() <= 16, "brute force is limited to 16 assumptions");
    let mut out = Vec::new();
    for mask in 0u32..(1 << a.len()) {
        let s: BTreeSet<AtomId> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        let attacked = |x: AtomId| {
            let c = abaf.contrary(x).expect("assumption has a contrary");
            tree_derivable(abaf, &s, c, &mut Vec::new())
        };
        let stable = a.iter().all(|&x| attacked(x) != s.contains(&x));
        if stable {
            out.push(s);
        }
    }
    out.sort();
    out
}

pub fn to_sets(sets: &[abagnn::AssumptionSet]) -> Vec<BTreeSet<AtomId>> {
    let mut v: Vec<BTreeSet<AtomId>> = sets.iter().map(|s| s.iter().collect()).collect();
    v.sort();
    v
}

pub fn tiny_config(kernel: abagnn::nn::Kernel) -> ModelConfig {
    ModelConfig {
        kernel,
        blocks: 2,
        embed_dim: 4,
        hidden_dim: 8,
        heads: 2,
        dropout: 0.0,
        max_nodes: 64,
        seed: 11,
        ..Default::default()
    }
}

const FD_STEP: f64 = 1e-4;

const PROBE_LABELS: [bool; 4] = [true, false, true, false];
const PROBE_WEIGHTS: ClassWeights = ClassWeights {
    positive: 1.5,
    negative: 1.0,
};

/// Loss over assumption probabilities plus a fixed linear functional of all
/// logits, so every head receives gradient.
fn probe_loss(model: &Model<f64>, input: &GraphInput<f64>, masks: &[Option<Array2<f64>>], coef: &[f64]) -> f64 {
    let out = model.forward(input, Dropout::Replay(masks)).unwrap();
    let bce = abagnn::nn::weighted_bce(&out.probs[..4], &PROBE_LABELS, PROBE_WEIGHTS).unwrap();
    bce + out.logits.iter().zip(coef).map(|(z, c)| z * c).sum::<f64>()
}

/// Largest relative error between backpropagated and central-difference
/// gradients over every parameter entry, on the running example. Returns the
/// error and a description of the worst entry.
pub fn worst_gradient_error(cfg: ModelConfig) -> (f64, String) {
    let abaf = abagnn::aba::example_framework();
    let input = GraphInput::<f64>::from_abaf(&abaf);
    let mut model = Model::<f64>::new(cfg).unwrap();
    // Non-trivial norm parameters so their gradients are exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for b in model.params.blocks.iter_mut() {
        b.norm_gain.mapv_inplace(|_| rng.gen_range(0.5..1.5));
        b.norm_bias.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    for h in model.params.heads.iter_mut() {
        h.bias.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    let coef: Vec<f64> = (0..input.num_nodes()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(5);
    let out = model.forward(&input, Dropout::Sample(&mut drop_rng)).unwrap();
    let masks = out.masks();
    let mut upstream = abagnn::nn::loss_gradient(&out.probs[..4], &PROBE_LABELS, PROBE_WEIGHTS);
    upstream.resize(input.num_nodes(), 0.0);
    for (u, c) in upstream.iter_mut().zip(&coef) {
        *u += c;
    }
    let grads = model.backward(&input, &out.trace, &upstream);
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Array2<f64>> = grads.tensors().into_iter().cloned().collect();
    let mut worst = (0.0f64, String::from("none"));
    for (t, name) in names.iter().enumerate() {
        for idx in 0..analytic[t].len() {
            let orig = model.params.tensors()[t].as_slice().unwrap()[idx];
            model.params.tensors_mut()[t].as_slice_mut().unwrap()[idx] = orig + FD_STEP;
            let up = probe_loss(&model, &input, &masks, &coef);
            model.params.tensors_mut()[t].as_slice_mut().unwrap()[idx] = orig - FD_STEP;
            let down = probe_loss(&model, &input, &masks, &coef);
            model.params.tensors_mut()[t].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let exact = analytic[t].as_slice().unwrap()[idx];
            let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{idx}] exact {exact:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Greedily drops rules, then assumptions, while `fails` keeps holding.
/// Used to shrink a counterexample before reporting it.
pub fn minimize(abaf: &Abaf, fails: impl Fn(&Abaf) -> bool) -> Abaf {
    let mut raw = abaf.to_raw();
    let mut changed = true;
    while changed {
        changed = false;
        for i in (0..raw.rules.len()).rev() {
            let mut cand = raw.clone();
            cand.rules.remove(i);
            if cand.validate().is_ok_and(|f| fails(&f)) {
                raw = cand;
                changed = true;
            }
        }
        for i in (0..raw.assumptions.len()).rev() {
            let mut cand = raw.clone();
            let a = cand.assumptions.remove(i);
            cand.contraries.retain(|&(x, _)| x != a);
            if cand.validate().is_ok_and(|f| fails(&f)) {
                raw = cand;
                changed = true;
            }
        }
    }
    raw.validate().expect("minimized framework stays valid")
}
