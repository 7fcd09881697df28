//! Seeded random frameworks, exact labelling, class-balance curation and
//! stratified splits.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::aba::{stable_extensions, AbaError, Abaf, Limits, RawAbaf, StableResult, Status};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub n_atoms: usize,
    /// Fraction of atoms that are assumptions, in `(0, 1)`.
    pub assumption_ratio: f64,
    pub max_rules_per_head: usize,
    pub max_body_len: usize,
    pub seed: u64,
}

impl GenParams {
    /// `ceil(n_atoms * assumption_ratio)`, ignoring floating-point noise in the product.
    pub fn num_assumptions(&self) -> usize {
        (self.n_atoms as f64 * self.assumption_ratio - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("balance targets unreachable: achieved overall {overall:.4}, solvable {solvable:.4}")]
    Unreachable { overall: f64, solvable: f64 },
    #[error("stratum {0} has no instances")]
    EmptyStratum(usize),
    #[error("{instances} instances but {strata} stratum labels")]
    StrataMismatch { instances: usize, strata: usize },
}

/// Atoms are named `1..=n`; the first `ceil(n * ratio)` are assumptions, each
/// with a contrary drawn uniformly from the remaining atoms. Every other atom
/// heads `0..=max_rules_per_head` rules whose bodies are drawn without
/// replacement from all other atoms, `1..=max_body_len` of them.
pub fn generate_abaf(params: &GenParams) -> Result<Abaf, DatagenError> {
    let n = params.n_atoms;
    if !(params.assumption_ratio > 0.0 && params.assumption_ratio < 1.0) {
        return Err(DatagenError::InvalidParams(
            "assumption_ratio must lie in (0, 1)".into(),
        ));
    }
    let k = params.num_assumptions();
    if k == 0 {
        return Err(DatagenError::InvalidParams("no assumptions".into()));
    }
    if k >= n {
        return Err(DatagenError::InvalidParams(
            "no atom left to serve as a contrary".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut raw = RawAbaf::with_numbered_atoms(n);
    raw.assumptions = (0..k).collect();
    raw.contraries = (0..k).map(|a| (a, rng.gen_range(k..n))).collect();
    let body_cap = params.max_body_len.min(n - 1);
    for h in k..n {
        let count = rng.gen_range(0..=params.max_rules_per_head);
        for _ in 0..count {
            let len = if body_cap == 0 { 0 } else { rng.gen_range(1..=body_cap) };
            let body = index::sample(&mut rng, n - 1, len)
                .into_iter()
                .map(|i| if i >= h { i + 1 } else { i })
                .collect();
            raw.rules.push((h, body));
        }
    }
    Ok(raw.validate().expect("generator output is a valid flat framework"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A framework waiting to be labelled.
#[derive(Debug, Clone)]
pub struct Unlabelled {
    pub name: String,
    pub abaf: Abaf,
    pub params: Option<GenParams>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub abaf: Abaf,
    /// Always complete.
    pub result: StableResult,
    pub params: Option<GenParams>,
    pub stratum: usize,
    pub split: Split,
}

impl Instance {
    pub fn labels(&self) -> Vec<bool> {
        self.result.labels(&self.abaf)
    }

    pub fn accepted(&self) -> usize {
        self.result.credulous.len()
    }

    pub fn is_solvable(&self) -> bool {
        self.accepted() > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn rates(&self) -> AcceptanceRates {
        AcceptanceRates::of(self.instances.iter())
    }
}

/// Fraction of accepted assumptions overall and within frameworks that accept
/// at least one assumption.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceRates {
    pub overall: f64,
    pub solvable: f64,
}

impl AcceptanceRates {
    pub fn of<'a>(instances: impl Iterator<Item = &'a Instance>) -> AcceptanceRates {
        let mut t = Tally::default();
        for i in instances {
            t.add(i);
        }
        t.rates()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    accepted: usize,
    solvable_assumptions: usize,
    all_assumptions: usize,
}

impl Tally {
    fn add(&mut self, i: &Instance) {
        let a = i.abaf.assumptions().len();
        self.accepted += i.accepted();
        self.all_assumptions += a;
        if i.is_solvable() {
            self.solvable_assumptions += a;
        }
    }

    fn remove(&mut self, i: &Instance) {
        let a = i.abaf.assumptions().len();
        self.accepted -= i.accepted();
        self.all_assumptions -= a;
        if i.is_solvable() {
            self.solvable_assumptions -= a;
        }
    }

    fn rates(&self) -> AcceptanceRates {
        let r = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        AcceptanceRates {
            overall: r(self.accepted, self.all_assumptions),
            solvable: r(self.accepted, self.solvable_assumptions),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelReport {
    pub total: usize,
    pub labelled: usize,
    /// Names of instances whose enumeration ran out of budget.
    pub timed_out: Vec<String>,
    /// Names of instances rejected by the solver, with the reason.
    pub rejected: Vec<(String, String)>,
}

/// Exact labelling under `limits`, in parallel; output keeps input order.
/// Instances that time out or exceed the assumption cap are dropped and reported.
pub fn label_corpus(instances: Vec<Unlabelled>, limits: &Limits) -> (Corpus, LabelReport) {
    let results: Vec<Result<StableResult, AbaError>> = instances
        .par_iter()
        .map(|u| stable_extensions(&u.abaf, limits))
        .collect();
    let mut report = LabelReport {
        total: instances.len(),
        ..Default::default()
    };
    let mut corpus = Corpus::default();
    for (u, r) in instances.into_iter().zip(results) {
        match r {
            Ok(result) if result.status == Status::Complete => corpus.instances.push(Instance {
                name: u.name,
                abaf: u.abaf,
                result,
                params: u.params,
                stratum: 0,
                split: Split::Train,
            }),
            Ok(_) => report.timed_out.push(u.name),
            Err(e) => report.rejected.push((u.name, e.to_string())),
        }
    }
    report.labelled = corpus.len();
    (corpus, report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceTargets {
    pub overall: f64,
    pub solvable: f64,
    pub tolerance: f64,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Greedy subset selection hitting both acceptance rates.
///
/// Among frameworks accepting something, those whose own rate lies on the
/// scarce side of the solvable target are all kept; the others are added
/// closest-to-target first while the pooled rate stays within tolerance.
/// Frameworks accepting nothing are then mixed in, in a seeded order, to
/// dilute the overall rate. Kept instances retain pool order.
pub fn balance_corpus(corpus: Corpus, targets: BalanceTargets, seed: u64) -> Result<Corpus, DatagenError> {
    let BalanceTargets {
        overall,
        solvable,
        tolerance,
    } = targets;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let inst = &corpus.instances;
    let (pos, neg): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&i| inst[i].is_solvable());
    let rate = |i: usize| inst[i].accepted() as f64 / inst[i].abaf.assumptions().len() as f64;

    let mut all = Tally::default();
    for &i in &pos {
        all.add(&inst[i]);
    }
    let mut tally = Tally::default();
    let mut chosen = Vec::new();
    if within(all.rates().solvable, solvable, tolerance) {
        tally = all;
        chosen = pos.clone();
    } else {
        let high = all.rates().solvable > solvable;
        let (mut scarce, mut rest): (Vec<usize>, Vec<usize>) = pos.iter().partition(|&&i| (rate(i) > solvable) != high);
        for &i in &scarce {
            tally.add(&inst[i]);
        }
        chosen.append(&mut scarce);
        // stable sort keeps the seeded order among equal rates
        rest.sort_by(|&a, &b| (rate(a) - solvable).abs().total_cmp(&(rate(b) - solvable).abs()));
        for i in rest {
            let mut next = tally;
            next.add(&inst[i]);
            if (next.rates().solvable - solvable).abs() <= tolerance
                || (high && next.rates().solvable < solvable)
                || (!high && next.rates().solvable > solvable)
            {
                tally = next;
                chosen.push(i);
            }
        }
    }
    let neg_mass: usize = neg.iter().map(|&i| inst[i].abaf.assumptions().len()).sum();
    // With too little dilution available, drop frameworks that accept
    // something while the solvable rate stays on target.
    if overall > 0.0 {
        let mut k = chosen.len();
        while k > 0 {
            if (tally.accepted as f64 / overall) <= (tally.all_assumptions + neg_mass) as f64 + 0.5 {
                break;
            }
            k -= 1;
            let i = chosen[k];
            let mut next = tally;
            next.remove(&inst[i]);
            if next.all_assumptions > 0 && within(next.rates().solvable, solvable, tolerance) {
                tally = next;
                chosen.remove(k);
            }
        }
    }
    for &i in &neg {
        let mut next = tally;
        next.add(&inst[i]);
        let before = (tally.rates().overall - overall).abs();
        let after = (next.rates().overall - overall).abs();
        if after < before || (after <= tolerance && tally.rates().overall > overall) {
            tally = next;
            chosen.push(i);
        }
    }
    let rates = tally.rates();
    if tally.all_assumptions == 0
        || !within(rates.overall, overall, tolerance)
        || !within(rates.solvable, solvable, tolerance)
    {
        return Err(DatagenError::Unreachable {
            overall: rates.overall,
            solvable: rates.solvable,
        });
    }
    chosen.sort_unstable();
    let mut keep = vec![false; corpus.len()];
    for i in chosen {
        keep[i] = true;
    }
    Ok(Corpus {
        instances: corpus
            .instances
            .into_iter()
            .zip(keep)
            .filter_map(|(x, k)| k.then_some(x))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Fraction of each stratum's training side held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.25,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Assigns splits per stratum: `round(n * test_fraction)` test instances, then
/// `round(rest * validation_fraction)` validation instances, chosen by a seeded
/// shuffle of the stratum. Every stratum in `0..num_strata` must be populated.
pub fn split_corpus(
    mut corpus: Corpus,
    strata: &[usize],
    num_strata: usize,
    config: SplitConfig,
) -> Result<Corpus, DatagenError> {
    if strata.len() != corpus.len() {
        return Err(DatagenError::StrataMismatch {
            instances: corpus.len(),
            strata: strata.len(),
        });
    }
    let mut members = vec![Vec::new(); num_strata];
    for (i, &s) in strata.iter().enumerate() {
        if s >= num_strata {
            return Err(DatagenError::InvalidParams(format!("stratum {s} out of range")));
        }
        members[s].push(i);
    }
    if let Some(s) = members.iter().position(Vec::is_empty) {
        return Err(DatagenError::EmptyStratum(s));
    }
    for (s, mut m) in members.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(s as u64);
        m.shuffle(&mut rng);
        let n_test = (m.len() as f64 * config.test_fraction).round() as usize;
        let n_val = ((m.len() - n_test) as f64 * config.validation_fraction).round() as usize;
        for (pos, &i) in m.iter().enumerate() {
            let inst = &mut corpus.instances[i];
            inst.stratum = s;
            inst.split = if pos < n_test {
                Split::Test
            } else if pos < n_test + n_val {
                Split::Validation
            } else {
                Split::Train
            };
        }
    }
    Ok(corpus)
}

/// Generates `count` frameworks with seeds `base.seed, base.seed + 1, ...` and
/// atom counts drawn from `atoms` (inclusive) by a generator seeded with `base.seed`.
pub fn generate_batch(base: &GenParams, atoms: (usize, usize), count: usize) -> Result<Vec<Unlabelled>, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let params: Vec<GenParams> = (0..count)
        .map(|i| GenParams {
            n_atoms: rng.gen_range(atoms.0..=atoms.1),
            seed: base.seed.wrapping_add(i as u64),
            ..*base
        })
        .collect();
    params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(Unlabelled {
                name: format!("gen_{i:05}"),
                abaf: generate_abaf(p)?,
                params: Some(*p),
            })
        })
        .collect()
}
