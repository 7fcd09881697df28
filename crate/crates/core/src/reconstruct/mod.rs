//! Predictor-driven reconstruction of a stable extension.
//!
//! The loop repeatedly accepts the best-scoring remaining assumption and
//! rewrites the framework with [`modify`], stopping when the rewrite exposes a
//! conflict or no original assumption is left. Every step is polynomial.

mod modify;
mod predictors;

use thiserror::Error;

use crate::aba::{stable_extensions, AbaError, Abaf, AssumptionSet, AtomId, Limits};

pub use modify::{is_conflicting, modify, DummySource, ModifyError, ModifyOutcome};
pub use predictors::{DegreePredictor, GnnPredictor, OraclePredictor, Predictor, PredictorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Exhausted,
    Conflict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionTrace {
    pub chosen: Vec<AtomId>,
    pub scores_at_choice: Vec<f64>,
    /// Assumptions removed as attacked along the way, in removal order.
    pub rejected: Vec<AtomId>,
    /// The assumption whose acceptance exposed the conflict, if any.
    pub conflict_at: Option<AtomId>,
    pub stopped_by: StopReason,
}

impl ReconstructionTrace {
    /// Line-oriented log: one `choose`/`reject` line per event, then `stop`.
    pub fn to_log(&self, abaf: &Abaf) -> String {
        let name = |a: AtomId| abaf.atom(a).name.as_str();
        let mut out = String::new();
        for (a, s) in self.chosen.iter().zip(&self.scores_at_choice) {
            out.push_str(&format!("choose {} {:.6}\n", name(*a), s));
        }
        for &a in &self.rejected {
            out.push_str(&format!("reject {}\n", name(a)));
        }
        if let Some(a) = self.conflict_at {
            out.push_str(&format!("conflict {}\n", name(a)));
        }
        let reason = match self.stopped_by {
            StopReason::Exhausted => "exhausted",
            StopReason::Conflict => "conflict",
        };
        out.push_str(&format!("stop {reason}\n"));
        out
    }
}

/// Runs the greedy reconstruction. Scores are recomputed on the rewritten
/// framework before every choice; ties go to the lowest atom id.
pub fn reconstruct_extension<P: Predictor + ?Sized>(
    abaf: &Abaf,
    predictor: &P,
) -> Result<(AssumptionSet, ReconstructionTrace), PredictorError> {
    let mut current = abaf.clone();
    let mut trace = ReconstructionTrace {
        chosen: Vec::new(),
        scores_at_choice: Vec::new(),
        rejected: Vec::new(),
        conflict_at: None,
        stopped_by: StopReason::Exhausted,
    };
    loop {
        if !current.assumptions().iter().any(|&a| !current.atom(a).dummy) {
            break;
        }
        let scores = predictor.scores(&current)?;
        let mut best: Option<(AtomId, f64)> = None;
        for (&a, &s) in current.assumptions().iter().zip(&scores) {
            if current.atom(a).dummy {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((a, s));
            }
        }
        let (a_star, score) = best.expect("a non-dummy assumption remains");
        let outcome = modify(&current, a_star).expect("a_star is an assumption");
        if outcome.conflicting {
            trace.conflict_at = Some(a_star);
            trace.stopped_by = StopReason::Conflict;
            break;
        }
        trace.chosen.push(a_star);
        trace.scores_at_choice.push(score);
        trace.rejected.extend(outcome.rejected.iter().copied());
        current = outcome.modified;
    }
    let extension = AssumptionSet::from_ids(abaf.num_atoms(), trace.chosen.iter().copied());
    Ok((extension, trace))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("assumption {0} is not credulously accepted")]
    NotCredulouslyAccepted(AtomId),
    #[error(transparent)]
    Semantics(#[from] AbaError),
    #[error(transparent)]
    Modify(#[from] ModifyError),
}

/// Checks that the stable extensions of `modify(abaf, a_star)` restricted to
/// the assumptions of `abaf` are exactly the extensions of `abaf` containing
/// `a_star`, with `a_star` removed. Exact and exponential; meant for tests.
pub fn verify_projection_equivalence(abaf: &Abaf, a_star: AtomId) -> Result<bool, ProjectionError> {
    let before = stable_extensions(abaf, &Limits::unbounded())?;
    if !before.is_accepted(a_star) {
        return Err(ProjectionError::NotCredulouslyAccepted(a_star));
    }
    let outcome = modify(abaf, a_star)?;
    let after = stable_extensions(&outcome.modified, &Limits::unbounded())?;
    let n = abaf.num_atoms();
    let mut lhs: Vec<AssumptionSet> = after
        .extensions
        .iter()
        .map(|s| AssumptionSet::from_ids(n, s.iter().filter(|&a| a < n && abaf.is_assumption(a))))
        .collect();
    let mut rhs: Vec<AssumptionSet> = before
        .extensions
        .iter()
        .filter(|s| s.contains(a_star))
        .map(|s| {
            let mut s = s.clone();
            s.remove(a_star);
            s
        })
        .collect();
    lhs.sort();
    lhs.dedup();
    rhs.sort();
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aba::{example_framework, RawAbaf};

    #[test]
    fn oracle_reconstructs_an_example_extension() {
        let f = example_framework();
        let (e, trace) = reconstruct_extension(&f, &OraclePredictor::default()).unwrap();
        assert!(f.is_stable(&e));
        assert_eq!(trace.stopped_by, StopReason::Exhausted);
        let names = f.names_of(&e);
        assert!(names == ["b", "c"] || names == ["a", "b", "d"]);
    }

    #[test]
    fn self_attacker_stops_on_conflict() {
        let f = RawAbaf::named(&["a", "a~"])
            .assume("a", "a~")
            .rule("a~", &["a"])
            .validate()
            .unwrap();
        for p in [&OraclePredictor::default() as &dyn Predictor, &DegreePredictor] {
            let (e, trace) = reconstruct_extension(&f, p).unwrap();
            assert!(e.is_empty());
            assert_eq!(trace.stopped_by, StopReason::Conflict);
        }
    }

    #[test]
    fn no_assumptions_is_exhausted_immediately() {
        let f = example_framework();
        let mut current = f.clone();
        for name in ["b", "c"] {
            current = modify(&current, current.atom_by_name(name).unwrap()).unwrap().modified;
        }
        let real = current
            .assumptions()
            .iter()
            .filter(|&&a| !current.atom(a).dummy)
            .count();
        assert_eq!(real, 0);
        let (e, trace) = reconstruct_extension(&current, &DegreePredictor).unwrap();
        assert!(e.is_empty());
        assert_eq!(trace.stopped_by, StopReason::Exhausted);
        assert!(trace.chosen.is_empty());
    }

    #[test]
    fn projection_on_example() {
        let f = example_framework();
        for name in ["a", "b", "c", "d"] {
            let a = f.atom_by_name(name).unwrap();
            assert!(verify_projection_equivalence(&f, a).unwrap(), "failed for {name}");
        }
    }

    #[test]
    fn projection_requires_acceptance() {
        let f = RawAbaf::named(&["a", "a~"])
            .assume("a", "a~")
            .rule("a~", &["a"])
            .validate()
            .unwrap();
        assert_eq!(
            verify_projection_equivalence(&f, 0).unwrap_err(),
            ProjectionError::NotCredulouslyAccepted(0)
        );
    }

    #[test]
    fn trace_log_format() {
        let f = example_framework();
        let (_, trace) = reconstruct_extension(&f, &OraclePredictor::default()).unwrap();
        let log = trace.to_log(&f);
        assert!(log.starts_with("choose a 1.000000\n"));
        assert!(log.ends_with("stop exhausted\n"));
    }
}
