//! Symbolic half of the concolic state.

pub mod args;
pub mod shadow;
pub mod smt;
pub mod solver;
pub mod term;

pub use args::{
    init_symbolic_args, materialize, parse_seed, references_args, synthesize_inputs, ArgError, ArgTerms, ArgValue,
    SymbolicArg,
};
pub use shadow::{shadow_eval, Shadow};
pub use solver::{CheckResult, Model, SolverConfig, SolverError, SolverSession, SolverStats, Verdict};
pub use term::{Term, UnboundVar};

/// Branch conditions along the concrete path, oriented as taken.
#[derive(Debug, Clone, Default)]
pub struct PathPredicate {
    terms: Vec<Term>,
}

impl PathPredicate {
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True iff every member holds under `model`.
    pub fn holds_under(&self, model: &Model) -> Result<bool, UnboundVar> {
        for t in &self.terms {
            if t.eval_map(model)? == 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Appends `phi` to Π and asserts it at the session's base scope.
pub fn assert_path(pp: &mut PathPredicate, phi: &Term, session: &mut SolverSession) -> Result<(), SolverError> {
    let phi = phi.truthy();
    session.assert(&phi)?;
    pp.terms.push(phi);
    Ok(())
}

/// Concrete value of `t` under the seed assignment. The caller keeps `t`;
/// no solver query is issued.
pub fn lazily_concretize(t: &Term, seed_model: &Model) -> Result<u128, UnboundVar> {
    t.eval_map(seed_model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_assertions_accumulate() {
        let mut s = SolverSession::spawn(&SolverConfig::default()).unwrap();
        let mut pp = PathPredicate::default();
        assert_path(&mut pp, &Term::bool(true), &mut s).unwrap();
        assert_eq!(pp.len(), 1);
        assert_eq!(s.check_base().unwrap(), Verdict::Sat);
        let x = Term::var("x", 8);
        assert_path(&mut pp, &x.eq(&Term::constant(5, 8)), &mut s).unwrap();
        assert_path(&mut pp, &x.ne(&Term::constant(5, 8)), &mut s).unwrap();
        assert_eq!(s.check_base().unwrap(), Verdict::Unsat);
    }

    #[test]
    fn one_byte_flags_are_coerced() {
        let mut s = SolverSession::spawn(&SolverConfig::default()).unwrap();
        let mut pp = PathPredicate::default();
        assert_path(&mut pp, &Term::var("f", 8), &mut s).unwrap();
        assert!(pp.terms()[0].is_bool());
    }

    #[test]
    fn concretization_evaluates_under_the_seed() {
        let mut seed = Model::new();
        seed.insert("idx".into(), 2);
        seed.insert("len".into(), 4);
        let idx = Term::var("idx", 8);
        assert_eq!(lazily_concretize(&idx, &seed), Ok(2));
        assert_eq!(lazily_concretize(&idx.add(&Term::constant(1, 8)), &seed), Ok(3));
        let len = Term::var("len", 8);
        let t = Term::ite(&len.eq(&Term::constant(0, 8)), &Term::constant(0, 8), &len.sub(&Term::constant(1, 8)));
        let oracle = if seed["len"] == 0 { 0 } else { seed["len"] - 1 };
        assert_eq!(lazily_concretize(&t, &seed), Ok(oracle));
        assert!(lazily_concretize(&Term::var("other", 8), &seed).is_err());
    }
}
