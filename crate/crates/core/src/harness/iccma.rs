//! The ICCMA ABA text format:
//!
//! ```text
//! # comment
//! p aba <n>
//! a <i>
//! c <i> <j>
//! r <h> <b1> ... <bk>
//! ```
//!
//! Atoms are `1..=n` and are named by their index.

use thiserror::Error;

use crate::aba::{AbaError, Abaf, RawAbaf};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {error}")]
    Semantic { line: usize, error: SemanticError },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("atom {0} is outside the declared range")]
    UndeclaredAtom(u64),
    #[error("assumption {0} has more than one contrary")]
    DuplicateContrary(usize),
    #[error("rule derives assumption {0}; the framework is not flat")]
    NotFlat(usize),
    #[error("contrary given for non-assumption {0}")]
    ContraryOfNonAssumption(usize),
    #[error("assumption {0} has no contrary")]
    MissingContrary(usize),
    #[error("no assumptions declared")]
    EmptyAssumptionSet,
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn semantic(line: usize, error: SemanticError) -> ParseError {
    ParseError::Semantic { line, error }
}

pub fn parse_iccma_aba(text: &str) -> Result<Abaf, ParseError> {
    let mut n: Option<usize> = None;
    let mut raw = RawAbaf::default();
    let mut contrary_line = Vec::new();
    let mut rule_line = Vec::new();
    let mut assumption_line = Vec::new();
    let mut header_line = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_ascii_whitespace();
        let tag = tokens.next().expect("non-empty line");
        let mut numbers = Vec::new();
        let mut header_word = None;
        for t in tokens {
            if tag == "p" && header_word.is_none() && numbers.is_empty() {
                header_word = Some(t);
                continue;
            }
            if !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(syntax(lineno, format!("expected a decimal integer, found {t:?}")));
            }
            numbers.push(
                t.parse::<u64>()
                    .map_err(|_| syntax(lineno, format!("integer {t} too large")))?,
            );
        }
        let size = match (tag, n) {
            ("p", None) => {
                if header_word != Some("aba") || numbers.len() != 1 {
                    return Err(syntax(lineno, "expected `p aba <n>`"));
                }
                let count = usize::try_from(numbers[0]).map_err(|_| syntax(lineno, "atom count too large"))?;
                n = Some(count);
                header_line = lineno;
                raw = RawAbaf::with_numbered_atoms(count);
                continue;
            }
            ("p", Some(_)) => return Err(syntax(lineno, "second header line")),
            (_, None) => return Err(syntax(lineno, "expected `p aba <n>` before any declaration")),
            (_, Some(size)) => size,
        };
        let atom = |x: u64| -> Result<usize, ParseError> {
            if x == 0 || x > size as u64 {
                Err(semantic(lineno, SemanticError::UndeclaredAtom(x)))
            } else {
                Ok(x as usize - 1)
            }
        };
        match (tag, numbers.len()) {
            ("a", 1) => {
                let a = atom(numbers[0])?;
                if !raw.assumptions.contains(&a) {
                    raw.assumptions.push(a);
                    assumption_line.push((a, lineno));
                }
            }
            ("c", 2) => {
                let (a, c) = (atom(numbers[0])?, atom(numbers[1])?);
                if contrary_line.iter().any(|&(x, _)| x == a) {
                    return Err(semantic(lineno, SemanticError::DuplicateContrary(a + 1)));
                }
                contrary_line.push((a, lineno));
                raw.contraries.push((a, c));
            }
            ("r", k) if k >= 1 => {
                let head = atom(numbers[0])?;
                let body = numbers[1..].iter().map(|&x| atom(x)).collect::<Result<_, _>>()?;
                rule_line.push(lineno);
                raw.rules.push((head, body));
            }
            ("a", _) => return Err(syntax(lineno, "expected `a <i>`")),
            ("c", _) => return Err(syntax(lineno, "expected `c <i> <j>`")),
            ("r", _) => return Err(syntax(lineno, "expected `r <h> <b1> ... <bk>`")),
            (other, _) => return Err(syntax(lineno, format!("unknown line type {other:?}"))),
        }
    }
    if n.is_none() {
        return Err(syntax(text.lines().count().max(1), "missing `p aba <n>` header"));
    }
    raw.assumptions.sort_unstable();
    let line_of =
        |table: &[(usize, usize)], a: usize| table.iter().find(|&&(x, _)| x == a).map_or(header_line, |&(_, l)| l);
    raw.validate().map_err(|e| match e {
        AbaError::NotFlat { rule, head } => semantic(rule_line[rule], SemanticError::NotFlat(head + 1)),
        AbaError::ContraryOfNonAssumption(a) => semantic(
            line_of(&contrary_line, a),
            SemanticError::ContraryOfNonAssumption(a + 1),
        ),
        AbaError::MissingContrary(a) => semantic(line_of(&assumption_line, a), SemanticError::MissingContrary(a + 1)),
        AbaError::EmptyAssumptionSet => semantic(header_line, SemanticError::EmptyAssumptionSet),
        other => unreachable!("checked while reading: {other}"),
    })
}

/// Canonical text: header, `a` lines and `c` lines by atom index, then rules
/// in id order with sorted bodies. Atoms are written by position, whatever
/// their names.
pub fn serialize_iccma_aba(abaf: &Abaf) -> String {
    let mut out = format!("p aba {}\n", abaf.num_atoms());
    for &a in abaf.assumptions() {
        out.push_str(&format!("a {}\n", a + 1));
    }
    for &a in abaf.assumptions() {
        if let Some(c) = abaf.contrary(a) {
            out.push_str(&format!("c {} {}\n", a + 1, c + 1));
        }
    }
    for r in abaf.rules() {
        out.push_str(&format!("r {}", r.head + 1));
        for &b in &r.body {
            out.push_str(&format!(" {}", b + 1));
        }
        out.push('\n');
    }
    out
}
