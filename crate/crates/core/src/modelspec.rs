//! Imputation-model formulas and their design matrices.
//!
//! Formula grammar (one formula per post-baseline visit):
//!
//! ```text
//! formula := IDENT "=" term+
//! term    := IDENT | IDENT "*" IDENT
//! ```
//!
//! Identifiers `D1..D3` (on/off status) and `P1..P3` (discontinuation
//! pattern) are class variables; everything else is continuous. A starred
//! term pairs one class and one continuous variable and expands to one
//! slope per non-reference class level. Every formula has an implicit
//! intercept.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statcore::rank_profile;
use crate::trialgen::{SubjectRecord, VISITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("syntax error in {text:?}: {reason}")]
    SyntaxError { text: String, reason: String },
    #[error("formula {0:?} has no terms")]
    EmptyModel(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("design has no rows")]
    EmptyDesign,
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("formula for {response} references {variable}, which is not available yet")]
    NotMonotone { response: String, variable: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Continuous(String),
    Class(String),
    Interaction { class: String, continuous: String },
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Continuous(n) | Term::Class(n) => f.write_str(n),
            Term::Interaction { class, continuous } => write!(f, "{class}*{continuous}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub response: String,
    pub terms: Vec<Term>,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} =", self.response)?;
        for t in &self.terms {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

impl Formula {
    /// Every variable the formula reads, response excluded.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            match t {
                Term::Continuous(n) | Term::Class(n) => {
                    out.insert(n.as_str());
                }
                Term::Interaction { class, continuous } => {
                    out.insert(class.as_str());
                    out.insert(continuous.as_str());
                }
            }
        }
        out
    }
}

/// Class-ness by naming convention: `D<k>` and `P<k>`.
pub fn is_conventional_class(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('D' | 'P'))
        && name.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Star,
    Equals,
}

fn tokenize(text: &str) -> Result<Vec<Token>, SpecError> {
    let err = |reason: String| SpecError::SyntaxError {
        text: text.to_string(),
        reason,
    };
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            c if c.is_whitespace() => {}
            '*' => out.push(Token::Star),
            '=' => out.push(Token::Equals),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::from(c);
                while let Some(&(_, n)) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        ident.push(n);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(ident));
            }
            other => return Err(err(format!("unexpected character {other:?} at {i}"))),
        }
    }
    Ok(out)
}

/// Parse with class-ness from the `D<k>`/`P<k>` naming convention.
pub fn parse_formula(text: &str) -> Result<Formula, SpecError> {
    parse_formula_with(text, is_conventional_class)
}

/// Parse with an explicit list of class variables.
pub fn parse_formula_with_classes(text: &str, classes: &[&str]) -> Result<Formula, SpecError> {
    parse_formula_with(text, |name| classes.contains(&name))
}

fn parse_formula_with(text: &str, is_class: impl Fn(&str) -> bool) -> Result<Formula, SpecError> {
    let err = |reason: &str| SpecError::SyntaxError {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let tokens = tokenize(text)?;
    let (response, rest) = match tokens.as_slice() {
        [] => return Err(err("empty formula")),
        [Token::Ident(r), Token::Equals, rest @ ..] => (r.clone(), rest),
        [Token::Ident(_), ..] => return Err(err("expected '=' after the response")),
        _ => return Err(err("formula must start with a response name")),
    };
    if is_class(&response) {
        return Err(err("response cannot be a class variable"));
    }
    if rest.is_empty() {
        return Err(SpecError::EmptyModel(text.trim().to_string()));
    }

    let mut terms = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        let Token::Ident(a) = &rest[i] else {
            return Err(err("expected a variable name"));
        };
        if matches!(rest.get(i + 1), Some(Token::Star)) {
            let Some(Token::Ident(b)) = rest.get(i + 2) else {
                return Err(err("'*' must be followed by a variable name"));
            };
            let term = match (is_class(a), is_class(b)) {
                (true, false) => Term::Interaction {
                    class: a.clone(),
                    continuous: b.clone(),
                },
                (false, true) => Term::Interaction {
                    class: b.clone(),
                    continuous: a.clone(),
                },
                _ => return Err(err("an interaction needs one class and one continuous variable")),
            };
            terms.push(term);
            i += 3;
        } else {
            terms.push(if is_class(a) {
                Term::Class(a.clone())
            } else {
                Term::Continuous(a.clone())
            });
            i += 1;
        }
    }

    let formula = Formula { response, terms };
    if formula.variables().contains(formula.response.as_str()) {
        return Err(err("response appears on the right-hand side"));
    }
    let mut seen = BTreeSet::new();
    for t in &formula.terms {
        if !seen.insert(t.to_string()) {
            return Err(err("duplicated term"));
        }
    }
    Ok(formula)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelName {
    Cics,
    Oics,
    Pics,
    Oios,
    Pios,
    Pips,
    OicsR,
    PicsR,
}

impl ModelName {
    pub const ALL: [ModelName; 8] = [
        ModelName::Cics,
        ModelName::Oics,
        ModelName::Pics,
        ModelName::Oios,
        ModelName::Pios,
        ModelName::Pips,
        ModelName::OicsR,
        ModelName::PicsR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Cics => "CICS",
            ModelName::Oics => "OICS",
            ModelName::Pics => "PICS",
            ModelName::Oios => "OIOS",
            ModelName::Pios => "PIOS",
            ModelName::Pips => "PIPS",
            ModelName::OicsR => "OICS_R",
            ModelName::PicsR => "PICS_R",
        }
    }

    pub fn code(self) -> u64 {
        self as u64 + 1
    }

    pub fn is_residual(self) -> bool {
        matches!(self, ModelName::OicsR | ModelName::PicsR)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| SpecError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByGroups {
    Arm,
    ArmFinalPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: ModelName,
    /// Formulas for visits 1..=3, in order.
    pub formulas: Vec<Formula>,
    pub by_groups: ByGroups,
    pub residual_mode: bool,
}

impl ModelSpec {
    pub fn formula(&self, visit: usize) -> &Formula {
        &self.formulas[visit - 1]
    }

    /// Check that visit `j`'s formula only reads variables known before
    /// `Y_j` is imputed.
    pub fn check_monotone(&self) -> Result<(), SpecError> {
        for (k, f) in self.formulas.iter().enumerate() {
            let visit = k + 1;
            for v in f.variables() {
                let (kind, idx) = split_name(v).ok_or_else(|| SpecError::UnknownVariable(v.into()))?;
                let ok = match kind {
                    'Y' | 'R' => idx < visit,
                    'D' | 'P' => (1..=visit).contains(&idx),
                    _ => false,
                };
                if !ok {
                    return Err(SpecError::NotMonotone {
                        response: f.response.clone(),
                        variable: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn split_name(name: &str) -> Option<(char, usize)> {
    let mut chars = name.chars();
    let kind = chars.next()?;
    let idx = chars.as_str().parse().ok()?;
    Some((kind, idx))
}

/// The three per-visit formula texts of a builtin model.
pub fn builtin_formula_texts(name: ModelName) -> [&'static str; VISITS] {
    match name {
        ModelName::Cics | ModelName::Pips => ["Y1 = Y0", "Y2 = Y0 Y1", "Y3 = Y0 Y1 Y2"],
        ModelName::Oics => ["Y1 = D1 Y0", "Y2 = D2 Y0 Y1", "Y3 = D3 Y0 Y1 Y2"],
        ModelName::Pics => ["Y1 = P1 Y0", "Y2 = P2 Y0 Y1", "Y3 = P3 Y0 Y1 Y2"],
        ModelName::Oios => [
            "Y1 = D1 Y0",
            "Y2 = D2 Y0 Y1 D2*Y1",
            "Y3 = D3 Y0 Y1 D3*Y1 Y2 D3*Y2",
        ],
        ModelName::Pios => [
            "Y1 = P1 Y0",
            "Y2 = P2 Y0 Y1 D1*Y1",
            "Y3 = P3 Y0 Y1 D1*Y1 Y2 D2*Y2",
        ],
        ModelName::OicsR => ["Y1 = D1 R0", "Y2 = D2 R0 R1", "Y3 = D3 R0 R1 R2"],
        ModelName::PicsR => ["Y1 = P1 R0", "Y2 = P2 R0 R1", "Y3 = P3 R0 R1 R2"],
    }
}

pub fn builtin_spec(name: ModelName) -> ModelSpec {
    let formulas = builtin_formula_texts(name)
        .iter()
        .map(|t| parse_formula(t).expect("builtin formulas parse"))
        .collect();
    ModelSpec {
        name,
        formulas,
        by_groups: if name == ModelName::Pips {
            ByGroups::ArmFinalPattern
        } else {
            ByGroups::Arm
        },
        residual_mode: name.is_residual(),
    }
}

/// On/off status and discontinuation pattern of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DerivedVars {
    disc_time: Option<usize>,
}

impl DerivedVars {
    pub fn from_disc_time(disc_time: Option<usize>) -> Self {
        Self { disc_time }
    }

    /// `D_j`, with `D_0 = 0`.
    pub fn d(&self, visit: usize) -> bool {
        self.disc_time.is_some_and(|t| t <= visit)
    }

    /// Level of `P_j`: the number of off-treatment visits among `1..=j`.
    pub fn pattern_level(&self, visit: usize) -> usize {
        (1..=visit).filter(|&k| self.d(k)).count()
    }

    /// `P_j` rendered over `{O, X}`, e.g. `"OX"` for `P_2` with `D = (0, 1)`.
    pub fn pattern(&self, visit: usize) -> String {
        (1..=visit).map(|k| if self.d(k) { 'X' } else { 'O' }).collect()
    }

    pub fn final_pattern(&self) -> String {
        self.pattern(VISITS)
    }

    pub fn d_vector(&self) -> [bool; VISITS] {
        [self.d(1), self.d(2), self.d(3)]
    }
}

pub fn derive_vars(subject: &SubjectRecord) -> DerivedVars {
    DerivedVars::from_disc_time(subject.disc_time)
}

/// Label of level `level` of pattern variable `P_visit`.
pub fn pattern_label(visit: usize, level: usize) -> String {
    let mut s = "O".repeat(visit - level);
    s.push_str(&"X".repeat(level));
    s
}

/// Level labels of a known class variable; index 0 is the reference
/// (all on-treatment) level.
pub fn class_levels(name: &str) -> Option<Vec<String>> {
    match split_name(name)? {
        ('D', k) if (1..=VISITS).contains(&k) => Some(vec!["0".into(), "1".into()]),
        ('P', k) if (1..=VISITS).contains(&k) => Some((0..=k).map(|l| pattern_label(k, l)).collect()),
        _ => None,
    }
}

/// A variable name with its `(kind, index)` split resolved once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarRef {
    pub name: String,
    key: Option<(char, usize)>,
}

impl VarRef {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            key: split_name(name),
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Values a design row is built from.
///
/// The `*_ref` methods default to the name lookups; sources with indexed
/// storage override them to skip name parsing in hot loops.
pub trait VariableSource {
    fn continuous(&self, name: &str) -> Option<f64>;
    fn class_level(&self, name: &str) -> Option<usize>;

    fn continuous_ref(&self, v: &VarRef) -> Option<f64> {
        self.continuous(&v.name)
    }

    fn class_level_ref(&self, v: &VarRef) -> Option<usize> {
        self.class_level(&v.name)
    }
}

impl DerivedVars {
    fn class_level_key(&self, key: Option<(char, usize)>) -> Option<usize> {
        match key? {
            ('D', k) if (1..=VISITS).contains(&k) => Some(usize::from(self.d(k))),
            ('P', k) if (1..=VISITS).contains(&k) => Some(self.pattern_level(k)),
            _ => None,
        }
    }
}

impl VariableSource for DerivedVars {
    fn continuous(&self, _name: &str) -> Option<f64> {
        None
    }

    fn class_level(&self, name: &str) -> Option<usize> {
        self.class_level_key(split_name(name))
    }

    fn class_level_ref(&self, v: &VarRef) -> Option<usize> {
        self.class_level_key(v.key)
    }
}

/// Outcomes `Y0..Y3` (and optionally residuals `R0..R2`) with derived
/// status variables.
#[derive(Debug, Clone, Copy)]
pub struct OutcomeRow<'a> {
    pub vars: DerivedVars,
    pub y: &'a [Option<f64>; 4],
    pub r: Option<&'a [f64; VISITS]>,
}

impl OutcomeRow<'_> {
    fn continuous_key(&self, key: Option<(char, usize)>) -> Option<f64> {
        match key? {
            ('Y', k) if k <= VISITS => self.y[k],
            ('R', k) if k < VISITS => self.r.map(|r| r[k]),
            _ => None,
        }
    }
}

impl VariableSource for OutcomeRow<'_> {
    fn continuous(&self, name: &str) -> Option<f64> {
        self.continuous_key(split_name(name))
    }

    fn class_level(&self, name: &str) -> Option<usize> {
        self.vars.class_level(name)
    }

    fn continuous_ref(&self, v: &VarRef) -> Option<f64> {
        self.continuous_key(v.key)
    }

    fn class_level_ref(&self, v: &VarRef) -> Option<usize> {
        self.vars.class_level_key(v.key)
    }
}

fn unknown(v: &VarRef) -> SpecError {
    SpecError::UnknownVariable(v.name.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Intercept,
    Continuous(VarRef),
    ClassLevel { class: VarRef, level: usize },
    Interaction { class: VarRef, level: usize, continuous: VarRef },
}

impl ColumnKind {
    /// Intercept and class-level columns shift the conditional mean without
    /// multiplying a covariate.
    pub fn is_intercept_part(&self) -> bool {
        matches!(self, ColumnKind::Intercept | ColumnKind::ClassLevel { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub kind: ColumnKind,
    pub label: String,
}

/// Ordered columns of a design: intercept first, then terms in formula
/// order, class terms reference-coded against the all-on-treatment level.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignLayout {
    pub columns: Vec<Column>,
    /// Class levels that had no rows and were left out.
    pub dropped: Vec<String>,
}

impl DesignLayout {
    /// Layout with every non-reference level of every class term.
    pub fn full(formula: &Formula) -> Result<Self, SpecError> {
        Self::build(formula, |_, _| true)
    }

    /// Layout over `rows`, dropping class levels no row takes.
    pub fn for_rows<S: VariableSource>(formula: &Formula, rows: &[S]) -> Result<Self, SpecError> {
        if rows.is_empty() {
            return Err(SpecError::EmptyDesign);
        }
        let mut present: Vec<(String, BTreeSet<usize>)> = Vec::new();
        for v in formula.variables() {
            if class_levels(v).is_some() {
                let var = VarRef::new(v);
                let mut levels = BTreeSet::new();
                for r in rows {
                    levels.insert(r.class_level_ref(&var).ok_or_else(|| unknown(&var))?);
                }
                present.push((v.to_string(), levels));
            }
        }
        let layout = Self::build(formula, |class, level| {
            present
                .iter()
                .find(|(c, _)| c == class)
                .is_some_and(|(_, l)| l.contains(&level))
        })?;
        if !layout.dropped.is_empty() {
            log::debug!("{}: dropped unused levels {:?}", formula, layout.dropped);
        }
        Ok(layout)
    }

    fn build(formula: &Formula, keep: impl Fn(&str, usize) -> bool) -> Result<Self, SpecError> {
        let mut columns = vec![Column {
            kind: ColumnKind::Intercept,
            label: "Intercept".into(),
        }];
        let mut dropped = Vec::new();
        for term in &formula.terms {
            match term {
                Term::Continuous(n) => columns.push(Column {
                    kind: ColumnKind::Continuous(VarRef::new(n)),
                    label: n.clone(),
                }),
                Term::Class(c) => {
                    let levels = class_levels(c).ok_or_else(|| SpecError::UnknownVariable(c.clone()))?;
                    for (level, name) in levels.iter().enumerate().skip(1) {
                        let label = format!("{c}:{name}");
                        if keep(c, level) {
                            columns.push(Column {
                                kind: ColumnKind::ClassLevel {
                                    class: VarRef::new(c),
                                    level,
                                },
                                label,
                            });
                        } else {
                            dropped.push(label);
                        }
                    }
                }
                Term::Interaction { class, continuous } => {
                    let levels = class_levels(class).ok_or_else(|| SpecError::UnknownVariable(class.clone()))?;
                    for (level, name) in levels.iter().enumerate().skip(1) {
                        let label = format!("{class}:{name}*{continuous}");
                        if keep(class, level) {
                            columns.push(Column {
                                kind: ColumnKind::Interaction {
                                    class: VarRef::new(class),
                                    level,
                                    continuous: VarRef::new(continuous),
                                },
                                label,
                            });
                        } else {
                            dropped.push(label);
                        }
                    }
                }
            }
        }
        Ok(Self { columns, dropped })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.label == label)
    }

    /// Evaluate one design row into `out`.
    pub fn fill_row<S: VariableSource>(&self, src: &S, out: &mut [f64]) -> Result<(), SpecError> {
        for (slot, col) in out.iter_mut().zip(&self.columns) {
            *slot = match &col.kind {
                ColumnKind::Intercept => 1.0,
                ColumnKind::Continuous(v) => src.continuous_ref(v).ok_or_else(|| unknown(v))?,
                ColumnKind::ClassLevel { class, level } => {
                    let l = src.class_level_ref(class).ok_or_else(|| unknown(class))?;
                    if l == *level {
                        1.0
                    } else {
                        0.0
                    }
                }
                ColumnKind::Interaction {
                    class,
                    level,
                    continuous,
                } => {
                    let l = src.class_level_ref(class).ok_or_else(|| unknown(class))?;
                    if l == *level {
                        src.continuous_ref(continuous).ok_or_else(|| unknown(continuous))?
                    } else {
                        0.0
                    }
                }
            };
        }
        Ok(())
    }

    pub fn row<S: VariableSource>(&self, src: &S) -> Result<Vec<f64>, SpecError> {
        let mut out = vec![0.0; self.len()];
        self.fill_row(src, &mut out)?;
        Ok(out)
    }

    pub fn matrix<S: VariableSource>(&self, rows: &[S]) -> Result<DMatrix<f64>, SpecError> {
        if rows.is_empty() {
            return Err(SpecError::EmptyDesign);
        }
        let p = self.len();
        let mut data = vec![0.0; rows.len() * p];
        for (i, r) in rows.iter().enumerate() {
            self.fill_row(r, &mut data[i * p..(i + 1) * p])?;
        }
        Ok(DMatrix::from_row_slice(rows.len(), p, &data))
    }

    /// Sum of the intercept-part coefficients that apply to `src`.
    pub fn intercept_part<S: VariableSource>(&self, src: &S, coefficients: &[f64]) -> Result<f64, SpecError> {
        let mut total = 0.0;
        for (col, b) in self.columns.iter().zip(coefficients) {
            match &col.kind {
                ColumnKind::Intercept => total += b,
                ColumnKind::ClassLevel { class, level } => {
                    let l = src.class_level_ref(class).ok_or_else(|| unknown(class))?;
                    if l == *level {
                        total += b;
                    }
                }
                _ => {}
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub layout: DesignLayout,
}

/// Build the design of `formula` over `rows`.
pub fn build_design<S: VariableSource>(formula: &Formula, rows: &[S]) -> Result<Design, SpecError> {
    let layout = DesignLayout::for_rows(formula, rows)?;
    let matrix = layout.matrix(rows)?;
    Ok(Design {
        matrix,
        labels: layout.labels(),
        layout,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimabilityFailure {
    InsufficientData {
        rows: usize,
        columns: usize,
        min_resid_df: usize,
    },
    RankDeficient {
        rank: usize,
        deficient_columns: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimability {
    Ok,
    Failure {
        failure: EstimabilityFailure,
        /// Sub-population the design was built for, when known.
        cell: Option<String>,
    },
}

impl Estimability {
    pub fn is_ok(&self) -> bool {
        matches!(self, Estimability::Ok)
    }

    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        match self {
            Estimability::Ok => Estimability::Ok,
            Estimability::Failure { failure, .. } => Estimability::Failure {
                failure,
                cell: Some(cell.into()),
            },
        }
    }
}

impl fmt::Display for Estimability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimability::Ok => f.write_str("ok"),
            Estimability::Failure { failure, cell } => {
                if let Some(c) = cell {
                    write!(f, "[{c}] ")?;
                }
                match failure {
                    EstimabilityFailure::InsufficientData {
                        rows,
                        columns,
                        min_resid_df,
                    } => write!(
                        f,
                        "insufficient data: {rows} rows for {columns} columns (need {min_resid_df} residual df)"
                    ),
                    EstimabilityFailure::RankDeficient {
                        rank,
                        deficient_columns,
                    } => write!(f, "rank {rank}, not estimable: {}", deficient_columns.join(", ")),
                }
            }
        }
    }
}

/// Full column rank and at least `min_resid_df` residual degrees of freedom.
pub fn estimability_check(design: &DMatrix<f64>, labels: &[String], min_resid_df: usize) -> Estimability {
    let (rows, columns) = design.shape();
    if rows < columns + min_resid_df || rows == 0 {
        return Estimability::Failure {
            failure: EstimabilityFailure::InsufficientData {
                rows,
                columns,
                min_resid_df,
            },
            cell: None,
        };
    }
    let (rank, aliased) = rank_profile(design);
    if rank < columns {
        let deficient_columns = aliased
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| labels.get(i).cloned().unwrap_or_else(|| format!("column {i}")))
            .collect();
        return Estimability::Failure {
            failure: EstimabilityFailure::RankDeficient {
                rank,
                deficient_columns,
            },
            cell: None,
        };
    }
    Estimability::Ok
}
