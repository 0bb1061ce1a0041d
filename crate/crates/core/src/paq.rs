//! The predictive clause of a query, `PREDICT(target [, predictor ...]) GIVEN
//! Relation`, and its binding to a relation's data.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{label_01, parse_f64, standard_split, DataSplit, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaqQuery {
    pub target: String,
    pub predictors: Vec<String>,
    pub training_relation: String,
}

impl fmt::Display for PaqQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PREDICT({}", self.target)?;
        for p in &self.predictors {
            write!(f, ", {p}")?;
        }
        write!(f, ") GIVEN {}", self.training_relation)
    }
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> Scanner<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let end = chars.find(|&(_, c)| !is_ident_char(c)).map_or(rest.len(), |(i, _)| i);
        self.pos += end;
        Some(&rest[..end])
    }

    /// A dotted attribute reference such as `p.tag`.
    fn attribute(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        self.ident()?;
        loop {
            let save = self.pos;
            if self.rest().starts_with('.') {
                self.pos += 1;
                if self.ident().is_some() {
                    continue;
                }
            }
            self.pos = save;
            break;
        }
        Some(&self.text[start..self.pos])
    }

    /// Position of the next standalone keyword outside quoted strings.
    fn find_keyword(&self, keyword: &str) -> Option<usize> {
        let bytes = self.text.as_bytes();
        let mut quote: Option<u8> = None;
        let mut i = self.pos;
        while i < bytes.len() {
            let b = bytes[i];
            match quote {
                Some(q) if b == q => quote = None,
                Some(_) => {}
                None if b == b'\'' || b == b'"' => quote = Some(b),
                None => {
                    let end = i + keyword.len();
                    if end <= bytes.len()
                        && self.text.is_char_boundary(end)
                        && self.text[i..end].eq_ignore_ascii_case(keyword)
                        && (i == 0 || !is_ident_char(bytes[i - 1] as char) && bytes[i - 1] != b'.')
                        && (end == bytes.len() || !is_ident_char(bytes[end] as char))
                    {
                        return Some(i);
                    }
                }
            }
            i += 1;
        }
        None
    }
}

/// Extracts the predictive clause from query text. Text around the clause is
/// skipped without validation.
pub fn parse_predict_clause(text: &str) -> Result<PaqQuery> {
    let mut s = Scanner { text, pos: 0 };
    let start = s.find_keyword("PREDICT").ok_or_else(|| s.error("no PREDICT clause"))?;
    s.pos = start + "PREDICT".len();
    if !s.eat('(') {
        return Err(s.error("expected '(' after PREDICT"));
    }
    let mut attrs: Vec<String> = Vec::new();
    s.skip_ws();
    if s.rest().starts_with(')') {
        return Err(s.error("PREDICT needs at least a target attribute"));
    }
    loop {
        let attr = s.attribute().ok_or_else(|| s.error("expected an attribute name"))?;
        attrs.push(attr.to_string());
        if s.eat(',') {
            continue;
        }
        if s.eat(')') {
            break;
        }
        s.skip_ws();
        return Err(s.error("expected ',' or ')'"));
    }
    let given = s.find_keyword("GIVEN").ok_or_else(|| Error::Syntax {
        position: text.len(),
        message: "missing GIVEN".into(),
    })?;
    s.pos = given + "GIVEN".len();
    s.skip_ws();
    let relation = s.ident().ok_or_else(|| s.error("expected a relation name after GIVEN"))?;

    let target = attrs.remove(0);
    if attrs.contains(&target) {
        return Err(Error::Semantic(format!("target {target} is also listed as a predictor")));
    }
    for (i, p) in attrs.iter().enumerate() {
        if attrs[..i].contains(p) {
            return Err(Error::Semantic(format!("predictor {p} is listed twice")));
        }
    }
    Ok(PaqQuery {
        target,
        predictors: attrs,
        training_relation: relation.to_string(),
    })
}

/// A relation's columns and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub columns: Vec<String>,
    pub rows: Array2<f64>,
}

impl Relation {
    /// Comma-separated text with a header row of column names.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut values = Vec::new();
        let mut n = 0;
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {} fields, found {}", columns.len(), fields.len()),
                });
            }
            for f in fields {
                values.push(parse_f64(f, i + 1)?);
            }
            n += 1;
        }
        let rows = Array2::from_shape_vec((n, columns.len()), values).expect("width checked per row");
        Ok(Relation { columns, rows })
    }

    /// Index of an attribute: an exact column name, else the part after the
    /// last dot (`p.tag` finds `tag`).
    pub fn column(&self, attribute: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == attribute).or_else(|| {
            let short = attribute.rsplit('.').next()?;
            self.columns.iter().position(|c| c == short)
        })
    }
}

/// Relations by name.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    relations: HashMap<String, Relation>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, relation: Relation) {
        self.relations.insert(name.into(), relation);
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    /// Every `NAME.csv` in `dir` becomes relation `NAME`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut catalog = Catalog::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let relation = Relation::parse_csv(&text).map_err(|e| Error::Config {
                path: path.clone(),
                message: e.to_string(),
            })?;
            catalog.insert(name, relation);
        }
        Ok(catalog)
    }
}

/// A query resolved against a relation, ready for planning.
#[derive(Debug)]
pub struct Binding {
    pub relation: String,
    pub target: usize,
    pub predictors: Vec<usize>,
    pub split: DataSplit,
}

/// Resolves attributes against the catalog and splits the selected columns.
/// Without explicit predictors every non-target column is used.
pub fn bind(query: &PaqQuery, catalog: &Catalog, seed: u64) -> Result<Binding> {
    let relation = catalog
        .get(&query.training_relation)
        .ok_or_else(|| Error::Binding(format!("unknown relation {}", query.training_relation)))?;
    let find = |attr: &str| {
        relation
            .column(attr)
            .ok_or_else(|| Error::Binding(format!("relation {} has no attribute {attr}", query.training_relation)))
    };
    let target = find(&query.target)?;
    let predictors: Vec<usize> = if query.predictors.is_empty() {
        (0..relation.columns.len()).filter(|&c| c != target).collect()
    } else {
        query.predictors.iter().map(|p| find(p)).collect::<Result<_>>()?
    };
    if predictors.contains(&target) {
        return Err(Error::Binding(format!("{} resolves to the target column", query.target)));
    }
    if predictors.is_empty() {
        return Err(Error::Binding("no predictor attributes".into()));
    }
    let x = relation.rows.select(ndarray::Axis(1), &predictors);
    let y = relation
        .rows
        .column(target)
        .iter()
        .enumerate()
        .map(|(i, &v)| label_01(v, i + 2))
        .collect::<Result<Array1<f64>>>()?;
    let split = standard_split(&Dataset::new(x, y)?, seed)?;
    Ok(Binding {
        relation: query.training_relation.clone(),
        target,
        predictors,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn photo_clause() {
        let q = parse_predict_clause(
            "SELECT p.image FROM Photos p WHERE PREDICT(p.tag, p.photo) = 'Plant' GIVEN LabeledPhotos",
        )
        .unwrap();
        assert_eq!(q.target, "p.tag");
        assert_eq!(q.predictors, ["p.photo"]);
        assert_eq!(q.training_relation, "LabeledPhotos");
    }

    #[test]
    fn voicemail_clause() {
        let q = parse_predict_clause("SELECT vm.sender FROM VoiceMails vm WHERE PREDICT(vm.text, vm.audio) GIVEN LabeledVoiceMails")
            .unwrap();
        assert_eq!(q.target, "vm.text");
        assert_eq!(q.predictors, ["vm.audio"]);
        assert_eq!(q.training_relation, "LabeledVoiceMails");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let q = parse_predict_clause("predict( y ) given R").unwrap();
        assert_eq!(q.target, "y");
        assert!(q.predictors.is_empty());
        assert_eq!(q.training_relation, "R");
    }

    #[test]
    fn quoted_keywords_are_ignored() {
        let q = parse_predict_clause("PREDICT(a.b) = 'given x' GIVEN Real").unwrap();
        assert_eq!(q.training_relation, "Real");
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_predict_clause("PREDICT GIVEN R"), Err(Error::Syntax { position: 8, .. })));
        assert!(matches!(parse_predict_clause("PREDICT() GIVEN R"), Err(Error::Syntax { .. })));
        let text = "PREDICT(a, b)";
        assert!(matches!(parse_predict_clause(text), Err(Error::Syntax { position, .. }) if position == text.len()));
        assert!(matches!(parse_predict_clause("PREDICT(a b) GIVEN R"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_predict_clause("PREDICT(a) GIVEN"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_predict_clause("SELECT 1"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn semantic_errors() {
        assert!(matches!(parse_predict_clause("PREDICT(a, b, b) GIVEN R"), Err(Error::Semantic(_))));
        assert!(matches!(parse_predict_clause("PREDICT(a, b, a) GIVEN R"), Err(Error::Semantic(_))));
    }

    fn catalog() -> Catalog {
        let mut text = String::from("x1,x2,label\n");
        for i in 0..40 {
            text += &format!("{},{},{}\n", i, i * 2, i % 2);
        }
        let mut c = Catalog::new();
        c.insert("R", Relation::parse_csv(&text).unwrap());
        c
    }

    #[test]
    fn omitted_predictors_default_to_the_rest() {
        let b = bind(&parse_predict_clause("PREDICT(r.label) GIVEN R").unwrap(), &catalog(), 0).unwrap();
        assert_eq!(b.target, 2);
        assert_eq!(b.predictors, [0, 1]);
        assert_eq!(b.split.train.n_features(), 2);
        assert_eq!(b.split.train.n_rows() + b.split.validation.n_rows() + b.split.test.n_rows(), 40);
    }

    #[test]
    fn explicit_predictors_keep_their_order() {
        let b = bind(&parse_predict_clause("PREDICT(label, x2, x1) GIVEN R").unwrap(), &catalog(), 0).unwrap();
        assert_eq!(b.predictors, [1, 0]);
    }

    #[test]
    fn binding_errors() {
        let unknown = bind(&parse_predict_clause("PREDICT(label) GIVEN S").unwrap(), &catalog(), 0);
        assert!(matches!(unknown, Err(Error::Binding(_))));
        let missing = bind(&parse_predict_clause("PREDICT(label, x3) GIVEN R").unwrap(), &catalog(), 0);
        assert!(matches!(missing, Err(Error::Binding(m)) if m.contains("x3")));
    }

    #[test]
    fn catalog_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("Photos.csv"), "a,b\n1,0\n2,1\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let c = Catalog::load_dir(dir.path()).unwrap();
        let r = c.get("Photos").unwrap();
        assert_eq!(r.columns, ["a", "b"]);
        assert_eq!(r.rows.dim(), (2, 2));
        assert!(c.get("notes").is_none());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,6}(\\.[a-z_][a-z0-9_]{0,6})?".prop_filter("not a keyword", |s| {
            !s.eq_ignore_ascii_case("predict") && !s.eq_ignore_ascii_case("given")
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(
            target in ident(),
            predictors in prop::collection::vec(ident(), 0..5),
            relation in "[A-Z][A-Za-z0-9_]{0,10}",
        ) {
            let mut unique: Vec<String> = Vec::new();
            for p in predictors {
                if p != target && !unique.contains(&p) {
                    unique.push(p);
                }
            }
            prop_assume!(!relation.eq_ignore_ascii_case("given") && !relation.eq_ignore_ascii_case("predict"));
            let q = PaqQuery { target, predictors: unique, training_relation: relation };
            prop_assert_eq!(parse_predict_clause(&q.to_string()).unwrap(), q);
        }
    }
}
