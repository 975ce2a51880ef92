use rustc_hash::FxHashMap;

use super::ModelError;
use crate::terms::Term;

/// Dense vectors for `vec:<id>` tokens.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    dim: usize,
    rows: FxHashMap<String, Vec<f64>>,
}

pub const FEATURE_PREFIX: &str = "vec:";

impl FeatureTable {
    pub fn new(dim: usize) -> FeatureTable {
        FeatureTable {
            dim,
            rows: FxHashMap::default(),
        }
    }

    pub fn empty() -> FeatureTable {
        FeatureTable::default()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, id: &str, vector: Vec<f64>) -> Result<(), ModelError> {
        if self.rows.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(ModelError::Invalid {
                model: "features".into(),
                message: format!("vector {id} has dimension {}, expected {}", vector.len(), self.dim),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(id.to_owned()));
        }
        self.rows.insert(id.to_owned(), vector);
        Ok(())
    }

    /// Vector of a `vec:<id>` token.
    pub fn vector(&self, token: &Term) -> Result<&[f64], ModelError> {
        let name = match token {
            Term::Atom(s) => s.as_str(),
            other => return Err(ModelError::MissingFeature(other.to_string())),
        };
        let id = name.strip_prefix(FEATURE_PREFIX).unwrap_or(name);
        self.rows
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| ModelError::MissingFeature(name.to_owned()))
    }

    /// Reads `id,x1,...,xd` lines; blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str) -> Result<FeatureTable, ModelError> {
        let mut table = FeatureTable::empty();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let id = fields.next().unwrap().trim();
            let values: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| ModelError::Config(format!("features line {}: {e}", lineno + 1)))?;
            table.insert(id, values)?;
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut ids: Vec<&String> = self.rows.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            out.push_str(id);
            for x in &self.rows[id] {
                out.push(',');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = FeatureTable::from_csv("# id, features\na,1,0.5\nb,0,-2\n").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.vector(&Term::atom("vec:b")).unwrap(), &[0.0, -2.0]);
        let again = FeatureTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(again.vector(&Term::atom("vec:a")).unwrap(), &[1.0, 0.5]);
        assert!(FeatureTable::from_csv("a,1\nb,1,2\n").is_err());
        assert!(matches!(FeatureTable::from_csv("a,NaN\n"), Err(ModelError::NonFinite(_))));
    }
}
