use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Seventeen significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn flag(b: bool) -> String {
    b.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// `key,value` rows.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    rows: Vec<(String, String)>,
}

impl Summary {
    pub fn text(&mut self, key: &str, value: impl Into<String>) {
        self.rows.push((key.into(), value.into()));
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.text(key, num(v));
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("summary.csv", &["key", "value"]);
        for (k, v) in &self.rows {
            t.push(vec![k.clone(), v.clone()]);
        }
        t
    }
}

/// Two-column whitespace-separated data with a `#` header line.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(x_label: &str, y_label: &str) -> Self {
        Profile {
            x_label: x_label.into(),
            y_label: y_label.into(),
            points: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("# {} {}\n", self.x_label, self.y_label);
        for (x, y) in &self.points {
            out.push_str(&format!("{} {}\n", num(*x), num(*y)));
        }
        out.into_bytes()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub profile: Option<Profile>,
}

impl Outputs {
    /// Writes every file under `dir`, returning the paths in write order.
    pub fn write(&self, dir: &Path, prefix: &str) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files = vec![(self.summary.table().name.clone(), self.summary.table().to_bytes()?)];
        for t in &self.tables {
            files.push((t.name.clone(), t.to_bytes()?));
        }
        if let Some(p) = &self.profile {
            files.push(("profile.dat".into(), p.to_bytes()));
        }
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(format!("{prefix}{name}"));
            let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            f.write_all(&bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_has_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn csv_uses_lf_and_quotes() {
        let mut s = Summary::default();
        s.text("config", r#"{"a":1,"b":"x"}"#);
        s.value("I", 0.5);
        let bytes = s.table().to_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(
            text,
            "key,value\nconfig,\"{\"\"a\"\":1,\"\"b\"\":\"\"x\"\"}\"\nI,5.0000000000000000e-1\n"
        );
    }

    #[test]
    fn profile_layout() {
        let mut p = Profile::new("r", "v");
        p.points.push((1.0, 2.0));
        assert_eq!(
            String::from_utf8(p.to_bytes()).unwrap(),
            "# r v\n1.0000000000000000e0 2.0000000000000000e0\n"
        );
    }
}
