//! Minimal ARFF reader: `@relation`, `@attribute` (numeric, string, nominal)
//! and dense `@data` rows with `?` for missing values.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AttrKind {
    Numeric,
    String,
    Nominal(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttrKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArffValue {
    Missing,
    Number(f64),
    Text(String),
}

impl ArffValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ArffValue::Number(v) => Some(*v),
            ArffValue::Text(s) => s.trim().parse().ok(),
            ArffValue::Missing => None,
        }
    }

    pub fn as_text(&self) -> Option<String> {
        match self {
            ArffValue::Text(s) => Some(s.clone()),
            ArffValue::Number(v) => Some(format_number(*v)),
            ArffValue::Missing => None,
        }
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arff {
    pub relation: String,
    pub attributes: Vec<Attribute>,
    pub rows: Vec<Vec<ArffValue>>,
}

impl Arff {
    /// Case-insensitive attribute lookup.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name.eq_ignore_ascii_case(name))
    }
}

/// Splits on commas outside single or double quotes and strips the quotes.
fn split_fields(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) if c == '\\' => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            Some(_) => cur.push(c),
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == ',' => fields.push(std::mem::take(&mut cur).trim().to_string()),
            None => cur.push(c),
        }
    }
    fields.push(cur.trim().to_string());
    fields
}

/// Reads the next whitespace-delimited token, honoring quotes.
fn next_token(s: &str) -> (String, &str) {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, q @ ('\'' | '"'))) => {
            for (i, c) in chars {
                if c == q {
                    return (s[1..i].to_string(), &s[i + 1..]);
                }
            }
            (s[1..].to_string(), "")
        }
        Some(_) => {
            let end = s.find(char::is_whitespace).unwrap_or(s.len());
            (s[..end].to_string(), &s[end..])
        }
        None => (String::new(), ""),
    }
}

fn parse_attribute(rest: &str, file: &str, lineno: usize) -> Result<Attribute> {
    let (name, rest) = next_token(rest);
    let spec = rest.trim();
    if name.is_empty() || spec.is_empty() {
        return Err(Error::format(file, format!("line {lineno}: malformed @attribute")));
    }
    let kind = if spec.starts_with('{') {
        let inner = spec.trim_start_matches('{').trim_end_matches('}');
        AttrKind::Nominal(split_fields(inner))
    } else {
        match spec.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => AttrKind::Numeric,
            "string" => AttrKind::String,
            other => {
                return Err(Error::format(
                    file,
                    format!("line {lineno}: unsupported attribute type `{other}`"),
                ))
            }
        }
    };
    Ok(Attribute { name, kind })
}

pub fn parse_arff(text: &str, file: &str) -> Result<Arff> {
    let mut relation = String::new();
    let mut attributes = Vec::new();
    let mut rows = Vec::new();
    let mut in_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                relation = next_token(&line[9..]).0;
            } else if lower.starts_with("@attribute") {
                attributes.push(parse_attribute(&line[10..], file, lineno)?);
            } else if lower.starts_with("@data") {
                in_data = true;
            } else {
                return Err(Error::format(file, format!("line {lineno}: unexpected header line")));
            }
            continue;
        }
        if line.starts_with('{') {
            return Err(Error::format(file, format!("line {lineno}: sparse rows are not supported")));
        }
        let fields = split_fields(line);
        if fields.len() != attributes.len() {
            return Err(Error::format(
                file,
                format!("line {lineno}: {} values for {} attributes", fields.len(), attributes.len()),
            ));
        }
        let row = fields
            .into_iter()
            .zip(&attributes)
            .map(|(f, attr)| {
                if f == "?" {
                    return Ok(ArffValue::Missing);
                }
                match attr.kind {
                    AttrKind::Numeric => f.parse::<f64>().map(ArffValue::Number).map_err(|_| {
                        Error::format(file, format!("line {lineno}: `{f}` is not numeric ({})", attr.name))
                    }),
                    _ => Ok(ArffValue::Text(f)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if !in_data {
        return Err(Error::format(file, "no @data section"));
    }
    Ok(Arff { relation, attributes, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUNS: &str = "% comment\n@RELATION runs\n\n@ATTRIBUTE instance_id STRING\n@attribute repetition NUMERIC\n@attribute 'algorithm' {a,'b c'}\n@attribute runtime numeric\n@attribute runstatus {ok,timeout}\n@DATA\ni1,1,a,1.5,ok\n'i,2',1,'b c',?,timeout\n";

    #[test]
    fn parses_header_and_rows() {
        let arff = parse_arff(RUNS, "runs.arff").unwrap();
        assert_eq!(arff.relation, "runs");
        assert_eq!(arff.attributes.len(), 5);
        assert_eq!(arff.attributes[2].kind, AttrKind::Nominal(vec!["a".into(), "b c".into()]));
        assert_eq!(arff.rows[0][3], ArffValue::Number(1.5));
        assert_eq!(arff.rows[1][0], ArffValue::Text("i,2".into()));
        assert_eq!(arff.rows[1][3], ArffValue::Missing);
        assert_eq!(arff.column("RUNSTATUS"), Some(4));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_arff("@relation x\n@attribute a numeric\n", "f").is_err());
        assert!(parse_arff("@relation x\n@attribute a date\n@data\n", "f").is_err());
        assert!(parse_arff("@relation x\n@attribute a numeric\n@data\n{0 1}\n", "f").is_err());
        assert!(parse_arff("@relation x\n@attribute a numeric\n@data\n1,2\n", "f").is_err());
        assert!(parse_arff("@relation x\n@attribute a numeric\n@data\nabc\n", "f").is_err());
    }
}
