//! Datasets as comma-separated text: header `x1,...,xd,y` with an optional
//! trailing `group` column.

use std::fs;
use std::path::Path;

use mdsplit_core::data::Dataset;

use crate::error::{CliError, Result};

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, format_dataset(dataset)).map_err(CliError::io(path))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_dataset(&text, path)
}

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn format_dataset(dataset: &Dataset) -> String {
    let d = dataset.n_features();
    let groups = dataset.group_labels();
    let mut out = String::new();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if groups.is_some() {
        header.push("group".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..dataset.len() {
        let mut cells: Vec<String> = dataset.row(i).iter().map(|&v| num(v)).collect();
        cells.push(num(dataset.response(i)));
        if let Some(g) = groups {
            cells.push(g[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::parse(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_group = names.last() == Some(&"group");
    let d = names.len().saturating_sub(1 + has_group as usize);
    let expected: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    if d == 0 || names[..d + 1] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(CliError::parse(path, 1, format!("header must be x1..xd,y[,group], found `{}`", names.join(","))));
    }

    let (mut features, mut responses, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(CliError::parse(path, line, format!("expected {} columns, found {}", names.len(), record.len())));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if has_group && j == names.len() - 1 {
                groups.push(
                    cell.parse::<u32>()
                        .map_err(|_| CliError::parse(path, line, format!("group `{cell}` is not a nonnegative integer")))?,
                );
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("column {} value `{cell}` is not a number", names[j])))?;
            if !v.is_finite() {
                return Err(CliError::parse(path, line, format!("column {} value `{cell}` is not finite", names[j])));
            }
            if j < d {
                features.push(v);
            } else {
                responses.push(v);
            }
        }
    }
    Ok(Dataset::new(features, d, responses, has_group.then_some(groups))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdsplit_core::data::{generate, GeneratorConfig};

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text, Path::new("t.csv"))
    }

    #[test]
    fn minimal_file() {
        let d = parse("x1,y\n0,1\n").unwrap();
        assert_eq!((d.len(), d.n_features()), (1, 1));
        assert_eq!(d.responses(), &[1.0]);
        assert!(d.group_labels().is_none());
    }

    #[test]
    fn round_trips_exactly() {
        for cfg in [GeneratorConfig::example1(50, 3), GeneratorConfig::example2_surrogate(50, 3)] {
            let d = generate(&cfg).unwrap();
            assert_eq!(parse(&format_dataset(&d)).unwrap(), d);
        }
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse("x1,y\na,b\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }), "{e}");
        let e = parse("x1,y\n1,2\n3\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
        let e = parse("x1,y\n1,inf\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }), "{e}");
        assert!(matches!(parse("a,y\n1,2\n").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(matches!(parse("x1,y,group\n1,2,-1\n").unwrap_err(), CliError::Parse { line: 2, .. }));
    }

    proptest::proptest! {
        #[test]
        fn any_finite_table_round_trips(
            d in 1usize..4,
            rows in proptest::collection::vec(proptest::collection::vec(-1e300f64..1e300, 4), 1..20),
            labelled: bool,
        ) {
            let xs: Vec<f64> = rows.iter().flat_map(|r| r[..d].to_vec()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r[3]).collect();
            let groups = labelled.then(|| (0..rows.len() as u32).map(|i| i % 4).collect());
            let data = Dataset::new(xs, d, ys, groups).unwrap();
            proptest::prop_assert_eq!(parse(&format_dataset(&data)).unwrap(), data);
        }
    }
}
