//! CSV datasets: a header row, the feature columns, then the label column.

use std::path::Path;

use robcert::{BoxSpace, OutputSpace, Sample};

use crate::CliError;

/// Reads samples and checks every row against the declared spaces. Without
/// an output space (PCA) the file has feature columns only.
pub fn read_samples(
    path: &Path,
    input: &BoxSpace,
    output: Option<OutputSpace>,
) -> Result<Vec<Sample>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_from(file, input, output).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_from<R: std::io::Read>(
    reader: R,
    input: &BoxSpace,
    output: Option<OutputSpace>,
) -> Result<Vec<Sample>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let m = input.dim();
    let expected = m + usize::from(output.is_some());
    if header.len() != expected {
        return Err(CliError::Data(format!(
            "header has {} columns, the config needs {expected} ({m} features{})",
            header.len(),
            if output.is_some() {
                " then a label"
            } else {
                ""
            }
        )));
    }
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        let mut values = Vec::with_capacity(expected);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "row {row}: column `{}` value `{cell}` is not a number",
                    header[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "row {row}: column `{}` is not finite",
                    header[col]
                )));
            }
            values.push(v);
        }
        for (j, v) in values.iter().take(m).enumerate() {
            let (lo, hi) = (input.lo()[j], input.hi()[j]);
            if !(lo <= *v && *v <= hi) {
                return Err(CliError::Data(format!(
                    "row {row}: column `{}` = {v} lies outside [{lo}, {hi}]",
                    header[j]
                )));
            }
        }
        let y = match output {
            Some(out) => {
                let y = values[m];
                if !out.contains(y) {
                    let allowed = match out {
                        OutputSpace::Binary => "{-1, 1}".to_owned(),
                        OutputSpace::Interval { lo, hi } => format!("[{lo}, {hi}]"),
                    };
                    return Err(CliError::Data(format!(
                        "row {row}: label `{}` = {y} lies outside {allowed}",
                        header[m]
                    )));
                }
                y
            }
            None => 0.0,
        };
        values.truncate(m);
        samples.push(Sample::new(values, y));
    }
    if samples.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoxSpace {
        BoxSpace::cube(2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn reads_rows() {
        let s = read_from(
            "x1,x2,y\n0.1,0.2,1\n0.5, 0.5 ,-1\n".as_bytes(),
            &unit(),
            Some(OutputSpace::Binary),
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].x, vec![0.5, 0.5]);
        assert_eq!(s[1].y, -1.0);
    }

    #[test]
    fn diagnostics_name_rows_and_columns() {
        let err = |text: &str| match read_from(text.as_bytes(), &unit(), Some(OutputSpace::Binary))
        {
            Err(CliError::Data(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(err("x1,x2,y\n0.1,0.2,1\n0.1,1.5,1\n").contains("row 2: column `x2` = 1.5"));
        assert!(err("x1,x2,y\n0.1,abc,1\n").contains("row 1: column `x2` value `abc`"));
        assert!(err("x1,x2,y\n0.1,0.2,0.5\n").contains("label `y`"));
        assert!(err("x1,y\n0.1,1\n").contains("needs 3"));
        assert!(err("x1,x2,y\n").contains("no data rows"));
    }

    #[test]
    fn unlabeled_data() {
        let s = read_from("a,b\n0.3,0.4\n".as_bytes(), &unit(), None).unwrap();
        assert_eq!((s[0].x.clone(), s[0].y), (vec![0.3, 0.4], 0.0));
    }
}
