use super::FitError;
use std::io::Read;
use std::path::Path;

/// Columns x, y and an optional σ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// σ when every value is positive; simulated curves from a single
    /// member carry zeros there.
    pub fn usable_sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref().filter(|s| s.iter().all(|v| *v > 0.0 && v.is_finite()))
    }
}

const X_NAMES: &[&str] = &["x", "x_value", "t", "time", "tau", "p", "power"];
const Y_NAMES: &[&str] = &["y", "signal", "value", "dpl_percent"];
const S_NAMES: &[&str] = &["sigma", "stderr", "stderr_over_members", "err", "error", "dy"];

fn column(header: &[String], names: &[&str]) -> Option<usize> {
    header.iter().position(|h| names.contains(&h.as_str()))
}

/// Reads comma-separated x,y[,sigma]. A first row that is not fully numeric
/// is a header; named columns are matched, otherwise columns are positional.
pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset, FitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut cols = (0usize, 1usize, None::<usize>);
    let mut first = true;
    let mut out = Dataset::default();
    let mut sigma = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FitError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if rec.iter().any(|f| f.parse::<f64>().is_err()) {
                let header: Vec<String> = rec.iter().map(|f| f.to_ascii_lowercase()).collect();
                cols = (
                    column(&header, X_NAMES).unwrap_or(0),
                    column(&header, Y_NAMES).unwrap_or(1),
                    column(&header, S_NAMES).or(if header.len() > 2 { Some(2) } else { None }),
                );
                continue;
            }
            if rec.len() > 2 {
                cols.2 = Some(2);
            }
        }
        let get = |i: usize, name: &str| -> Result<f64, FitError> {
            let f = rec.get(i).ok_or_else(|| FitError::Csv { line, message: format!("missing {name} column") })?;
            f.parse::<f64>().map_err(|_| FitError::Csv { line, message: format!("{name} value {f:?} is not a number") })
        };
        out.x.push(get(cols.0, "x")?);
        out.y.push(get(cols.1, "y")?);
        if let Some(s) = cols.2 {
            sigma.push(get(s, "sigma")?);
        }
    }
    if out.x.is_empty() {
        return Err(FitError::Csv { line: 0, message: "no data rows".into() });
    }
    if cols.2.is_some() {
        out.sigma = Some(sigma);
    }
    Ok(out)
}

pub fn read_csv_path(path: &Path) -> Result<Dataset, FitError> {
    let f = std::fs::File::open(path).map_err(|e| FitError::Csv { line: 0, message: format!("{}: {e}", path.display()) })?;
    parse_csv(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headerless_two_columns() {
        let d = parse_csv("0,1\n1,0.5\n2,0.25\n".as_bytes()).unwrap();
        assert_eq!(d.y, vec![1.0, 0.5, 0.25]);
        assert!(d.sigma.is_none());
    }

    #[test]
    fn named_columns_in_any_order() {
        let d = parse_csv("signal, x_value, stderr_over_members\n1.0, 0.0, 0.1\n0.5, 2.0, 0.1\n".as_bytes()).unwrap();
        assert_eq!(d.x, vec![0.0, 2.0]);
        assert_eq!(d.y, vec![1.0, 0.5]);
        assert_eq!(d.sigma, Some(vec![0.1, 0.1]));
    }

    #[test]
    fn bad_value_reports_line() {
        let err = parse_csv("x,y\n0,1\n1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FitError::Csv { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn zero_sigma_is_not_usable() {
        let d = parse_csv("0,1,0\n1,2,0\n".as_bytes()).unwrap();
        assert!(d.usable_sigma().is_none());
    }
}
