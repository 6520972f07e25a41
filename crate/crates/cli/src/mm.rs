//! Dense MatrixMarket (`array real general|symmetric|skew-symmetric`) reader.

use specnorm::linalg::{Mat, C64};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Input(format!("MatrixMarket: {}", msg.into()))
}

pub fn parse_dense(text: &str) -> Result<Mat> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let words: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(bad("missing `%%MatrixMarket matrix` header"));
    }
    if words[2] != "array" {
        return Err(bad(format!(
            "only dense `array` files are supported, got `{}`",
            words[2]
        )));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(bad(format!(
            "only real entries are supported, got `{}`",
            words[3]
        )));
    }
    let sym = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(bad(format!("unsupported symmetry `{other}`"))),
    };
    let mut tokens = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'))
        .flat_map(str::split_whitespace);
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| bad("missing size line"))?
            .parse()
            .map_err(|_| bad("bad size line"))
    };
    let (rows, cols) = (dim()?, dim()?);
    if rows == 0 || rows != cols {
        return Err(bad(format!(
            "matrix must be square and non-empty, got {rows}x{cols}"
        )));
    }
    let n = rows;
    let values: Vec<f64> = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| bad(format!("bad entry `{t}`")))
        })
        .collect::<Result<_>>()?;
    let expected = match sym {
        Symmetry::General => n * n,
        Symmetry::Symmetric => n * (n + 1) / 2,
        Symmetry::Skew => n * (n - 1) / 2,
    };
    if values.len() != expected {
        return Err(bad(format!(
            "expected {expected} entries, found {}",
            values.len()
        )));
    }
    let mut m = Mat::zeros(n, n);
    let mut it = values.into_iter();
    // column-major; symmetric variants store the lower triangle
    for j in 0..n {
        let start = match sym {
            Symmetry::General => 0,
            Symmetry::Symmetric => j,
            Symmetry::Skew => j + 1,
        };
        for i in start..n {
            let x = it.next().expect("entry count checked");
            m[(i, j)] = C64::new(x, 0.0);
            match sym {
                Symmetry::General => {}
                Symmetry::Symmetric => m[(j, i)] = C64::new(x, 0.0),
                Symmetry::Skew => m[(j, i)] = C64::new(-x, 0.0),
            }
        }
    }
    Ok(m)
}
