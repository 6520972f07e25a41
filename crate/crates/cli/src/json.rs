//! JSON encoding of artifacts: objects one key per line, arrays inline, every
//! float written with 17 significant digits so a reload is bitwise exact.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use specnorm::linalg::{CVec, Mat, C64};
use specnorm::FieldTag;

use crate::error::{CliError, Result};

#[derive(Default)]
struct ArtifactFormatter {
    /// One flag per open object: whether it has received a key yet.
    objects: Vec<bool>,
}

impl ArtifactFormatter {
    fn newline<W: ?Sized + io::Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.objects.len() {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for ArtifactFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.objects.push(false);
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        let filled = self.objects.pop().unwrap_or(false);
        if filled {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if let Some(top) = self.objects.last_mut() {
            *top = true;
        }
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }
}

/// Serialized artifact bytes, newline terminated.
pub fn to_artifact<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ArtifactFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Input(format!("cannot encode artifact: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldName {
    Real,
    Complex,
}

impl From<FieldTag> for FieldName {
    fn from(f: FieldTag) -> Self {
        match f {
            FieldTag::Real => FieldName::Real,
            FieldTag::Complex => FieldName::Complex,
        }
    }
}

impl From<FieldName> for FieldTag {
    fn from(f: FieldName) -> Self {
        match f {
            FieldName::Real => FieldTag::Real,
            FieldName::Complex => FieldTag::Complex,
        }
    }
}

/// A number, or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn encode(field: FieldTag, z: C64) -> Self {
        match field {
            FieldTag::Real => Scalar::Real(z.re),
            FieldTag::Complex => Scalar::Complex([z.re, z.im]),
        }
    }

    pub fn value(self) -> C64 {
        match self {
            Scalar::Real(x) => C64::new(x, 0.0),
            Scalar::Complex([re, im]) => C64::new(re, im),
        }
    }
}

pub type MatrixJson = Vec<Vec<Scalar>>;

pub fn encode_matrix(field: FieldTag, m: &Mat) -> MatrixJson {
    m.row_iter()
        .map(|row| row.iter().map(|&z| Scalar::encode(field, z)).collect())
        .collect()
}

pub fn decode_matrix(rows: &MatrixJson, n: usize, what: &str) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Input(format!("{what} must be {n}x{n}")));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j].value()))
}

pub fn encode_vector(field: FieldTag, v: &CVec) -> Vec<Scalar> {
    v.iter().map(|&z| Scalar::encode(field, z)).collect()
}

pub fn decode_vector(v: &[Scalar]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|s| s.value()))
}
