//! JSON surfaces: the datum input schema and the result documents written
//! by the CLI and the FFI layer.
//!
//! Output floats are printed in scientific notation with 17 significant
//! digits, so identical results serialize to identical bytes and every
//! value round-trips exactly.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::datum::{validate_datum, BlDatum, RawDatum, RawExponent};
use crate::error::Error;
use crate::linalg::{from_rows, to_rows};
use crate::opscale::{CapacityResult, KrausSet};
use crate::screen::{FeasibilityReport, Verdict};
use crate::solvers::{Method, SolveResult, TracePoint};
use crate::spd::SpdMatrix;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    /// Malformed JSON or schema mismatch; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

const DECIMAL_HINT: &str = "exponents must be exact {\"num\": int, \"den\": int} pairs: \
     the operator-scaling reduction needs integer numerators c_j over a common denominator c";

/// Exponent as written in a datum file. Decimal numbers are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExponentEntry {
    pub num: i64,
    pub den: i64,
}

impl<'de> Deserialize<'de> for ExponentEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntryVisitor;

        fn exact<E: de::Error>(field: &str, v: serde_json::Number) -> Result<i64, E> {
            v.as_i64().ok_or_else(|| {
                E::custom(format!("{field} = {v} is not an integer; {DECIMAL_HINT}"))
            })
        }

        impl<'de> Visitor<'de> for EntryVisitor {
            type Value = ExponentEntry;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an exponent object {\"num\": int, \"den\": int}")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Err(E::custom(format!(
                    "decimal exponent {v} rejected; {DECIMAL_HINT}"
                )))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Err(E::custom(format!(
                    "bare exponent {v} rejected; {DECIMAL_HINT}"
                )))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Err(E::custom(format!(
                    "bare exponent {v} rejected; {DECIMAL_HINT}"
                )))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let (mut num, mut den) = (None, None);
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "num" if num.is_none() => num = Some(exact("num", map.next_value()?)?),
                        "den" if den.is_none() => den = Some(exact("den", map.next_value()?)?),
                        "num" | "den" => return Err(de::Error::duplicate_field("num/den")),
                        other => return Err(de::Error::unknown_field(other, &["num", "den"])),
                    }
                }
                Ok(ExponentEntry {
                    num: num.ok_or_else(|| de::Error::missing_field("num"))?,
                    den: den.ok_or_else(|| de::Error::missing_field("den"))?,
                })
            }
        }

        deserializer.deserialize_any(EntryVisitor)
    }
}

/// `{"n": int, "maps": [[[row], ...], ...], "p": [{"num": int, "den": int}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumFile {
    pub n: usize,
    pub maps: Vec<Vec<Vec<f64>>>,
    pub p: Vec<ExponentEntry>,
}

impl DatumFile {
    pub fn into_raw(self) -> Result<RawDatum, IoError> {
        let maps = self
            .maps
            .iter()
            .enumerate()
            .map(|(j, rows)| {
                if rows.is_empty() {
                    return Err(IoError::Invalid(Error::InvalidDatum(format!(
                        "map {j} has no rows"
                    ))));
                }
                from_rows(rows).ok_or_else(|| {
                    IoError::Invalid(Error::InvalidDatum(format!("map {j} has ragged rows")))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RawDatum {
            n: self.n,
            maps,
            exponents: self
                .p
                .iter()
                .map(|e| RawExponent::new(e.num, e.den))
                .collect(),
        })
    }

    /// File form of a validated datum, exponents over the common denominator.
    pub fn from_datum(d: &BlDatum) -> Self {
        Self {
            n: d.n(),
            maps: d.maps().iter().map(to_rows).collect(),
            p: d.numerators()
                .iter()
                .map(|&c| ExponentEntry {
                    num: c as i64,
                    den: d.denominator() as i64,
                })
                .collect(),
        }
    }
}

/// Parses datum JSON without validating the mathematics.
pub fn parse_datum_file(text: &str) -> Result<DatumFile, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse(format!("malformed datum JSON: {e}")))
}

/// Parses and validates datum JSON.
pub fn parse_datum(text: &str) -> Result<BlDatum, IoError> {
    Ok(validate_datum(parse_datum_file(text)?.into_raw()?)?)
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_datum(path: &Path) -> Result<BlDatum, IoError> {
    parse_datum(&read_text(path)?)
}

/// Reads a square matrix stored as JSON rows, e.g. a starting point.
pub fn parse_spd(text: &str) -> Result<SpdMatrix, IoError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)
        .map_err(|e| IoError::Parse(format!("malformed matrix JSON: {e}")))?;
    let m = from_rows(&rows).ok_or_else(|| IoError::Parse("matrix rows are ragged".into()))?;
    Ok(SpdMatrix::new(m)?)
}

/// Pretty printer that writes every float as `{:.16e}`.
struct SignificantDigits<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for SignificantDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Deterministic pretty JSON with 17 significant digits per float and a
/// trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let fmt = SignificantDigits {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    std::fs::write(path, to_json(value)).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessJson {
    /// Orthonormal basis vectors of the violating subspace, one per entry.
    pub basis: Rows,
    pub dim: usize,
    pub image_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityJson {
    pub verdict: Verdict,
    pub witness: Option<WitnessJson>,
    pub checked_subspaces: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl FeasibilityJson {
    pub fn new(r: &FeasibilityReport, message: Option<String>) -> Self {
        Self {
            verdict: r.verdict,
            witness: r.witness.as_ref().map(|w| WitnessJson {
                basis: to_rows(&w.basis.transpose()),
                dim: w.dim,
                image_dims: w.image_dims.clone(),
            }),
            checked_subspaces: r.checked_subspaces,
            seed: r.seed,
            message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveJson {
    pub method: Method,
    pub status: RunStatus,
    pub log_bl: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    pub optimizer_x: Rows,
    pub maximizer_a: Vec<Rows>,
    pub trace: Vec<TracePoint>,
}

impl SolveJson {
    pub fn new(r: &SolveResult, status: RunStatus, evidence: Option<String>) -> Self {
        Self {
            method: r.method,
            status,
            log_bl: r.log_bl,
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
            diverged: r.diverged,
            evidence,
            optimizer_x: to_rows(r.optimizer_x.as_matrix()),
            maximizer_a: r
                .maximizer_a
                .blocks
                .iter()
                .map(|a| to_rows(a.as_matrix()))
                .collect(),
            trace: r.trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityJson {
    pub method: Method,
    pub status: RunStatus,
    /// `-log_cap / 2`.
    pub log_bl: f64,
    pub log_cap: f64,
    pub ds_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub left_scaling: Rows,
    pub right_scaling: Rows,
}

impl CapacityJson {
    pub fn new(r: &CapacityResult) -> Self {
        Self {
            method: Method::Capacity,
            status: if r.converged {
                RunStatus::Converged
            } else {
                RunStatus::NotConverged
            },
            log_bl: -0.5 * r.log_cap,
            log_cap: r.log_cap,
            ds_residual: r.ds_residual,
            iterations: r.iterations,
            converged: r.converged,
            left_scaling: to_rows(&r.left_scaling),
            right_scaling: to_rows(&r.right_scaling),
        }
    }
}

/// Block layout of the scaling operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionJson {
    pub input_dim: usize,
    pub output_dim: usize,
    pub c: u64,
    pub copies: usize,
    /// Map index carried by each Kraus operator.
    pub copy_map: Vec<usize>,
    /// First output row of each Kraus operator's block.
    pub block_offsets: Vec<usize>,
    /// `T(I)`, equal to `sum_j c_j B_j^T B_j`.
    pub image_of_identity: Rows,
    pub kraus: Vec<Rows>,
}

impl ReductionJson {
    pub fn new(k: &KrausSet) -> Result<Self, Error> {
        let id = DMatrix::identity(k.input_dim, k.input_dim);
        Ok(Self {
            input_dim: k.input_dim,
            output_dim: k.output_dim,
            c: k.c,
            copies: k.copies(),
            copy_map: k.copy_map.clone(),
            block_offsets: k.block_offsets.clone(),
            image_of_identity: to_rows(&k.apply(&id)?),
            kraus: k.kraus.iter().map(to_rows).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::catalog::*;

    const LW: &str = r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]]], "p": [{"num": 1, "den": 1}, {"num": 1, "den": 1}]}"#;

    #[test]
    fn parses_loomis_whitney() {
        let d = parse_datum(LW).unwrap();
        assert_eq!(d, loomis_whitney());
    }

    #[test]
    fn exponents_normalized_to_common_denominator() {
        let text = r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]], [[1, 1]]],
            "p": [{"num": 2, "den": 3}, {"num": 4, "den": 6}, {"num": 2, "den": 3}]}"#;
        let d = parse_datum(text).unwrap();
        assert_eq!(d.numerators(), &[2, 2, 2]);
        assert_eq!(d.denominator(), 3);
    }

    #[test]
    fn decimal_exponents_rejected_with_reason() {
        let text = r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]]], "p": [1.0, 1.0]}"#;
        let msg = parse_datum(text).unwrap_err().to_string();
        assert!(msg.contains("decimal exponent"), "{msg}");
        assert!(msg.contains("line 1 column"), "{msg}");
        let text = r#"{"n": 2, "maps": [[[1, 0]], [[0, 1]]], "p": [{"num": 0.5, "den": 1}, {"num": 1, "den": 1}]}"#;
        let msg = parse_datum(text).unwrap_err().to_string();
        assert!(msg.contains("not an integer"), "{msg}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let msg = parse_datum("{\n  \"n\": 2,\n  \"maps\": [\n}")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn unknown_fields_and_ragged_maps_rejected() {
        assert!(parse_datum(r#"{"n": 2, "maps": [], "p": [], "extra": 1}"#).is_err());
        let ragged = r#"{"n": 2, "maps": [[[1, 0], [1]]], "p": [{"num": 1, "den": 1}]}"#;
        assert!(matches!(parse_datum(ragged), Err(IoError::Invalid(_))));
    }

    #[test]
    fn datum_file_round_trip() {
        let d = young_triple();
        let text = to_json(&DatumFile::from_datum(&d));
        assert_eq!(parse_datum(&text).unwrap(), d);
    }

    #[test]
    fn floats_have_seventeen_significant_digits() {
        let text = to_json(&[0.1f64, -1.0 / 3.0, 0.0, f64::NAN]);
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("-3.3333333333333331e-1"), "{text}");
        assert!(text.contains("0.0000000000000000e0"), "{text}");
        assert!(text.contains("null"), "{text}");
        let back: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(back[1], Some(-1.0 / 3.0));
    }

    #[test]
    fn output_is_byte_stable() {
        let a = to_json(&DatumFile::from_datum(&hoelder()));
        let b = to_json(&DatumFile::from_datum(&hoelder()));
        assert_eq!(a, b);
    }

    #[test]
    fn spd_from_rows() {
        assert!(parse_spd("[[2, 1], [1, 2]]").is_ok());
        assert!(parse_spd("[[1, 2], [2, 1]]").is_err());
        assert!(parse_spd("[[1, 2], [2]]").is_err());
    }
}
