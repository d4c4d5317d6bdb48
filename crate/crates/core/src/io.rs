//! Model files, JSON reports and CSV tables.
//!
//! Floats are written with 17 significant digits; non-finite values become
//! `null` in JSON and `NaN`/`inf` in CSV.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::models::SuspensionModel;
use crate::potential::RealFn;
use crate::sft::{BlockIndex, SymbolicSystem, Theta};
use crate::transfer::{GibbsMeasure, SpectralData};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `{depth, values[]}` with values in lexicographic admissible-word order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnTable {
    pub depth: usize,
    pub values: Vec<f64>,
}

impl FnTable {
    pub fn from_fn(f: &RealFn) -> Self {
        Self {
            depth: f.depth(),
            values: f.values().to_vec(),
        }
    }

    pub fn to_fn(&self, system: &Arc<SymbolicSystem>, what: &str) -> Result<RealFn> {
        if self.depth == 0 {
            return Err(Error::invalid(format!("{what}: depth must be at least 1")));
        }
        let index = BlockIndex::new(system.clone(), self.depth)?;
        if self.values.len() != index.len() {
            return Err(Error::invalid(format!(
                "{what}: depth {} needs {} values (one per admissible word), got {}",
                self.depth,
                index.len(),
                self.values.len()
            )));
        }
        RealFn::from_values(index, self.values.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub alphabet_size: usize,
    pub transitions: Vec<Vec<u8>>,
    pub theta: f64,
    pub roof: FnTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<FnTable>,
    #[serde(default)]
    pub label: String,
}

impl ModelFile {
    pub fn from_model(m: &SuspensionModel) -> Self {
        Self {
            alphabet_size: m.system.alphabet_size(),
            transitions: m.system.to_01(),
            theta: m.theta.get(),
            roof: FnTable::from_fn(&m.roof),
            potential: Some(FnTable::from_fn(&m.potential)),
            label: m.label.clone(),
        }
    }

    pub fn into_model(self) -> Result<SuspensionModel> {
        if self.transitions.len() != self.alphabet_size {
            return Err(Error::invalid(format!(
                "alphabet_size is {} but transitions has {} rows",
                self.alphabet_size,
                self.transitions.len()
            )));
        }
        let system = Arc::new(SymbolicSystem::from_01(&self.transitions)?);
        let roof = self.roof.to_fn(&system, "roof")?;
        let potential = match &self.potential {
            Some(p) => p.to_fn(&system, "potential")?,
            None => RealFn::zero(&system, 1)?,
        };
        SuspensionModel::new(roof, potential, Theta::new(self.theta)?, self.label)
    }
}

/// Parses a model document; syntax errors report line and column.
pub fn parse_model(text: &str) -> Result<SuspensionModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        Error::invalid(format!(
            "malformed model JSON at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    file.into_model()
}

pub fn model_to_json(m: &SuspensionModel) -> String {
    to_json_string(&ModelFile::from_model(m))
}

/// Pretty JSON with 17 significant digits per float.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    write_json(&mut buf, value).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(out, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::other)
}

/// `{:.16e}` for floats; layout delegated to the pretty formatter.
struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", fmt_f64(value))
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// 17 significant digits; exact round trip for every finite double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Long-format CSV: one header line, then one line per row.
pub fn write_csv<W: Write>(mut out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Output wrapper: version stamp, command, every parameter, then the result.
#[derive(Serialize)]
pub struct Report<'a, P: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub params: &'a P,
    pub result: &'a R,
}

impl<'a, P: Serialize, R: Serialize> Report<'a, P, R> {
    pub fn new(command: &'a str, params: &'a P, result: &'a R) -> Self {
        Self {
            tool: "ruellelab",
            version: VERSION,
            command,
            params,
            result,
        }
    }
}

#[derive(Serialize)]
pub struct SpectralJson {
    pub lambda: f64,
    pub pressure: f64,
    pub block_depth: usize,
    pub eigenfunction: Vec<f64>,
    pub eigenmeasure: Vec<f64>,
    pub right_residual: f64,
    pub left_residual: f64,
}

impl From<&SpectralData> for SpectralJson {
    fn from(s: &SpectralData) -> Self {
        Self {
            lambda: s.lambda,
            pressure: s.pressure,
            block_depth: s.eigenfunction.depth(),
            eigenfunction: s.eigenfunction.values().to_vec(),
            eigenmeasure: s.eigenmeasure.values().to_vec(),
            right_residual: s.right_residual,
            left_residual: s.left_residual,
        }
    }
}

#[derive(Serialize)]
pub struct GibbsJson {
    pub depth: usize,
    pub words: Vec<String>,
    pub masses: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

impl From<&GibbsMeasure> for GibbsJson {
    fn from(g: &GibbsMeasure) -> Self {
        Self {
            depth: g.block_depth(),
            words: g
                .masses
                .index()
                .words()
                .iter()
                .map(|w| crate::sft::Word(w.clone()).to_string())
                .collect(),
            masses: g.masses.values().to_vec(),
            c1: g.c1,
            c2: g.c2,
        }
    }
}
