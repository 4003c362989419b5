//! In-memory reader for NetCDF classic (CDF-1) and 64-bit offset (CDF-2)
//! files, the formats returned by OPeNDAP/ERDDAP subset requests.
//!
//! Values are big-endian. Record variables are interleaved: record `r` of a
//! variable starts at `begin + r * recsize`.

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NcError {
    #[error("not a NetCDF classic file")]
    BadMagic,
    #[error("unsupported NetCDF format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated file at offset {0}")]
    Truncated(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("no variable named `{0}`")]
    NoSuchVariable(String),
    #[error("variable `{name}` has type {kind:?}, expected numeric")]
    NotNumeric { name: String, kind: NcType },
    #[error("bad time units `{0}`")]
    TimeUnits(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcType {
    Byte,
    Char,
    Short,
    Int,
    Float,
    Double,
}

impl NcType {
    fn from_code(code: u32) -> Result<Self, NcError> {
        Ok(match code {
            1 => NcType::Byte,
            2 => NcType::Char,
            3 => NcType::Short,
            4 => NcType::Int,
            5 => NcType::Float,
            6 => NcType::Double,
            other => return Err(NcError::Header(format!("unknown nc_type {other}"))),
        })
    }

    pub fn size(self) -> usize {
        match self {
            NcType::Byte | NcType::Char => 1,
            NcType::Short => 2,
            NcType::Int | NcType::Float => 4,
            NcType::Double => 8,
        }
    }

    /// Library default fill value for the type.
    fn default_fill(self) -> Option<f64> {
        match self {
            NcType::Byte => Some(-127.0),
            NcType::Char => None,
            NcType::Short => Some(-32767.0),
            NcType::Int => Some(-2147483647.0),
            NcType::Float => Some(9.969_209_968_386_869e36_f32 as f64),
            NcType::Double => Some(9.969_209_968_386_869e36),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Text(String),
    Numbers(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcAttr {
    pub name: String,
    pub value: AttrValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcDim {
    pub name: String,
    /// 0 for the unlimited dimension.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcVar {
    pub name: String,
    pub dim_ids: Vec<usize>,
    pub attrs: Vec<NcAttr>,
    pub nc_type: NcType,
    pub vsize: u64,
    pub begin: u64,
}

impl NcVar {
    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        self.attrs.iter().find(|a| a.name == name).map(|a| &a.value)
    }

    pub fn attr_f64(&self, name: &str) -> Option<f64> {
        match self.attr(name)? {
            AttrValue::Numbers(v) => v.first().copied(),
            AttrValue::Text(t) => t.trim().parse().ok(),
        }
    }

    pub fn attr_str(&self, name: &str) -> Option<&str> {
        match self.attr(name)? {
            AttrValue::Text(t) => Some(t.as_str()),
            AttrValue::Numbers(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NcFile {
    pub version: u8,
    pub numrecs: usize,
    pub dims: Vec<NcDim>,
    pub attrs: Vec<NcAttr>,
    pub vars: Vec<NcVar>,
    data: Vec<u8>,
    recsize: u64,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NcError> {
        let end = self.pos.checked_add(n).ok_or(NcError::Truncated(self.pos))?;
        let out = self.buf.get(self.pos..end).ok_or(NcError::Truncated(self.pos))?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NcError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NcError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, NcError> {
        let n = self.u32()? as usize;
        // Every counted element occupies at least one byte.
        if n > self.buf.len() {
            return Err(NcError::Header(format!("count {n} exceeds file size")));
        }
        Ok(n)
    }

    fn padded(&mut self, n: usize) -> Result<&'a [u8], NcError> {
        let out = self.take(n)?;
        self.take((4 - n % 4) % 4)?;
        Ok(out)
    }

    fn name(&mut self) -> Result<String, NcError> {
        let n = self.len()?;
        let raw = self.padded(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| NcError::Header("name is not UTF-8".into()))
    }
}

const NC_DIMENSION: u32 = 0x0A;
const NC_VARIABLE: u32 = 0x0B;
const NC_ATTRIBUTE: u32 = 0x0C;
const STREAMING: u32 = 0xFFFF_FFFF;

fn decode(kind: NcType, raw: &[u8]) -> Vec<f64> {
    match kind {
        NcType::Byte => raw.iter().map(|&b| b as i8 as f64).collect(),
        NcType::Char => raw.iter().map(|&b| b as f64).collect(),
        NcType::Short => raw
            .chunks_exact(2)
            .map(|c| i16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        NcType::Int => raw
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        NcType::Float => raw
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        NcType::Double => raw
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    }
}

fn read_attrs(cur: &mut Cursor<'_>) -> Result<Vec<NcAttr>, NcError> {
    let tag = cur.u32()?;
    let n = cur.len()?;
    match (tag, n) {
        (0, 0) => return Ok(Vec::new()),
        (NC_ATTRIBUTE, _) => {}
        _ => return Err(NcError::Header(format!("expected attribute list, found tag {tag:#x}"))),
    }
    let mut attrs = Vec::with_capacity(n);
    for _ in 0..n {
        let name = cur.name()?;
        let kind = NcType::from_code(cur.u32()?)?;
        let count = cur.len()?;
        let raw = cur.padded(count * kind.size())?;
        let value = match kind {
            NcType::Char => AttrValue::Text(
                String::from_utf8_lossy(raw)
                    .trim_end_matches('\0')
                    .to_string(),
            ),
            _ => AttrValue::Numbers(decode(kind, raw)),
        };
        attrs.push(NcAttr { name, value });
    }
    Ok(attrs)
}

impl NcFile {
    pub fn parse(bytes: &[u8]) -> Result<Self, NcError> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let magic = cur.take(4).map_err(|_| NcError::BadMagic)?;
        if &magic[..3] != b"CDF" {
            return Err(NcError::BadMagic);
        }
        let version = magic[3];
        if version != 1 && version != 2 {
            return Err(NcError::UnsupportedVersion(version));
        }
        let raw_numrecs = cur.u32()?;

        let tag = cur.u32()?;
        let ndims = cur.len()?;
        let mut dims = Vec::with_capacity(ndims);
        match (tag, ndims) {
            (0, 0) => {}
            (NC_DIMENSION, _) => {
                for _ in 0..ndims {
                    let name = cur.name()?;
                    let len = cur.u32()? as usize;
                    dims.push(NcDim { name, len });
                }
            }
            _ => return Err(NcError::Header(format!("expected dimension list, found tag {tag:#x}"))),
        }

        let attrs = read_attrs(&mut cur)?;

        let tag = cur.u32()?;
        let nvars = cur.len()?;
        let mut vars = Vec::with_capacity(nvars);
        match (tag, nvars) {
            (0, 0) => {}
            (NC_VARIABLE, _) => {
                for _ in 0..nvars {
                    let name = cur.name()?;
                    let ndim = cur.len()?;
                    let mut dim_ids = Vec::with_capacity(ndim);
                    for _ in 0..ndim {
                        let id = cur.u32()? as usize;
                        if id >= dims.len() {
                            return Err(NcError::Header(format!("variable {name} uses unknown dimension {id}")));
                        }
                        dim_ids.push(id);
                    }
                    let vattrs = read_attrs(&mut cur)?;
                    let nc_type = NcType::from_code(cur.u32()?)?;
                    let vsize = cur.u32()? as u64;
                    let begin = if version == 1 { cur.u32()? as u64 } else { cur.u64()? };
                    vars.push(NcVar {
                        name,
                        dim_ids,
                        attrs: vattrs,
                        nc_type,
                        vsize,
                        begin,
                    });
                }
            }
            _ => return Err(NcError::Header(format!("expected variable list, found tag {tag:#x}"))),
        }

        let mut file = NcFile {
            version,
            numrecs: 0,
            dims,
            attrs,
            vars,
            data: bytes.to_vec(),
            recsize: 0,
        };
        let record_vars: Vec<&NcVar> = file.vars.iter().filter(|v| file.is_record_var(v)).collect();
        file.recsize = match record_vars.as_slice() {
            [] => 0,
            // A lone record variable is stored without per-record padding.
            [only] => (file.record_elems(only) * only.nc_type.size()) as u64,
            many => many.iter().map(|v| v.vsize).sum(),
        };
        file.numrecs = if raw_numrecs == STREAMING {
            match record_vars.iter().map(|v| v.begin).min() {
                Some(first) if file.recsize > 0 => {
                    ((bytes.len() as u64).saturating_sub(first) / file.recsize) as usize
                }
                _ => 0,
            }
        } else {
            raw_numrecs as usize
        };
        Ok(file)
    }

    fn is_record_var(&self, var: &NcVar) -> bool {
        var.dim_ids.first().is_some_and(|&d| self.dims[d].len == 0)
    }

    fn record_elems(&self, var: &NcVar) -> usize {
        var.dim_ids.iter().skip(1).map(|&d| self.dims[d].len).product()
    }

    pub fn var(&self, name: &str) -> Result<&NcVar, NcError> {
        self.vars
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| NcError::NoSuchVariable(name.to_string()))
    }

    pub fn has_var(&self, name: &str) -> bool {
        self.vars.iter().any(|v| v.name == name)
    }

    pub fn global_attr(&self, name: &str) -> Option<&AttrValue> {
        self.attrs.iter().find(|a| a.name == name).map(|a| &a.value)
    }

    /// Dimension lengths of a variable, with the record dimension resolved.
    pub fn shape(&self, name: &str) -> Result<Vec<usize>, NcError> {
        let var = self.var(name)?;
        Ok(var
            .dim_ids
            .iter()
            .map(|&d| if self.dims[d].len == 0 { self.numrecs } else { self.dims[d].len })
            .collect())
    }

    pub fn dim_names(&self, name: &str) -> Result<Vec<&str>, NcError> {
        let var = self.var(name)?;
        Ok(var.dim_ids.iter().map(|&d| self.dims[d].name.as_str()).collect())
    }

    /// Raw stored values, records concatenated, without masking or unpacking.
    pub fn read_raw(&self, name: &str) -> Result<Vec<f64>, NcError> {
        let var = self.var(name)?;
        let size = var.nc_type.size();
        let slice = |start: u64, len: usize| -> Result<&[u8], NcError> {
            let start = usize::try_from(start).map_err(|_| NcError::Truncated(usize::MAX))?;
            self.data
                .get(start..start.saturating_add(len))
                .ok_or(NcError::Truncated(start))
        };
        if self.is_record_var(var) {
            let per_record = self.record_elems(var) * size;
            let mut out = Vec::with_capacity(per_record / size.max(1) * self.numrecs);
            for r in 0..self.numrecs {
                let start = var.begin + r as u64 * self.recsize;
                out.extend(decode(var.nc_type, slice(start, per_record)?));
            }
            Ok(out)
        } else {
            let count: usize = self.shape(name)?.iter().product();
            Ok(decode(var.nc_type, slice(var.begin, count * size)?))
        }
    }

    /// Values with fill/missing/valid-range masking and scale/offset applied.
    pub fn read_masked(&self, name: &str) -> Result<Vec<Option<f64>>, NcError> {
        let var = self.var(name)?;
        if var.nc_type == NcType::Char {
            return Err(NcError::NotNumeric {
                name: name.to_string(),
                kind: var.nc_type,
            });
        }
        let fill = var.attr_f64("_FillValue").or(var.nc_type.default_fill());
        let missing: Vec<f64> = match var.attr("missing_value") {
            Some(AttrValue::Numbers(v)) => v.clone(),
            _ => Vec::new(),
        };
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        if let Some(AttrValue::Numbers(r)) = var.attr("valid_range") {
            if r.len() == 2 {
                lo = r[0];
                hi = r[1];
            }
        }
        if let Some(v) = var.attr_f64("valid_min") {
            lo = v;
        }
        if let Some(v) = var.attr_f64("valid_max") {
            hi = v;
        }
        let scale = var.attr_f64("scale_factor").unwrap_or(1.0);
        let offset = var.attr_f64("add_offset").unwrap_or(0.0);
        let is_float = matches!(var.nc_type, NcType::Float | NcType::Double);
        let same = |a: f64, b: f64| {
            if is_float {
                // Float fills are compared at the stored precision.
                a == b || (a as f32) == (b as f32)
            } else {
                a == b
            }
        };
        Ok(self
            .read_raw(name)?
            .into_iter()
            .map(|raw| {
                if raw.is_nan()
                    || fill.is_some_and(|f| same(raw, f))
                    || missing.iter().any(|&m| same(raw, m))
                    || raw < lo
                    || raw > hi
                {
                    return None;
                }
                let v = raw * scale + offset;
                v.is_finite().then_some(v)
            })
            .collect())
    }

    /// Decodes a CF time coordinate (`<unit> since <epoch>`) into UTC instants.
    pub fn read_times(&self, name: &str) -> Result<Vec<DateTime<Utc>>, NcError> {
        let var = self.var(name)?;
        let units = var
            .attr_str("units")
            .ok_or_else(|| NcError::TimeUnits(format!("{name} has no units")))?;
        let (step, epoch) = parse_cf_time_units(units)?;
        self.read_raw(name)?
            .into_iter()
            .map(|v| {
                let millis = (v * step).round();
                if !millis.is_finite() || millis.abs() > 1e15 {
                    return Err(NcError::TimeUnits(format!("time value {v} out of range")));
                }
                Ok(epoch + Duration::milliseconds(millis as i64))
            })
            .collect()
    }
}

/// Returns milliseconds per unit and the epoch.
pub fn parse_cf_time_units(units: &str) -> Result<(f64, DateTime<Utc>), NcError> {
    let bad = || NcError::TimeUnits(units.to_string());
    let (unit, epoch) = units.split_once(" since ").ok_or_else(bad)?;
    let step = match unit.trim().to_ascii_lowercase().as_str() {
        "seconds" | "second" | "secs" | "sec" | "s" => 1_000.0,
        "minutes" | "minute" | "mins" | "min" => 60_000.0,
        "hours" | "hour" | "hrs" | "hr" | "h" => 3_600_000.0,
        "days" | "day" | "d" => 86_400_000.0,
        _ => return Err(bad()),
    };
    let text = epoch.trim().trim_end_matches("UTC").trim().trim_end_matches('Z');
    let text = text.replace('T', " ");
    let parsed = NaiveDateTime::parse_from_str(&text, "%Y-%m-%d %H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(&text, "%Y-%m-%d %H:%M"))
        .or_else(|_| NaiveDate::parse_from_str(&text, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).unwrap()))
        .map_err(|_| bad())?;
    Ok((step, parsed.and_utc()))
}
