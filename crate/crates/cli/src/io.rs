//! Snapshot files and the diagnostics series CSV.
//!
//! Snapshot layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `ECOLISNP` |
//! | 4     | format version (u32) |
//! | 4 × 3 | dim, nx, ny (u32) |
//! | 8 × 3 | hx, hy, time (f64) |
//! | 4     | field count (u32) |
//! | ...   | per field: name length (u8) and name bytes |
//! | ...   | per field: nx·ny f64 values, row-major, x fastest |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use colony_core::diagnostics::MassRecord;
use colony_core::stepper::SimState;
use colony_core::{Field, Grid};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"ECOLISNP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl IoError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
        move |source| IoError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: u32,
    pub nx: u32,
    pub ny: u32,
    pub hx: f64,
    pub hy: f64,
    pub time: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn from_state(s: &SimState) -> Self {
        let g = s.grid();
        Snapshot {
            dim: g.dim() as u32,
            nx: g.nx() as u32,
            ny: g.ny() as u32,
            hx: g.hx(),
            hy: g.hy(),
            time: s.t,
            fields: s.fields().iter().map(|(n, f)| (n.to_string(), f.values().to_vec())).collect(),
        }
    }

    pub fn grid(&self) -> Option<Grid> {
        let (nx, ny) = (self.nx as usize, self.ny as usize);
        match self.dim {
            1 => Grid::line(self.hx * nx as f64, nx).ok(),
            2 => Grid::rect(self.hx * nx as f64, self.hy * ny as f64, nx, ny).ok(),
            _ => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Rebuild the state, requiring the u, c, n, w fields.
    pub fn to_state(&self) -> Option<SimState> {
        let g = self.grid()?;
        let f = |name| Field::from_values(&g, self.field(name)?.to_vec()).ok();
        SimState::new(f("u")?, f("c")?, f("n")?, f("w")?, self.time).ok()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.dim, self.nx, self.ny] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.hx, self.hy, self.time] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.fields.len() as u32).to_le_bytes())?;
        for (name, _) in &self.fields {
            let bytes = name.as_bytes();
            let len = u8::try_from(bytes.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "field name too long"))?;
            w.write_all(&[len])?;
            w.write_all(bytes)?;
        }
        for (_, values) in &self.fields {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Parse a snapshot; the error string describes the first inconsistency.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, String> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| e.to_string())?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err("not a snapshot file (bad magic)".into());
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let (dim, nx, ny) = (cur.u32()?, cur.u32()?, cur.u32()?);
        let (hx, hy, time) = (cur.f64()?, cur.f64()?, cur.f64()?);
        let count = cur.u32()? as usize;
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cur.take(1)?[0] as usize;
            let name = std::str::from_utf8(cur.take(len)?).map_err(|_| "field name is not UTF-8".to_string())?;
            names.push(name.to_string());
        }
        let cells = nx as usize * ny as usize;
        let expected = cells * count * 8;
        if buf.len() - cur.pos != expected {
            return Err(format!("payload is {} bytes, header implies {expected}", buf.len() - cur.pos));
        }
        let fields = names
            .into_iter()
            .map(|n| {
                let values = (0..cells).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
                Ok((n, values))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Snapshot { dim, nx, ny, hx, hy, time, fields })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let file = File::create(path).map_err(IoError::io(path))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(IoError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let file = File::open(path).map_err(IoError::io(path))?;
        Self::read_from(&mut BufReader::new(file)).map_err(|msg| IoError::Format { path: path.into(), msg })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err("unexpected end of file".into());
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn snapshot_name(index: usize) -> String {
    format!("snap_{index:05}.bin")
}

/// Snapshots in `dir` sorted by time.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(f64, PathBuf)>, IoError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(IoError::io(dir))? {
        let path = entry.map_err(IoError::io(dir))?.path();
        let is_snap = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("snap_") && n.ends_with(".bin"));
        if is_snap {
            out.push((Snapshot::load(&path)?.time, path));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub const SERIES_COLUMNS: [&str; 8] = ["t", "M_u", "M_c", "M_n", "M_w", "total", "sup_u", "sup_c"];

/// Render with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series<W: Write>(w: W, records: &[MassRecord], moments: &[f64]) -> Result<(), csv::Error> {
    let with_i = !moments.is_empty();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = SERIES_COLUMNS.to_vec();
    if with_i {
        header.push("I");
    }
    out.write_record(&header)?;
    for (k, r) in records.iter().enumerate() {
        let mut row: Vec<String> =
            [r.t, r.m_u, r.m_c, r.m_n, r.m_w, r.total, r.sup_u, r.sup_c].iter().map(|v| fmt_real(*v)).collect();
        if with_i {
            row.push(fmt_real(moments.get(k).copied().unwrap_or(f64::NAN)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_series(path: &Path, records: &[MassRecord], moments: &[f64]) -> Result<(), IoError> {
    let file = File::create(path).map_err(IoError::io(path))?;
    write_series(BufWriter::new(file), records, moments).map_err(|source| IoError::Csv { path: path.into(), source })
}

/// Inverse of [`write_series`]; returns the records and the I column if present.
pub fn read_series<R: Read>(r: R) -> Result<(Vec<MassRecord>, Vec<f64>), String> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let with_i = match cols.as_slice() {
        c if c == SERIES_COLUMNS => false,
        [head @ .., "I"] if head == SERIES_COLUMNS => true,
        _ => return Err(format!("unexpected columns {cols:?}")),
    };
    let mut records = Vec::new();
    let mut moments = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let v = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| format!("row {}: {e}", line + 2))?;
        records.push(MassRecord {
            t: v[0],
            m_u: v[1],
            m_c: v[2],
            m_n: v[3],
            m_w: v[4],
            total: v[5],
            sup_u: v[6],
            sup_c: v[7],
        });
        if with_i {
            moments.push(v[8]);
        }
    }
    Ok((records, moments))
}
