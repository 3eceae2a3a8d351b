//! Binary and CSV encodings of fields, matrices, frames, gains and audits.

use std::fmt::Write as _;
use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use crate::detection::Frame;
use crate::error::{OmxError, Result};
use crate::estimators::{AuditResult, GainMap};
use crate::grid_optics::{ComplexField, PixelGrid, RealField};
use crate::tm::TransmissionMatrix;

const FLD_MAGIC: &[u8; 4] = b"FLD1";
const TMX_MAGIC: &[u8; 4] = b"TMX1";
const FRM_MAGIC: &[u8; 4] = b"FRM1";

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| OmxError::Format(format!("truncated input at byte {}", *pos)))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().unwrap()))
}

fn read_f64(buf: &[u8], pos: &mut usize) -> Result<f64> {
    Ok(f64::from_le_bytes(take(buf, pos, 8)?.try_into().unwrap()))
}

fn expect_magic(buf: &[u8], pos: &mut usize, magic: &[u8; 4]) -> Result<()> {
    let m = take(buf, pos, 4)?;
    if m != magic {
        return Err(OmxError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| OmxError::Format(format!("dimension {n} exceeds u32")))
}

pub fn write_fld1<W: Write>(w: &mut W, f: &ComplexField) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 16 * f.amp.len());
    buf.extend_from_slice(FLD_MAGIC);
    buf.extend_from_slice(&dim(f.grid.nx)?.to_le_bytes());
    buf.extend_from_slice(&dim(f.grid.ny)?.to_le_bytes());
    buf.extend_from_slice(&f.grid.pitch.to_le_bytes());
    for a in &f.amp {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_fld1<R: Read>(r: &mut R) -> Result<ComplexField> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    expect_magic(&buf, &mut pos, FLD_MAGIC)?;
    let nx = read_u32(&buf, &mut pos)? as usize;
    let ny = read_u32(&buf, &mut pos)? as usize;
    let pitch = read_f64(&buf, &mut pos)?;
    let grid = PixelGrid::new(nx, ny, pitch)?;
    let mut amp = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(&buf, &mut pos)?;
        let im = read_f64(&buf, &mut pos)?;
        amp.push(C64::new(re, im));
    }
    if pos != buf.len() {
        return Err(OmxError::Format("trailing bytes after FLD1 payload".into()));
    }
    ComplexField::new(grid, amp)
}

pub fn field_csv(f: &ComplexField) -> String {
    let mut s = String::from("ix,iy,re,im\n");
    for (idx, a) in f.amp.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", idx % f.grid.nx, idx / f.grid.nx, a.re, a.im);
    }
    s
}

/// CSV `ix,iy,value` for a real field.
pub fn real_field_csv(f: &RealField) -> String {
    let mut s = String::from("ix,iy,value\n");
    for (idx, v) in f.val.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", idx % f.grid.nx, idx / f.grid.nx, v);
    }
    s
}

fn csv_rows(text: &str, header: &str) -> Result<Vec<Vec<String>>> {
    let mut lines = text.lines();
    let h = lines.next().ok_or_else(|| OmxError::Format("empty CSV".into()))?;
    if h.trim() != header {
        return Err(OmxError::Format(format!("CSV header '{h}', expected '{header}'")));
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != width {
                return Err(OmxError::Format(format!("CSV row '{l}' has {} cells", cells.len())));
            }
            Ok(cells)
        })
        .collect()
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| OmxError::Format(format!("cannot parse '{s}'")))
}

pub fn read_real_field_csv(text: &str, grid: PixelGrid) -> Result<RealField> {
    let mut val = vec![0.0; grid.len()];
    for r in csv_rows(text, "ix,iy,value")? {
        let (i, j): (usize, usize) = (parse(&r[0])?, parse(&r[1])?);
        if i >= grid.nx || j >= grid.ny {
            return Err(OmxError::Format(format!("pixel ({i},{j}) outside the grid")));
        }
        val[grid.index(i, j)] = parse(&r[2])?;
    }
    RealField::new(grid, val)
}

pub fn write_tmx1<W: Write>(w: &mut W, t: &TransmissionMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 16 * t.data.len());
    buf.extend_from_slice(TMX_MAGIC);
    buf.extend_from_slice(&dim(t.n_out)?.to_le_bytes());
    buf.extend_from_slice(&dim(t.n_in)?.to_le_bytes());
    for a in &t.data {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tmx1<R: Read>(r: &mut R) -> Result<TransmissionMatrix> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    expect_magic(&buf, &mut pos, TMX_MAGIC)?;
    let n_out = read_u32(&buf, &mut pos)? as usize;
    let n_in = read_u32(&buf, &mut pos)? as usize;
    let n = n_out
        .checked_mul(n_in)
        .ok_or_else(|| OmxError::Format("matrix size overflow".into()))?;
    if buf.len() - pos != 16 * n {
        return Err(OmxError::Format(format!(
            "TMX1 payload of {} bytes for {n_out}x{n_in}",
            buf.len() - pos
        )));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(&buf, &mut pos)?;
        let im = read_f64(&buf, &mut pos)?;
        data.push(C64::new(re, im));
    }
    TransmissionMatrix::new(n_out, n_in, data)
}

pub fn tm_csv(t: &TransmissionMatrix) -> String {
    let mut s = String::from("row,col,re,im\n");
    for (idx, a) in t.data.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", idx / t.n_in, idx % t.n_in, a.re, a.im);
    }
    s
}

pub fn write_frm1<W: Write>(w: &mut W, frames: &[Frame]) -> Result<()> {
    let grid = frames
        .first()
        .map(|f| f.grid)
        .ok_or_else(|| OmxError::Format("cannot encode an empty frame list".into()))?;
    let mut buf = Vec::with_capacity(16 + 4 * grid.len() * frames.len());
    buf.extend_from_slice(FRM_MAGIC);
    buf.extend_from_slice(&dim(frames.len())?.to_le_bytes());
    buf.extend_from_slice(&dim(grid.nx)?.to_le_bytes());
    buf.extend_from_slice(&dim(grid.ny)?.to_le_bytes());
    for f in frames {
        f.grid.same_as(&grid)?;
        for c in &f.counts {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Decodes FRM1 counts; pitch, timestamps and ground truth come from the
/// caller (the sidecar carries the latter two).
pub fn read_frm1<R: Read>(r: &mut R, pitch: f64) -> Result<Vec<Frame>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    expect_magic(&buf, &mut pos, FRM_MAGIC)?;
    let n = read_u32(&buf, &mut pos)? as usize;
    let nx = read_u32(&buf, &mut pos)? as usize;
    let ny = read_u32(&buf, &mut pos)? as usize;
    let grid = PixelGrid::new(nx, ny, pitch)?;
    if buf.len() - pos != 4 * n * grid.len() {
        return Err(OmxError::Format("FRM1 payload size mismatch".into()));
    }
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let mut counts = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            counts.push(read_u32(&buf, &mut pos)?);
        }
        frames.push(Frame {
            grid,
            counts,
            t: f64::NAN,
            xi_true: f64::NAN,
        });
    }
    Ok(frames)
}

/// Sparse frame CSV, zero counts omitted.
pub fn frames_csv(frames: &[Frame]) -> String {
    let mut s = String::from("frame,ix,iy,count\n");
    for (k, f) in frames.iter().enumerate() {
        for (idx, &c) in f.counts.iter().enumerate() {
            if c != 0 {
                let _ = writeln!(s, "{},{},{},{}", k, idx % f.grid.nx, idx / f.grid.nx, c);
            }
        }
    }
    s
}

pub fn sidecar_csv(frames: &[Frame]) -> String {
    let mut s = String::from("frame,t,xi_true\n");
    for (k, f) in frames.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", k, f.t, f.xi_true);
    }
    s
}

/// Restores timestamps and ground truth from a sidecar.
pub fn apply_sidecar(frames: &mut [Frame], text: &str) -> Result<()> {
    let rows = csv_rows(text, "frame,t,xi_true")?;
    if rows.len() != frames.len() {
        return Err(OmxError::Format(format!(
            "sidecar lists {} frames, stack holds {}",
            rows.len(),
            frames.len()
        )));
    }
    for r in rows {
        let k: usize = parse(&r[0])?;
        let f = frames
            .get_mut(k)
            .ok_or_else(|| OmxError::Format(format!("sidecar frame {k} out of range")))?;
        f.t = parse(&r[1])?;
        f.xi_true = parse(&r[2])?;
    }
    Ok(())
}

pub fn gain_csv(g: &GainMap) -> String {
    let mut s = String::from("ix,iy,g\n");
    for (idx, v) in g.g.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", idx % g.grid.nx, idx / g.grid.nx, v);
    }
    s
}

pub fn pattern_csv(p: &[C64]) -> String {
    let mut s = String::from("segment,re,im\n");
    for (k, a) in p.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", k, a.re, a.im);
    }
    s
}

pub fn read_pattern_csv(text: &str) -> Result<Vec<C64>> {
    let rows = csv_rows(text, "segment,re,im")?;
    let mut out = vec![C64::new(0.0, 0.0); rows.len()];
    for r in rows {
        let k: usize = parse(&r[0])?;
        let slot = out
            .get_mut(k)
            .ok_or_else(|| OmxError::Format(format!("segment {k} out of range")))?;
        *slot = C64::new(parse(&r[1])?, parse(&r[2])?);
    }
    Ok(out)
}

pub fn audit_csv(a: &AuditResult) -> String {
    let mut s = String::from("delta_px,mean_sum,var_diff\n");
    for p in &a.points {
        let _ = writeln!(s, "{},{},{}", p.delta_px, p.mean_sum, p.var_diff);
    }
    s
}

pub fn series_csv(t: &[f64], xi: &[f64], x: &[f64]) -> String {
    let mut s = String::from("frame,t,xi_true,signal\n");
    for (k, ((t, xi), x)) in t.iter().zip(xi).zip(x).enumerate() {
        let _ = writeln!(s, "{k},{t},{xi},{x}");
    }
    s
}
