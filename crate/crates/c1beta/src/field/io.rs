//! Field dump/load.
//!
//! Binary layout (little endian): magic `C1BF`, `u32` version, `u32` n,
//! `u32` component count, `f64` half width, `f64` mask radius, then
//! `n² × components` values in node order.
//!
//! CSV layout: header `node,x,y,c0,c1,...`, one row per masked node. Loading
//! a CSV needs the grid, which lives in the run config.

use std::io::{Read, Write};
use std::path::Path;

use super::{Field, Grid, Value};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"C1BF";
const VERSION: u32 = 1;

pub fn write_binary<T: Value, W: Write>(f: &Field<T>, mut out: W) -> Result<()> {
    let g = f.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(g.n() as u32).to_le_bytes())?;
    out.write_all(&(T::COMPONENTS as u32).to_le_bytes())?;
    out.write_all(&g.half_width().to_le_bytes())?;
    out.write_all(&g.radius().to_le_bytes())?;
    let mut buf = Vec::with_capacity(T::COMPONENTS);
    for v in f.values() {
        buf.clear();
        v.push_components(&mut buf);
        for c in &buf {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<T: Value, R: Read>(mut input: R) -> Result<Field<T>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut input)? as usize;
    let comps = read_u32(&mut input)? as usize;
    if comps != T::COMPONENTS {
        return Err(Error::Format(format!(
            "file has {comps} components per node, expected {}",
            T::COMPONENTS
        )));
    }
    let half_width = read_f64(&mut input)?;
    let radius = read_f64(&mut input)?;
    let grid = Grid::new(half_width, n, radius)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut buf = vec![0.0; comps];
    for _ in 0..grid.len() {
        for c in buf.iter_mut() {
            *c = read_f64(&mut input)?;
        }
        values.push(T::from_components(&buf));
    }
    Field::new(grid, values)
}

pub fn save_binary<T: Value>(f: &Field<T>, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_binary(f, file)
}

pub fn load_binary<T: Value>(path: &Path) -> Result<Field<T>> {
    read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_csv<T: Value, W: Write>(f: &Field<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string(), "x".into(), "y".into()];
    header.extend((0..T::COMPONENTS).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    let mut buf = Vec::with_capacity(T::COMPONENTS);
    for (k, v) in f.masked_values() {
        let (x, y) = f.grid().point(k);
        buf.clear();
        v.push_components(&mut buf);
        let mut row = vec![k.to_string(), format!("{x:e}"), format!("{y:e}")];
        row.extend(buf.iter().map(|c| format!("{c:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]. Nodes absent from the file are zero.
pub fn read_csv<T: Value, R: Read>(grid: Grid, input: R) -> Result<Field<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = vec![T::zero(); grid.len()];
    let mut buf = vec![0.0; T::COMPONENTS];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 + T::COMPONENTS {
            return Err(Error::Format(format!("row has {} columns", rec.len())));
        }
        let node: usize = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad node index {:?}", &rec[0])))?;
        if node >= grid.len() {
            return Err(Error::Format(format!("node {node} outside grid")));
        }
        for (c, slot) in buf.iter_mut().enumerate() {
            *slot = rec[3 + c]
                .parse()
                .map_err(|_| Error::Format(format!("bad value {:?}", &rec[3 + c])))?;
        }
        values[node] = T::from_components(&buf);
    }
    Field::new(grid, values)
}
