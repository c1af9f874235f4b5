//! Directory layout for transport results: `coupling.csv`, `phi.csv`, `psi.csv`, `map.csv`
//! and a `meta` key-value file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::geometry::write_field_csv;
use crate::scalar::Scalar;

use super::map::MapField;
use super::TransportResult;

pub fn write_result_dir<T: Scalar>(dir: &Path, result: &TransportResult<T>, map: Option<&MapField<T>>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = &result.grid;

    let mut w = BufWriter::new(File::create(dir.join("coupling.csv"))?);
    writeln!(w, "i,j,mass")?;
    for &(i, j, m) in &result.coupling {
        if m > T::zero() {
            writeln!(w, "{i},{j},{m}")?;
        }
    }
    w.flush()?;

    write_field_csv(grid, &result.phi, BufWriter::new(File::create(dir.join("phi.csv"))?))?;
    write_field_csv(grid, &result.psi, BufWriter::new(File::create(dir.join("psi.csv"))?))?;

    if let Some(map) = map {
        let mut w = BufWriter::new(File::create(dir.join("map.csv"))?);
        if grid.dim() == 1 {
            writeln!(w, "x,tx,defined")?;
        } else {
            writeln!(w, "x,y,tx,ty,defined")?;
        }
        for (k, t) in map.targets().iter().enumerate() {
            let c = grid.center(k);
            let defined = u8::from(map.mask()[k]);
            if grid.dim() == 1 {
                writeln!(w, "{},{},{defined}", c[0], t[0])?;
            } else {
                writeln!(w, "{},{},{},{},{defined}", c[0], c[1], t[0], t[1])?;
            }
        }
        w.flush()?;
    }

    let mut w = BufWriter::new(File::create(dir.join("meta"))?);
    writeln!(w, "solver = {}", result.solver.tag())?;
    for (k, v) in &result.params {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w, "cells = {}", grid.len())?;
    writeln!(w, "primal = {}", result.primal)?;
    writeln!(w, "dual = {}", result.dual)?;
    writeln!(w, "gap = {}", result.gap)?;
    if let Some(map) = map {
        writeln!(w, "max_clip = {}", map.max_clip())?;
    }
    w.flush()?;
    Ok(())
}
