//! Field serialization.
//!
//! CSV files hold one scalar grid each, header `i,j,value`, rows ordered with
//! `i` fastest, values in `{:.16e}` so a read recovers every bit. Legacy VTK
//! files are ASCII `STRUCTURED_POINTS` with one dataset sampled at cell
//! centres.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exponent::GriddedSamples;
use crate::grid::{CellField, Grid, StaggeredField};

/// Writes an `ni x nj` scalar grid.
pub fn write_scalar_csv(path: &Path, values: &[f64], ni: usize, nj: usize) -> Result<()> {
    if values.len() != ni * nj {
        return Err(Error::ShapeMismatch {
            expected: ni * nj,
            found: values.len(),
        });
    }
    let mut s = String::with_capacity(32 * values.len() + 16);
    s.push_str("i,j,value\n");
    for j in 0..nj {
        for i in 0..ni {
            s.push_str(&format!("{i},{j},{:.16e}\n", values[j * ni + i]));
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a scalar grid and infers its shape from the largest indices.
/// Every `(i, j)` must appear exactly once.
pub fn read_scalar_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "i,j,value" => {}
        _ => return Err(parse_err(1, "expected header `i,j,value`".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(parse_err(n + 1, format!("expected 3 columns, found {}", parts.len())));
        }
        let i: usize = parts[0].parse().map_err(|_| parse_err(n + 1, format!("bad index `{}`", parts[0])))?;
        let j: usize = parts[1].parse().map_err(|_| parse_err(n + 1, format!("bad index `{}`", parts[1])))?;
        let v: f64 = parts[2].parse().map_err(|_| parse_err(n + 1, format!("bad value `{}`", parts[2])))?;
        rows.push((i, j, v));
    }
    if rows.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    let ni = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let nj = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    if rows.len() != ni * nj {
        return Err(parse_err(0, format!("{} rows do not cover a {ni} x {nj} grid", rows.len())));
    }
    let mut values = vec![f64::NAN; ni * nj];
    let mut seen = vec![false; ni * nj];
    for (i, j, v) in rows {
        let k = j * ni + i;
        if seen[k] {
            return Err(parse_err(0, format!("duplicate entry ({i}, {j})")));
        }
        seen[k] = true;
        values[k] = v;
    }
    Ok((values, ni, nj))
}

/// Velocity component of a staggered field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

impl Component {
    pub fn shape(self, g: &Grid) -> (usize, usize) {
        match self {
            Component::U => (g.nx + 1, g.ny),
            Component::V => (g.nx, g.ny + 1),
        }
    }
}

pub fn write_component_csv(path: &Path, y: &StaggeredField, g: &Grid, c: Component) -> Result<()> {
    let (ni, nj) = c.shape(g);
    let data = match c {
        Component::U => y.u_component(),
        Component::V => y.v_component(),
    };
    write_scalar_csv(path, data, ni, nj)
}

/// Reads both components and checks them against `g`.
pub fn read_velocity_csv(u_path: &Path, v_path: &Path, g: &Grid) -> Result<StaggeredField> {
    let mut data = Vec::with_capacity(g.n_vel());
    for (path, c) in [(u_path, Component::U), (v_path, Component::V)] {
        let (values, ni, nj) = read_scalar_csv(path)?;
        let (ei, ej) = c.shape(g);
        if (ni, nj) != (ei, ej) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("grid is {ni} x {nj}, expected {ei} x {ej}"),
            });
        }
        data.extend(values);
    }
    StaggeredField::from_vec(g, data)
}

/// Writes `<stem>_u.csv` and `<stem>_v.csv` into `dir`.
pub fn write_velocity_csv(dir: &Path, stem: &str, y: &StaggeredField, g: &Grid) -> Result<()> {
    write_component_csv(&dir.join(format!("{stem}_u.csv")), y, g, Component::U)?;
    write_component_csv(&dir.join(format!("{stem}_v.csv")), y, g, Component::V)
}

pub fn write_cell_csv(path: &Path, c: &CellField, g: &Grid) -> Result<()> {
    write_scalar_csv(path, c.as_slice(), g.nx, g.ny)
}

/// Gridded exponent samples on the closed-domain node lattice.
pub fn read_gridded_exponent(path: &Path) -> Result<GriddedSamples> {
    let (values, mx, my) = read_scalar_csv(path)?;
    Ok(GriddedSamples { mx, my, values })
}

fn vtk_header(g: &Grid, title: &str) -> String {
    format!(
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {} {} 1\nORIGIN {:.16e} {:.16e} 0\nSPACING {:.16e} {:.16e} 1\nPOINT_DATA {}\n",
        g.nx,
        g.ny,
        0.5 * g.h,
        0.5 * g.h,
        g.h,
        g.h,
        g.n_cells()
    )
}

/// Velocity averaged to cell centres as a `VECTORS` dataset.
pub fn write_velocity_vtk(path: &Path, name: &str, y: &StaggeredField, g: &Grid) -> Result<()> {
    let mut s = vtk_header(g, name);
    s.push_str(&format!("VECTORS {name} double\n"));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let u = 0.5 * (y.u(i, j) + y.u(i + 1, j));
            let v = 0.5 * (y.v(i, j) + y.v(i, j + 1));
            s.push_str(&format!("{u:.16e} {v:.16e} 0\n"));
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Cell-centred scalar as a `SCALARS` dataset.
pub fn write_scalar_vtk(path: &Path, name: &str, c: &CellField, g: &Grid) -> Result<()> {
    let mut s = vtk_header(g, name);
    s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
    for v in c.as_slice() {
        s.push_str(&format!("{v:.16e}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_has_one_row_per_u_face() {
        let g = Grid::new(1.5, 1.0, 6, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        write_component_csv(&p, &StaggeredField::zeros(&g), &g, Component::U).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 7 * 4);
        assert!(rows.iter().all(|r| r.ends_with(",0.0000000000000000e0")));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let g = Grid::new(2.0, 1.0, 8, 4).unwrap();
        let mut y = StaggeredField::from_fns(&g, |x, y| (3.1 * x).sin() / 7.0 + y * 1e-300, |x, y| (x * y).exp() * 1e12);
        y.as_mut_slice()[5] = -0.0;
        y.as_mut_slice()[6] = f64::MIN_POSITIVE / 3.0;
        let dir = tempfile::tempdir().unwrap();
        write_velocity_csv(dir.path(), "y", &y, &g).unwrap();
        let back = read_velocity_csv(&dir.path().join("y_u.csv"), &dir.path().join("y_v.csv"), &g).unwrap();
        for (a, b) in y.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        for body in [
            "x,y,z\n0,0,1\n",
            "i,j,value\n0,0,1\n0,0,2\n",
            "i,j,value\n0,0,1\n1,1,1\n",
            "i,j,value\n0,0,abc\n",
            "i,j,value\n",
        ] {
            fs::write(&p, body).unwrap();
            assert!(matches!(read_scalar_csv(&p), Err(Error::Parse { .. })), "{body}");
        }
        assert!(matches!(read_scalar_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
        let g = Grid::unit_square(4).unwrap();
        let u = dir.path().join("u.csv");
        write_scalar_csv(&u, &[0.0; 4], 2, 2).unwrap();
        assert!(read_velocity_csv(&u, &u, &g).is_err());
    }

    #[test]
    fn vtk_layout() {
        let g = Grid::unit_square(4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.vtk");
        let y = StaggeredField::from_fns(&g, |_, _| 1.0, |_, _| 0.0);
        write_velocity_vtk(&p, "velocity", &y, &g).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 4 4 1");
        assert_eq!(lines[7], "POINT_DATA 16");
        assert_eq!(lines.len(), 9 + 16);
        let q = dir.path().join("p.vtk");
        write_scalar_vtk(&q, "pressure", &CellField::zeros(&g), &g).unwrap();
        assert!(fs::read_to_string(&q).unwrap().contains("SCALARS pressure double 1\nLOOKUP_TABLE default\n"));
    }
}
