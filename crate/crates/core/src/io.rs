//! CSV and JSON persistence.
//!
//! Floats are written with 17 significant digits so that a write followed
//! by a read reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapEnsemble, ResampleScheme};
use crate::error::{invalid, Error, Result};
use crate::functional::ProbeRow;
use crate::grid::GridFunction;
use crate::law::EmpiricalLaw;
use crate::quantile::{CellResult, QrData, TheoryRow};
use crate::rng::SeedManifest;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, column: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}, column `{column}`: `{field}` is not a number")))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .zip(&headers)
                .map(|(f, h)| parse_f64(f, h, k + 2))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    /// Column indices of `names`, or the list of missing ones.
    pub fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.column(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns {
                missing: missing.join(", "),
                found: self.headers.join(", "),
            });
        }
        Ok(names.iter().map(|n| self.column(n).unwrap()).collect())
    }

    pub fn values(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col]).collect()
    }
}

pub fn write_law<W: Write>(w: W, law: &EmpiricalLaw) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["atom", "prob"])?;
    for (a, p) in law.atoms().iter().zip(law.probs()) {
        out.write_record([fmt_f64(*a), fmt_f64(*p)])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `atom,prob` rows; a file with a single column is a uniform sample.
pub fn read_law<R: Read>(r: R) -> Result<EmpiricalLaw> {
    let t = Table::read(r)?;
    if t.rows.is_empty() {
        return Err(Error::Empty("law file"));
    }
    match (t.column("atom"), t.column("prob")) {
        (Some(a), Some(p)) => EmpiricalLaw::with_probs(t.values(a), t.values(p)),
        (Some(a), None) => EmpiricalLaw::new(t.values(a)),
        _ if t.headers.len() == 1 => EmpiricalLaw::new(t.values(0)),
        _ => Err(Error::MissingColumns {
            missing: "atom".to_string(),
            found: t.headers.join(", "),
        }),
    }
}

pub fn write_grid<W: Write>(w: W, f: &GridFunction) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["knot", "value", "weight"])?;
    for ((t, v), wt) in f.grid().iter().zip(f.values()).zip(f.weights()) {
        out.write_record([fmt_f64(*t), fmt_f64(*v), fmt_f64(*wt)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<GridFunction> {
    let t = Table::read(r)?;
    let c = t.require(&["knot", "value", "weight"])?;
    GridFunction::new(t.values(c[0]), t.values(c[1]), t.values(c[2]))
}

/// Long layout `draw,component,value`.
pub fn write_ensemble<W: Write>(w: W, ensemble: &BootstrapEnsemble) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["draw", "component", "value"])?;
    for (b, draw) in ensemble.draws().iter().enumerate() {
        for (j, v) in draw.iter().enumerate() {
            out.write_record([b.to_string(), j.to_string(), fmt_f64(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Draws back from the long layout, ordered by draw then component.
pub fn read_ensemble_draws<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let t = Table::read(r)?;
    let c = t.require(&["draw", "component", "value"])?;
    let mut by_draw: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in &t.rows {
        let (b, j) = (row[c[0]], row[c[1]]);
        if b < 0.0 || j < 0.0 || b.fract() != 0.0 || j.fract() != 0.0 {
            return Err(Error::Parse(format!(
                "draw {b} / component {j} must be nonnegative integers"
            )));
        }
        by_draw.entry(b as usize).or_default().insert(j as usize, row[c[2]]);
    }
    Ok(by_draw.into_values().map(|m| m.into_values().collect()).collect())
}

/// Sidecar describing how an ensemble was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: SeedManifest,
    pub scheme: ResampleScheme,
    pub draws: usize,
    pub n: usize,
    pub rate: f64,
}

impl EnsembleManifest {
    pub fn of(ensemble: &BootstrapEnsemble) -> Self {
        Self {
            seed: ensemble.seed_manifest().clone(),
            scheme: ensemble.scheme(),
            draws: ensemble.len(),
            n: ensemble.bundle().sample_size(),
            rate: ensemble.bundle().rate(),
        }
    }
}

/// Halfspaces `a_1..a_d, b` meaning `a'x <= b`.
pub fn read_halfspaces<R: Read>(r: R) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let t = Table::read(r)?;
    let b = t.require(&["b"])?[0];
    let mut a_cols: Vec<(usize, usize)> = t
        .headers
        .iter()
        .enumerate()
        .filter_map(|(k, h)| {
            h.strip_prefix('a')
                .and_then(|s| s.parse::<usize>().ok())
                .map(|j| (j, k))
        })
        .collect();
    a_cols.sort();
    if a_cols.is_empty() || a_cols.iter().enumerate().any(|(i, (j, _))| *j != i + 1) {
        return Err(invalid("halfspaces", "expected columns a1..ad followed by b"));
    }
    let normals = t
        .rows
        .iter()
        .map(|r| a_cols.iter().map(|(_, k)| r[*k]).collect())
        .collect();
    Ok((normals, t.values(b)))
}

pub fn write_probe<W: Write>(w: W, rows: &[ProbeRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["shift_id", "bl_distance", "noise_floor", "indistinguishable"])?;
    for r in rows {
        out.write_record([
            r.shift_id.to_string(),
            fmt_f64(r.bl_distance),
            fmt_f64(r.noise_floor),
            r.indistinguishable.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Quantile-regression data from columns `Y, D, Z1..Zk`. The design is
/// `(D, 1, Z1, .., Zk)` so the treatment coefficient comes first.
pub fn read_qr_data<R: Read>(r: R) -> Result<QrData> {
    let t = Table::read(r)?;
    let c = t.require(&["Y", "D"])?;
    let mut z: Vec<(usize, usize)> = t
        .headers
        .iter()
        .enumerate()
        .filter_map(|(k, h)| {
            let rest = h.strip_prefix('Z').or_else(|| h.strip_prefix('z'))?;
            rest.parse::<usize>().ok().map(|j| (j, k))
        })
        .collect();
    z.sort();
    if z.iter().enumerate().any(|(i, (j, _))| *j != i + 1) {
        return Err(invalid("columns", "covariates must be named Z1..Zk without gaps"));
    }
    let rows: Vec<Vec<f64>> = t
        .rows
        .iter()
        .map(|r| {
            let mut x = vec![r[c[1]], 1.0];
            x.extend(z.iter().map(|(_, k)| r[*k]));
            x
        })
        .collect();
    QrData::from_rows(t.values(c[0]), &rows)
}

pub fn write_qr_data<W: Write>(w: W, data: &QrData) -> Result<()> {
    let p = data.p();
    if p < 2 {
        return Err(invalid("data", "design must hold D and an intercept"));
    }
    let mut out = writer(w);
    let mut header = vec!["Y".to_string(), "D".to_string()];
    header.extend((1..p - 1).map(|j| format!("Z{j}")));
    out.write_record(&header)?;
    for i in 0..data.n() {
        let x = data.row(i);
        let mut rec = vec![fmt_f64(data.y()[i]), fmt_f64(x[0])];
        rec.extend(x[2..].iter().map(|v| fmt_f64(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per table cell.
pub fn write_cells<W: Write>(w: W, cells: &[CellResult]) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "n",
        "C",
        "kappa",
        "alpha",
        "delta",
        "reps",
        "failed",
        "rejections",
        "rate",
        "se",
    ])?;
    for c in cells {
        out.write_record([
            c.n.to_string(),
            c.c.to_string(),
            fmt_f64(c.kappa),
            c.alpha.to_string(),
            c.delta.to_string(),
            c.reps.to_string(),
            c.failed.to_string(),
            c.rejections.to_string(),
            format!("{:.6}", c.rate()),
            format!("{:.6}", c.std_error()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn kappa_label(kappa: f64) -> String {
    for d in 2..=10 {
        if (kappa * d as f64 - 1.0).abs() < 1e-9 {
            return format!("1/{d}");
        }
    }
    kappa.to_string()
}

/// Rows `(n, C, kappa, alpha)`, one rate column per delta, then the
/// theoretical row of each `(n, alpha)` block when supplied.
pub fn write_wide_table<W: Write>(w: W, cells: &[CellResult], theory: &[TheoryRow]) -> Result<()> {
    let mut deltas: Vec<f64> = Vec::new();
    let mut keys: Vec<(usize, f64, f64, f64)> = Vec::new();
    for c in cells {
        if !deltas.contains(&c.delta) {
            deltas.push(c.delta);
        }
        let k = (c.n, c.alpha, c.c, c.kappa);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = writer(w);
    let mut header = vec![
        "n".to_string(),
        "C".to_string(),
        "kappa".to_string(),
        "alpha".to_string(),
    ];
    header.extend(deltas.iter().map(|d| format!("delta={d}")));
    out.write_record(&header)?;
    let mut blocks: Vec<(usize, f64)> = Vec::new();
    for &(n, alpha, _, _) in &keys {
        if !blocks.contains(&(n, alpha)) {
            blocks.push((n, alpha));
        }
    }
    for (n, alpha) in blocks {
        for &(kn, ka, c, kappa) in keys.iter().filter(|k| k.0 == n && k.1 == alpha) {
            let mut rec = vec![kn.to_string(), c.to_string(), kappa_label(kappa), ka.to_string()];
            for d in &deltas {
                let cell = cells
                    .iter()
                    .find(|x| x.n == kn && x.alpha == ka && x.c == c && x.kappa == kappa && x.delta == *d);
                rec.push(cell.map_or(String::new(), |x| format!("{:.3}", x.rate())));
            }
            out.write_record(&rec)?;
        }
        if !theory.is_empty() {
            let mut rec = vec![
                n.to_string(),
                "theoretical".to_string(),
                String::new(),
                alpha.to_string(),
            ];
            for d in &deltas {
                let row = theory.iter().find(|t| t.alpha == alpha && t.delta == *d);
                rec.push(row.map_or(String::new(), |t| format!("{:.3}", t.rejection)));
            }
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_theory<W: Write>(w: W, rows: &[TheoryRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["delta", "alpha", "rejection"])?;
    for r in rows {
        out.write_record([r.delta.to_string(), r.alpha.to_string(), format!("{:.6}", r.rejection)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_round_trip_is_exact() {
        let law = EmpiricalLaw::with_probs(vec![0.1, 1.0 / 3.0, -2.5e-17], vec![0.2, 0.3, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_law(&mut buf, &law).unwrap();
        assert_eq!(read_law(buf.as_slice()).unwrap(), law);
    }

    #[test]
    fn grid_round_trip_is_exact() {
        let f = GridFunction::with_riemann_weights(vec![0.2, 0.225, 0.25], vec![1.0 / 7.0, -0.3, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &f).unwrap();
        assert_eq!(read_grid(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn single_column_is_uniform_sample() {
        let law = read_law("x\n3\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(law.atoms(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_columns_are_listed() {
        let err = read_qr_data("Y,Z1\n1,2\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('D') && msg.contains("Y, Z1"), "{msg}");
    }

    #[test]
    fn qr_data_puts_treatment_first() {
        let d = read_qr_data("Z1,Y,D\n0.5,1,0\n-1,2,1\n0.1,0.3,1\n".as_bytes()).unwrap();
        assert_eq!(d.p(), 3);
        assert_eq!(d.row(1), &[1.0, 1.0, -1.0]);
        let mut buf = Vec::new();
        write_qr_data(&mut buf, &d).unwrap();
        let back = read_qr_data(buf.as_slice()).unwrap();
        assert_eq!(back.y(), d.y());
        assert_eq!(back.row(2), d.row(2));
    }

    #[test]
    fn halfspace_columns_in_order() {
        let (a, b) = read_halfspaces("b,a2,a1\n1,0,1\n2,1,1\n".as_bytes()).unwrap();
        assert_eq!(a, vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(b, vec![1.0, 2.0]);
        assert!(read_halfspaces("a1,a3,b\n1,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn ensemble_draws_regroup() {
        let draws = read_ensemble_draws("draw,component,value\n1,0,3\n0,1,2\n0,0,1\n1,1,4\n".as_bytes()).unwrap();
        assert_eq!(draws, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
