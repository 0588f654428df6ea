//! Report, CSV and JSON emission.
//!
//! Series CSVs are long format with the header `time_cell,series,value`:
//! prices are `price.g<j>`, allocations `<agent>.g<j>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use exchange_qvi::{GridFunction, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const PRICES_CSV: &str = "prices.csv";
pub const ALLOCATIONS_CSV: &str = "allocations.csv";
pub const EXCESS_CSV: &str = "excess.csv";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    time_cell: usize,
    series: String,
    value: f64,
}

fn series_rows(prefix: &str, gf: &GridFunction, out: &mut Vec<Row>) {
    for j in 0..gf.components() {
        for k in 0..gf.cells() {
            out.push(Row { time_cell: k, series: format!("{prefix}.g{j}"), value: gf.get(k, j) });
        }
    }
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prices(path: &Path, price: &GridFunction) -> Result<()> {
    let mut rows = Vec::new();
    series_rows("price", price, &mut rows);
    write_rows(path, &rows)
}

pub fn write_allocations(path: &Path, scn: &Scenario, alloc: &[GridFunction]) -> Result<()> {
    let mut rows = Vec::new();
    for (i, x) in alloc.iter().enumerate() {
        series_rows(&scn.agent_label(i), x, &mut rows);
    }
    write_rows(path, &rows)
}

pub fn write_excess(path: &Path, excess: &GridFunction) -> Result<()> {
    let mut rows = Vec::new();
    series_rows("excess", excess, &mut rows);
    write_rows(path, &rows)
}

fn read_rows(path: &Path) -> Result<BTreeMap<(String, usize), f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (line, rec) in r.deserialize::<Row>().enumerate() {
        let row = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        if out.insert((row.series.clone(), row.time_cell), row.value).is_some() {
            bail!("{}: duplicate entry for series {} cell {}", path.display(), row.series, row.time_cell);
        }
    }
    Ok(out)
}

fn take_series(
    rows: &mut BTreeMap<(String, usize), f64>,
    prefix: &str,
    grid: TimeGrid,
    goods: usize,
    path: &Path,
) -> Result<GridFunction> {
    let mut gf = GridFunction::zeros(grid, goods);
    for j in 0..goods {
        for k in 0..grid.cells() {
            let key = (format!("{prefix}.g{j}"), k);
            let v = rows
                .remove(&key)
                .ok_or_else(|| anyhow!("{}: missing series {} at cell {k}", path.display(), key.0))?;
            gf.set(k, j, v);
        }
    }
    Ok(gf)
}

fn reject_leftovers(rows: &BTreeMap<(String, usize), f64>, path: &Path) -> Result<()> {
    if let Some(((series, cell), _)) = rows.iter().next() {
        bail!(
            "{}: {} entries do not fit the scenario shape (first: series {series} cell {cell})",
            path.display(),
            rows.len()
        );
    }
    Ok(())
}

/// Reads a candidate equilibrium written in the series CSV layout and checks
/// it against the scenario's shape.
pub fn read_candidate(dir: &Path, scn: &Scenario) -> Result<(GridFunction, Vec<GridFunction>)> {
    let grid = scn.grid()?;
    let ppath = dir.join(PRICES_CSV);
    let mut prices = read_rows(&ppath)?;
    let price = take_series(&mut prices, "price", grid, scn.goods, &ppath)?;
    reject_leftovers(&prices, &ppath)?;

    let apath = dir.join(ALLOCATIONS_CSV);
    let mut allocs = read_rows(&apath)?;
    let x = (0..scn.agents.len())
        .map(|i| take_series(&mut allocs, &scn.agent_label(i), grid, scn.goods, &apath))
        .collect::<Result<Vec<_>>>()?;
    reject_leftovers(&allocs, &apath)?;
    ensure!(price.is_finite() && x.iter().all(|xi| xi.is_finite()), "candidate has non-finite values");
    Ok((price, x))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Cell-by-good table with a midpoint column.
pub fn table(out: &mut String, gf: &GridFunction) {
    let grid = gf.grid();
    let _ = write!(out, "  {:>5} {:>10}", "cell", "t");
    for j in 0..gf.components() {
        let _ = write!(out, " {:>16}", format!("good{j}"));
    }
    out.push('\n');
    for k in 0..gf.cells() {
        let _ = write!(out, "  {:>5} {:>10.6}", k, grid.midpoint(k));
        for j in 0..gf.components() {
            let _ = write!(out, " {:>16.10}", gf.get(k, j));
        }
        out.push('\n');
    }
}

pub fn echo_settings(out: &mut String, scn: &Scenario, parallel: bool) {
    let s = &scn.solver;
    let _ = writeln!(out, "seed: {}", scn.seed);
    let _ = writeln!(out, "parallel: {parallel}");
    let _ = writeln!(out, "cap slack: {}", scn.cap_slack);
    let _ = writeln!(
        out,
        "inner: step {}, tol {:e}, max_iter {}",
        s.inner_step.map_or("auto".to_string(), |h| h.to_string()),
        s.inner_tol,
        s.inner_max_iter
    );
    let _ = writeln!(out, "outer: step {}, tol {:e}, max_iter {}", s.outer_step, s.outer_tol, s.outer_max_iter);
    let _ = writeln!(out, "truncation radii: {:?}", s.truncation_radii);
    let _ = writeln!(out, "certification: tol {:e}, samples {}", s.cert_tol, s.cert_samples);
    let _ = writeln!(out, "probe samples: {}", s.probe_samples);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const TWO: &str = r#"
schema_version = 1
goods = 2

[grid]
horizon = 1.0
cells = 3

[[agents]]
name = "alice"
endowment = { kind = "constant", value = [1.0, 2.0] }
utility = { family = "quadratic", bliss = { kind = "constant", value = [5.0, 5.0] } }
"#;

    #[test]
    fn candidate_round_trips_through_csv() {
        let scn = parse_scenario(TWO).unwrap();
        let grid = scn.grid().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = GridFunction::from_fn(grid, 2, |t, j| if j == 0 { t } else { 1.0 - t }).unwrap();
        let x = GridFunction::from_fn(grid, 2, |t, j| 0.1 + t * (j + 1) as f64 / 3.0).unwrap();
        write_prices(&dir.path().join(PRICES_CSV), &p).unwrap();
        write_allocations(&dir.path().join(ALLOCATIONS_CSV), &scn, std::slice::from_ref(&x)).unwrap();
        let (p2, x2) = read_candidate(dir.path(), &scn).unwrap();
        assert_eq!(p2.values(), p.values());
        assert_eq!(x2[0].values(), x.values());
    }

    #[test]
    fn shape_mismatch_is_diagnosed() {
        let scn = parse_scenario(TWO).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let short = GridFunction::zeros(TimeGrid::new(1.0, 2).unwrap(), 2);
        write_prices(&dir.path().join(PRICES_CSV), &short).unwrap();
        write_allocations(&dir.path().join(ALLOCATIONS_CSV), &scn, std::slice::from_ref(&short)).unwrap();
        let err = format!("{:#}", read_candidate(dir.path(), &scn).unwrap_err());
        assert!(err.contains("missing series price.g0 at cell 2"), "{err}");

        let long = GridFunction::zeros(TimeGrid::new(1.0, 4).unwrap(), 2);
        write_prices(&dir.path().join(PRICES_CSV), &long).unwrap();
        let err = format!("{:#}", read_candidate(dir.path(), &scn).unwrap_err());
        assert!(err.contains("do not fit the scenario shape"), "{err}");
    }

    #[test]
    fn csv_is_long_format() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_prices(&path, &GridFunction::constant(grid, &[0.25, 0.75]).unwrap()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "time_cell,series,value\n0,price.g0,0.25\n1,price.g0,0.25\n0,price.g1,0.75\n1,price.g1,0.75\n");
    }
}
