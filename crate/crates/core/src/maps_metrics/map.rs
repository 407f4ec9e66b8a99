use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Result, SrfError};
use crate::geometry::Domain;
use crate::oracles::{clip_unit, FunctionOracle};
use crate::quadrature::{eval_grid, grid_size, unravel};

/// `f` sampled on an inclusive grid over the domain, last dimension fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub domain: Domain,
    pub grid: Vec<usize>,
    pub values: Vec<f64>,
    pub meta: String,
}

#[inline]
fn coord(lo: f64, hi: f64, i: usize, count: usize) -> f64 {
    if count == 1 {
        return 0.5 * (lo + hi);
    }
    if i + 1 == count {
        return hi;
    }
    lo + (hi - lo) * (i as f64 / (count - 1) as f64)
}

impl SemanticMap {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of sample `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let n = self.dim();
        let mut idx = vec![0; n];
        unravel(index, &self.grid, &mut idx);
        (0..n)
            .map(|k| coord(self.domain.lo[k], self.domain.hi[k], idx[k], self.grid[k]))
            .collect()
    }

    /// Value at per-dimension grid indices.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().zip(&self.grid).fold(0, |acc, (i, c)| acc * c + i);
        self.values[flat]
    }
}

fn check_grid(domain: &Domain, grid: &[usize]) -> Result<()> {
    if grid.len() != domain.dim() {
        return Err(SrfError::DimensionMismatch {
            expected: domain.dim(),
            got: grid.len(),
        });
    }
    if grid.contains(&0) {
        return Err(SrfError::InvalidParams("grid counts must be positive".into()));
    }
    grid_size(grid).map(|_| ())
}

pub fn sample_map<O: FunctionOracle + ?Sized>(oracle: &O, domain: &Domain, grid: &[usize]) -> Result<SemanticMap> {
    check_grid(domain, grid)?;
    if oracle.dim() != domain.dim() {
        return Err(SrfError::DimensionMismatch {
            expected: domain.dim(),
            got: oracle.dim(),
        });
    }
    if !oracle.domain().encloses(domain) {
        return Err(SrfError::InvalidDomain("map domain must lie inside the oracle's domain".into()));
    }
    let values = eval_grid(oracle, grid, |idx, u| {
        for k in 0..idx.len() {
            u[k] = coord(domain.lo[k], domain.hi[k], idx[k], grid[k]);
        }
    })?
    .into_iter()
    .map(clip_unit)
    .collect();
    Ok(SemanticMap {
        domain: domain.clone(),
        grid: grid.to_vec(),
        values,
        meta: oracle.describe(),
    })
}

/// Pointwise mean. Values at each point are summed in sorted order so the
/// result does not depend on the order of `maps`.
pub fn average_maps(maps: &[SemanticMap]) -> Result<SemanticMap> {
    let first = maps.first().ok_or_else(|| SrfError::Empty("no maps to average".into()))?;
    for m in &maps[1..] {
        if m.grid != first.grid || m.domain != first.domain {
            return Err(SrfError::ShapeMismatch(format!(
                "map `{}` has grid {:?} over {:?}, expected grid {:?} over {:?}",
                m.meta, m.grid, m.domain, first.grid, first.domain
            )));
        }
    }
    let k = maps.len() as f64;
    let mut column = Vec::with_capacity(maps.len());
    let values = (0..first.len())
        .map(|i| {
            column.clear();
            column.extend(maps.iter().map(|m| m.values[i]));
            column.sort_by(f64::total_cmp);
            if column[0] == column[column.len() - 1] {
                column[0]
            } else {
                column.iter().sum::<f64>() / k
            }
        })
        .collect();
    let mut meta: Vec<&str> = maps.iter().map(|m| m.meta.as_str()).collect();
    meta.sort_unstable();
    Ok(SemanticMap {
        domain: first.domain.clone(),
        grid: first.grid.clone(),
        values,
        meta: format!("mean({})", meta.join(",")),
    })
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `# srf-map v1 n=<n> grid=<c1,…> domain=<lo1:hi1,…>` then `u1,…,un,f` rows.
pub fn write_map_csv<W: Write>(map: &SemanticMap, mut out: W) -> Result<()> {
    let domain = join(map.domain.lo.iter().zip(&map.domain.hi).map(|(l, h)| format!("{l}:{h}")));
    writeln!(
        out,
        "# srf-map v1 n={} grid={} domain={}",
        map.dim(),
        join(map.grid.iter()),
        domain
    )?;
    let mut line = String::new();
    for (i, f) in map.values.iter().enumerate() {
        line.clear();
        for x in map.point(i) {
            write!(line, "{x},").expect("string write");
        }
        writeln!(line, "{f}").expect("string write");
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn parse_err(msg: impl Into<String>) -> SrfError {
    SrfError::Parse(msg.into())
}

fn field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| parse_err(format!("map header lacks `{key}=`")))
}

pub fn read_map_csv<R: BufRead>(input: R) -> Result<SemanticMap> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty map file"))??;
    if !header.starts_with("# srf-map v1 ") {
        return Err(parse_err(format!("not an srf-map v1 header: `{header}`")));
    }
    let n: usize = field(&header, "n")?.parse().map_err(|_| parse_err("bad n"))?;
    let grid = field(&header, "grid")?
        .split(',')
        .map(|c| c.parse::<usize>().map_err(|_| parse_err(format!("bad grid count `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in field(&header, "domain")?.split(',') {
        let (l, h) = part
            .split_once(':')
            .ok_or_else(|| parse_err(format!("bad domain interval `{part}`")))?;
        lo.push(l.parse::<f64>().map_err(|_| parse_err(format!("bad bound `{l}`")))?);
        hi.push(h.parse::<f64>().map_err(|_| parse_err(format!("bad bound `{h}`")))?);
    }
    if grid.len() != n || lo.len() != n {
        return Err(parse_err(format!("header declares n={n} but grid/domain disagree")));
    }
    let domain = Domain::new(lo, hi)?;
    let total = grid_size(&grid)?;
    let mut values = Vec::with_capacity(total);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != n + 1 {
            return Err(parse_err(format!("row {} has {} columns, expected {}", row + 1, cols.len(), n + 1)));
        }
        let f: f64 = cols[n]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("row {}: bad value `{}`", row + 1, cols[n])))?;
        values.push(f);
    }
    if values.len() != total {
        return Err(parse_err(format!("map has {} rows, grid needs {total}", values.len())));
    }
    Ok(SemanticMap {
        domain,
        grid,
        values,
        meta: String::new(),
    })
}
