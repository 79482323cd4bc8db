//! Tabulated `n+m` coefficients read from delimited text.
//!
//! The header names each column `x`, `lambda_<i>`, `mu_<j>`, `sigma_<i>_<l>`,
//! `w_<i>_<j>`, `theta_<j>_<i>`, `psi_<i>_<j>`, `q_<i>_<j>` or `r_<j>_<i>`
//! with one-based indices. `n` and `m` are inferred from the `lambda_*` and
//! `mu_*` columns; absent coupling columns are zero. `q` and `r` are
//! constants and are read from the first row. Values between rows are
//! interpolated linearly in `x`.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{PlantCoefficients, PlantParams};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Coef {
    Lambda,
    Mu,
    Sigma,
    W,
    Theta,
    Psi,
    Q,
    R,
}

impl Coef {
    fn parse(name: &str) -> Option<(Self, usize)> {
        Some(match name {
            "lambda" => (Coef::Lambda, 1),
            "mu" => (Coef::Mu, 1),
            "sigma" => (Coef::Sigma, 2),
            "w" => (Coef::W, 2),
            "theta" => (Coef::Theta, 2),
            "psi" => (Coef::Psi, 2),
            "q" => (Coef::Q, 2),
            "r" => (Coef::R, 2),
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Coef::Lambda => "lambda",
            Coef::Mu => "mu",
            Coef::Sigma => "sigma",
            Coef::W => "w",
            Coef::Theta => "theta",
            Coef::Psi => "psi",
            Coef::Q => "q",
            Coef::R => "r",
        }
    }
}

type Key = (Coef, usize, usize);

#[derive(Debug, Clone)]
pub struct TabulatedPlant {
    n: usize,
    m: usize,
    x: Vec<f64>,
    columns: HashMap<Key, Vec<f64>>,
}

impl TabulatedPlant {
    fn column(&self, c: Coef, a: usize, b: usize) -> Option<&[f64]> {
        self.columns.get(&(c, a, b)).map(Vec::as_slice)
    }

    fn at(&self, c: Coef, a: usize, b: usize, x: f64) -> f64 {
        let Some(col) = self.column(c, a, b) else {
            return 0.0;
        };
        let xs = &self.x;
        if x <= xs[0] {
            return col[0];
        }
        let last = xs.len() - 1;
        if x >= xs[last] {
            return col[last];
        }
        let k = xs.partition_point(|&t| t <= x) - 1;
        let s = (x - xs[k]) / (xs[k + 1] - xs[k]);
        col[k] + s * (col[k + 1] - col[k])
    }
}

impl PlantCoefficients for TabulatedPlant {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn lambda(&self, i: usize, x: f64) -> f64 {
        self.at(Coef::Lambda, i, 0, x)
    }
    fn mu(&self, j: usize, x: f64) -> f64 {
        self.at(Coef::Mu, j, 0, x)
    }
    fn sigma(&self, i: usize, l: usize, x: f64) -> f64 {
        self.at(Coef::Sigma, i, l, x)
    }
    fn w(&self, i: usize, j: usize, x: f64) -> f64 {
        self.at(Coef::W, i, j, x)
    }
    fn theta(&self, j: usize, i: usize, x: f64) -> f64 {
        self.at(Coef::Theta, j, i, x)
    }
    fn psi(&self, i: usize, j: usize, x: f64) -> f64 {
        self.at(Coef::Psi, i, j, x)
    }
    fn q(&self, i: usize, j: usize) -> f64 {
        self.at(Coef::Q, i, j, 0.0)
    }
    fn r(&self, j: usize, i: usize) -> f64 {
        self.at(Coef::R, j, i, 0.0)
    }
}

fn parse_header(h: &str) -> Result<Option<Key>> {
    let h = h.trim();
    if h == "x" {
        return Ok(None);
    }
    let mut parts = h.split('_');
    let name = parts.next().unwrap_or_default();
    let Some((coef, arity)) = Coef::parse(name) else {
        return invalid(format!("unknown coefficient column `{h}`"));
    };
    let idx: Vec<usize> = parts
        .map(|p| p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
        .collect::<Option<_>>()
        .ok_or_else(|| crate::Error::InvalidInput(format!("bad index in column `{h}`")))?;
    if idx.len() != arity {
        return invalid(format!("column `{h}` needs {arity} one-based indices"));
    }
    Ok(Some((coef, idx[0], idx.get(1).copied().unwrap_or(0))))
}

/// Reads a coefficient table. The result is not validated against the
/// standing assumptions; see [`super::validate_plant`].
pub fn read_plant_table(reader: impl Read, delimiter: u8) -> Result<PlantParams> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut x_col = None;
    let mut keys: Vec<(Key, usize)> = Vec::with_capacity(headers.len());
    for (k, h) in headers.iter().enumerate() {
        match parse_header(h)? {
            None => x_col = Some(k),
            Some(key) if keys.iter().any(|&(kk, _)| kk == key) => {
                return invalid(format!("duplicate column `{h}`"));
            }
            Some(key) => keys.push((key, k)),
        }
    }
    let Some(x_col) = x_col else {
        return invalid("coefficient table has no `x` column");
    };

    let mut x = Vec::new();
    let mut columns: HashMap<Key, Vec<f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or_default();
            s.parse::<f64>()
                .map_err(|_| crate::Error::InvalidInput(format!("non-numeric entry `{s}`")))
        };
        x.push(parse(x_col)?);
        for &(key, k) in &keys {
            columns.entry(key).or_default().push(parse(k)?);
        }
    }
    if x.is_empty() {
        return invalid("coefficient table has no rows");
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("x column must be strictly increasing");
    }

    let count = |c: Coef| {
        columns
            .keys()
            .filter(|k| k.0 == c)
            .map(|k| k.1 + 1)
            .max()
            .unwrap_or(0)
    };
    let (n, m) = (count(Coef::Lambda), count(Coef::Mu));
    if n == 0 || m == 0 {
        return invalid("coefficient table needs lambda_* and mu_* columns");
    }
    for i in 0..n {
        if !columns.contains_key(&(Coef::Lambda, i, 0)) {
            return invalid(format!("missing column lambda_{}", i + 1));
        }
    }
    for j in 0..m {
        if !columns.contains_key(&(Coef::Mu, j, 0)) {
            return invalid(format!("missing column mu_{}", j + 1));
        }
    }
    for &(c, a, b) in columns.keys() {
        let (ra, rb) = match c {
            Coef::Lambda | Coef::Mu => continue,
            Coef::Sigma => (n, n),
            Coef::W | Coef::Q => (n, m),
            Coef::Theta | Coef::R => (m, n),
            Coef::Psi => (m, m),
        };
        if a >= ra || b >= rb {
            return invalid(format!(
                "column {}_{}_{} out of range for n = {n}, m = {m}",
                c.name(),
                a + 1,
                b + 1
            ));
        }
    }
    Ok(PlantParams::new(TabulatedPlant { n, m, x, columns }))
}

/// Tabulates `p` at the given abscissae with every coefficient column present.
pub fn write_plant_table(
    p: &PlantParams,
    x: &[f64],
    writer: impl Write,
    delimiter: u8,
) -> Result<()> {
    let (n, m) = (p.n(), p.m());
    let mut cols: Vec<(String, Box<dyn Fn(f64) -> f64 + '_>)> = Vec::new();
    for i in 0..n {
        cols.push((format!("lambda_{}", i + 1), Box::new(move |x| p.lambda(i, x))));
    }
    for j in 0..m {
        cols.push((format!("mu_{}", j + 1), Box::new(move |x| p.mu(j, x))));
    }
    for i in 0..n {
        for l in 0..n {
            cols.push((format!("sigma_{}_{}", i + 1, l + 1), Box::new(move |x| p.sigma(i, l, x))));
        }
    }
    for i in 0..n {
        for j in 0..m {
            cols.push((format!("w_{}_{}", i + 1, j + 1), Box::new(move |x| p.w(i, j, x))));
        }
    }
    for j in 0..m {
        for i in 0..n {
            cols.push((format!("theta_{}_{}", j + 1, i + 1), Box::new(move |x| p.theta(j, i, x))));
        }
    }
    for i in 0..m {
        for j in 0..m {
            cols.push((format!("psi_{}_{}", i + 1, j + 1), Box::new(move |x| p.psi(i, j, x))));
        }
    }
    for i in 0..n {
        for j in 0..m {
            cols.push((format!("q_{}_{}", i + 1, j + 1), Box::new(move |_| p.q(i, j))));
        }
    }
    for j in 0..m {
        for i in 0..n {
            cols.push((format!("r_{}_{}", j + 1, i + 1), Box::new(move |_| p.r(j, i))));
        }
    }

    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    w.write_field("x")?;
    for (name, _) in &cols {
        w.write_field(name)?;
    }
    w.write_record(None::<&[u8]>)?;
    for &xv in x {
        w.write_field(format!("{xv:e}"))?;
        for (_, f) in &cols {
            w.write_field(format!("{:e}", f(xv)))?;
        }
        w.write_record(None::<&[u8]>)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_example_nm;

    #[test]
    fn roundtrip_reproduces_nodes() {
        let p = build_example_nm(3).unwrap();
        let xs: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let mut buf = Vec::new();
        write_plant_table(&p, &xs, &mut buf, b';').unwrap();
        let t = read_plant_table(buf.as_slice(), b';').unwrap();
        assert_eq!((t.n(), t.m()), (3, 2));
        for &x in &xs {
            for i in 0..3 {
                for l in 0..3 {
                    assert_eq!(t.sigma(i, l, x), p.sigma(i, l, x));
                }
                assert_eq!(t.q(i, 1), p.q(i, 1));
            }
            assert_eq!(t.r(0, 2), p.r(0, 2));
        }
    }

    #[test]
    fn sparse_table_interpolates() {
        let text = "x,lambda_1,mu_1,w_1_1\n0,1,2,0\n1,3,2,4\n";
        let t = read_plant_table(text.as_bytes(), b',').unwrap();
        assert_eq!(t.lambda(0, 0.25), 1.5);
        assert_eq!(t.w(0, 0, 0.5), 2.0);
        assert_eq!(t.sigma(0, 0, 0.5), 0.0);
    }

    #[test]
    fn rejects_bad_tables() {
        for text in [
            "lambda_1,mu_1\n1,1\n",
            "x,lambda_2,mu_1\n0,1,1\n",
            "x,lambda_1,mu_1,w_2_1\n0,1,1,1\n",
            "x,lambda_1,mu_1,foo\n0,1,1,1\n",
            "x,lambda_1,mu_1\n0.5,1,1\n0.5,1,1\n",
            "x,lambda_0,mu_1\n0,1,1\n",
        ] {
            assert!(read_plant_table(text.as_bytes(), b',').is_err(), "{text}");
        }
    }
}
