//! Line-oriented program text format.
//!
//! ```text
//! gridsynth-program v1 N=9 M=16
//! loop n=3 a=2 b=1 n2=2 a2=4 b2=0 comp=cell:3,4
//! loop n=1 a=1 b=0 n2=1 a2=1 b2=0 comp=raw:ff0000...
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::{Component, Pair, Program, Sketch};
use crate::error::{Error, Result};
use crate::grid::CellIndex;

const MAGIC: &str = "gridsynth-program";
const VERSION: &str = "v1";
const LOOP_KEYS: [&str; 7] = ["n", "a", "b", "n2", "a2", "b2", "comp"];

impl Program {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} N={} M={}\n", self.grid_n, self.cell_m);
        for pair in &self.pairs {
            let s = &pair.sketch;
            write!(
                out,
                "loop n={} a={} b={} n2={} a2={} b2={} comp=",
                s.n, s.a, s.b, s.n2, s.a2, s.b2
            )
            .unwrap();
            match &pair.component {
                Component::Cell(c) => write!(out, "cell:{},{}", c.t, c.u).unwrap(),
                Component::Raw(px) => {
                    out.push_str("raw:");
                    out.push_str(&hex::encode(px));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Program> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines.next().expect("split yields at least one item");
        let (grid_n, cell_m) = parse_header(header)?;

        let mut pairs = Vec::new();
        for (line_no, line) in lines {
            let pair = parse_loop(line_no, line, grid_n, cell_m)?;
            pairs.push(pair);
        }
        Ok(Program::from_parts_unchecked(grid_n, cell_m, pairs))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Program {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Program::parse(s)
    }
}

fn parse_uint(line: usize, field: &str, value: &str) -> Result<usize> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::parse(line, field, format!("expected a nonnegative integer, got `{value}`")));
    }
    value
        .parse()
        .map_err(|_| Error::parse(line, field, format!("integer `{value}` is out of range")))
}

fn split_kv(line: usize, token: &str) -> Result<(&str, &str)> {
    token
        .split_once('=')
        .ok_or_else(|| Error::parse(line, token, "expected key=value"))
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let tokens: Vec<&str> = header.split(' ').collect();
    if tokens.first() != Some(&MAGIC) {
        return Err(Error::parse(1, "header", format!("expected `{MAGIC}`")));
    }
    if tokens.get(1) != Some(&VERSION) {
        return Err(Error::parse(1, "version", format!("unsupported version, expected `{VERSION}`")));
    }
    if tokens.len() != 4 {
        return Err(Error::parse(1, "header", "expected exactly `N=<int> M=<int>` after the version"));
    }
    let (kn, vn) = split_kv(1, tokens[2])?;
    let (km, vm) = split_kv(1, tokens[3])?;
    if kn != "N" {
        return Err(Error::parse(1, kn, "expected `N`"));
    }
    if km != "M" {
        return Err(Error::parse(1, km, "expected `M`"));
    }
    let n = parse_uint(1, "N", vn)?;
    let m = parse_uint(1, "M", vm)?;
    if n == 0 {
        return Err(Error::parse(1, "N", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::parse(1, "M", "must be at least 1"));
    }
    Ok((n, m))
}

fn parse_loop(line: usize, text: &str, grid_n: usize, cell_m: usize) -> Result<Pair> {
    let mut tokens = text.split(' ');
    if tokens.next() != Some("loop") {
        return Err(Error::parse(line, "loop", "expected a `loop` line"));
    }
    let mut values: [Option<&str>; 7] = [None; 7];
    for token in tokens {
        let (key, value) = split_kv(line, token)?;
        let slot = LOOP_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| Error::parse(line, key, "unknown key"))?;
        if values[slot].replace(value).is_some() {
            return Err(Error::parse(line, key, "duplicate key"));
        }
    }
    let mut nums = [0usize; 6];
    for (i, key) in LOOP_KEYS[..6].iter().enumerate() {
        let v = values[i].ok_or_else(|| Error::parse(line, key, "missing"))?;
        nums[i] = parse_uint(line, key, v)?;
    }
    let sketch = Sketch::new(nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]);
    sketch
        .validate(grid_n)
        .map_err(|e| Error::parse(line, "loop", e.to_string()))?;

    let comp = values[6].ok_or_else(|| Error::parse(line, "comp", "missing"))?;
    let component = parse_component(line, comp, grid_n, cell_m)?;
    Ok(Pair::new(sketch, component))
}

fn parse_component(line: usize, spec: &str, grid_n: usize, cell_m: usize) -> Result<Component> {
    if let Some(rest) = spec.strip_prefix("cell:") {
        let (t, u) = rest
            .split_once(',')
            .ok_or_else(|| Error::parse(line, "comp", "expected `cell:<t>,<u>`"))?;
        let cell = CellIndex::new(parse_uint(line, "comp", t)?, parse_uint(line, "comp", u)?);
        cell.check(grid_n)
            .map_err(|e| Error::parse(line, "comp", e.to_string()))?;
        Ok(Component::Cell(cell))
    } else if let Some(hex_digits) = spec.strip_prefix("raw:") {
        let want = 2 * 3 * cell_m * cell_m;
        if hex_digits.len() != want {
            return Err(Error::parse(
                line,
                "comp",
                format!(
                    "raw payload has {} hex digits, expected {want} for M={cell_m}",
                    hex_digits.len()
                ),
            ));
        }
        let px = hex::decode(hex_digits).map_err(|e| Error::parse(line, "comp", format!("bad hex payload: {e}")))?;
        Ok(Component::Raw(px))
    } else {
        Err(Error::parse(line, "comp", "expected `cell:<t>,<u>` or `raw:<hex>`"))
    }
}
