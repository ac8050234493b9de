//! ASCII PLY point clouds.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{io, Element, Tensor};

/// `x` with `digits` significant digits in the style of C's `%g`.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

pub fn ply_string<T: Element>(cloud: &Tensor<T>) -> Result<String> {
    let s = cloud.shape();
    if s.len() != 2 || s[1] != 3 {
        return Err(dim_err!("PLY export expects [N, 3], got {:?}", s));
    }
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        s[0]
    );
    for (i, p) in cloud.rows().enumerate() {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Serialization(format!("point {i} has a non-finite coordinate")));
        }
        let [x, y, z] = [0, 1, 2].map(|a| format_g(p[a].as_f64(), 6));
        writeln!(out, "{x} {y} {z}").unwrap();
    }
    Ok(out)
}

pub fn export_ply<T: Element>(cloud: &Tensor<T>, path: &Path) -> Result<()> {
    io::write_atomic(path, ply_string(cloud)?.as_bytes())
}

/// Parses the vertex positions of an ASCII PLY file written by [`export_ply`]
/// or any tool that puts `x y z` first on each vertex line.
pub fn parse_ply(text: &str) -> Result<Tensor<f32>> {
    let bad = |m: String| Error::Serialization(format!("PLY: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut count = None;
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", f, _] if *f != "ascii" => return Err(bad(format!("unsupported format {f}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| bad(format!("vertex count: {e}")))?)
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let n = count.ok_or_else(|| bad("no vertex element".into()))?;
    let mut data = Vec::with_capacity(3 * n);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("expected {n} vertices, found {i}")))?;
        let mut fields = line.split_whitespace();
        for _ in 0..3 {
            let v = fields
                .next()
                .ok_or_else(|| bad(format!("vertex {i} has fewer than 3 fields")))?
                .parse::<f32>()
                .map_err(|e| bad(format!("vertex {i}: {e}")))?;
            data.push(v);
        }
    }
    Tensor::new([n, 3], data)
}

pub fn read_ply(path: &Path) -> Result<Tensor<f32>> {
    parse_ply(&std::fs::read_to_string(path)?)
}
