//! Line-oriented text checkpoints. Floating-point values are written as the
//! 16 hex digits of their IEEE-754 bit pattern so a save/load cycle is exact.
//!
//! ```text
//! mlp v1 2
//! layer 3 4 relu
//! w <hex> <hex> <hex>        (one line per output row)
//! ...
//! b <hex> <hex> <hex> <hex>
//! layer 4 1 tanh
//! ...
//! ```

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::{Activation, AdamConfig, AdamState, DenseLayer, Mlp};
use crate::error::{Error, Result};

pub fn write_f64_hex(out: &mut String, v: f64) {
    let _ = write!(out, "{:016x}", v.to_bits());
}

pub fn read_f64_hex(token: &str) -> Option<f64> {
    if token.len() != 16 {
        return None;
    }
    u64::from_str_radix(token, 16).ok().map(f64::from_bits)
}

fn write_row(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for &v in values {
        out.push(' ');
        write_f64_hex(out, v);
    }
    out.push('\n');
}

/// Cursor over the lines of a checkpoint with 1-based line numbers for errors.
pub struct TextReader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line_no: usize,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate().peekable(), line_no: 0 }
    }

    pub fn line_no(&self) -> usize {
        self.line_no
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint { line: self.line_no, message: message.into() }
    }

    /// Next non-empty line split into whitespace tokens.
    pub fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (i, line) in self.lines.by_ref() {
            self.line_no = i + 1;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok(trimmed.split_whitespace().collect());
            }
        }
        Err(Error::Checkpoint { line: self.line_no + 1, message: "unexpected end of file".into() })
    }

    /// Next line, which must start with `tag`; returns the remaining tokens.
    pub fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let tokens = self.next_tokens()?;
        if tokens.first() != Some(&tag) {
            return Err(self.error(format!("expected `{tag}`, found `{}`", tokens.first().unwrap_or(&""))));
        }
        Ok(tokens[1..].to_vec())
    }

    pub fn parse<T: std::str::FromStr>(&self, token: Option<&&str>, what: &str) -> Result<T> {
        token.and_then(|t| t.parse().ok()).ok_or_else(|| self.error(format!("missing or invalid {what}")))
    }

    pub fn hex_row(&mut self, tag: &str, len: usize) -> Result<Vec<f64>> {
        let tokens = self.expect(tag)?;
        if tokens.len() != len {
            return Err(self.error(format!("`{tag}` row has {} values, expected {len}", tokens.len())));
        }
        tokens.iter().map(|t| read_f64_hex(t).ok_or_else(|| self.error(format!("bad hex float `{t}`")))).collect()
    }

    pub fn hex_scalar(&mut self, tag: &str) -> Result<f64> {
        Ok(self.hex_row(tag, 1)?[0])
    }
}

impl Mlp {
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(out, "mlp v1 {}", self.layers().len());
        for layer in self.layers() {
            let _ = writeln!(out, "layer {} {} {}", layer.fan_in(), layer.fan_out(), layer.activation);
            for row in layer.weights.rows() {
                write_row(out, "w", row.as_slice().expect("standard layout"));
            }
            write_row(out, "b", layer.biases.as_slice().expect("standard layout"));
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    pub fn read_text(reader: &mut TextReader<'_>) -> Result<Mlp> {
        let head = reader.expect("mlp")?;
        if head.first() != Some(&"v1") {
            return Err(reader.error("unsupported mlp format version"));
        }
        let n: usize = reader.parse(head.get(1), "layer count")?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let spec = reader.expect("layer")?;
            let fan_in: usize = reader.parse(spec.first(), "fan-in")?;
            let fan_out: usize = reader.parse(spec.get(1), "fan-out")?;
            let activation: Activation = spec
                .get(2)
                .ok_or_else(|| reader.error("missing activation"))?
                .parse()
                .map_err(|e: String| reader.error(e))?;
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                weights.extend(reader.hex_row("w", fan_in)?);
            }
            let weights = Array2::from_shape_vec((fan_out, fan_in), weights).expect("length checked per row");
            let biases = Array1::from(reader.hex_row("b", fan_out)?);
            layers.push(DenseLayer { weights, biases, activation });
        }
        Mlp::from_layers(layers)
    }

    pub fn from_text(text: &str) -> Result<Mlp> {
        Mlp::read_text(&mut TextReader::new(text))
    }
}

impl AdamState {
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(out, "adam v1 {} {}", self.step_count, self.m.len());
        write_row(out, "hyper", &[self.config.lr, self.config.beta1, self.config.beta2, self.config.eps]);
        for (m, v) in self.m.iter().zip(&self.v) {
            let _ = writeln!(out, "block {}", m.len());
            write_row(out, "m", m);
            write_row(out, "v", v);
        }
    }

    pub fn read_text(reader: &mut TextReader<'_>) -> Result<AdamState> {
        let head = reader.expect("adam")?;
        if head.first() != Some(&"v1") {
            return Err(reader.error("unsupported adam format version"));
        }
        let step_count: u64 = reader.parse(head.get(1), "step count")?;
        let blocks: usize = reader.parse(head.get(2), "block count")?;
        let hyper = reader.hex_row("hyper", 4)?;
        let config = AdamConfig { lr: hyper[0], beta1: hyper[1], beta2: hyper[2], eps: hyper[3] };
        let mut m = Vec::with_capacity(blocks);
        let mut v = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let spec = reader.expect("block")?;
            let len: usize = reader.parse(spec.first(), "block length")?;
            m.push(reader.hex_row("m", len)?);
            v.push(reader.hex_row("v", len)?);
        }
        Ok(AdamState { config, m, v, step_count })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn hex_float_round_trip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            let mut s = String::new();
            write_f64_hex(&mut s, v);
            prop_assert_eq!(read_f64_hex(&s).unwrap().to_bits(), bits);
        }

        #[test]
        fn mlp_text_round_trip(seed in any::<u64>(), hidden in 1usize..6) {
            let mut rng = rng_from(seed);
            let net = Mlp::new(&[3, hidden, 2], &[Activation::Relu, Activation::Tanh], &mut rng);
            let back = Mlp::from_text(&net.to_text()).unwrap();
            prop_assert_eq!(back.to_text(), net.to_text());
            prop_assert!(back == net);
        }
    }

    #[test]
    fn adam_round_trip() {
        let mut opt = AdamState::new(AdamConfig::with_lr(1e-4), [2, 3]);
        let mut a = vec![0.1, 0.2];
        let mut b = vec![1.0, 2.0, 3.0];
        opt.step(&mut [&mut a, &mut b], &[&[0.3, -0.1], &[1.0, 1e-9, -4.0]]).unwrap();
        let mut s = String::new();
        opt.write_text(&mut s);
        let back = AdamState::read_text(&mut TextReader::new(&s)).unwrap();
        assert_eq!(back, opt);
    }

    #[test]
    fn truncated_checkpoint_reports_line() {
        let mut rng = rng_from(1);
        let net = Mlp::new(&[2, 2], &[Activation::Linear], &mut rng);
        let text = net.to_text();
        let cut: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        match Mlp::from_text(&cut) {
            Err(Error::Checkpoint { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let bad = text.replacen("relu", "bogus", 1).replacen("linear", "bogus", 1);
        assert!(matches!(Mlp::from_text(&bad), Err(Error::Checkpoint { line: 2, .. })));
    }
}
