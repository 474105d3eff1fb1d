//! Named parameter tensors and the binary checkpoint format.
//!
//! A checkpoint is the line `TAVST-CKPT v1`, followed by one record per tensor
//! in name order: `name<TAB>rank<TAB>dim...<LF>` and then the tensor values as
//! little-endian `f32`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Precision, Tensor};

pub const CHECKPOINT_MAGIC: &str = "TAVST-CKPT v1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

/// Gradient buffers keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub(crate) grads: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, name: &str, grad: Vec<f64>) {
        self.grads.insert(name.to_string(), grad);
    }

    /// `self += scale * other`, creating entries as needed.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (name, g) in &other.grads {
            let dst = self
                .grads
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (d, s) in dst.iter_mut().zip(g) {
                *d += scale * s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors
            .insert(name.into(), tensor.with_requires_grad(true));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn expect(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// Adds `scale * grads` into the parameter gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) -> Result<()> {
        for (name, g) in &grads.grads {
            let t = self
                .tensors
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter {name}")))?;
            if t.numel() != g.len() {
                return Err(Error::Shape {
                    op: "accumulate",
                    left: t.shape().to_vec(),
                    right: vec![g.len()],
                });
            }
            for (d, s) in t.grad_mut().iter_mut().zip(g) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.grad().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so that their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in self.tensors.values_mut() {
                t.grad_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    pub fn round_to(&mut self, precision: Precision) {
        for t in self.tensors.values_mut() {
            precision.round_slice(t.data_mut());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        buf.push(b'\n');
        for (name, t) in &self.tensors {
            if name.contains(['\t', '\n']) {
                return Err(Error::Checkpoint(format!("invalid tensor name {name:?}")));
            }
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            buf.extend_from_slice(format!("{name}\t{}\t{}\n", t.rank(), dims.join("\t")).as_bytes());
            for &x in t.data() {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if line.strip_suffix(b"\n") != Some(CHECKPOINT_MAGIC.as_bytes()) {
            return Err(Error::Checkpoint("missing TAVST-CKPT v1 header".into()));
        }
        let mut params = ModelParams::new();
        loop {
            line.clear();
            let n = r
                .read_until(b'\n', &mut line)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            if n == 0 {
                break;
            }
            let header = std::str::from_utf8(line.strip_suffix(b"\n").unwrap_or(&line))
                .map_err(|_| Error::Checkpoint("record header is not utf-8".into()))?;
            let fields: Vec<&str> = header.split('\t').collect();
            if fields.len() < 3 {
                return Err(Error::Checkpoint(format!("malformed record header {header:?}")));
            }
            let name = fields[0].to_string();
            let rank: usize = fields[1]
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad rank in {header:?}")))?;
            if fields.len() != 2 + rank {
                return Err(Error::Checkpoint(format!("rank/dims disagree in {header:?}")));
            }
            let shape = fields[2..]
                .iter()
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Checkpoint(format!("bad dims in {header:?}")))?;
            let numel: usize = shape.iter().product();
            let mut raw = vec![0u8; numel * 4];
            r.read_exact(&mut raw)
                .map_err(|_| Error::Checkpoint(format!("truncated data for {name}")))?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            params.insert(name, Tensor::new(shape, data)?);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(file)
    }
}

/// Glorot-uniform matrix: entries in `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("glorot shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("b.bias", Tensor::vector(vec![1.5, -2.25]));
        p.insert("a.w", Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 1e-8, 7.0]).unwrap());
        p
    }

    #[test]
    fn checkpoint_layout() {
        let mut p = sample();
        p.round_to(Precision::Standard);
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let expected_header = b"TAVST-CKPT v1\na.w\t2\t2\t3\n";
        assert_eq!(&buf[..expected_header.len()], expected_header);
        // a.w payload then the b.bias record (name order).
        let after = expected_header.len() + 6 * 4;
        assert_eq!(&buf[after..after + 11], b"b.bias\t1\t2\n");
        assert_eq!(buf.len(), after + 11 + 8);
        assert_eq!(
            &buf[expected_header.len()..expected_header.len() + 4],
            &0.1f32.to_le_bytes()
        );
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        assert!(ModelParams::read_checkpoint(&b"NOPE\n"[..]).is_err());
        let mut buf = Vec::new();
        sample().write_checkpoint(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(ModelParams::read_checkpoint(&buf[..]).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut p = sample();
        p.get_mut("a.w").unwrap().grad_mut()[0] = 30.0;
        p.get_mut("b.bias").unwrap().grad_mut()[1] = 40.0;
        let before = p.clip_grad_norm(5.0);
        assert_eq!(before, 50.0);
        assert!((p.grad_norm() - 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            vals in proptest::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 1..40)
        ) {
            let mut p = ModelParams::new();
            let n = vals.len();
            p.insert("x", Tensor::vector(vals.iter().map(|&v| v as f64).collect()));
            p.insert("y", Tensor::matrix(1, n, vals.iter().rev().map(|&v| v as f64).collect()).unwrap());
            let mut buf = Vec::new();
            p.write_checkpoint(&mut buf).unwrap();
            let q = ModelParams::read_checkpoint(&buf[..]).unwrap();
            let mut buf2 = Vec::new();
            q.write_checkpoint(&mut buf2).unwrap();
            prop_assert_eq!(&buf, &buf2);
            for (name, t) in p.iter() {
                let u = q.get(name).unwrap();
                prop_assert_eq!(t.shape(), u.shape());
                for (a, b) in t.data().iter().zip(u.data()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
