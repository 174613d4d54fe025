use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `±sqrt(6 / (rows + cols))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// Row vector times matrix: `x · M`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, m) in out.iter_mut().zip(row) {
                *o += xi * m;
            }
        }
        out
    }

    /// Matrix times column vector: `M · y`.
    pub fn right_mul(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(y).map(|(m, v)| m * v).sum())
            .collect()
    }

    /// `M += x ⊗ y` (outer product, `x` indexes rows).
    pub fn add_outer(&mut self, x: &[f64], y: &[f64]) {
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (m, yj) in row.iter_mut().zip(y) {
                *m += xi * yj;
            }
        }
    }
}

/// Gating layer fusing a schema-item embedding with its annotation embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// `2d × d`; the first `d` rows act on the item half, the rest on the
    /// annotation half.
    pub wg: Matrix,
    pub bg: Vec<f64>,
}

impl GateParams {
    fn zeros(d: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, d),
            b1: vec![0.0; d],
            w2: Matrix::zeros(d, d),
            b2: vec![0.0; d],
            wg: Matrix::zeros(2 * d, d),
            bg: vec![0.0; d],
        }
    }

    fn init(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: Matrix::glorot(d, d, rng),
            b1: vec![0.0; d],
            w2: Matrix::glorot(d, d, rng),
            b2: vec![0.0; d],
            wg: Matrix::glorot(2 * d, d, rng),
            bg: vec![0.0; d],
        }
    }
}

/// Two linear layers followed by a two-way softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `d × ω`
    pub u1: Matrix,
    pub c1: Vec<f64>,
    /// `ω × 2`; column 1 is the positive class.
    pub u2: Matrix,
    pub c2: Vec<f64>,
}

impl HeadParams {
    fn zeros(d: usize, omega: usize) -> Self {
        Self {
            u1: Matrix::zeros(d, omega),
            c1: vec![0.0; omega],
            u2: Matrix::zeros(omega, 2),
            c2: vec![0.0; 2],
        }
    }

    fn init(d: usize, omega: usize, rng: &mut impl Rng) -> Self {
        Self {
            u1: Matrix::glorot(d, omega, rng),
            c1: vec![0.0; omega],
            u2: Matrix::glorot(omega, 2, rng),
            c2: vec![0.0; 2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Table,
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Table,
    Column,
    Star,
}

impl HeadKind {
    /// Star items go through the column gate.
    pub fn gate(self) -> GateKind {
        match self {
            HeadKind::Table => GateKind::Table,
            HeadKind::Column | HeadKind::Star => GateKind::Column,
        }
    }
}

/// Every trainable tensor of the extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub d: usize,
    pub omega: usize,
    pub table_gate: GateParams,
    pub column_gate: GateParams,
    pub table_head: HeadParams,
    pub column_head: HeadParams,
    pub star_head: HeadParams,
}

impl ExtractorParams {
    /// All tensors zero; also the shape of a gradient.
    pub fn zeros(d: usize, omega: usize) -> Self {
        Self {
            d,
            omega,
            table_gate: GateParams::zeros(d),
            column_gate: GateParams::zeros(d),
            table_head: HeadParams::zeros(d, omega),
            column_head: HeadParams::zeros(d, omega),
            star_head: HeadParams::zeros(d, omega),
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(d: usize, omega: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            d,
            omega,
            table_gate: GateParams::init(d, &mut rng),
            column_gate: GateParams::init(d, &mut rng),
            table_head: HeadParams::init(d, omega, &mut rng),
            column_head: HeadParams::init(d, omega, &mut rng),
            star_head: HeadParams::init(d, omega, &mut rng),
        }
    }

    pub fn gate(&self, kind: GateKind) -> &GateParams {
        match kind {
            GateKind::Table => &self.table_gate,
            GateKind::Column => &self.column_gate,
        }
    }

    pub fn gate_mut(&mut self, kind: GateKind) -> &mut GateParams {
        match kind {
            GateKind::Table => &mut self.table_gate,
            GateKind::Column => &mut self.column_gate,
        }
    }

    pub fn head(&self, kind: HeadKind) -> &HeadParams {
        match kind {
            HeadKind::Table => &self.table_head,
            HeadKind::Column => &self.column_head,
            HeadKind::Star => &self.star_head,
        }
    }

    pub fn head_mut(&mut self, kind: HeadKind) -> &mut HeadParams {
        match kind {
            HeadKind::Table => &mut self.table_head,
            HeadKind::Column => &mut self.column_head,
            HeadKind::Star => &mut self.star_head,
        }
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = Vec::with_capacity(22);
        for (prefix, g) in [("table_gate", &self.table_gate), ("column_gate", &self.column_gate)] {
            let names = gate_names(prefix);
            out.extend([
                (names[0], &g.w1.data[..]),
                (names[1], &g.b1[..]),
                (names[2], &g.w2.data[..]),
                (names[3], &g.b2[..]),
                (names[4], &g.wg.data[..]),
                (names[5], &g.bg[..]),
            ]);
        }
        for (prefix, h) in [
            ("table_head", &self.table_head),
            ("column_head", &self.column_head),
            ("star_head", &self.star_head),
        ] {
            let names = head_names(prefix);
            out.extend([
                (names[0], &h.u1.data[..]),
                (names[1], &h.c1[..]),
                (names[2], &h.u2.data[..]),
                (names[3], &h.c2[..]),
            ]);
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(22);
        for (prefix, g) in [
            ("table_gate", &mut self.table_gate),
            ("column_gate", &mut self.column_gate),
        ] {
            let names = gate_names(prefix);
            out.push((names[0], &mut g.w1.data[..]));
            out.push((names[1], &mut g.b1[..]));
            out.push((names[2], &mut g.w2.data[..]));
            out.push((names[3], &mut g.b2[..]));
            out.push((names[4], &mut g.wg.data[..]));
            out.push((names[5], &mut g.bg[..]));
        }
        for (prefix, h) in [
            ("table_head", &mut self.table_head),
            ("column_head", &mut self.column_head),
            ("star_head", &mut self.star_head),
        ] {
            let names = head_names(prefix);
            out.push((names[0], &mut h.u1.data[..]));
            out.push((names[1], &mut h.c1[..]));
            out.push((names[2], &mut h.u2.data[..]));
            out.push((names[3], &mut h.c2[..]));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks shapes against `(d, ω)` and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let (d, w) = (self.d, self.omega);
        let expected = |name: &str| -> usize {
            match name.rsplit('.').next().unwrap() {
                "w1" | "w2" => d * d,
                "wg" => 2 * d * d,
                "b1" | "b2" | "bg" => d,
                "u1" => d * w,
                "c1" => w,
                "u2" => w * 2,
                "c2" => 2,
                _ => unreachable!(),
            }
        };
        for (name, t) in self.tensors() {
            if t.len() != expected(name) {
                return Err(Error::Validation(format!(
                    "tensor {name} has {} entries, expected {} for d={d}, omega={w}",
                    t.len(),
                    expected(name)
                )));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric {
                    tensor: name.to_string(),
                    message: "non-finite parameter".into(),
                });
            }
        }
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ExtractorParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

fn gate_names(prefix: &str) -> [&'static str; 6] {
    match prefix {
        "table_gate" => [
            "table_gate.w1",
            "table_gate.b1",
            "table_gate.w2",
            "table_gate.b2",
            "table_gate.wg",
            "table_gate.bg",
        ],
        _ => [
            "column_gate.w1",
            "column_gate.b1",
            "column_gate.w2",
            "column_gate.b2",
            "column_gate.wg",
            "column_gate.bg",
        ],
    }
}

fn head_names(prefix: &str) -> [&'static str; 4] {
    match prefix {
        "table_head" => ["table_head.u1", "table_head.c1", "table_head.u2", "table_head.c2"],
        "column_head" => ["column_head.u1", "column_head.c1", "column_head.u2", "column_head.c2"],
        _ => ["star_head.u1", "star_head.c1", "star_head.u2", "star_head.c2"],
    }
}
