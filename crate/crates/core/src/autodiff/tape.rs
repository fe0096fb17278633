use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{HkgError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Mean(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    /// `[b, c, h, w] -> [b, c]`; `argmax` holds the flat input index per output.
    GlobalMaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    /// Mean binary cross-entropy on logits against fixed targets.
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records a forward computation so its gradient can be replayed in reverse.
/// Nodes are appended in evaluation order, which is a valid topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires one.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of the right length when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; len])
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A fixed input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(HkgError::shape(op, s, &[0, 0])),
        }
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(HkgError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let data = kernels::matmul(&self.value(a).data, &self.value(b).data, m, k, n);
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data,
            },
            Op::MatMul(a, b),
            &[a, b],
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "transpose")?;
        let data = kernels::transpose(&self.value(a).data, r, c);
        Ok(self.push(
            Tensor {
                shape: vec![c, r],
                data,
            },
            Op::Transpose(a),
            &[a],
        ))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(HkgError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), &[a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "hadamard")?;
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Hadamard(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|x| x * factor).collect(),
        };
        self.push(value, Op::Scale(a, factor), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t
                .data
                .iter()
                .map(|&x| if x > 0.0 { x } else { slope * x })
                .collect(),
        };
        self.push(value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&x| sigmoid(x)).collect(),
        };
        self.push(value, Op::Sigmoid(a), &[a])
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data.iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// `input [b, cin, h, w]`, `weight [cout, cin, k, k]`, `bias [cout]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (batch, in_ch, h, w) = match *self.shape(input) {
            [b, c, h, w] => (b, c, h, w),
            ref s => return Err(HkgError::shape("conv2d input", s, &[0, 0, 0, 0])),
        };
        let (out_ch, k) = match *self.shape(weight) {
            [o, c, k1, k2] if c == in_ch && k1 == k2 => (o, k1),
            ref s => return Err(HkgError::shape("conv2d weight", s, &[0, in_ch, 0, 0])),
        };
        if let Some(b) = bias {
            if self.shape(b) != [out_ch] {
                return Err(HkgError::shape("conv2d bias", self.shape(b), &[out_ch]));
            }
        }
        if stride == 0 {
            return Err(HkgError::Parameter("conv2d stride must be > 0".into()));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(HkgError::shape(
                "conv2d kernel larger than padded input",
                &[h, w],
                &[k, k],
            ));
        }
        let geom = ConvGeom {
            batch,
            in_ch,
            out_ch,
            h,
            w,
            k,
            stride,
            pad: padding,
            out_h: (h + 2 * padding - k) / stride + 1,
            out_w: (w + 2 * padding - k) / stride + 1,
        };
        let data = kernels::conv2d_forward(
            &geom,
            &self.value(input).data,
            &self.value(weight).data,
            bias.map(|b| self.value(b).data.as_slice()),
        );
        let value = Tensor {
            shape: vec![batch, out_ch, geom.out_h, geom.out_w],
            data,
        };
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            &inputs,
        ))
    }

    /// Per-channel maximum over both spatial axes: `[b, c, h, w] -> [b, c]`.
    /// Ties resolve to the first position in row-major order.
    pub fn global_max_pool(&mut self, input: Var) -> Result<Var> {
        let (b, c, h, w) = match *self.shape(input) {
            [b, c, h, w] if h * w > 0 => (b, c, h, w),
            ref s => return Err(HkgError::shape("global_max_pool", s, &[0, 0, 1, 1])),
        };
        let x = &self.value(input).data;
        let plane = h * w;
        let mut data = Vec::with_capacity(b * c);
        let mut argmax = Vec::with_capacity(b * c);
        for p in 0..b * c {
            let base = p * plane;
            let (mut best, mut at) = (x[base], base);
            for (i, &v) in x[base..base + plane].iter().enumerate() {
                if v > best {
                    best = v;
                    at = base + i;
                }
            }
            data.push(best);
            argmax.push(at);
        }
        Ok(self.push(
            Tensor {
                shape: vec![b, c],
                data,
            },
            Op::GlobalMaxPool { input, argmax },
            &[input],
        ))
    }

    /// Mean over every element of the numerically stable binary cross-entropy
    /// `max(x,0) - x*l + ln(1 + exp(-|x|))`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        if self.shape(logits) != targets.shape.as_slice() {
            return Err(HkgError::shape(
                "bce_with_logits",
                self.shape(logits),
                &targets.shape,
            ));
        }
        let x = &self.value(logits).data;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(HkgError::Numeric(format!("non-finite score {bad}")));
        }
        let loss = x
            .iter()
            .zip(&targets.data)
            .map(|(&x, &l)| x.max(0.0) - x * l + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / x.len() as f64;
        let op = Op::BceWithLogits {
            logits,
            targets: targets.data.clone(),
        };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        let out = &self.nodes[output.0];
        if out.value.numel() != 1 {
            return Err(HkgError::shape(
                "backward (expects scalar)",
                &out.value.shape,
                &[1],
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, delta: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e += d),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if wants(*a) {
                    // dA = dY * B^T
                    let bt = kernels::transpose(&self.value(*b).data, k, n);
                    acc(*a, kernels::matmul(g, &bt, m, n, k));
                }
                if wants(*b) {
                    // dB = A^T * dY
                    let at = kernels::transpose(&self.value(*a).data, m, k);
                    acc(*b, kernels::matmul(&at, g, k, m, n));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                acc(*a, kernels::transpose(g, c, r));
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.to_vec());
                }
                if wants(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                if wants(*a) {
                    acc(*a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                }
                if wants(*b) {
                    acc(*b, g.iter().zip(av).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, f) => acc(*a, g.iter().map(|g| g * f).collect()),
            Op::LeakyRelu(a, slope) => {
                let x = &self.value(*a).data;
                acc(
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { g * slope })
                        .collect(),
                );
            }
            Op::Sigmoid(a) => {
                let y = &node.value.data;
                acc(
                    *a,
                    g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                );
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let (gi, gw, gb) = kernels::conv2d_backward(
                    geom,
                    &self.value(*input).data,
                    &self.value(*weight).data,
                    g,
                    wants(*input),
                );
                if let Some(gi) = gi {
                    acc(*input, gi);
                }
                if wants(*weight) {
                    acc(*weight, gw);
                }
                if let Some(b) = bias {
                    if wants(*b) {
                        acc(*b, gb);
                    }
                }
            }
            Op::GlobalMaxPool { input, argmax } => {
                let mut gi = vec![0.0; self.value(*input).numel()];
                for (&at, &gv) in argmax.iter().zip(g) {
                    gi[at] += gv;
                }
                acc(*input, gi);
            }
            Op::BceWithLogits { logits, targets } => {
                let x = &self.value(*logits).data;
                let scale = g[0] / x.len() as f64;
                acc(
                    *logits,
                    x.iter()
                        .zip(targets)
                        .map(|(&x, &l)| (sigmoid(x) - l) * scale)
                        .collect(),
                );
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
