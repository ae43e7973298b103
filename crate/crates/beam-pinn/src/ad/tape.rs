use super::jet::{Jet, MAX_ORDER};
use super::AdError;

/// Flat index into the parameter vector a tape was built against.
pub type ParamId = usize;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Clone, Copy, Debug)]
enum Op {
    Const,
    Input,
    Param(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Scale(u32, f64),
    Tanh { parent: u32, aux: u32 },
    Sin { parent: u32, aux: u32 },
    Cos { parent: u32, aux: u32 },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    jet: Jet,
}

/// Append-only record of a jet-valued computation. Nodes are topologically
/// ordered by construction; the reverse pass propagates jet-valued adjoints
/// (the adjoint of a truncated Cauchy product is the truncated correlation),
/// so gradients of higher coefficients are exact.
///
/// One tape per evaluation; tapes are never shared between concurrent
/// evaluations. `clear` lets a worker reuse the allocation across points.
pub struct Tape {
    nodes: Vec<Node>,
    // derivative jets for unary nodes, referenced by index from Op
    aux: Vec<Jet>,
    n_params: usize,
    adjoint: Vec<[f64; MAX_ORDER + 1]>,
}

impl Tape {
    pub fn new(n_params: usize) -> Tape {
        Tape { nodes: Vec::new(), aux: Vec::new(), n_params, adjoint: Vec::new() }
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.aux.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// The jet currently stored at `id`.
    pub fn jet(&self, id: NodeId) -> &Jet {
        &self.nodes[id.0 as usize].jet
    }

    fn push(&mut self, op: Op, jet: Jet) -> NodeId {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { op, jet });
        NodeId(id)
    }

    pub fn constant(&mut self, v: f64, order: usize) -> Result<NodeId, AdError> {
        Ok(self.push(Op::Const, Jet::constant(v, order)?))
    }

    /// A seeded (or otherwise preassembled) input leaf.
    pub fn input(&mut self, jet: Jet) -> NodeId {
        self.push(Op::Input, jet)
    }

    /// A parameter leaf: a constant jet whose value carries a gradient.
    pub fn param(&mut self, id: ParamId, value: f64, order: usize) -> Result<NodeId, AdError> {
        if id >= self.n_params {
            return Err(AdError::ParamOutOfRange(id, self.n_params));
        }
        Ok(self.push(Op::Param(id as u32), Jet::constant(value, order)?))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let jet = self.jet(a).add(self.jet(b))?;
        Ok(self.push(Op::Add(a.0, b.0), jet))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let jet = self.jet(a).sub(self.jet(b))?;
        Ok(self.push(Op::Sub(a.0, b.0), jet))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let jet = self.jet(a).mul(self.jet(b))?;
        Ok(self.push(Op::Mul(a.0, b.0), jet))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let jet = self.jet(a).scale(s);
        self.push(Op::Scale(a.0, s), jet)
    }

    fn push_aux(&mut self, jet: Jet) -> u32 {
        self.aux.push(jet);
        (self.aux.len() - 1) as u32
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (u, v) = self.jet(a).tanh_with_deriv();
        let aux = self.push_aux(v);
        self.push(Op::Tanh { parent: a.0, aux }, u)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let (s, c) = self.jet(a).sin_cos();
        let aux = self.push_aux(c);
        self.push(Op::Sin { parent: a.0, aux }, s)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let (s, c) = self.jet(a).sin_cos();
        let aux = self.push_aux(s.neg());
        self.push(Op::Cos { parent: a.0, aux }, c)
    }

    /// Recomputes every stored jet from its parents, in place. Used by the
    /// determinism audit: replay must be bit-identical.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op;
            let jet = match op {
                Op::Const | Op::Input | Op::Param(_) => continue,
                Op::Add(a, b) => {
                    self.nodes[a as usize].jet.add(&self.nodes[b as usize].jet).unwrap()
                }
                Op::Sub(a, b) => {
                    self.nodes[a as usize].jet.sub(&self.nodes[b as usize].jet).unwrap()
                }
                Op::Mul(a, b) => {
                    self.nodes[a as usize].jet.mul(&self.nodes[b as usize].jet).unwrap()
                }
                Op::Scale(a, s) => self.nodes[a as usize].jet.scale(s),
                Op::Tanh { parent, aux } => {
                    let (u, v) = self.nodes[parent as usize].jet.tanh_with_deriv();
                    self.aux[aux as usize] = v;
                    u
                }
                Op::Sin { parent, aux } => {
                    let (s, c) = self.nodes[parent as usize].jet.sin_cos();
                    self.aux[aux as usize] = c;
                    s
                }
                Op::Cos { parent, aux } => {
                    let (s, c) = self.nodes[parent as usize].jet.sin_cos();
                    self.aux[aux as usize] = s.neg();
                    c
                }
            };
            self.nodes[i].jet = jet;
        }
    }

    /// Reverse pass for the scalar objective
    /// `sum_i weight_i * coeff[index_i](node_i)`.
    /// Gradients are accumulated into `grad` (length `n_params`).
    pub fn backward_into(
        &mut self,
        objective: &[(NodeId, usize, f64)],
        grad: &mut [f64],
    ) -> Result<(), AdError> {
        assert_eq!(grad.len(), self.n_params, "gradient buffer length mismatch");
        let n = self.nodes.len();
        self.adjoint.clear();
        self.adjoint.resize(n, [0.0; MAX_ORDER + 1]);

        for &(node, index, weight) in objective {
            let idx = node.0 as usize;
            if idx >= n {
                return Err(AdError::DanglingNode(idx));
            }
            let order = self.nodes[idx].jet.order();
            if index > order {
                return Err(AdError::CoeffOutOfRange { index, order });
            }
            self.adjoint[idx][index] += weight;
        }

        for i in (0..n).rev() {
            let bar = self.adjoint[i];
            if bar.iter().all(|&v| v == 0.0) {
                continue;
            }
            let order = self.nodes[i].jet.order();
            match self.nodes[i].op {
                Op::Const | Op::Input => {}
                Op::Param(p) => grad[p as usize] += bar[0],
                Op::Add(a, b) => {
                    for k in 0..=order {
                        self.adjoint[a as usize][k] += bar[k];
                        self.adjoint[b as usize][k] += bar[k];
                    }
                }
                Op::Sub(a, b) => {
                    for k in 0..=order {
                        self.adjoint[a as usize][k] += bar[k];
                        self.adjoint[b as usize][k] -= bar[k];
                    }
                }
                Op::Mul(a, b) => {
                    let ja = *self.nodes[a as usize].jet.raw();
                    let jb = *self.nodes[b as usize].jet.raw();
                    correlate_into(&bar, &jb, order, &mut self.adjoint[a as usize]);
                    correlate_into(&bar, &ja, order, &mut self.adjoint[b as usize]);
                }
                Op::Scale(a, s) => {
                    for k in 0..=order {
                        self.adjoint[a as usize][k] += s * bar[k];
                    }
                }
                Op::Tanh { parent, aux } | Op::Sin { parent, aux } | Op::Cos { parent, aux } => {
                    let g = *self.aux[aux as usize].raw();
                    correlate_into(&bar, &g, order, &mut self.adjoint[parent as usize]);
                }
            }
        }
        Ok(())
    }

    /// Convenience wrapper allocating a fresh gradient vector.
    pub fn backward(&mut self, objective: &[(NodeId, usize, f64)]) -> Result<Vec<f64>, AdError> {
        let mut grad = vec![0.0; self.n_params];
        self.backward_into(objective, &mut grad)?;
        Ok(grad)
    }
}

/// Adjoint of the truncated Cauchy product: `out[j] += sum_i bar[i+j] * y[i]`.
#[inline]
fn correlate_into(
    bar: &[f64; MAX_ORDER + 1],
    y: &[f64; MAX_ORDER + 1],
    order: usize,
    out: &mut [f64; MAX_ORDER + 1],
) {
    for j in 0..=order {
        let mut acc = 0.0;
        for i in 0..=(order - j) {
            acc += bar[i + j] * y[i];
        }
        out[j] += acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_square() {
        // y = p*p at p = 3 => dy/dp = 6
        let mut tape = Tape::new(1);
        let p = tape.param(0, 3.0, 0).unwrap();
        let y = tape.mul(p, p).unwrap();
        let grad = tape.backward(&[(y, 0, 1.0)]).unwrap();
        assert_relative_eq!(grad[0], 6.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_of_higher_coefficient() {
        // y = p * (x0 + t)^2; Taylor coeff 2 of y is p, so d(coeff2)/dp = 1.
        for &x0 in &[0.0, 0.7, -2.3] {
            let mut tape = Tape::new(1);
            let p = tape.param(0, 1.7, 2).unwrap();
            let x = tape.input(Jet::seed(x0, 2).unwrap());
            let x2 = tape.mul(x, x).unwrap();
            let y = tape.mul(p, x2).unwrap();
            let grad = tape.backward(&[(y, 2, 1.0)]).unwrap();
            assert_relative_eq!(grad[0], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn gradient_through_tanh_derivative() {
        // y = tanh(p * x) with x seeded at 0; coeff1 of y is p * tanh'(0) = p.
        let mut tape = Tape::new(1);
        let p = tape.param(0, 1.0, 2).unwrap();
        let x = tape.input(Jet::seed(0.0, 2).unwrap());
        let px = tape.mul(p, x).unwrap();
        let y = tape.tanh(px);
        let grad = tape.backward(&[(y, 1, 1.0)]).unwrap();
        assert_relative_eq!(grad[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_linearity() {
        // grad(alpha*F + beta*G) = alpha*grad F + beta*grad G, to machine precision
        let build = |tape: &mut Tape| -> (NodeId, NodeId) {
            let p = tape.param(0, 0.8, 2).unwrap();
            let q = tape.param(1, -1.2, 2).unwrap();
            let x = tape.input(Jet::seed(0.4, 2).unwrap());
            let px = tape.mul(p, x).unwrap();
            let f = tape.sin(px);
            let qf = tape.mul(q, f).unwrap();
            let g = tape.tanh(qf);
            (f, g)
        };
        let (alpha, beta) = (1.75, -0.3125); // exactly representable
        let mut tape = Tape::new(2);
        let (f, g) = build(&mut tape);
        let gf = tape.backward(&[(f, 1, 1.0)]).unwrap();
        let gg = tape.backward(&[(g, 2, 1.0)]).unwrap();
        let combined = tape.backward(&[(f, 1, alpha), (g, 2, beta)]).unwrap();
        for i in 0..2 {
            assert_eq!(combined[i], alpha * gf[i] + beta * gg[i]);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut tape = Tape::new(2);
        let p = tape.param(0, 0.37, 4).unwrap();
        let q = tape.param(1, 2.1, 4).unwrap();
        let x = tape.input(Jet::seed(0.9, 4).unwrap());
        let px = tape.mul(p, x).unwrap();
        let s = tape.sin(px);
        let qs = tape.mul(q, s).unwrap();
        let y = tape.tanh(qs);
        let before: Vec<[f64; 5]> = (0..tape.len()).map(|i| *tape.nodes[i].jet.raw()).collect();
        let g_before = tape.backward(&[(y, 4, 1.0)]).unwrap();
        tape.replay();
        let after: Vec<[f64; 5]> = (0..tape.len()).map(|i| *tape.nodes[i].jet.raw()).collect();
        let g_after = tape.backward(&[(y, 4, 1.0)]).unwrap();
        for (a, b) in before.iter().zip(&after) {
            for k in 0..5 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
        for (a, b) in g_before.iter().zip(&g_after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dangling_and_out_of_range_rejected() {
        let mut tape = Tape::new(1);
        let p = tape.param(0, 1.0, 2).unwrap();
        let y = tape.mul(p, p).unwrap();
        assert!(matches!(
            tape.backward(&[(NodeId(99), 0, 1.0)]),
            Err(AdError::DanglingNode(99))
        ));
        assert!(matches!(
            tape.backward(&[(y, 3, 1.0)]),
            Err(AdError::CoeffOutOfRange { index: 3, order: 2 })
        ));
        assert!(matches!(tape.param(1, 0.0, 0), Err(AdError::ParamOutOfRange(1, 1))));
    }
}
