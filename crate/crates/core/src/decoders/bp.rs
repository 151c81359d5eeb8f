//! Flooding-schedule belief propagation on the Tanner graph of `H`.

use super::{hard_decision, Capabilities, DecodeResult, Decoder};
use crate::code::LinearCode;
use std::sync::Arc;

/// Largest magnitude of a tanh product before `atanh`; keeps messages finite.
const TANH_CLAMP: f64 = 1.0 - 1e-15;

/// Check-node update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckRule {
    /// `r = 2 atanh ∏ tanh(q/2)` over the other edges.
    SumProduct,
    /// Sign product times minimum magnitude, scaled by `normalization`.
    MinSum { normalization: f64 },
}

/// Extrinsic sum-product messages: `out[i]` combines every `incoming[j]`, `j ≠ i`.
pub fn sum_product_check_update(incoming: &[f64], out: &mut [f64]) {
    let d = incoming.len();
    debug_assert_eq!(d, out.len());
    let t: Vec<f64> = incoming.iter().map(|&q| (0.5 * q).tanh()).collect();
    // prefix products in `out`, then sweep suffix products from the right
    let mut acc = 1.0;
    for i in 0..d {
        out[i] = acc;
        acc *= t[i];
    }
    acc = 1.0;
    for i in (0..d).rev() {
        let p = (out[i] * acc).clamp(-TANH_CLAMP, TANH_CLAMP);
        out[i] = 2.0 * p.atanh();
        acc *= t[i];
    }
}

/// Extrinsic min-sum messages.
pub fn min_sum_check_update(incoming: &[f64], out: &mut [f64], normalization: f64) {
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut arg = usize::MAX;
    let mut negatives = 0usize;
    for (i, &q) in incoming.iter().enumerate() {
        let a = q.abs();
        if q < 0.0 {
            negatives += 1;
        }
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, (&q, o)) in incoming.iter().zip(out.iter_mut()).enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let others_negative = negatives - usize::from(q < 0.0);
        let sign = if others_negative.is_multiple_of(2) { 1.0 } else { -1.0 };
        *o = normalization * sign * mag;
    }
}

#[derive(Debug, Clone)]
struct TannerGraph {
    /// Edges grouped by check: edges of check `c` are `check_ptr[c]..check_ptr[c+1]`.
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    /// Edge ids incident to each variable.
    var_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    fn new(code: &LinearCode) -> Self {
        let h = code.parity_check();
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); code.n()];
        for r in 0..h.rows() {
            for v in h.row_support(r) {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        Self {
            check_ptr,
            edge_var,
            var_edges,
        }
    }

    fn checks(&self) -> usize {
        self.check_ptr.len() - 1
    }

    fn satisfied(&self, bits: &[u8]) -> bool {
        (0..self.checks()).all(|c| {
            self.edge_var[self.check_ptr[c]..self.check_ptr[c + 1]]
                .iter()
                .fold(0u8, |acc, &v| acc ^ bits[v])
                == 0
        })
    }
}

/// Sum-product or min-sum decoder with early termination on a zero syndrome.
#[derive(Debug, Clone)]
pub struct BeliefPropagation {
    name: String,
    code: Arc<LinearCode>,
    graph: TannerGraph,
    rule: CheckRule,
    max_iterations: usize,
}

impl BeliefPropagation {
    pub fn new(code: Arc<LinearCode>, rule: CheckRule, max_iterations: usize) -> Self {
        let name = match rule {
            CheckRule::SumProduct => "sum_product",
            CheckRule::MinSum { .. } => "min_sum",
        };
        Self {
            name: name.to_string(),
            graph: TannerGraph::new(&code),
            code,
            rule,
            max_iterations,
        }
    }

    pub fn sum_product(code: Arc<LinearCode>, max_iterations: usize) -> Self {
        Self::new(code, CheckRule::SumProduct, max_iterations)
    }

    /// Plain (unscaled) min-sum.
    pub fn min_sum(code: Arc<LinearCode>, max_iterations: usize) -> Self {
        Self::new(code, CheckRule::MinSum { normalization: 1.0 }, max_iterations)
    }

    pub fn rule(&self) -> CheckRule {
        self.rule
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    fn check_update(&self, incoming: &[f64], out: &mut [f64]) {
        match self.rule {
            CheckRule::SumProduct => sum_product_check_update(incoming, out),
            CheckRule::MinSum { normalization } => min_sum_check_update(incoming, out, normalization),
        }
    }
}

impl Decoder for BeliefPropagation {
    fn name(&self) -> &str {
        &self.name
    }

    fn code(&self) -> &LinearCode {
        &self.code
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::BLACK_BOX
    }

    fn decode(&self, y: &[f64], sigma2: f64) -> DecodeResult {
        let g = &self.graph;
        let channel: Vec<f64> = y.iter().map(|&v| 2.0 * v / sigma2).collect();
        let bits = hard_decision(&channel);
        if g.satisfied(&bits) {
            return DecodeResult {
                bits,
                soft: channel,
                iterations: 0,
                converged: true,
            };
        }
        let edges = g.edge_var.len();
        let mut v2c: Vec<f64> = g.edge_var.iter().map(|&v| channel[v]).collect();
        let mut c2v = vec![0.0; edges];
        let mut posterior = channel.clone();
        let mut bits = bits;
        for it in 1..=self.max_iterations {
            for c in 0..g.checks() {
                let (a, b) = (g.check_ptr[c], g.check_ptr[c + 1]);
                self.check_update(&v2c[a..b], &mut c2v[a..b]);
            }
            for (v, es) in g.var_edges.iter().enumerate() {
                let total = channel[v] + es.iter().map(|&e| c2v[e]).sum::<f64>();
                posterior[v] = total;
                for &e in es {
                    v2c[e] = total - c2v[e];
                }
            }
            bits = hard_decision(&posterior);
            if g.satisfied(&bits) {
                return DecodeResult {
                    bits,
                    soft: posterior,
                    iterations: it,
                    converged: true,
                };
            }
        }
        DecodeResult {
            bits,
            soft: posterior,
            iterations: self.max_iterations,
            converged: false,
        }
    }
}
