//! Exact inference on linear chains in log space.

/// Node and transition log-potentials of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotentials {
    pub n_states: usize,
    /// Row-major `T x S`.
    pub node: Vec<f64>,
    /// Row-major `S x S`, `transition[from * S + to]`.
    pub transition: Vec<f64>,
}

impl ChainPotentials {
    pub fn new(n_states: usize, node: Vec<f64>, transition: Vec<f64>) -> Self {
        assert_eq!(node.len() % n_states, 0);
        assert_eq!(transition.len(), n_states * n_states);
        Self {
            n_states,
            node,
            transition,
        }
    }

    pub fn len(&self) -> usize {
        self.node.len() / self.n_states
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    pub fn node(&self, t: usize) -> &[f64] {
        &self.node[t * self.n_states..(t + 1) * self.n_states]
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    /// Unnormalized log-score of a state path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut score = 0.0;
        for (t, &s) in path.iter().enumerate() {
            score += self.node(t)[s];
            if t > 0 {
                score += self.trans(path[t - 1], s);
            }
        }
        score
    }

    /// Copy with every state other than the given label forbidden at
    /// labeled frames.
    pub fn clamped(&self, labels: &[Option<usize>]) -> Self {
        let mut out = self.clone();
        for (t, label) in labels.iter().enumerate() {
            if let Some(l) = label {
                for s in 0..self.n_states {
                    if s != *l {
                        out.node[t * self.n_states + s] = f64::NEG_INFINITY;
                    }
                }
            }
        }
        out
    }
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_z: f64,
    /// The partition function recomputed from the backward messages.
    pub log_z_backward: f64,
    /// Row-major `T x S`.
    pub unary: Vec<f64>,
    /// Row-major `(T-1) x S x S`.
    pub pairwise: Vec<f64>,
}

impl Marginals {
    pub fn frame(&self, t: usize, n_states: usize) -> &[f64] {
        &self.unary[t * n_states..(t + 1) * n_states]
    }
}

pub fn forward_backward(p: &ChainPotentials) -> Marginals {
    let (n, s) = (p.len(), p.n_states);
    let mut alpha = vec![0.0; n * s];
    alpha[..s].copy_from_slice(p.node(0));
    for t in 1..n {
        for to in 0..s {
            let prev = &alpha[(t - 1) * s..t * s];
            alpha[t * s + to] =
                p.node(t)[to] + log_sum_exp((0..s).map(|from| prev[from] + p.trans(from, to)));
        }
    }
    let mut beta = vec![0.0; n * s];
    for t in (0..n.saturating_sub(1)).rev() {
        for from in 0..s {
            let next = &beta[(t + 1) * s..(t + 2) * s];
            beta[t * s + from] = log_sum_exp(
                (0..s).map(|to| p.trans(from, to) + p.node(t + 1)[to] + next[to]),
            );
        }
    }
    let log_z = log_sum_exp(alpha[(n - 1) * s..].iter().copied());
    let log_z_backward = log_sum_exp((0..s).map(|st| p.node(0)[st] + beta[st]));

    let unary = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut pairwise = vec![0.0; n.saturating_sub(1) * s * s];
    for t in 0..n.saturating_sub(1) {
        for from in 0..s {
            for to in 0..s {
                let v = alpha[t * s + from]
                    + p.trans(from, to)
                    + p.node(t + 1)[to]
                    + beta[(t + 1) * s + to]
                    - log_z;
                pairwise[(t * s + from) * s + to] = v.exp();
            }
        }
    }
    Marginals {
        log_z,
        log_z_backward,
        unary,
        pairwise,
    }
}

/// Maximum-score state path and its unnormalized log-score. Ties resolve to
/// the lowest state index.
pub fn viterbi(p: &ChainPotentials) -> (Vec<usize>, f64) {
    let (n, s) = (p.len(), p.n_states);
    let mut delta = p.node(0).to_vec();
    let mut back = vec![0usize; n * s];
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; s];
        for to in 0..s {
            let mut best = (0, f64::NEG_INFINITY);
            for (from, &d) in delta.iter().enumerate() {
                let v = d + p.trans(from, to);
                if v > best.1 {
                    best = (from, v);
                }
            }
            back[t * s + to] = best.0;
            next[to] = best.1 + p.node(t)[to];
        }
        delta = next;
    }
    let (mut state, score) = delta
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let mut path = vec![0; n];
    for t in (0..n).rev() {
        path[t] = state;
        state = back[t * s + state];
    }
    (path, score)
}
