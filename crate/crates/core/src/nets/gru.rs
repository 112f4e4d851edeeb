use rand::Rng;

use crate::error::Result;
use crate::numkernel::{ComputeGraph, NodeId, ParamStore};

/// Gated recurrent cell (reset/update gates). Gate columns are laid out
/// `[reset | update | candidate]`.
#[derive(Clone, Debug)]
pub(crate) struct GruCell {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        GruCell {
            prefix: prefix.to_string(),
            input_dim,
            hidden,
        }
    }

    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    pub fn w_in(&self) -> String {
        self.name("w_in")
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let h3 = 3 * self.hidden;
        let in_bound = 1.0 / (self.input_dim as f64).sqrt();
        let hid_bound = 1.0 / (self.hidden as f64).sqrt();
        store.insert_uniform(self.w_in(), [self.input_dim, h3], in_bound, rng);
        store.insert_uniform(self.name("w_hid"), [self.hidden, h3], hid_bound, rng);
        store.insert_uniform(self.name("b_in"), [1, h3], 0.0, rng);
        store.insert_uniform(self.name("b_hid"), [1, h3], 0.0, rng);
    }

    pub fn init_zeros(&self, store: &mut ParamStore) {
        let h3 = 3 * self.hidden;
        for (n, s) in [
            ("w_in", [self.input_dim, h3]),
            ("w_hid", [self.hidden, h3]),
            ("b_in", [1, h3]),
            ("b_hid", [1, h3]),
        ] {
            store.insert(self.name(n), crate::numkernel::Tensor::zeros(&s));
        }
    }

    pub fn leaf(&self, g: &mut ComputeGraph, p: &str, shape: [usize; 2], trainable: bool) -> Result<NodeId> {
        let name = self.name(p);
        if trainable {
            g.param(&name, shape)
        } else {
            g.input(&name, shape)
        }
    }

    /// `x @ w_in` for a `rows x input_dim` input.
    pub fn project(&self, g: &mut ComputeGraph, x: NodeId, trainable: bool) -> Result<NodeId> {
        let w = self.leaf(g, "w_in", [self.input_dim, 3 * self.hidden], trainable)?;
        g.matmul(x, w)
    }

    /// One step from an already projected input (`rows x 3H`).
    pub fn step(
        &self,
        g: &mut ComputeGraph,
        projected: NodeId,
        h: NodeId,
        trainable: bool,
    ) -> Result<NodeId> {
        let hd = self.hidden;
        let h3 = 3 * hd;
        let b_in = self.leaf(g, "b_in", [1, h3], trainable)?;
        let w_hid = self.leaf(g, "w_hid", [hd, h3], trainable)?;
        let b_hid = self.leaf(g, "b_hid", [1, h3], trainable)?;
        let gx = g.add_bias(projected, b_in)?;
        let gh = g.matmul(h, w_hid)?;
        let gh = g.add_bias(gh, b_hid)?;

        let rx = g.slice(gx, 0, hd)?;
        let rh = g.slice(gh, 0, hd)?;
        let r = g.add(rx, rh)?;
        let r = g.sigmoid(r);

        let zx = g.slice(gx, hd, 2 * hd)?;
        let zh = g.slice(gh, hd, 2 * hd)?;
        let z = g.add(zx, zh)?;
        let z = g.sigmoid(z);

        let nx = g.slice(gx, 2 * hd, h3)?;
        let nh = g.slice(gh, 2 * hd, h3)?;
        let nh = g.mul(r, nh)?;
        let n = g.add(nx, nh)?;
        let n = g.tanh(n);

        // h' = (1 - z) * n + z * h = n + z * (h - n)
        let d = g.sub(h, n)?;
        let zd = g.mul(z, d)?;
        g.add(n, zd)
    }
}

/// Affine readout `h @ w + b`.
#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub prefix: String,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(prefix: &str, input_dim: usize, output_dim: usize) -> Self {
        Linear {
            prefix: prefix.to_string(),
            input_dim,
            output_dim,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.input_dim as f64).sqrt();
        store.insert_uniform(
            format!("{}.w", self.prefix),
            [self.input_dim, self.output_dim],
            bound,
            rng,
        );
        store.insert_uniform(format!("{}.b", self.prefix), [1, self.output_dim], 0.0, rng);
    }

    pub fn init_zeros(&self, store: &mut ParamStore) {
        use crate::numkernel::Tensor;
        store.insert(
            format!("{}.w", self.prefix),
            Tensor::zeros(&[self.input_dim, self.output_dim]),
        );
        store.insert(format!("{}.b", self.prefix), Tensor::zeros(&[1, self.output_dim]));
    }

    pub fn apply(&self, g: &mut ComputeGraph, x: NodeId, trainable: bool) -> Result<NodeId> {
        let (wn, bn) = (format!("{}.w", self.prefix), format!("{}.b", self.prefix));
        let (w, b) = if trainable {
            (
                g.param(&wn, [self.input_dim, self.output_dim])?,
                g.param(&bn, [1, self.output_dim])?,
            )
        } else {
            (
                g.input(&wn, [self.input_dim, self.output_dim])?,
                g.input(&bn, [1, self.output_dim])?,
            )
        };
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}
