use crate::error::{Error, Result};
use crate::linalg::{canonical_sum, Matrix, RngState};

use super::config::ViTConfig;
use super::patch::{patchify, ImageTensor, PatchSequence};

pub(crate) const LN_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    fn zeros(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![0.0; dim],
            beta: vec![0.0; dim],
        }
    }
}

/// Pre-norm transformer block: `x + Attn(LN₁(x))`, then `x + MLP(LN₂(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2: LayerNorm,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Vision Transformer weights.
///
/// Gradients use the same type: a `ViTModel` of zeros accumulates `∂loss/∂θ`
/// tensor for tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ViTModel {
    config: ViTConfig,
    /// `E`, `L × D`.
    pub patch_embedding: Matrix,
    /// `E_pos`, `(N+1) × D`; row 0 belongs to the class token.
    pub position_embedding: Matrix,
    pub class_token: Vec<f64>,
    pub blocks: Vec<EncoderBlock>,
    pub final_norm: LayerNorm,
    /// `D × classes`.
    pub head: Matrix,
    pub head_bias: Vec<f64>,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

fn mat_shape(m: &Matrix) -> Vec<usize> {
    vec![m.rows(), m.cols()]
}

impl ViTModel {
    /// All-zero weights, including layer-norm scales. Used as a gradient accumulator.
    pub fn zeros(config: &ViTConfig) -> Result<Self> {
        config.validate()?;
        let (l, d, t, f) = (
            config.patch_len(),
            config.hidden,
            config.tokens(),
            config.mlp_hidden(),
        );
        let block = EncoderBlock {
            ln1: LayerNorm::zeros(d),
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            ln2: LayerNorm::zeros(d),
            w1: Matrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: Matrix::zeros(f, d),
            b2: vec![0.0; d],
        };
        Ok(ViTModel {
            config: config.clone(),
            patch_embedding: Matrix::zeros(l, d),
            position_embedding: Matrix::zeros(t, d),
            class_token: vec![0.0; d],
            blocks: vec![block; config.depth],
            final_norm: LayerNorm::zeros(d),
            head: Matrix::zeros(d, config.classes),
            head_bias: vec![0.0; config.classes],
        })
    }

    /// Random initialization: weights ~ N(0, 0.02²), layer-norm scale 1, biases 0.
    pub fn init(config: &ViTConfig, rng: &mut RngState) -> Result<Self> {
        let mut m = ViTModel::zeros(config)?;
        for t in m.tensors_mut() {
            let is_norm = t.name.contains("norm") || t.name.contains(".ln");
            let is_bias =
                t.name.ends_with("bias") || t.name.ends_with(".b1") || t.name.ends_with(".b2");
            if is_norm {
                if t.name.ends_with("gamma") {
                    t.data.fill(1.0);
                }
            } else if !is_bias {
                for v in t.data.iter_mut() {
                    *v = INIT_STD * rng.gaussian();
                }
            }
        }
        debug_assert!(m
            .blocks
            .iter()
            .all(|b| b.ln1 == LayerNorm::new(config.hidden)));
        Ok(m)
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    pub fn zeros_like(&self) -> ViTModel {
        ViTModel::zeros(&self.config).expect("config already validated")
    }

    /// Named tensors in a fixed order. This order is the manifest used by
    /// checkpoints and federated updates.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        fn m(name: String, m: &Matrix) -> TensorView<'_> {
            TensorView {
                name,
                shape: mat_shape(m),
                data: m.as_slice(),
            }
        }
        let v = vector_view;
        let mut out = vec![
            m("patch_embedding".into(), &self.patch_embedding),
            m("position_embedding".into(), &self.position_embedding),
            v("class_token".into(), &self.class_token),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(v(format!("blocks.{i}.ln1.gamma"), &b.ln1.gamma));
            out.push(v(format!("blocks.{i}.ln1.beta"), &b.ln1.beta));
            out.push(m(format!("blocks.{i}.attn.wq"), &b.wq));
            out.push(m(format!("blocks.{i}.attn.wk"), &b.wk));
            out.push(m(format!("blocks.{i}.attn.wv"), &b.wv));
            out.push(m(format!("blocks.{i}.attn.wo"), &b.wo));
            out.push(v(format!("blocks.{i}.ln2.gamma"), &b.ln2.gamma));
            out.push(v(format!("blocks.{i}.ln2.beta"), &b.ln2.beta));
            out.push(m(format!("blocks.{i}.mlp.w1"), &b.w1));
            out.push(v(format!("blocks.{i}.mlp.b1"), &b.b1));
            out.push(m(format!("blocks.{i}.mlp.w2"), &b.w2));
            out.push(v(format!("blocks.{i}.mlp.b2"), &b.b2));
        }
        out.push(v("final_norm.gamma".into(), &self.final_norm.gamma));
        out.push(v("final_norm.beta".into(), &self.final_norm.beta));
        out.push(m("head.weight".into(), &self.head));
        out.push(v("head.bias".into(), &self.head_bias));
        out
    }

    /// Mutable counterpart of [`ViTModel::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        fn m<'a>(name: String, m: &'a mut Matrix) -> TensorViewMut<'a> {
            let shape = mat_shape(m);
            TensorViewMut {
                name,
                shape,
                data: m.as_mut_slice(),
            }
        }
        fn v<'a>(name: String, v: &'a mut Vec<f64>) -> TensorViewMut<'a> {
            TensorViewMut {
                name,
                shape: vec![v.len()],
                data: v.as_mut_slice(),
            }
        }
        let mut out = vec![
            m("patch_embedding".into(), &mut self.patch_embedding),
            m("position_embedding".into(), &mut self.position_embedding),
            v("class_token".into(), &mut self.class_token),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push(v(format!("blocks.{i}.ln1.gamma"), &mut b.ln1.gamma));
            out.push(v(format!("blocks.{i}.ln1.beta"), &mut b.ln1.beta));
            out.push(m(format!("blocks.{i}.attn.wq"), &mut b.wq));
            out.push(m(format!("blocks.{i}.attn.wk"), &mut b.wk));
            out.push(m(format!("blocks.{i}.attn.wv"), &mut b.wv));
            out.push(m(format!("blocks.{i}.attn.wo"), &mut b.wo));
            out.push(v(format!("blocks.{i}.ln2.gamma"), &mut b.ln2.gamma));
            out.push(v(format!("blocks.{i}.ln2.beta"), &mut b.ln2.beta));
            out.push(m(format!("blocks.{i}.mlp.w1"), &mut b.w1));
            out.push(v(format!("blocks.{i}.mlp.b1"), &mut b.b1));
            out.push(m(format!("blocks.{i}.mlp.w2"), &mut b.w2));
            out.push(v(format!("blocks.{i}.mlp.b2"), &mut b.b2));
        }
        out.push(v("final_norm.gamma".into(), &mut self.final_norm.gamma));
        out.push(v("final_norm.beta".into(), &mut self.final_norm.beta));
        out.push(m("head.weight".into(), &mut self.head));
        out.push(v("head.bias".into(), &mut self.head_bias));
        out
    }

    /// Rebuilds a model from named tensors. Every manifest entry must appear
    /// exactly once with the expected shape and finite values.
    pub fn from_tensors<'a, I>(config: &ViTConfig, tensors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>,
    {
        let mut model = ViTModel::zeros(config)?;
        let mut slots = model.tensors_mut();
        let mut filled = vec![false; slots.len()];
        for (name, shape, data) in tensors {
            let idx = slots
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| Error::Parse {
                    what: "model tensors",
                    detail: format!("unknown tensor `{name}`"),
                })?;
            let slot = &mut slots[idx];
            if slot.shape != shape || slot.data.len() != data.len() {
                return Err(Error::shape(
                    "ViTModel::from_tensors",
                    format!("{name} {:?}", slot.shape),
                    format!("{shape:?} with {} values", data.len()),
                ));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ViTModel::from_tensors"));
            }
            if std::mem::replace(&mut filled[idx], true) {
                return Err(Error::Parse {
                    what: "model tensors",
                    detail: format!("duplicate tensor `{name}`"),
                });
            }
            slot.data.copy_from_slice(data);
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            return Err(Error::Parse {
                what: "model tensors",
                detail: format!("missing tensor `{}`", slots[missing].name),
            });
        }
        drop(slots);
        Ok(model)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute difference over all tensors. Panics if configs differ.
    pub fn max_abs_diff(&self, other: &ViTModel) -> f64 {
        assert_eq!(self.config, other.config);
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.data.iter().zip(b.data).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    fn check_image(&self, x: &ImageTensor) -> Result<()> {
        let c = &self.config;
        if x.dims() != (c.height, c.width, c.channels) {
            return Err(Error::shape(
                "forward",
                format!("image {}x{}x{}", x.height(), x.width(), x.channels()),
                format!("config {}x{}x{}", c.height, c.width, c.channels),
            ));
        }
        Ok(())
    }

    pub fn patchify(&self, x: &ImageTensor) -> Result<PatchSequence> {
        self.check_image(x)?;
        patchify(x, self.config.patch)
    }

    /// `z₀ = [x_class; x¹E; …; xᴺE] + E_pos`.
    ///
    /// Each `xⁱE` entry is summed in canonical order, so permuting the entries of a
    /// patch together with the rows of `E` gives a bit-identical result.
    pub fn embed(&self, patches: &PatchSequence) -> Result<Matrix> {
        let c = &self.config;
        if patches.matrix().shape() != (c.num_patches(), c.patch_len()) {
            return Err(Error::shape(
                "embed",
                patches.matrix().shape_str(),
                format!("{}x{}", c.num_patches(), c.patch_len()),
            ));
        }
        let d = c.hidden;
        let e = &self.patch_embedding;
        let mut z = self.position_embedding.clone();
        for (zv, cv) in z.row_mut(0).iter_mut().zip(&self.class_token) {
            *zv += cv;
        }
        let mut terms = vec![0.0; c.patch_len()];
        for i in 0..c.num_patches() {
            let x = patches.patch(i);
            let row = z.row_mut(i + 1);
            for (col, out) in row.iter_mut().enumerate().take(d) {
                for (k, t) in terms.iter_mut().enumerate() {
                    *t = x[k] * e.get(k, col);
                }
                *out += canonical_sum(&mut terms);
            }
        }
        Ok(z)
    }

    /// Runs the encoder blocks on `z₀` (no final norm). Output is `(N+1) × D`.
    pub fn encode(&self, z0: &Matrix) -> Result<Matrix> {
        self.check_embedding(z0)?;
        Ok(self.run_encoder(z0.clone(), None))
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        let patches = self.patchify(x)?;
        self.forward_patches(&patches)
    }

    pub fn forward_patches(&self, patches: &PatchSequence) -> Result<Vec<f64>> {
        let z0 = self.embed(patches)?;
        self.logits_from_embedding(&z0)
    }

    /// Encoder, final norm on the class token, and classifier head.
    pub fn logits_from_embedding(&self, z0: &Matrix) -> Result<Vec<f64>> {
        self.check_embedding(z0)?;
        let out = self.run_encoder(z0.clone(), None);
        Ok(self.head_forward(out.row(0), None))
    }

    fn check_embedding(&self, z0: &Matrix) -> Result<()> {
        let c = &self.config;
        if z0.shape() != (c.tokens(), c.hidden) {
            return Err(Error::shape(
                "encode",
                z0.shape_str(),
                format!("{}x{}", c.tokens(), c.hidden),
            ));
        }
        Ok(())
    }

    pub(crate) fn run_encoder(
        &self,
        mut x: Matrix,
        mut trace: Option<&mut Vec<BlockTrace>>,
    ) -> Matrix {
        for block in &self.blocks {
            let (next, bt) = block_forward(&self.config, block, x, trace.is_some());
            if let (Some(t), Some(bt)) = (trace.as_deref_mut(), bt) {
                t.push(bt);
            }
            x = next;
        }
        x
    }

    pub(crate) fn head_forward(&self, cls: &[f64], trace: Option<&mut HeadTrace>) -> Vec<f64> {
        let (y, xhat, rstd) = layer_norm_row(cls, &self.final_norm);
        let mut logits = self.head_bias.clone();
        for (k, &yk) in y.iter().enumerate() {
            for (l, w) in logits.iter_mut().zip(self.head.row(k)) {
                *l += yk * w;
            }
        }
        if let Some(t) = trace {
            t.xhat = xhat;
            t.rstd = rstd;
            t.y = y;
        }
        logits
    }
}

fn vector_view(name: String, v: &[f64]) -> TensorView<'_> {
    TensorView {
        name,
        shape: vec![v.len()],
        data: v,
    }
}

#[derive(Default)]
pub(crate) struct HeadTrace {
    pub xhat: Vec<f64>,
    pub rstd: f64,
    pub y: Vec<f64>,
}

pub(crate) struct NormTrace {
    pub xhat: Matrix,
    pub rstd: Vec<f64>,
}

pub(crate) struct BlockTrace {
    pub ln1: NormTrace,
    pub h1: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Attention probabilities per head, each `T × T`.
    pub probs: Vec<Matrix>,
    pub attn: Matrix,
    pub ln2: NormTrace,
    pub h2: Matrix,
    pub u: Matrix,
    pub g: Matrix,
}

pub(crate) fn layer_norm_row(x: &[f64], p: &LayerNorm) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * rstd).collect();
    let y = xhat
        .iter()
        .zip(&p.gamma)
        .zip(&p.beta)
        .map(|((xh, g), b)| xh * g + b)
        .collect();
    (y, xhat, rstd)
}

fn layer_norm(x: &Matrix, p: &LayerNorm) -> (Matrix, NormTrace) {
    let (rows, cols) = x.shape();
    let mut y = Matrix::zeros(rows, cols);
    let mut xhat = Matrix::zeros(rows, cols);
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let (yr, xr, s) = layer_norm_row(x.row(r), p);
        y.row_mut(r).copy_from_slice(&yr);
        xhat.row_mut(r).copy_from_slice(&xr);
        rstd.push(s);
    }
    (y, NormTrace { xhat, rstd })
}

#[inline]
pub(crate) fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn add_bias(m: &mut Matrix, b: &[f64]) {
    for r in 0..m.rows() {
        for (v, bb) in m.row_mut(r).iter_mut().zip(b) {
            *v += bb;
        }
    }
}

/// Multi-head self-attention on `h1`. Reductions over keys use canonical
/// summation so that reordering tokens 1..N reorders the output rows exactly.
fn attention(cfg: &ViTConfig, q: &Matrix, k: &Matrix, v: &Matrix) -> (Matrix, Vec<Matrix>) {
    let t = q.rows();
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Matrix::zeros(t, cfg.hidden);
    let mut probs = Vec::with_capacity(cfg.heads);
    let mut terms = vec![0.0; t];
    for h in 0..cfg.heads {
        let cols = h * dh..(h + 1) * dh;
        let mut p = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &q.row(i)[cols.clone()];
            let row = p.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k.row(j)[cols.clone()];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for s in row.iter_mut() {
                *s = (*s - max).exp();
            }
            terms.copy_from_slice(row);
            let z = canonical_sum(&mut terms);
            for s in row.iter_mut() {
                *s /= z;
            }
            for d in cols.clone() {
                for (j, tj) in terms.iter_mut().enumerate() {
                    *tj = row[j] * v.get(j, d);
                }
                out.set(i, d, canonical_sum(&mut terms));
            }
        }
        probs.push(p);
    }
    (out, probs)
}

fn block_forward(
    cfg: &ViTConfig,
    b: &EncoderBlock,
    x: Matrix,
    keep: bool,
) -> (Matrix, Option<BlockTrace>) {
    let (h1, ln1) = layer_norm(&x, &b.ln1);
    let q = h1.dot(&b.wq);
    let k = h1.dot(&b.wk);
    let v = h1.dot(&b.wv);
    let (attn, probs) = attention(cfg, &q, &k, &v);
    let mut x_mid = attn.dot(&b.wo);
    x_mid.add_assign(&x);

    let (h2, ln2) = layer_norm(&x_mid, &b.ln2);
    let mut u = h2.dot(&b.w1);
    add_bias(&mut u, &b.b1);
    let mut g = u.clone();
    g.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    let mut out = g.dot(&b.w2);
    add_bias(&mut out, &b.b2);
    out.add_assign(&x_mid);

    let trace = keep.then_some(BlockTrace {
        ln1,
        h1,
        q,
        k,
        v,
        probs,
        attn,
        ln2,
        h2,
        u,
        g,
    });
    (out, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_permutation;

    fn tiny() -> ViTConfig {
        ViTConfig {
            height: 8,
            width: 8,
            channels: 2,
            patch: 4,
            hidden: 8,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            classes: 3,
        }
    }

    fn random_image(cfg: &ViTConfig, rng: &mut RngState) -> ImageTensor {
        let n = cfg.height * cfg.width * cfg.channels;
        ImageTensor::new(
            cfg.height,
            cfg.width,
            cfg.channels,
            (0..n).map(|_| rng.uniform()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn embed_without_offsets_is_projection() {
        let cfg = tiny();
        let mut rng = RngState::new(1);
        let mut m = ViTModel::init(&cfg, &mut rng).unwrap();
        m.position_embedding = Matrix::zeros(cfg.tokens(), cfg.hidden);
        m.class_token.fill(0.0);
        let ps = m.patchify(&random_image(&cfg, &mut rng)).unwrap();
        let z = m.embed(&ps).unwrap();
        assert!(z.row(0).iter().all(|&v| v == 0.0));
        let proj = ps.matrix().dot(&m.patch_embedding);
        for i in 0..cfg.num_patches() {
            for d in 0..cfg.hidden {
                assert!((z.get(i + 1, d) - proj.get(i, d)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn embed_zero_patches() {
        let cfg = tiny();
        let m = ViTModel::init(&cfg, &mut RngState::new(2)).unwrap();
        let ps = PatchSequence(Matrix::zeros(cfg.num_patches(), cfg.patch_len()));
        let z = m.embed(&ps).unwrap();
        let mut expect = m.position_embedding.clone();
        for (e, c) in expect.row_mut(0).iter_mut().zip(&m.class_token) {
            *e += c;
        }
        assert_eq!(z, expect);
    }

    #[test]
    fn depth_zero_zero_head_gives_zero_logits() {
        let cfg = ViTConfig { depth: 0, ..tiny() };
        let mut m = ViTModel::init(&cfg, &mut RngState::new(3)).unwrap();
        m.head = Matrix::zeros(cfg.hidden, cfg.classes);
        m.head_bias.fill(0.0);
        let x = random_image(&cfg, &mut RngState::new(4));
        assert_eq!(m.forward(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny();
        let m = ViTModel::init(&cfg, &mut RngState::new(5)).unwrap();
        let x = random_image(&cfg, &mut RngState::new(6));
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
    }

    #[test]
    fn encoder_commutes_with_token_permutation() {
        let cfg = tiny();
        let mut rng = RngState::new(7);
        let m = ViTModel::init(&cfg, &mut rng).unwrap();
        let z = m
            .embed(&m.patchify(&random_image(&cfg, &mut rng)).unwrap())
            .unwrap();
        let perm = random_permutation(cfg.num_patches(), &mut rng).unwrap();
        let mut pz = z.clone();
        for i in 0..cfg.num_patches() {
            pz.row_mut(i + 1).copy_from_slice(z.row(perm.apply(i) + 1));
        }
        let enc = m.encode(&z).unwrap();
        let penc = m.encode(&pz).unwrap();
        assert_eq!(enc.row(0), penc.row(0));
        for i in 0..cfg.num_patches() {
            let diff = enc
                .row(perm.apply(i) + 1)
                .iter()
                .zip(penc.row(i + 1))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-9);
        }
        assert_eq!(
            m.logits_from_embedding(&z).unwrap(),
            m.logits_from_embedding(&pz).unwrap()
        );
    }

    #[test]
    fn from_tensors_round_trip_and_errors() {
        let cfg = tiny();
        let m = ViTModel::init(&cfg, &mut RngState::new(8)).unwrap();
        let views = m.tensors();
        let rebuilt = ViTModel::from_tensors(
            &cfg,
            views
                .iter()
                .map(|t| (t.name.as_str(), &t.shape[..], t.data)),
        )
        .unwrap();
        assert_eq!(rebuilt, m);
        let partial = ViTModel::from_tensors(
            &cfg,
            views
                .iter()
                .skip(1)
                .map(|t| (t.name.as_str(), &t.shape[..], t.data)),
        );
        assert!(partial.is_err());
    }

    #[test]
    fn wrong_image_shape() {
        let cfg = tiny();
        let m = ViTModel::init(&cfg, &mut RngState::new(9)).unwrap();
        assert!(m.forward(&ImageTensor::zeros(4, 4, 2)).is_err());
    }
}
