use rand::Rng;
use rayon::prelude::*;

use super::config::{ModelKind, RegressionTrunk, TrainConfig};
use crate::dataset::{binarize, Interaction, Relevance};
use crate::engine::loss::{binary_crossentropy, categorical_crossentropy, mse_loss};
use crate::engine::merge::{concat, dot_merge, dot_merge_backward, split_columns};
use crate::engine::{
    Activation, AdamState, DenseLayer, Dropout, EmbeddingTable, Matrix, Mode, Param, Parameterized,
    SparseBatch,
};
use crate::error::{Error, Result};
use crate::reliability::{ClassDistribution, Prediction};
use crate::rng::{self, Stream};

/// Embeddings, concatenated (item first), through a dropout MLP to a head.
#[derive(Debug, Clone)]
pub struct EmbeddingMlp {
    pub item_embedding: EmbeddingTable,
    pub user_embedding: EmbeddingTable,
    pub hidden: Vec<(DenseLayer, Dropout)>,
    pub head: DenseLayer,
}

/// Inner product of the two embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingDot {
    pub user_embedding: EmbeddingTable,
    pub item_embedding: EmbeddingTable,
    cache: Option<(Matrix, Matrix)>,
}

/// Two MLP towers over raw rating vectors, merged by an inner product.
#[derive(Debug, Clone)]
pub struct Towers {
    pub user_tower: Vec<DenseLayer>,
    pub item_tower: Vec<DenseLayer>,
    /// Train ratings per user as `(item, rating)`.
    user_rows: Vec<Vec<(usize, f64)>>,
    /// Train ratings per item as `(user, rating)`.
    item_rows: Vec<Vec<(usize, f64)>>,
    /// The interactions the rows were built from, kept for checkpoints.
    source: Vec<Interaction>,
    cache: Option<(Matrix, Matrix)>,
}

impl Towers {
    pub fn source(&self) -> &[Interaction] {
        &self.source
    }
}

#[derive(Debug, Clone)]
pub enum Body {
    Mlp(EmbeddingMlp),
    Dot(EmbeddingDot),
    Towers(Towers),
}

/// One of the four trainable architectures plus its optimizer state.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub kind: ModelKind,
    pub v_max: u8,
    pub num_users: usize,
    pub num_items: usize,
    /// Relevancy threshold baked into the binary model's labels.
    pub theta: Option<u8>,
    pub config: TrainConfig,
    pub body: Body,
    pub adam: AdamState,
}

fn ensure_counts(num_users: usize, num_items: usize) -> Result<()> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::InvalidArgument(
            "models need at least one user and one item".into(),
        ));
    }
    Ok(())
}

fn build_mlp<R: Rng + ?Sized>(
    num_users: usize,
    num_items: usize,
    cfg: &TrainConfig,
    head_width: usize,
    head_activation: Activation,
    rng: &mut R,
) -> Result<EmbeddingMlp> {
    let f = cfg.embed_dim;
    let item_embedding = EmbeddingTable::new("item_embedding", num_items + 1, f, rng);
    let user_embedding = EmbeddingTable::new("user_embedding", num_users + 1, f, rng);
    let mut hidden = Vec::with_capacity(cfg.hidden.len());
    let mut width = 2 * f;
    for (i, &h) in cfg.hidden.iter().enumerate() {
        let layer = DenseLayer::new(&format!("hidden{i}"), width, h, Activation::Relu, rng);
        hidden.push((layer, Dropout::new(cfg.dropout)?));
        width = h;
    }
    let head = DenseLayer::new("head", width, head_width, head_activation, rng);
    Ok(EmbeddingMlp {
        item_embedding,
        user_embedding,
        hidden,
        head,
    })
}

fn build_tower<R: Rng + ?Sized>(prefix: &str, input: usize, sizes: &[usize], rng: &mut R) -> Vec<DenseLayer> {
    let mut layers = Vec::with_capacity(sizes.len());
    let mut width = input;
    for (i, &s) in sizes.iter().enumerate() {
        let act = if i + 1 == sizes.len() {
            Activation::Linear
        } else {
            Activation::Relu
        };
        layers.push(DenseLayer::new(&format!("{prefix}{i}"), width, s, act, rng));
        width = s;
    }
    layers
}

impl ModelGraph {
    fn assemble(
        kind: ModelKind,
        v_max: u8,
        num_users: usize,
        num_items: usize,
        theta: Option<u8>,
        cfg: &TrainConfig,
        body: Body,
    ) -> Self {
        ModelGraph {
            kind,
            v_max,
            num_users,
            num_items,
            theta,
            config: cfg.clone(),
            body,
            adam: AdamState::new(cfg.learning_rate),
        }
    }

    /// Embeddings → concatenate → relu MLP with dropout → `V`-way softmax.
    pub fn build_classification(num_users: usize, num_items: usize, v_max: u8, cfg: &TrainConfig) -> Result<Self> {
        ensure_counts(num_users, num_items)?;
        cfg.validate()?;
        let mut rng = rng::stream(cfg.seed, Stream::Init);
        let body = build_mlp(num_users, num_items, cfg, usize::from(v_max), Activation::Softmax, &mut rng)?;
        Ok(Self::assemble(
            ModelKind::Classification,
            v_max,
            num_users,
            num_items,
            None,
            cfg,
            Body::Mlp(body),
        ))
    }

    /// Rating regression on embeddings; `cfg.regression_trunk` picks a dot
    /// merge or the MLP trunk with a single linear neuron.
    pub fn build_regression(num_users: usize, num_items: usize, v_max: u8, cfg: &TrainConfig) -> Result<Self> {
        ensure_counts(num_users, num_items)?;
        cfg.validate()?;
        let mut rng = rng::stream(cfg.seed, Stream::Init);
        let body = match cfg.regression_trunk {
            RegressionTrunk::Mlp => Body::Mlp(build_mlp(num_users, num_items, cfg, 1, Activation::Linear, &mut rng)?),
            RegressionTrunk::Dot => {
                let f = cfg.embed_dim;
                let item_embedding = EmbeddingTable::new("item_embedding", num_items + 1, f, &mut rng);
                let user_embedding = EmbeddingTable::new("user_embedding", num_users + 1, f, &mut rng);
                Body::Dot(EmbeddingDot {
                    user_embedding,
                    item_embedding,
                    cache: None,
                })
            }
        };
        Ok(Self::assemble(ModelKind::Regression, v_max, num_users, num_items, None, cfg, body))
    }

    /// Classification trunk with one sigmoid neuron predicting `rating >= theta`.
    pub fn build_binary(num_users: usize, num_items: usize, v_max: u8, theta: u8, cfg: &TrainConfig) -> Result<Self> {
        ensure_counts(num_users, num_items)?;
        cfg.validate()?;
        if theta == 0 || theta > v_max {
            return Err(Error::InvalidArgument(format!(
                "relevancy threshold {theta} outside [1, {v_max}]"
            )));
        }
        let mut rng = rng::stream(cfg.seed, Stream::Init);
        let body = build_mlp(num_users, num_items, cfg, 1, Activation::Sigmoid, &mut rng)?;
        Ok(Self::assemble(
            ModelKind::Binary,
            v_max,
            num_users,
            num_items,
            Some(theta),
            cfg,
            Body::Mlp(body),
        ))
    }

    /// DeepMF towers fed with the rating rows/columns of `train`.
    pub fn build_deepmf(
        num_users: usize,
        num_items: usize,
        v_max: u8,
        train: &[Interaction],
        cfg: &TrainConfig,
    ) -> Result<Self> {
        ensure_counts(num_users, num_items)?;
        cfg.validate()?;
        let mut user_rows = vec![Vec::new(); num_users];
        let mut item_rows = vec![Vec::new(); num_items];
        for x in train {
            if x.user >= num_users || x.item >= num_items {
                return Err(Error::IndexOutOfRange {
                    what: "deepmf train interaction",
                    index: x.user.max(x.item),
                    len: num_users.min(num_items),
                });
            }
            user_rows[x.user].push((x.item, f64::from(x.rating)));
            item_rows[x.item].push((x.user, f64::from(x.rating)));
        }
        for row in user_rows.iter_mut().chain(item_rows.iter_mut()) {
            row.sort_by_key(|&(c, _)| c);
        }
        let mut rng = rng::stream(cfg.seed, Stream::Init);
        let user_tower = build_tower("user_tower", num_items, &cfg.deepmf_layers, &mut rng);
        let item_tower = build_tower("item_tower", num_users, &cfg.deepmf_layers, &mut rng);
        let body = Body::Towers(Towers {
            user_tower,
            item_tower,
            user_rows,
            item_rows,
            source: train.to_vec(),
            cache: None,
        });
        Ok(Self::assemble(ModelKind::DeepMf, v_max, num_users, num_items, None, cfg, body))
    }

    /// Builds a fresh model of `kind` for the shape of `split`.
    pub fn build(
        kind: ModelKind,
        split: &crate::dataset::SplitDataset,
        theta: u8,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let (u, i, v) = (split.num_users, split.num_items, split.v_max);
        match kind {
            ModelKind::Classification => Self::build_classification(u, i, v, cfg),
            ModelKind::Regression => Self::build_regression(u, i, v, cfg),
            ModelKind::Binary => Self::build_binary(u, i, v, theta, cfg),
            ModelKind::DeepMf => Self::build_deepmf(u, i, v, &split.train, cfg),
        }
    }

    pub fn output_width(&self) -> usize {
        match self.kind {
            ModelKind::Classification => usize::from(self.v_max),
            _ => 1,
        }
    }

    /// Sets every parameter to zero.
    pub fn zero_parameters(&mut self) {
        for p in self.params_mut() {
            p.value.fill(0.0);
        }
    }

    fn check_indices(&self, users: &[usize], items: &[usize]) -> Result<()> {
        if users.len() != items.len() {
            return Err(Error::shape("model input", users.len(), items.len()));
        }
        for &u in users {
            if u >= self.num_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: u,
                    len: self.num_users,
                });
            }
        }
        for &i in items {
            if i >= self.num_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: i,
                    len: self.num_items,
                });
            }
        }
        Ok(())
    }

    /// Training-mode forward that caches activations for [`ModelGraph::backward`].
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        users: &[usize],
        items: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Matrix> {
        self.check_indices(users, items)?;
        let out = match &mut self.body {
            Body::Mlp(m) => {
                let iv = m.item_embedding.forward(items)?;
                let uv = m.user_embedding.forward(users)?;
                let mut x = concat(&iv, &uv)?;
                for (layer, drop) in m.hidden.iter_mut() {
                    let h = layer.forward(&x)?;
                    x = drop.forward(&h, mode, rng);
                }
                m.head.forward(&x)?
            }
            Body::Dot(d) => {
                let uv = d.user_embedding.forward(users)?;
                let iv = d.item_embedding.forward(items)?;
                let out = Matrix::column(dot_merge(&uv, &iv)?);
                d.cache = Some((uv, iv));
                out
            }
            Body::Towers(t) => {
                let u = tower_forward(&mut t.user_tower, sparse_batch(&t.user_rows, users, self.num_items))?;
                let i = tower_forward(&mut t.item_tower, sparse_batch(&t.item_rows, items, self.num_users))?;
                let out = Matrix::column(dot_merge(&u, &i)?);
                t.cache = Some((u, i));
                out
            }
        };
        out.ensure_finite("model output")?;
        Ok(out)
    }

    /// Backward from the gradient at the output pre-activation (the fused
    /// loss gradient for softmax/sigmoid heads, the plain gradient otherwise).
    pub fn backward(&mut self, grad: &Matrix) -> Result<()> {
        match &mut self.body {
            Body::Mlp(m) => {
                let mut g = m.head.backward_preactivation(grad)?;
                for (layer, drop) in m.hidden.iter_mut().rev() {
                    let gd = drop.backward(&g)?;
                    g = layer.backward(&gd)?;
                }
                let f = m.item_embedding.dim();
                let (gi, gu) = split_columns(&g, f)?;
                m.item_embedding.backward(&gi)?;
                m.user_embedding.backward(&gu)?;
            }
            Body::Dot(d) => {
                let (uv, iv) = d.cache.take().ok_or(Error::BackwardBeforeForward("dot merge"))?;
                let (gu, gi) = dot_merge_backward(&uv, &iv, grad.data())?;
                d.user_embedding.backward(&gu)?;
                d.item_embedding.backward(&gi)?;
            }
            Body::Towers(t) => {
                let (u, i) = t.cache.take().ok_or(Error::BackwardBeforeForward("dot merge"))?;
                let (gu, gi) = dot_merge_backward(&u, &i, grad.data())?;
                tower_backward(&mut t.user_tower, gu)?;
                tower_backward(&mut t.item_tower, gi)?;
            }
        }
        Ok(())
    }

    /// Loss for a batch of outputs and the gradient handed to [`ModelGraph::backward`].
    pub fn loss(&self, out: &Matrix, ratings: &[u8]) -> Result<(f64, Matrix)> {
        if out.rows() != ratings.len() {
            return Err(Error::shape("loss", out.rows(), ratings.len()));
        }
        match self.kind {
            ModelKind::Classification => {
                let v = usize::from(self.v_max);
                let mut targets = Matrix::zeros(ratings.len(), v);
                for (r, &rating) in ratings.iter().enumerate() {
                    if rating == 0 || rating > self.v_max {
                        return Err(Error::RatingOutOfRange {
                            rating: i64::from(rating),
                            v_max: self.v_max,
                        });
                    }
                    targets.set(r, usize::from(rating - 1), 1.0);
                }
                categorical_crossentropy(out, &targets)
            }
            ModelKind::Binary => {
                let theta = self.theta.expect("binary models carry a threshold");
                let y: Vec<f64> = ratings
                    .iter()
                    .map(|&r| match binarize(r, theta) {
                        Relevance::Relevant => 1.0,
                        Relevance::NotRelevant => 0.0,
                    })
                    .collect();
                let (l, g) = binary_crossentropy(out.data(), &y)?;
                Ok((l, Matrix::column(g)))
            }
            ModelKind::Regression | ModelKind::DeepMf => {
                let y: Vec<f64> = ratings.iter().map(|&r| f64::from(r)).collect();
                let (l, g) = mse_loss(out.data(), &y)?;
                Ok((l, Matrix::column(g)))
            }
        }
    }

    /// One forward + backward over a batch. Returns the mean batch loss.
    pub fn accumulate_gradients<R: Rng + ?Sized>(&mut self, batch: &[Interaction], rng: &mut R) -> Result<f64> {
        let users: Vec<usize> = batch.iter().map(|x| x.user).collect();
        let items: Vec<usize> = batch.iter().map(|x| x.item).collect();
        let ratings: Vec<u8> = batch.iter().map(|x| x.rating).collect();
        let out = self.forward_train(&users, &items, Mode::Train, rng)?;
        let (loss, grad) = self.loss(&out, &ratings)?;
        self.backward(&grad)?;
        Ok(loss)
    }

    /// Adam update over every parameter with the accumulated gradients.
    pub fn optimizer_step(&mut self) {
        let ModelGraph { body, adam, .. } = self;
        let mut params = body_params_mut(body);
        adam.step(&mut params);
    }

    /// Inference-mode outputs for a batch; does not touch any cache.
    pub fn infer(&self, users: &[usize], items: &[usize]) -> Result<Matrix> {
        self.check_indices(users, items)?;
        let out = match &self.body {
            Body::Mlp(m) => {
                let mut x = concat(&m.item_embedding.lookup(items)?, &m.user_embedding.lookup(users)?)?;
                for (layer, _) in &m.hidden {
                    x = layer.infer(&x)?;
                }
                m.head.infer(&x)?
            }
            Body::Dot(d) => Matrix::column(dot_merge(
                &d.user_embedding.lookup(users)?,
                &d.item_embedding.lookup(items)?,
            )?),
            Body::Towers(t) => {
                let u = tower_infer(&t.user_tower, &sparse_batch(&t.user_rows, users, self.num_items))?;
                let i = tower_infer(&t.item_tower, &sparse_batch(&t.item_rows, items, self.num_users))?;
                Matrix::column(dot_merge(&u, &i)?)
            }
        };
        out.ensure_finite("model output")?;
        Ok(out)
    }

    /// Unclamped scalar output for the regression family.
    pub fn predict_raw(&self, user: usize, item: usize) -> Result<Matrix> {
        self.infer(&[user], &[item])
    }

    pub fn predict(&self, user: usize, item: usize) -> Result<Prediction> {
        let out = self.infer(&[user], &[item])?;
        self.to_prediction(out.row(0))
    }

    fn to_prediction(&self, row: &[f64]) -> Result<Prediction> {
        Ok(match self.kind {
            ModelKind::Classification => Prediction::Distribution(ClassDistribution::new(row.to_vec())?),
            ModelKind::Binary => Prediction::Probability(row[0]),
            ModelKind::Regression | ModelKind::DeepMf => {
                Prediction::Score(clamp_score(row[0], self.v_max))
            }
        })
    }

    /// Predictions for many pairs, computed in parallel chunks; output order
    /// matches input order.
    pub fn predict_many(&self, pairs: &[(usize, usize)]) -> Result<Vec<Prediction>> {
        const CHUNK: usize = 1024;
        let chunks: Vec<Vec<Prediction>> = pairs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let users: Vec<usize> = chunk.iter().map(|p| p.0).collect();
                let items: Vec<usize> = chunk.iter().map(|p| p.1).collect();
                let out = self.infer(&users, &items)?;
                (0..out.rows()).map(|r| self.to_prediction(out.row(r))).collect()
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Smallest |pre-activation| over relu units in the last training forward.
    pub fn min_relu_margin(&self) -> Option<f64> {
        let layers: Vec<&DenseLayer> = match &self.body {
            Body::Mlp(m) => m.hidden.iter().map(|(l, _)| l).collect(),
            Body::Dot(_) => Vec::new(),
            Body::Towers(t) => t.user_tower.iter().chain(&t.item_tower).collect(),
        };
        layers
            .into_iter()
            .filter(|l| l.activation == Activation::Relu)
            .filter_map(|l| l.last_preactivation())
            .flat_map(|z| z.data().iter().map(|v| v.abs()))
            .reduce(f64::min)
    }
}

/// Regression-family outputs are clamped to the rating scale.
pub fn clamp_score(raw: f64, v_max: u8) -> f64 {
    raw.clamp(1.0, f64::from(v_max))
}

fn sparse_batch(rows: &[Vec<(usize, f64)>], ids: &[usize], cols: usize) -> SparseBatch {
    SparseBatch {
        cols,
        rows: ids.iter().map(|&id| rows[id].clone()).collect(),
    }
}

fn tower_forward(tower: &mut [DenseLayer], input: SparseBatch) -> Result<Matrix> {
    let (first, rest) = tower.split_first_mut().expect("towers have at least one layer");
    let mut x = first.forward_sparse(input)?;
    for layer in rest {
        x = layer.forward(&x)?;
    }
    Ok(x)
}

fn tower_infer(tower: &[DenseLayer], input: &SparseBatch) -> Result<Matrix> {
    let (first, rest) = tower.split_first().expect("towers have at least one layer");
    let mut x = first.infer_sparse(input)?;
    for layer in rest {
        x = layer.infer(&x)?;
    }
    Ok(x)
}

fn tower_backward(tower: &mut [DenseLayer], grad: Matrix) -> Result<()> {
    let mut g = grad;
    for layer in tower.iter_mut().rev() {
        g = layer.backward(&g)?;
    }
    Ok(())
}

fn body_params(body: &Body) -> Vec<&Param> {
    match body {
        Body::Mlp(m) => {
            let mut v = vec![&m.item_embedding.weights, &m.user_embedding.weights];
            for (l, _) in &m.hidden {
                v.extend(l.params());
            }
            v.extend(m.head.params());
            v
        }
        Body::Dot(d) => vec![&d.user_embedding.weights, &d.item_embedding.weights],
        Body::Towers(t) => t.user_tower.iter().chain(&t.item_tower).flat_map(|l| l.params()).collect(),
    }
}

fn body_params_mut(body: &mut Body) -> Vec<&mut Param> {
    match body {
        Body::Mlp(m) => {
            let mut v = vec![&mut m.item_embedding.weights, &mut m.user_embedding.weights];
            for (l, _) in m.hidden.iter_mut() {
                v.extend(l.params_mut());
            }
            v.extend(m.head.params_mut());
            v
        }
        Body::Dot(d) => vec![&mut d.user_embedding.weights, &mut d.item_embedding.weights],
        Body::Towers(t) => t
            .user_tower
            .iter_mut()
            .chain(t.item_tower.iter_mut())
            .flat_map(|l| l.params_mut())
            .collect(),
    }
}

impl Parameterized for ModelGraph {
    fn params(&self) -> Vec<&Param> {
        body_params(&self.body)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        body_params_mut(&mut self.body)
    }
}
