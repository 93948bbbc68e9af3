//! Brute-force reference implementations for the ranking rules and metrics.
//! Nothing here sorts: list positions come from counting, for every
//! candidate, how many qualifying candidates beat it pairwise.

#![allow(dead_code)]

use ncfrel::evaluation::{ScoredTestSet, TestCandidate, UserCandidates};
use ncfrel::reliability::{ClassDistribution, Prediction, RecommendRule};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Toy {
    Dist(Vec<f64>),
    Score(f64),
    Prob(f64),
}

#[derive(Debug, Clone)]
pub struct ToyUser {
    pub user: usize,
    /// `(item, true rating, prediction)`.
    pub rows: Vec<(usize, u8, Toy)>,
}

#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub v_max: u8,
    pub users: Vec<ToyUser>,
}

/// Rating and reliability: the first class no other class beats.
pub fn pair(p: &[f64]) -> (u8, f64) {
    for (i, &x) in p.iter().enumerate() {
        if p.iter().all(|&y| x >= y) {
            return ((i + 1) as u8, x);
        }
    }
    unreachable!("a finite vector has a maximum")
}

pub fn expected(p: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &x) in p.iter().enumerate() {
        s += (i + 1) as f64 * x;
    }
    s
}

/// Nearest rating in `1..=v_max`; halfway cases go to the larger rating.
pub fn nearest_rating(x: f64, v_max: u8) -> u8 {
    let x = x.max(1.0).min(f64::from(v_max));
    let mut best = 1u8;
    for r in 1..=v_max {
        if (x - f64::from(r)).abs() <= (x - f64::from(best)).abs() {
            best = r;
        }
    }
    best
}

pub fn continuous(t: &Toy) -> Option<f64> {
    match t {
        Toy::Dist(p) => Some(expected(p)),
        Toy::Score(s) => Some(*s),
        Toy::Prob(_) => None,
    }
}

pub fn discrete(t: &Toy, v_max: u8) -> Option<u8> {
    match t {
        Toy::Dist(p) => Some(pair(p).0),
        Toy::Score(s) => Some(nearest_rating(*s, v_max)),
        Toy::Prob(_) => None,
    }
}

fn qualifies(t: &Toy, theta: u8, rule: RecommendRule, rel_min: f64) -> bool {
    match (rule, t) {
        (RecommendRule::Proposed, Toy::Dist(p)) => {
            let (r, rel) = pair(p);
            r >= theta && rel >= rel_min
        }
        (RecommendRule::ClassificationBaseline, Toy::Dist(p)) => pair(p).0 >= theta,
        (RecommendRule::Regression, Toy::Score(s)) => *s >= f64::from(theta),
        (RecommendRule::Binary, Toy::Prob(p)) => *p >= 0.5,
        _ => panic!("prediction does not fit rule {rule:?}"),
    }
}

/// Whether `(ia, a)` is listed before `(ib, b)`.
fn beats(ia: usize, a: &Toy, ib: usize, b: &Toy, rule: RecommendRule) -> bool {
    let (ka, kb): (Vec<f64>, Vec<f64>) = match (rule, a, b) {
        (RecommendRule::Proposed, Toy::Dist(pa), Toy::Dist(pb)) => {
            let (ra, la) = pair(pa);
            let (rb, lb) = pair(pb);
            (vec![la, f64::from(ra)], vec![lb, f64::from(rb)])
        }
        (RecommendRule::ClassificationBaseline, Toy::Dist(pa), Toy::Dist(pb)) => {
            (vec![expected(pa)], vec![expected(pb)])
        }
        (RecommendRule::Regression, Toy::Score(x), Toy::Score(y)) => (vec![*x], vec![*y]),
        (RecommendRule::Binary, Toy::Prob(x), Toy::Prob(y)) => (vec![*x], vec![*y]),
        _ => panic!("mixed predictions"),
    };
    for (x, y) in ka.iter().zip(&kb) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    ia < ib
}

/// Items of the top-`n` list in list order.
pub fn top_list(
    rows: &[(usize, u8, Toy)],
    n: usize,
    theta: u8,
    rule: RecommendRule,
    rel_min: f64,
    beta: Option<f64>,
) -> Vec<usize> {
    let eligible: Vec<&(usize, u8, Toy)> = rows
        .iter()
        .filter(|(_, _, t)| beta.map_or(true, |b| continuous(t).expect("score") >= b))
        .filter(|(_, _, t)| qualifies(t, theta, rule, rel_min))
        .collect();
    let mut slots: Vec<Option<usize>> = vec![None; eligible.len()];
    for (ia, _, a) in &eligible {
        let ahead = eligible
            .iter()
            .filter(|(ib, _, b)| ib != ia && beats(*ib, b, *ia, a, rule))
            .count();
        assert!(slots[ahead].is_none(), "ranking keys must form a total order");
        slots[ahead] = Some(*ia);
    }
    slots.into_iter().take(n).map(|s| s.expect("filled")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTopN {
    pub precision: Option<f64>,
    pub precision_users: usize,
    pub recall: Option<f64>,
    pub recall_users: usize,
    pub issued: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

pub fn topn(
    inst: &ToyInstance,
    n: usize,
    theta: u8,
    rule: RecommendRule,
    rel_min: f64,
    beta: Option<f64>,
) -> OracleTopN {
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let mut issued = 0;
    for u in inst.users.iter().filter(|u| !u.rows.is_empty()) {
        let list = top_list(&u.rows, n, theta, rule, rel_min, beta);
        let relevant: Vec<usize> = u.rows.iter().filter(|r| r.1 >= theta).map(|r| r.0).collect();
        let hits = list.iter().filter(|i| relevant.contains(i)).count();
        issued += list.len();
        if !list.is_empty() {
            precisions.push(hits as f64 / list.len() as f64);
        }
        if !relevant.is_empty() {
            recalls.push(hits as f64 / relevant.len() as f64);
        }
    }
    OracleTopN {
        precision: mean(&precisions),
        precision_users: precisions.len(),
        recall: mean(&recalls),
        recall_users: recalls.len(),
        issued,
    }
}

/// `(precision, predicted count)` read off the full confusion matrix.
pub fn per_rating(inst: &ToyInstance, rating: u8) -> (Option<f64>, usize) {
    let v = usize::from(inst.v_max);
    let mut confusion = vec![vec![0usize; v + 1]; v + 1];
    for u in &inst.users {
        for (_, truth, t) in &u.rows {
            let p = discrete(t, inst.v_max).expect("discrete prediction");
            confusion[usize::from(*truth)][usize::from(p)] += 1;
        }
    }
    let r = usize::from(rating);
    let column: usize = (1..=v).map(|t| confusion[t][r]).sum();
    if column == 0 {
        (None, 0)
    } else {
        (Some(confusion[r][r] as f64 / column as f64), column)
    }
}

pub fn coverage(inst: &ToyInstance, n: usize, theta: u8, rule: RecommendRule, rel_min: f64, beta: f64) -> f64 {
    let active = inst.users.iter().filter(|u| !u.rows.is_empty()).count();
    let issued = topn(inst, n, theta, rule, rel_min, Some(beta)).issued;
    if active == 0 {
        0.0
    } else {
        issued as f64 / (n * active) as f64
    }
}

pub fn to_prediction(t: &Toy) -> Prediction {
    match t {
        Toy::Dist(p) => Prediction::Distribution(ClassDistribution::new(p.clone()).expect("valid distribution")),
        Toy::Score(s) => Prediction::Score(*s),
        Toy::Prob(p) => Prediction::Probability(*p),
    }
}

/// The library view of a toy instance; users without rows are left out.
pub fn to_scored(inst: &ToyInstance) -> ScoredTestSet {
    ScoredTestSet {
        v_max: inst.v_max,
        users: inst
            .users
            .iter()
            .filter(|u| !u.rows.is_empty())
            .map(|u| UserCandidates {
                user: u.user,
                candidates: u
                    .rows
                    .iter()
                    .map(|(item, truth, t)| TestCandidate {
                        item: *item,
                        true_rating: *truth,
                        prediction: to_prediction(t),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Coarse random distribution; small integer weights make argmax ties common.
pub fn random_dist<R: Rng>(rng: &mut R, v_max: u8) -> Vec<f64> {
    loop {
        let w: Vec<u32> = (0..v_max).map(|_| rng.gen_range(0..6)).collect();
        let total: u32 = w.iter().sum();
        if total > 0 {
            return w.iter().map(|&x| f64::from(x) / f64::from(total)).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    Classification,
    Regression,
    Binary,
}

/// ≤ 5 users, ≤ 10 items; each user holds a random subset of items.
pub fn random_instance<R: Rng>(rng: &mut R, kind: ToyKind) -> ToyInstance {
    let v_max = 5u8;
    let num_users = rng.gen_range(1..=5);
    let num_items = rng.gen_range(1..=10);
    let mut users = Vec::with_capacity(num_users);
    for user in 0..num_users {
        let mut rows = Vec::new();
        for item in 0..num_items {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let truth = rng.gen_range(1..=v_max);
            let pred = match kind {
                ToyKind::Classification => Toy::Dist(random_dist(rng, v_max)),
                // one decimal place, so exact ties and threshold hits occur
                ToyKind::Regression => Toy::Score(f64::from(rng.gen_range(10..=50u8)) / 10.0),
                ToyKind::Binary => Toy::Prob(f64::from(rng.gen_range(0..=10u8)) / 10.0),
            };
            rows.push((item, truth, pred));
        }
        users.push(ToyUser { user, rows });
    }
    ToyInstance { v_max, users }
}

pub fn rules_for(kind: ToyKind) -> &'static [RecommendRule] {
    match kind {
        ToyKind::Classification => &[RecommendRule::Proposed, RecommendRule::ClassificationBaseline],
        ToyKind::Regression => &[RecommendRule::Regression],
        ToyKind::Binary => &[RecommendRule::Binary],
    }
}

pub fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        _ => false,
    }
}

pub mod grad {
    //! Finite-difference checks for every layer type and every architecture.

    use ncfrel::dataset::Interaction;
    use ncfrel::engine::loss::{binary_crossentropy, categorical_crossentropy, mse_loss};
    use ncfrel::engine::merge::{concat, dot_merge, dot_merge_backward, split_columns};
    use ncfrel::engine::{
        gradient_check, relative_error, Activation, DenseLayer, Dropout, EmbeddingTable, Matrix, Mode,
    };
    use ncfrel::models::{gradient_check_model, ModelGraph, RegressionTrunk, TrainConfig};
    use ncfrel::rng::{stream, Stream};
    use rand::Rng;

    pub const H: f64 = 1e-5;
    pub const TOL: f64 = 1e-4;
    const BATCH: usize = 4;
    /// Relu pre-activations closer than this to 0 make central differences
    /// straddle the kink; such draws are replaced.
    const KINK: f64 = 1e-4;

    pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Max relative error of `analytic` against central differences of `f` at `x`.
    pub fn input_error(x: &Matrix, analytic: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> f64 {
        let mut worst = 0.0f64;
        let mut probe = x.clone();
        for k in 0..x.data().len() {
            let orig = x.data()[k];
            probe.data_mut()[k] = orig + H;
            let up = f(&probe);
            probe.data_mut()[k] = orig - H;
            let down = f(&probe);
            probe.data_mut()[k] = orig;
            worst = worst.max(relative_error(analytic.data()[k], (up - down) / (2.0 * H)));
        }
        worst
    }

    fn weighted_sum(out: &Matrix, c: &Matrix) -> f64 {
        out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    }

    fn min_abs(m: &Matrix) -> f64 {
        m.data().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
    }

    /// Dense layer with `act`: parameter and input gradients of `Σ c ⊙ out`.
    pub fn dense_error(act: Activation, seed: u64) -> f64 {
        let mut rng = stream(seed, Stream::Init);
        loop {
            let mut layer = DenseLayer::new("d", 5, 3, act, &mut rng);
            let x = random_matrix(&mut rng, BATCH, 5);
            let c = random_matrix(&mut rng, BATCH, 3);
            layer.forward(&x).unwrap();
            if act == Activation::Relu && min_abs(layer.last_preactivation().unwrap()) < KINK {
                continue;
            }
            let report = gradient_check(
                &mut layer,
                |l, backward| {
                    let out = l.forward(&x)?;
                    if backward {
                        l.backward(&c)?;
                    }
                    Ok(weighted_sum(&out, &c))
                },
                H,
            )
            .unwrap();
            layer.forward(&x).unwrap();
            let gx = layer.backward(&c).unwrap();
            let probe = layer.clone();
            let ex = input_error(&x, &gx, |xp| weighted_sum(&probe.infer(xp).unwrap(), &c));
            return report.max_rel_error.max(ex);
        }
    }

    /// Embedding lookup with a repeated index, so gradients must accumulate.
    pub fn embedding_error(seed: u64) -> f64 {
        let mut rng = stream(seed, Stream::Init);
        let mut table = EmbeddingTable::new("e", 6, 3, &mut rng);
        let idx = [1, 4, 1, 0];
        let c = random_matrix(&mut rng, BATCH, 3);
        gradient_check(
            &mut table,
            |t, backward| {
                let out = t.forward(&idx)?;
                if backward {
                    t.backward(&c)?;
                }
                Ok(weighted_sum(&out, &c))
            },
            H,
        )
        .unwrap()
        .max_rel_error
    }

    /// Inverted dropout with a mask fixed by reseeding on every evaluation.
    pub fn dropout_error(seed: u64) -> f64 {
        let mut rng = stream(seed, Stream::Init);
        let x = random_matrix(&mut rng, BATCH, 6);
        let c = random_matrix(&mut rng, BATCH, 6);
        let run = |xp: &Matrix| {
            let mut d = Dropout::new(0.4).unwrap();
            let out = d.forward(xp, Mode::Train, &mut stream(seed, Stream::Dropout));
            (weighted_sum(&out, &c), d)
        };
        let (_, mut d) = run(&x);
        let gx = d.backward(&c).unwrap();
        input_error(&x, &gx, |xp| run(xp).0)
    }

    /// Concatenation followed by a column split, and the dot merge.
    pub fn merge_error(seed: u64) -> f64 {
        let mut rng = stream(seed, Stream::Init);
        let a = random_matrix(&mut rng, BATCH, 3);
        let b = random_matrix(&mut rng, BATCH, 2);
        let c = random_matrix(&mut rng, BATCH, 5);
        let (ga, gb) = split_columns(&c, 3).unwrap();
        let ea = input_error(&a, &ga, |ap| weighted_sum(&concat(ap, &b).unwrap(), &c));
        let eb = input_error(&b, &gb, |bp| weighted_sum(&concat(&a, bp).unwrap(), &c));

        let u = random_matrix(&mut rng, BATCH, 3);
        let v = random_matrix(&mut rng, BATCH, 3);
        let w: Vec<f64> = (0..BATCH).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dot_loss = |u: &Matrix, v: &Matrix| -> f64 {
            dot_merge(u, v).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (gu, gv) = dot_merge_backward(&u, &v, &w).unwrap();
        let eu = input_error(&u, &gu, |up| dot_loss(up, &v));
        let ev = input_error(&v, &gv, |vp| dot_loss(&u, vp));
        ea.max(eb).max(eu).max(ev)
    }

    fn softmax_rows(z: &Matrix) -> Matrix {
        let mut p = z.clone();
        for r in 0..p.rows() {
            ncfrel::engine::dense::softmax_in_place(p.row_mut(r));
        }
        p
    }

    /// Loss gradients with respect to the head pre-activation (fused for
    /// softmax and sigmoid heads).
    pub fn loss_error(seed: u64) -> f64 {
        let mut rng = stream(seed, Stream::Init);
        let z = random_matrix(&mut rng, BATCH, 5);
        let mut y = Matrix::zeros(BATCH, 5);
        for r in 0..BATCH {
            y.set(r, rng.gen_range(0..5), 1.0);
        }
        let (_, g) = categorical_crossentropy(&softmax_rows(&z), &y).unwrap();
        let e_ce = input_error(&z, &g, |zp| categorical_crossentropy(&softmax_rows(zp), &y).unwrap().0);

        let s = random_matrix(&mut rng, BATCH, 1);
        let labels: Vec<f64> = (0..BATCH).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let sig = |m: &Matrix| -> Vec<f64> { m.data().iter().map(|&v| ncfrel::engine::dense::sigmoid(v)).collect() };
        let (_, gb) = binary_crossentropy(&sig(&s), &labels).unwrap();
        let e_bce = input_error(&s, &Matrix::column(gb), |sp| binary_crossentropy(&sig(sp), &labels).unwrap().0);

        let targets: Vec<f64> = (0..BATCH).map(|_| f64::from(rng.gen_range(1..=5u8))).collect();
        let (_, gm) = mse_loss(s.data(), &targets).unwrap();
        let e_mse = input_error(&s, &Matrix::column(gm), |sp| mse_loss(sp.data(), &targets).unwrap().0);
        e_ce.max(e_bce).max(e_mse)
    }

    pub fn layer_errors(seed: u64) -> Vec<(&'static str, f64)> {
        vec![
            ("dense/relu", dense_error(Activation::Relu, seed)),
            ("dense/linear", dense_error(Activation::Linear, seed)),
            ("dense/sigmoid", dense_error(Activation::Sigmoid, seed)),
            ("dense/softmax", dense_error(Activation::Softmax, seed)),
            ("embedding", embedding_error(seed)),
            ("dropout", dropout_error(seed)),
            ("merge", merge_error(seed)),
            ("loss", loss_error(seed)),
        ]
    }

    const USERS: usize = 6;
    const ITEMS: usize = 7;

    fn toy_train() -> Vec<Interaction> {
        (0..USERS * ITEMS)
            .filter(|k| k % 3 != 1)
            .map(|k| Interaction {
                user: k % USERS,
                item: k % ITEMS,
                rating: (k % 5) as u8 + 1,
            })
            .collect()
    }

    fn batch(seed: u64) -> Vec<Interaction> {
        let mut rng = stream(seed, Stream::Shuffle);
        (0..BATCH)
            .map(|_| Interaction {
                user: rng.gen_range(0..USERS),
                item: rng.gen_range(0..ITEMS),
                rating: rng.gen_range(1..=5),
            })
            .collect()
    }

    /// Full-architecture checks with default layer sizes and dropout active.
    pub fn model_errors(seed: u64) -> Vec<(&'static str, f64)> {
        let train = toy_train();
        let builders: Vec<(&'static str, Box<dyn Fn(&TrainConfig) -> ModelGraph>)> = vec![
            ("classification", Box::new(|c| ModelGraph::build_classification(USERS, ITEMS, 5, c).unwrap())),
            ("regression/dot", Box::new(|c| ModelGraph::build_regression(USERS, ITEMS, 5, c).unwrap())),
            (
                "regression/mlp",
                Box::new(|c| {
                    let c = TrainConfig {
                        regression_trunk: RegressionTrunk::Mlp,
                        ..c.clone()
                    };
                    ModelGraph::build_regression(USERS, ITEMS, 5, &c).unwrap()
                }),
            ),
            ("binary", Box::new(|c| ModelGraph::build_binary(USERS, ITEMS, 5, 4, c).unwrap())),
            ("deepmf", Box::new(move |c| ModelGraph::build_deepmf(USERS, ITEMS, 5, &train, c).unwrap())),
        ];
        builders
            .into_iter()
            .map(|(name, build)| {
                let mut attempt = seed;
                loop {
                    let cfg = TrainConfig {
                        seed: attempt,
                        ..TrainConfig::default()
                    };
                    let mut model = build(&cfg);
                    let b = batch(attempt);
                    let (report, margin) = gradient_check_model(&mut model, &b, attempt, H).unwrap();
                    if margin.map_or(true, |m| m >= KINK) {
                        return (name, report.max_rel_error);
                    }
                    attempt = attempt.wrapping_add(1_000_003);
                }
            })
            .collect()
    }
}
