//! Encoder, projection head and classifier with reverse-mode gradients.

use ndarray::{Array2, Array3, Array4, Axis};

use super::config::ModelConfig;
use super::layers::{
    bn_backward, bn_forward, conv_backward, conv_forward, linear_backward, linear_forward, relu_backward_inplace,
    relu_inplace, BnCache, BnMode, BnParams, ConvShape,
};
use super::params::{bn_names, conv_weight, init_params, to_f32_grid, Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::vicreg::{vicreg_grad, vicreg_total, LossBreakdown, VicregWeights};

/// Encoder outputs, `n x d'`.
pub type FeatureBatch = Array2<f64>;
/// Projector outputs, `n x d`.
pub type EmbeddingBatch = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Batch,
            Mode::Eval => BnMode::Running,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

type BufferUpdates = Vec<(String, Vec<f64>)>;

struct BlockTrace {
    input: Array4<f64>,
    bn: BnCache,
    output: Array4<f64>,
}

struct EncoderTrace {
    blocks: Vec<BlockTrace>,
}

struct HiddenTrace {
    input: Array2<f64>,
    bn: BnCache,
    output: Array2<f64>,
}

struct ProjectorTrace {
    hidden: Vec<HiddenTrace>,
    last_input: Array2<f64>,
}

/// Everything [`Model::ssl_step`] computes.
#[derive(Debug, Clone)]
pub struct SslOutcome {
    pub loss: LossBreakdown,
    pub grads: Gradients,
    pub embeddings_a: EmbeddingBatch,
    pub embeddings_b: EmbeddingBatch,
    /// Gradients with respect to the two input view batches, when requested.
    pub input_grads: Option<(Array3<f64>, Array3<f64>)>,
}

fn bn_params<'a>(store: &'a ParamStore, prefix: &str, cfg: &ModelConfig) -> BnParams<'a> {
    let [w, b, m, v] = bn_names(prefix);
    BnParams {
        gamma: store.get(&w),
        beta: store.get(&b),
        running_mean: store.get(&m),
        running_var: store.get(&v),
        momentum: cfg.bn_momentum,
        eps: cfg.bn_eps,
    }
}

fn push_updates(updates: &mut BufferUpdates, prefix: &str, upd: Option<(Vec<f64>, Vec<f64>)>) {
    if let Some((rm, rv)) = upd {
        let [_, _, m, v] = bn_names(prefix);
        updates.push((m, rm));
        updates.push((v, rv));
    }
}

fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let fresh = init_params(&config, 0)?;
        let layout = |s: &ParamStore| s.entries().iter().map(|e| (e.name.clone(), e.shape.clone())).collect::<Vec<_>>();
        if layout(&fresh) != layout(&params) {
            return Err(Error::shape("parameter layout does not match the model config"));
        }
        Ok(Model { config, params })
    }

    fn apply_updates(&mut self, updates: BufferUpdates) {
        for (name, values) in updates {
            for (dst, v) in self.params.get_mut(&name).iter_mut().zip(values) {
                *dst = to_f32_grid(v);
            }
        }
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (_, f, t) = x.dim();
        if (f, t) != self.config.input_shape {
            return Err(Error::shape(format!("input views are {f}x{t}, model expects {:?}", self.config.input_shape)));
        }
        if x.is_empty() {
            return Err(Error::shape("empty input batch"));
        }
        Ok(())
    }

    fn encoder_pass(&self, x: &Array3<f64>, mode: Mode, trace: bool) -> Result<(FeatureBatch, Option<EncoderTrace>, BufferUpdates)> {
        self.check_input(x)?;
        let cfg = &self.config;
        let (n, f, t) = x.dim();
        let mut updates = Vec::new();
        if cfg.encoder_blocks.is_empty() {
            let flat = x.to_shape((n, f * t)).expect("contiguous").to_owned();
            return Ok((flat, trace.then(|| EncoderTrace { blocks: vec![] }), updates));
        }
        let mut act = x.to_shape((n, 1, f, t)).expect("contiguous").to_owned();
        let mut blocks = Vec::new();
        let mut cin = 1;
        for (i, b) in cfg.encoder_blocks.iter().enumerate() {
            let shape = ConvShape { cin, cout: b.channels, groups: b.groups, stride: b.stride };
            let conv = conv_forward(&act, self.params.get(&conv_weight(i)), shape);
            let dims = conv.raw_dim();
            let (_, c, h, w) = conv.dim();
            let prefix = format!("encoder.block{i}");
            let (mut y, cache, upd) = bn_forward(
                conv.as_slice().expect("contiguous"),
                n,
                c,
                h * w,
                &bn_params(&self.params, &prefix, cfg),
                mode.bn(),
            );
            push_updates(&mut updates, &prefix, upd);
            relu_inplace(&mut y);
            let out = Array4::from_shape_vec(dims, y).expect("shape");
            let input = std::mem::replace(&mut act, out);
            if trace {
                blocks.push(BlockTrace { input, bn: cache, output: act.clone() });
            }
            cin = b.channels;
        }
        let features = act.mean_axis(Axis(3)).and_then(|a| a.mean_axis(Axis(2))).expect("non-empty");
        Ok((features, trace.then_some(EncoderTrace { blocks }), updates))
    }

    /// Returns the gradient with respect to the encoder input when `want_input`.
    fn encoder_backward(
        &self,
        trace: &EncoderTrace,
        dfeat: &Array2<f64>,
        grads: &mut Gradients,
        input_dim: (usize, usize, usize),
        want_input: bool,
    ) -> Option<Array3<f64>> {
        let cfg = &self.config;
        if cfg.encoder_blocks.is_empty() {
            return want_input.then(|| dfeat.to_shape(input_dim).expect("shape").to_owned());
        }
        let last = trace.blocks.last().expect("blocks");
        let (n, c, h, w) = last.output.dim();
        let hw = (h * w) as f64;
        let mut dact = Array4::from_shape_fn((n, c, h, w), |(i, ch, _, _)| dfeat[[i, ch]] / hw);
        let mut cin_of = vec![1];
        cin_of.extend(cfg.encoder_blocks.iter().map(|b| b.channels));
        for (i, b) in cfg.encoder_blocks.iter().enumerate().rev() {
            let bt = &trace.blocks[i];
            let (n, c, h, w) = bt.output.dim();
            let mut dy = dact.into_raw_vec_and_offset().0;
            relu_backward_inplace(&mut dy, bt.output.as_slice().expect("contiguous"));
            let prefix = format!("encoder.block{i}");
            let [gw, gb, _, _] = bn_names(&prefix);
            let (dconv, dgamma, dbeta) = bn_backward(&dy, &bt.bn, self.params.get(&gw), n, c, h * w);
            add_into(grads.slot(&self.params, &gw), &dgamma);
            add_into(grads.slot(&self.params, &gb), &dbeta);
            let dconv = Array4::from_shape_vec((n, c, h, w), dconv).expect("shape");
            let shape = ConvShape { cin: cin_of[i], cout: b.channels, groups: b.groups, stride: b.stride };
            let need_dx = i > 0 || want_input;
            let (dw, dx) = conv_backward(&bt.input, self.params.get(&conv_weight(i)), &dconv, shape, need_dx);
            add_into(grads.slot(&self.params, &conv_weight(i)), &dw);
            match dx {
                Some(dx) => dact = dx,
                None => return None,
            }
        }
        want_input.then(|| dact.to_shape(input_dim).expect("shape").to_owned())
    }

    fn projector_pass(&self, features: &FeatureBatch, mode: Mode, trace: bool) -> Result<(EmbeddingBatch, Option<ProjectorTrace>, BufferUpdates)> {
        let cfg = &self.config;
        if !cfg.has_projector() {
            return Err(Error::InvalidArgument("model has no projection head".into()));
        }
        if features.ncols() != cfg.encoder_out_dim {
            return Err(Error::shape(format!("features have {} dims, projector expects {}", features.ncols(), cfg.encoder_out_dim)));
        }
        let mut updates = Vec::new();
        let mut hidden = Vec::new();
        let mut h = features.clone();
        for k in 0..cfg.projector_hidden_layers {
            let prefix = format!("projector.hidden{k}");
            let u = linear_forward(&h, self.params.get(&format!("{prefix}.linear.weight")), self.params.get(&format!("{prefix}.linear.bias")));
            let (n, d) = u.dim();
            let (mut v, cache, upd) =
                bn_forward(u.as_slice().expect("contiguous"), n, d, 1, &bn_params(&self.params, &prefix, cfg), mode.bn());
            push_updates(&mut updates, &prefix, upd);
            relu_inplace(&mut v);
            let out = Array2::from_shape_vec((n, d), v).expect("shape");
            let input = std::mem::replace(&mut h, out);
            if trace {
                hidden.push(HiddenTrace { input, bn: cache, output: h.clone() });
            }
        }
        let z = linear_forward(&h, self.params.get("projector.out.weight"), self.params.get("projector.out.bias"));
        Ok((z, trace.then_some(ProjectorTrace { hidden, last_input: h }), updates))
    }

    fn projector_backward(&self, trace: &ProjectorTrace, dz: &Array2<f64>, grads: &mut Gradients) -> Array2<f64> {
        let (dw, db, mut dh) = linear_backward(&trace.last_input, self.params.get("projector.out.weight"), dz);
        add_into(grads.slot(&self.params, "projector.out.weight"), &dw);
        add_into(grads.slot(&self.params, "projector.out.bias"), &db);
        for (k, ht) in trace.hidden.iter().enumerate().rev() {
            let prefix = format!("projector.hidden{k}");
            let (n, d) = ht.output.dim();
            let mut dv = dh.into_raw_vec_and_offset().0;
            relu_backward_inplace(&mut dv, ht.output.as_slice().expect("contiguous"));
            let [gw, gb, _, _] = bn_names(&prefix);
            let (du, dgamma, dbeta) = bn_backward(&dv, &ht.bn, self.params.get(&gw), n, d, 1);
            add_into(grads.slot(&self.params, &gw), &dgamma);
            add_into(grads.slot(&self.params, &gb), &dbeta);
            let du = Array2::from_shape_vec((n, d), du).expect("shape");
            let wname = format!("{prefix}.linear.weight");
            let (dw, db, dx) = linear_backward(&ht.input, self.params.get(&wname), &du);
            add_into(grads.slot(&self.params, &wname), &dw);
            add_into(grads.slot(&self.params, &format!("{prefix}.linear.bias")), &db);
            dh = dx;
        }
        dh
    }

    /// Encoder forward. Train mode normalizes with batch statistics and
    /// updates the running buffers; eval mode uses the buffers.
    pub fn encoder_forward(&mut self, views: &Array3<f64>, mode: Mode) -> Result<FeatureBatch> {
        let (y, _, updates) = self.encoder_pass(views, mode, false)?;
        self.apply_updates(updates);
        Ok(y)
    }

    /// Eval-mode encoder forward; never mutates the model.
    pub fn encode(&self, views: &Array3<f64>) -> Result<FeatureBatch> {
        Ok(self.encoder_pass(views, Mode::Eval, false)?.0)
    }

    pub fn projector_forward(&mut self, features: &FeatureBatch, mode: Mode) -> Result<EmbeddingBatch> {
        let (z, _, updates) = self.projector_pass(features, mode, false)?;
        self.apply_updates(updates);
        Ok(z)
    }

    /// Eval-mode projector forward; never mutates the model.
    pub fn project(&self, features: &FeatureBatch) -> Result<EmbeddingBatch> {
        Ok(self.projector_pass(features, Mode::Eval, false)?.0)
    }

    pub fn classifier_forward(&self, features: &FeatureBatch) -> Result<Array2<f64>> {
        if !self.config.has_classifier() {
            return Err(Error::InvalidArgument("model has no classifier".into()));
        }
        if features.ncols() != self.config.encoder_out_dim {
            return Err(Error::shape(format!("features have {} dims, classifier expects {}", features.ncols(), self.config.encoder_out_dim)));
        }
        Ok(linear_forward(features, self.params.get("classifier.weight"), self.params.get("classifier.bias")))
    }

    /// Eval-mode logits.
    pub fn predict(&self, views: &Array3<f64>) -> Result<Array2<f64>> {
        self.classifier_forward(&self.encode(views)?)
    }

    /// Full train-mode forward of both views through encoder and projector,
    /// VICReg loss, and gradients for every parameter.
    pub fn ssl_step(&mut self, views_a: &Array3<f64>, views_b: &Array3<f64>, w: &VicregWeights, want_input_grads: bool) -> Result<SslOutcome> {
        if views_a.dim() != views_b.dim() {
            return Err(Error::shape(format!("view batches {:?} and {:?} differ", views_a.dim(), views_b.dim())));
        }
        if views_a.len_of(Axis(0)) < 2 {
            return Err(Error::InvalidArgument("VICReg needs a batch of at least 2".into()));
        }
        let (ya, enc_a, upd_a) = self.encoder_pass(views_a, Mode::Train, true)?;
        let (za, proj_a, pupd_a) = self.projector_pass(&ya, Mode::Train, true)?;
        let (yb, enc_b, upd_b) = self.encoder_pass(views_b, Mode::Train, true)?;
        let (zb, proj_b, pupd_b) = self.projector_pass(&yb, Mode::Train, true)?;
        let loss = vicreg_total(za.view(), zb.view(), w)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("VICReg loss".into()));
        }
        let (dza, dzb) = vicreg_grad(za.view(), zb.view(), w)?;

        let mut grads = Gradients::zeros_like(&self.params);
        let dya = self.projector_backward(proj_a.as_ref().expect("trace"), &dza, &mut grads);
        let dyb = self.projector_backward(proj_b.as_ref().expect("trace"), &dzb, &mut grads);
        let dim = views_a.dim();
        let ia = self.encoder_backward(enc_a.as_ref().expect("trace"), &dya, &mut grads, dim, want_input_grads);
        let ib = self.encoder_backward(enc_b.as_ref().expect("trace"), &dyb, &mut grads, dim, want_input_grads);
        if !grads.all_finite() {
            return Err(Error::NonFinite("VICReg gradients".into()));
        }
        for u in [upd_a, pupd_a, upd_b, pupd_b] {
            self.apply_updates(u);
        }
        Ok(SslOutcome { loss, grads, embeddings_a: za, embeddings_b: zb, input_grads: ia.zip(ib) })
    }

    pub fn ssl_loss_and_grads(&mut self, views_a: &Array3<f64>, views_b: &Array3<f64>, w: &VicregWeights) -> Result<(LossBreakdown, Gradients)> {
        let out = self.ssl_step(views_a, views_b, w, false)?;
        Ok((out.loss, out.grads))
    }

    /// Mean softmax cross-entropy and gradients. With `freeze_encoder` the
    /// encoder runs in eval mode and its gradients stay zero.
    pub fn supervised_loss_and_grads(&mut self, views: &Array3<f64>, labels: &[usize], freeze_encoder: bool) -> Result<(f64, Gradients)> {
        if labels.len() != views.len_of(Axis(0)) {
            return Err(Error::shape(format!("{} labels for {} inputs", labels.len(), views.len_of(Axis(0)))));
        }
        let mode = if freeze_encoder { Mode::Eval } else { Mode::Train };
        let (features, trace, updates) = self.encoder_pass(views, mode, !freeze_encoder)?;
        let (loss, mut grads, dfeat) = self.head_backward(&features, labels)?;
        if let Some(trace) = trace {
            self.encoder_backward(&trace, &dfeat, &mut grads, views.dim(), false);
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("cross-entropy gradients".into()));
        }
        self.apply_updates(updates);
        Ok((loss, grads))
    }

    /// Cross-entropy of the classifier on precomputed encoder features.
    /// Only classifier gradients are non-zero.
    pub fn classifier_loss_and_grads(&self, features: &FeatureBatch, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (loss, grads, _) = self.head_backward(features, labels)?;
        Ok((loss, grads))
    }

    fn head_backward(&self, features: &FeatureBatch, labels: &[usize]) -> Result<(f64, Gradients, Array2<f64>)> {
        let k = self.config.num_classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label: bad, classes: k });
        }
        if labels.len() != features.nrows() || labels.is_empty() {
            return Err(Error::shape(format!("{} labels for {} feature rows", labels.len(), features.nrows())));
        }
        let logits = self.classifier_forward(features)?;
        let n = labels.len() as f64;
        let mut dlogits = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (i, row) in logits.rows().into_iter().enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += log_z - row[labels[i]];
            for (j, v) in row.iter().enumerate() {
                dlogits[[i, j]] = (v - log_z).exp() / n;
            }
            dlogits[[i, labels[i]]] -= 1.0 / n;
        }
        loss /= n;
        check_finite("cross-entropy loss", [loss])?;
        let mut grads = Gradients::zeros_like(&self.params);
        let (dw, db, dfeat) = linear_backward(features, self.params.get("classifier.weight"), &dlogits);
        add_into(grads.slot(&self.params, "classifier.weight"), &dw);
        add_into(grads.slot(&self.params, "classifier.bias"), &db);
        Ok((loss, grads, dfeat))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{BlockConfig, EntryKind};
    use crate::rng::RandomStream;
    use rand::Rng;

    pub(crate) fn tiny_config(classes: usize) -> ModelConfig {
        ModelConfig {
            input_shape: (7, 6),
            encoder_blocks: vec![BlockConfig { channels: 4, stride: 2, groups: 1 }, BlockConfig { channels: 8, stride: 2, groups: 2 }],
            encoder_out_dim: 8,
            projector_hidden_layers: 1,
            projector_dim: 16,
            num_classes: classes,
            ..ModelConfig::default()
        }
    }

    pub(crate) fn random_views(n: usize, (f, t): (usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = RandomStream::lane(seed, 0, 0, 0);
        Array3::from_shape_fn((n, f, t), |_| rng.gen_range(0.0..1.0))
    }

    const STEP: f64 = 1e-5;

    /// |a - b| / max(|a|, |b|, floor)
    pub(crate) fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(floor)
    }

    /// Central differences carry roundoff of order `|L| * eps / STEP`; the
    /// relative-error floor sits well above it.
    pub(crate) fn error_floor(loss: f64) -> f64 {
        1e-6 * loss.abs().max(1.0)
    }

    /// Worst relative error of `grads` against central differences over every
    /// trainable entry accepted by `include`.
    pub(crate) fn fd_check(
        model: &Model,
        grads: &Gradients,
        include: impl Fn(&str) -> bool,
        loss: impl Fn(&Model) -> f64,
    ) -> (f64, String) {
        let floor = error_floor(loss(model));
        let mut worst = (0.0, String::new());
        for (idx, e) in model.params.entries().iter().enumerate() {
            if e.kind == EntryKind::Buffer || !include(&e.name) {
                continue;
            }
            for j in 0..e.values.len() {
                let mut m = model.clone();
                m.params.values_at_mut(idx)[j] = e.values[j] + STEP;
                let up = loss(&m);
                m.params.values_at_mut(idx)[j] = e.values[j] - STEP;
                let down = loss(&m);
                let fd = (up - down) / (2.0 * STEP);
                let r = rel_err(grads.at(idx)[j], fd, floor);
                if r > worst.0 {
                    worst = (r, format!("{}[{j}] analytic {} fd {fd}", e.name, grads.at(idx)[j]));
                }
            }
        }
        worst
    }

    #[test]
    fn ssl_gradients_match_finite_differences() {
        let w = VicregWeights::default();
        for inst in 0..3 {
            let model = Model::new(tiny_config(0), inst).unwrap();
            let a = random_views(5, (7, 6), 100 + inst);
            let b = random_views(5, (7, 6), 200 + inst);
            let (_, grads) = model.clone().ssl_loss_and_grads(&a, &b, &w).unwrap();
            let worst = fd_check(&model, &grads, |_| true, |m| m.clone().ssl_loss_and_grads(&a, &b, &w).unwrap().0.total);
            assert!(worst.0 <= 1e-4, "{worst:?}");
        }
    }

    #[test]
    fn supervised_gradients_match_finite_differences() {
        for (inst, freeze) in [(0, false), (1, true), (2, false)] {
            let model = Model::new(tiny_config(3).for_downstream(3), inst).unwrap();
            let x = random_views(6, (7, 6), 300 + inst);
            let labels = [0, 1, 2, 2, 1, 0];
            let (_, grads) = model.clone().supervised_loss_and_grads(&x, &labels, freeze).unwrap();
            let worst = fd_check(&model, &grads, |n| !freeze || !n.starts_with("encoder."), |m| m.clone().supervised_loss_and_grads(&x, &labels, freeze).unwrap().0);
            assert!(worst.0 <= 1e-4, "{worst:?}");
            if freeze {
                for (name, g) in grads.iter().filter(|(n, _)| n.starts_with("encoder.")) {
                    assert!(g.iter().all(|&v| v == 0.0), "{name}");
                }
            }
        }
    }

    #[test]
    fn identity_configuration_passes_vicreg_gradients_through() {
        let cfg = ModelConfig {
            input_shape: (2, 3),
            encoder_blocks: vec![],
            encoder_out_dim: 6,
            projector_hidden_layers: 0,
            projector_dim: 6,
            num_classes: 0,
            ..ModelConfig::default()
        };
        let mut model = Model::new(cfg, 0).unwrap();
        let eye = Array2::<f64>::eye(6);
        model.params.get_mut("projector.out.weight").copy_from_slice(eye.as_slice().unwrap());
        model.params.get_mut("projector.out.bias").fill(0.0);
        let a = random_views(5, (2, 3), 1);
        let b = random_views(5, (2, 3), 2);
        let w = VicregWeights::default();
        let out = model.ssl_step(&a, &b, &w, true).unwrap();
        let za = a.to_shape((5, 6)).unwrap().to_owned();
        let zb = b.to_shape((5, 6)).unwrap().to_owned();
        let (ga, gb) = vicreg_grad(za.view(), zb.view(), &w).unwrap();
        let (ia, ib) = out.input_grads.unwrap();
        assert_eq!(ia.to_shape((5, 6)).unwrap().to_owned(), ga);
        assert_eq!(ib.to_shape((5, 6)).unwrap().to_owned(), gb);
        assert_eq!(out.loss, vicreg_total(za.view(), zb.view(), &w).unwrap());
    }

    #[test]
    fn identical_views_without_regularizers_give_zero_loss_and_gradients() {
        let mut model = Model::new(tiny_config(0), 3).unwrap();
        let x = random_views(4, (7, 6), 9);
        let w = VicregWeights { mu: 0.0, nu: 0.0, ..VicregWeights::default() };
        let (loss, grads) = model.ssl_loss_and_grads(&x, &x, &w).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(grads.iter().all(|(_, g)| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn desk_shapes() {
        let mut model = Model::new(ModelConfig::default(), 0).unwrap();
        let x = Array3::zeros((4, 401, 98));
        let y = model.encode(&x).unwrap();
        assert_eq!(y.dim(), (4, 256));
        assert!(y.iter().all(|v| v.is_finite()));
        assert_eq!(model.projector_forward(&y, Mode::Eval).unwrap().dim(), (4, 512));
        assert_eq!(model.classifier_forward(&y).unwrap().dim(), (4, 20));
        assert_eq!(model.encoder_forward(&random_views(4, (401, 98), 1), Mode::Train).unwrap().dim(), (4, 256));
        assert!(model.encode(&Array3::zeros((1, 400, 98))).is_err());
    }

    #[test]
    fn zero_classifier_gives_uniform_logits_and_ln_k_loss() {
        let mut model = Model::new(tiny_config(20).for_downstream(20), 0).unwrap();
        model.params.get_mut("classifier.weight").fill(0.0);
        model.params.get_mut("classifier.bias").fill(0.0);
        let x = random_views(3, (7, 6), 4);
        assert!(model.predict(&x).unwrap().iter().all(|&v| v == 0.0));
        let (loss, _) = model.supervised_loss_and_grads(&x, &[0, 5, 19], false).unwrap();
        assert!((loss - 20f64.ln()).abs() < 1e-12);
        assert!(matches!(model.supervised_loss_and_grads(&x, &[0, 5, 20], false), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn forward_is_deterministic_and_train_mode_moves_buffers() {
        let mut model = Model::new(tiny_config(0), 5).unwrap();
        let x = random_views(4, (7, 6), 6);
        assert_eq!(model.encode(&x).unwrap(), model.encode(&x).unwrap());
        let before = model.params.get("encoder.block0.bn.running_mean").to_vec();
        model.encoder_forward(&x, Mode::Train).unwrap();
        let after = model.params.get("encoder.block0.bn.running_mean");
        assert_ne!(before, after);
        assert!(after.iter().all(|&v| v == to_f32_grid(v)));
    }
}
