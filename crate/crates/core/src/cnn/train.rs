use std::io::Write;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{CnnModel, Gradients, Mode};
use super::ops::cross_entropy;
use super::{CnnConfig, CnnError, CnnFloat, N_OUTPUTS};

pub const TRAINING_LOG_HEADER: &str = "epoch,train_loss,val_loss,val_acc";

/// Borrowed single-channel images (row-major `H x W`) with binary labels,
/// 0 = NonPathological, 1 = Pathological.
#[derive(Clone, Debug, Default)]
pub struct ImageSet<'a> {
    pub images: Vec<&'a [f32]>,
    pub labels: Vec<usize>,
}

impl ImageSet<'_> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn check(&self, shape: (usize, usize), what: &'static str) -> Result<(), CnnError> {
        if self.is_empty() {
            return Err(CnnError::EmptySet(what));
        }
        if self.labels.len() != self.images.len() {
            return Err(CnnError::ShapeMismatch {
                expected: vec![self.images.len()],
                found: vec![self.labels.len()],
            });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= N_OUTPUTS) {
            return Err(CnnError::BadLabel(l));
        }
        if let Some(img) = self.images.iter().find(|i| i.len() != shape.0 * shape.1) {
            return Err(CnnError::ShapeMismatch {
                expected: vec![shape.0 * shape.1],
                found: vec![img.len()],
            });
        }
        Ok(())
    }
}

/// Stacks the selected images into a `(B, 1, H, W)` batch.
pub fn to_batch<T: CnnFloat>(images: &[&[f32]], idx: &[usize], shape: (usize, usize)) -> Array4<T> {
    let (h, w) = shape;
    let mut data = Vec::with_capacity(idx.len() * h * w);
    for &i in idx {
        data.extend(images[i].iter().map(|&v| T::from_f32(v).unwrap()));
    }
    Array4::from_shape_vec((idx.len(), 1, h, w), data).expect("image size checked")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

pub fn write_training_log<W: Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "{TRAINING_LOG_HEADER}")?;
    for e in log {
        writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_acc)?;
    }
    Ok(())
}

pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: CnnFloat> Adam<T> {
    pub fn new(model: &mut CnnModel<T>, lr: f64) -> Self {
        let cfg = model.config.clone();
        let zeros: Vec<Vec<T>> = model.param_slices_mut().iter().map(|p| vec![T::zero(); p.len()]).collect();
        Adam {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut CnnModel<T>, grads: &Gradients<T>) {
        self.t += 1;
        let f = |x: f64| T::from_f64(x).unwrap();
        let (b1, b2) = (f(self.beta1), f(self.beta2));
        let c1 = f(1.0 - self.beta1.powi(self.t));
        let c2 = f(1.0 - self.beta2.powi(self.t));
        let (lr, eps) = (f(self.lr), f(self.eps));
        let one = T::one();
        for (((p, g), m), v) in model.param_slices_mut().into_iter().zip(grads.slices()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] = p[i] - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// One optimizer step on a batch; returns the batch loss before the step.
pub fn train_step<T: CnnFloat>(
    model: &mut CnnModel<T>,
    adam: &mut Adam<T>,
    x: &Array4<T>,
    labels: &[usize],
) -> Result<f64, CnnError> {
    let cache = model.forward_train(x)?;
    let loss = cross_entropy(&cache.logits, labels);
    let grads = model.backward(&cache, labels);
    model.update_running_stats(&cache, labels.len());
    adam.step(model, &grads);
    Ok(loss)
}

/// Patience-based early stopping on a loss that should decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: Option<usize>,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records an epoch's loss; returns true when it is a new strict best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience.is_some_and(|p| self.since_best >= p)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Probabilities (NonPathological, Pathological) for each image, infer mode.
pub fn predict_proba<T: CnnFloat>(
    model: &CnnModel<T>,
    images: &[&[f32]],
    batch_size: usize,
) -> Result<Vec<[f64; 2]>, CnnError> {
    let idx: Vec<usize> = (0..images.len()).collect();
    let mut out = Vec::with_capacity(images.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let p = model.forward(&to_batch(images, chunk, model.config.input_shape), Mode::Infer)?;
        out.extend(p.outer_iter().map(|r| [r[0].to_f64().unwrap(), r[1].to_f64().unwrap()]));
    }
    Ok(out)
}

fn evaluate<T: CnnFloat>(model: &CnnModel<T>, set: &ImageSet, batch_size: usize) -> Result<(f64, f64), CnnError> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(batch_size) {
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let logits = model.logits(&to_batch(&set.images, chunk, model.config.input_shape), Mode::Infer)?;
        loss += cross_entropy(&logits, &labels) * chunk.len() as f64;
        for (row, &y) in logits.outer_iter().zip(&labels) {
            let pred = usize::from(row[1] >= row[0]);
            correct += usize::from(pred == y);
        }
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Mini-batch Adam on cross-entropy with early stopping on validation loss.
/// Returns the parameters of the best-validation epoch and the per-epoch log.
pub fn cnn_train<T: CnnFloat>(
    train: &ImageSet,
    val: &ImageSet,
    cfg: &CnnConfig,
) -> Result<(CnnModel<T>, Vec<EpochLog>), CnnError> {
    cfg.validate()?;
    train.check(cfg.input_shape, "training")?;
    val.check(cfg.input_shape, "validation")?;
    let mut model = CnnModel::<T>::new(cfg)?;
    let mut adam = Adam::new(&mut model, cfg.lr);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best = model.clone();
    let mut log = Vec::new();

    for epoch in 1..=cfg.epochs_max {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let x = to_batch(&train.images, chunk, cfg.input_shape);
            let loss = train_step(&mut model, &mut adam, &x, &labels)?;
            if !loss.is_finite() {
                return Err(CnnError::Diverged { epoch, batch: b });
            }
            total += loss * chunk.len() as f64;
        }
        let (val_loss, val_acc) = evaluate(&model, val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(CnnError::Diverged { epoch, batch: usize::MAX });
        }
        let train_loss = total / train.len() as f64;
        log::debug!("cnn epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_acc:.3}");
        log.push(EpochLog { epoch, train_loss, val_loss, val_acc });
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok((best, log))
}
