//! Template arrival-rate tracking, workload classification, forecasting and
//! the pre-replication trigger.

pub mod lstm;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::HeatGraph;
use crate::model::{PartitionId, TxnMeta};
use lstm::{Forecast, LastValue, Lstm};

/// Canonical sorted partition set labelling a family of transactions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateId(pub Vec<PartitionId>);

impl TemplateId {
    pub fn from_parts(parts: impl IntoIterator<Item = PartitionId>) -> Result<Self> {
        let mut v: Vec<PartitionId> = parts.into_iter().collect();
        if v.is_empty() {
            return Err(CoreError::EmptyTransaction);
        }
        v.sort_unstable();
        v.dedup();
        Ok(TemplateId(v))
    }

    pub fn parts(&self) -> &[PartitionId] {
        &self.0
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

pub fn identify_template(t: &TxnMeta) -> Result<TemplateId> {
    TemplateId::from_parts(t.parts.iter().copied())
}

/// Arrival-rate history of one template, one sample per closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSeries {
    pub template: TemplateId,
    pub ar: Vec<f64>,
    pub interval_us: u64,
}

impl TemplateSeries {
    pub fn new(template: TemplateId, interval_us: u64) -> Self {
        TemplateSeries { template, ar: Vec::new(), interval_us }
    }

    pub fn append_sample(&mut self, count: u64) {
        self.ar.push(count as f64);
    }

    /// Total arrivals over the retained history.
    pub fn frequency(&self) -> f64 {
        self.ar.iter().sum()
    }
}

/// `1 - cos(a, b)`; the similarity of an all-zero vector is taken as 0.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sim = if na == 0.0 || nb == 0.0 { 0.0 } else { (dot / (na * nb)).clamp(-1.0, 1.0) };
    Ok(1.0 - sim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadClass {
    pub members: Vec<TemplateId>,
    /// Sampling weight per member, aligned with `members`.
    pub member_freq: Vec<f64>,
    /// Elementwise sum of member series.
    pub ar: Vec<f64>,
}

/// Single-linkage grouping: two templates share a class iff a chain of
/// pairwise distances below `beta` connects them.
pub fn classify(templates: &[TemplateSeries], beta: f64) -> Result<Vec<WorkloadClass>> {
    let n = templates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if cosine_distance(&templates[i].ar, &templates[j].ar)? < beta {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    Ok(groups
        .into_values()
        .map(|idx| {
            let len = templates[idx[0]].ar.len();
            let mut ar = vec![0.0; len];
            for &i in &idx {
                for (a, x) in ar.iter_mut().zip(&templates[i].ar) {
                    *a += x;
                }
            }
            WorkloadClass {
                members: idx.iter().map(|&i| templates[i].template.clone()).collect(),
                member_freq: idx.iter().map(|&i| templates[i].frequency()).collect(),
                ar,
            }
        })
        .collect())
}

/// Root-mean-square gap between forecast and current rates across classes.
pub fn rms_gap(current: &[f64], predicted: &[f64]) -> Result<f64> {
    if current.len() != predicted.len() {
        return Err(CoreError::LengthMismatch(current.len(), predicted.len()));
    }
    if current.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = current.iter().zip(predicted).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((sum / current.len() as f64).sqrt())
}

/// Per-series min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub min: f64,
    pub range: f64,
}

impl Normalizer {
    pub fn fit(series: &[f64]) -> Self {
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !min.is_finite() || max <= min {
            Normalizer { min: if min.is_finite() { min } else { 0.0 }, range: 1.0 }
        } else {
            Normalizer { min, range: max - min }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.range
    }

    pub fn invert(&self, y: f64) -> f64 {
        self.min + y * self.range
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub wv: f64,
    /// `a_k(t)` per class.
    pub current: Vec<f64>,
    /// `a_k(t + h)` per class, in raw units.
    pub predicted: Vec<f64>,
}

impl Variation {
    /// Index of the class with the largest forecast rise.
    pub fn rising_class(&self) -> Option<usize> {
        (0..self.current.len()).max_by(|&a, &b| {
            let ra = self.predicted[a] - self.current[a];
            let rb = self.predicted[b] - self.current[b];
            ra.total_cmp(&rb).then(b.cmp(&a))
        })
    }
}

/// Forecast every class `h` intervals ahead and measure the gap to now.
pub fn workload_variation(classes: &[WorkloadClass], f: &dyn Forecast, h: usize) -> Result<Variation> {
    let mut current = Vec::with_capacity(classes.len());
    let mut predicted = Vec::with_capacity(classes.len());
    for c in classes {
        if c.ar.len() < f.window() {
            return Err(CoreError::HistoryTooShort { needed: f.window(), have: c.ar.len() });
        }
        let now = *c.ar.last().expect("window is at least one sample");
        current.push(now);
        if h == 0 {
            predicted.push(now);
            continue;
        }
        let norm = Normalizer::fit(&c.ar);
        let recent = norm.apply_all(&c.ar[c.ar.len() - f.window()..]);
        let out = f.forecast(&recent, h);
        predicted.push(norm.invert(out[h - 1]).max(0.0));
    }
    let wv = rms_gap(&current, &predicted)?;
    Ok(Variation { wv, current, predicted })
}

pub fn maybe_trigger(wv: f64, gamma: f64) -> bool {
    wv > gamma
}

/// Draw `k` templates with replacement from `class`, weighted by member
/// frequency, and fold duplicates into a count.
pub fn predicted_templates<R: Rng>(class: &WorkloadClass, k: usize, rng: &mut R) -> Vec<(TemplateId, f64)> {
    if class.members.is_empty() || k == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = if class.member_freq.iter().any(|&w| w > 0.0) {
        class.member_freq.clone()
    } else {
        vec![1.0; class.members.len()]
    };
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut counts = vec![0usize; class.members.len()];
    for _ in 0..k {
        counts[dist.sample(rng)] += 1;
    }
    class
        .members
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(t, c)| (t.clone(), c as f64))
        .collect()
}

/// Fold predicted co-access into `g` as extra edge weight scaled by `w_p`.
pub fn inject(g: &mut HeatGraph, preds: &[(TemplateId, f64)], w_p: f64) {
    if w_p <= 0.0 {
        return;
    }
    for (t, weight) in preds {
        g.add_edges_only(t.parts(), w_p * weight);
    }
}

/// CSV rows `t,class_id,actual,predicted`.
pub fn series_csv(rows: &[(usize, usize, f64, f64)]) -> String {
    let mut out = String::from("t,class_id,actual,predicted\n");
    for (t, k, a, p) in rows {
        let _ = writeln!(out, "{t},{k},{a},{p}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForecasterKind {
    Lstm,
    LastValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub interval_us: u64,
    pub horizon: usize,
    pub beta: f64,
    /// Trigger threshold as a fraction of the largest class amplitude seen.
    pub gamma_factor: f64,
    /// Retrain once the rolling one-step MSE (normalized units) exceeds this.
    pub retrain_mse: f64,
    /// Samples retained per template for classification and training.
    pub history: usize,
    /// Predicted draws as a fraction of the planning batch size.
    pub k_fraction: f64,
    pub w_p: f64,
    pub forecaster: ForecasterKind,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            interval_us: 1_000_000,
            horizon: 10,
            beta: 0.15,
            gamma_factor: 0.25,
            retrain_mse: 0.05,
            history: 60,
            k_fraction: 0.1,
            w_p: 1.0,
            forecaster: ForecasterKind::Lstm,
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Result of a triggered evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub wv: f64,
    pub gamma: f64,
    pub class: WorkloadClass,
}

enum Model {
    Lstm(Box<Lstm>),
    LastValue(LastValue),
}

impl Model {
    fn as_forecast(&self) -> &dyn Forecast {
        match self {
            Model::Lstm(m) => m.as_ref(),
            Model::LastValue(m) => m,
        }
    }

    fn as_forecast_mut(&mut self) -> &mut dyn Forecast {
        match self {
            Model::Lstm(m) => m.as_mut(),
            Model::LastValue(m) => m,
        }
    }
}

/// Online tracker: counts template arrivals per interval and decides when to
/// pre-replicate.
pub struct WorkloadPredictor {
    cfg: PredictorConfig,
    series: BTreeMap<TemplateId, Vec<f64>>,
    open: BTreeMap<TemplateId, u64>,
    samples: usize,
    model: Model,
    trained: bool,
    max_amplitude: f64,
    /// One-step predictions made at the last close, keyed by the class's
    /// first member.
    pending: BTreeMap<TemplateId, f64>,
    recent_errors: Vec<f64>,
    pub retrain_count: usize,
    pub trigger_count: usize,
}

impl WorkloadPredictor {
    pub fn new(cfg: PredictorConfig) -> Self {
        let model = match cfg.forecaster {
            ForecasterKind::Lstm => {
                let mut m = Lstm::standard(cfg.seed);
                m.train_params.epochs = cfg.epochs;
                m.train_params.lr = cfg.lr;
                Model::Lstm(Box::new(m))
            }
            ForecasterKind::LastValue => Model::LastValue(LastValue::new(10)),
        };
        WorkloadPredictor {
            cfg,
            series: BTreeMap::new(),
            open: BTreeMap::new(),
            samples: 0,
            model,
            trained: false,
            max_amplitude: 0.0,
            pending: BTreeMap::new(),
            recent_errors: Vec::new(),
            retrain_count: 0,
            trigger_count: 0,
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn observe(&mut self, t: &TxnMeta) {
        if let Ok(id) = identify_template(t) {
            *self.open.entry(id).or_insert(0) += 1;
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn template_series(&self) -> Vec<TemplateSeries> {
        self.series
            .iter()
            .map(|(t, ar)| TemplateSeries { template: t.clone(), ar: ar.clone(), interval_us: self.cfg.interval_us })
            .collect()
    }

    pub fn classes(&self) -> Result<Vec<WorkloadClass>> {
        if self.samples == 0 {
            return Ok(Vec::new());
        }
        classify(&self.template_series(), self.cfg.beta)
    }

    /// Close the open interval: append one sample per known template, score
    /// the previous one-step predictions and retrain if they drifted.
    pub fn close_interval(&mut self) -> Result<()> {
        let open = std::mem::take(&mut self.open);
        for id in open.keys() {
            if !self.series.contains_key(id) {
                self.series.insert(id.clone(), vec![0.0; self.samples.min(self.cfg.history)]);
            }
        }
        for (id, ar) in self.series.iter_mut() {
            ar.push(open.get(id).copied().unwrap_or(0) as f64);
            if ar.len() > self.cfg.history {
                ar.remove(0);
            }
        }
        self.samples += 1;
        // Templates silent for the whole retained history carry no signal.
        self.series.retain(|_, ar| ar.iter().any(|&x| x > 0.0));

        let classes = self.classes()?;
        for c in &classes {
            let norm = Normalizer::fit(&c.ar);
            let amp = c.ar.iter().copied().fold(0.0, f64::max) - c.ar.iter().copied().fold(f64::INFINITY, f64::min);
            self.max_amplitude = self.max_amplitude.max(amp);
            if let Some(prev) = self.pending.get(&c.members[0]) {
                let actual = norm.apply(*c.ar.last().expect("nonempty"));
                self.recent_errors.push((norm.apply(*prev) - actual).powi(2));
            }
        }
        let keep = self.model.as_forecast().window();
        if self.recent_errors.len() > keep {
            let drop = self.recent_errors.len() - keep;
            self.recent_errors.drain(..drop);
        }
        let window = self.model.as_forecast().window();
        let enough = classes.iter().any(|c| c.ar.len() > window + 1);
        let drifted = !self.recent_errors.is_empty()
            && self.recent_errors.iter().sum::<f64>() / self.recent_errors.len() as f64 > self.cfg.retrain_mse;
        if enough && (!self.trained || drifted) {
            let norm_series: Vec<Vec<f64>> =
                classes.iter().map(|c| Normalizer::fit(&c.ar).apply_all(&c.ar)).collect();
            let refs: Vec<&[f64]> = norm_series.iter().map(Vec::as_slice).filter(|s| s.len() > window + 1).collect();
            self.model.as_forecast_mut().train(&refs)?;
            self.trained = true;
            self.retrain_count += 1;
            self.recent_errors.clear();
        }
        self.pending.clear();
        if self.trained {
            for c in &classes {
                if c.ar.len() >= window {
                    let norm = Normalizer::fit(&c.ar);
                    let recent = norm.apply_all(&c.ar[c.ar.len() - window..]);
                    let next = self.model.as_forecast().forecast(&recent, 1)[0];
                    self.pending.insert(c.members[0].clone(), norm.invert(next));
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.cfg.gamma_factor * self.max_amplitude
    }

    /// Evaluate the variation metric; returns the rising class when it
    /// exceeds the threshold.
    pub fn evaluate(&mut self) -> Result<Option<Trigger>> {
        if !self.trained {
            return Ok(None);
        }
        let window = self.model.as_forecast().window();
        let classes: Vec<WorkloadClass> =
            self.classes()?.into_iter().filter(|c| c.ar.len() >= window).collect();
        if classes.is_empty() {
            return Ok(None);
        }
        let var = workload_variation(&classes, self.model.as_forecast(), self.cfg.horizon)?;
        let gamma = self.gamma();
        if gamma > 0.0 && maybe_trigger(var.wv, gamma) {
            let idx = var.rising_class().expect("classes nonempty");
            self.trigger_count += 1;
            return Ok(Some(Trigger { wv: var.wv, gamma, class: classes[idx].clone() }));
        }
        Ok(None)
    }

    pub fn draw_count(&self, batch_size: usize) -> usize {
        ((batch_size as f64) * self.cfg.k_fraction).round().max(1.0) as usize
    }
}
