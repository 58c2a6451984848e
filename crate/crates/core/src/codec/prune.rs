use crate::error::{Error, Result};
use crate::net::{MinlModel, Model};

/// Keep/prune flags for every tensor of a model, `true` = kept. Bias tensors
/// are always fully kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    pub masks: Vec<Vec<bool>>,
}

impl PruneMask {
    pub fn all_kept(model: &MinlModel) -> Self {
        Self {
            masks: model.tensors.iter().map(|t| vec![true; t.len()]).collect(),
        }
    }

    pub fn kept(&self) -> usize {
        self.masks.iter().flatten().filter(|k| **k).count()
    }

    pub fn size(&self) -> usize {
        self.masks.iter().map(Vec::len).sum()
    }

    pub fn kept_fraction(&self) -> f64 {
        let size = self.size();
        if size == 0 {
            1.0
        } else {
            self.kept() as f64 / size as f64
        }
    }

    pub fn check_congruent(&self, model: &MinlModel) -> Result<()> {
        let ok = self.masks.len() == model.tensors.len()
            && self.masks.iter().zip(&model.tensors).all(|(m, t)| m.len() == t.len());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("prune mask does not match the model".into()))
        }
    }

    /// Zeroes every pruned entry of `model` in place.
    pub fn apply(&self, model: &mut MinlModel) -> Result<()> {
        self.check_congruent(model)?;
        for (mask, t) in self.masks.iter().zip(&mut model.tensors) {
            for (keep, v) in mask.iter().zip(&mut t.data) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        Ok(())
    }
}

/// Per-entry LAMP scores of one layer's weights: with entries sorted by
/// ascending magnitude (ties by index), rank `u` scores
/// `w_u² / Σ_{v ≥ u} w_v²`. An all-zero tensor scores 0 everywhere.
pub fn lamp_scores(weights: &[f32]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("LAMP scores of an empty tensor".into()));
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(a.cmp(&b))
    });
    let sq: Vec<f64> = order.iter().map(|&i| (weights[i] as f64).powi(2)).collect();
    let mut scores = vec![0.0; weights.len()];
    let mut suffix = 0.0;
    for (rank, &i) in order.iter().enumerate().rev() {
        suffix += sq[rank];
        scores[i] = if suffix > 0.0 { sq[rank] / suffix } else { 0.0 };
    }
    Ok(scores)
}

/// Global LAMP pruning of weight tensors: exactly `floor(ratio · total)`
/// weights are removed, lowest scores first, ties resolved by
/// `(layer, flat index)`. Biases are exempt.
pub fn prune(model: &MinlModel, ratio: f64) -> Result<(MinlModel, PruneMask)> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "prune ratio {ratio} outside [0,1)"
        )));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in model.tensors.iter().enumerate() {
        if Model::<f32>::is_weight_tensor(ti) {
            for (j, s) in lamp_scores(&t.data)?.into_iter().enumerate() {
                candidates.push((s, ti, j));
            }
        }
    }
    let k = (ratio * candidates.len() as f64).floor() as usize;
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut mask = PruneMask::all_kept(model);
    for &(_, ti, j) in &candidates[..k] {
        mask.masks[ti][j] = false;
    }
    let mut pruned = model.clone();
    mask.apply(&mut pruned)?;
    Ok((pruned, mask))
}
