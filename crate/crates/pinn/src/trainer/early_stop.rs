/// Patience-based early stopping on a validation curve, keeping the
/// parameters of the best check.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper<P> {
    /// Patience in epochs.
    pub patience: usize,
    pub best: Option<Best<P>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Best<P> {
    pub epoch: usize,
    pub value: f64,
    pub params: P,
}

impl<P: Clone> EarlyStopper<P> {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    /// Records a check; returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, value: f64, params: &P) -> bool {
        let improved = value.is_finite() && self.best.as_ref().is_none_or(|b| value < b.value);
        if improved {
            self.best = Some(Best { epoch, value, params: params.clone() });
            return false;
        }
        self.best.as_ref().is_some_and(|b| epoch - b.epoch >= self.patience)
    }
}
