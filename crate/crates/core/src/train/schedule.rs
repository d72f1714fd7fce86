/// Counts consecutive epochs without a relative improvement of the monitored loss.
#[derive(Clone, Debug)]
pub struct PlateauCounter {
    best: f64,
    bad_epochs: usize,
    threshold: f64,
}

impl PlateauCounter {
    pub fn new(threshold: f64) -> Self {
        Self {
            best: f64::INFINITY,
            bad_epochs: 0,
            threshold,
        }
    }

    /// Records a value; returns the number of consecutive non-improving epochs.
    ///
    /// An epoch improves when `value < best * (1 - threshold)`.
    pub fn observe(&mut self, value: f64) -> usize {
        if value < self.best * (1.0 - self.threshold) {
            self.best = value;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs
    }

    pub fn reset_count(&mut self) {
        self.bad_epochs = 0;
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// non-improving epochs, then starts counting again.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    counter: PlateauCounter,
    patience: usize,
    factor: f64,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, threshold: f64) -> Self {
        Self {
            counter: PlateauCounter::new(threshold),
            patience,
            factor,
        }
    }

    /// Returns the learning rate to use for the next epoch.
    pub fn step(&mut self, value: f64, lr: f64) -> f64 {
        if self.counter.observe(value) >= self.patience {
            self.counter.reset_count();
            lr * self.factor
        } else {
            lr
        }
    }
}

/// Signals a stop after `patience` consecutive non-improving epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    counter: PlateauCounter,
    patience: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, threshold: f64) -> Self {
        Self {
            counter: PlateauCounter::new(threshold),
            patience,
        }
    }

    pub fn should_stop(&mut self, value: f64) -> bool {
        self.counter.observe(value) >= self.patience
    }
}
