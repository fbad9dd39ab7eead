use crate::TrainConfig;

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then linear decay
/// to 0 at `total_decay_steps`, and 0 afterwards.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let (w, t) = (cfg.warmup_steps, cfg.total_decay_steps);
    if step < w {
        cfg.base_lr * (step as f64 / w as f64)
    } else if step >= t {
        if w == t && step == t {
            cfg.base_lr
        } else {
            0.0
        }
    } else {
        cfg.base_lr * ((t - step) as f64 / (t - w) as f64)
    }
}
