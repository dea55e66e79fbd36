/// `-ln(e^pos / (e^pos + e^neg))`, i.e. `softplus(neg - pos)`, evaluated
/// without overflow for any finite pair of scores.
pub fn contrastive_ce_loss(s_pos: f64, s_neg: f64) -> f64 {
    let d = s_neg - s_pos;
    if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    }
}

/// Derivatives of [`contrastive_ce_loss`] with respect to `(s_pos, s_neg)`.
pub fn contrastive_ce_grad(s_pos: f64, s_neg: f64) -> (f64, f64) {
    let d = s_neg - s_pos;
    let p = if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    };
    (-p, p)
}
