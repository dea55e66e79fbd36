use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::{contrastive_ce_grad, contrastive_ce_loss};
use super::triples::Triple;
use crate::corpus::Term;
use crate::encoder::{doc_terms, hash_embed, query_terms, EncoderConfig};

const NORM_FLOOR: f64 = 1e-12;
const TIE_GAP: f64 = 1e-6;

/// Linear map applied to hash embeddings before normalization: a token's
/// vector is `W e / |W e|`. Stands in for a trainable encoder so the loss
/// path can be differentiated and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    dim: usize,
    /// Row-major `dim × dim`.
    w: Vec<f64>,
}

/// Encoded token rows (unit vectors, f64) plus what backprop needs.
struct Encoded {
    terms: Vec<Term>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

/// For each query row: argmax document row and the gap to the best row
/// carrying a different term.
struct MaxSim {
    score: f64,
    argmax: Vec<usize>,
    gaps: Vec<f64>,
}

impl ToyEncoder {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self { dim, w }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            w: vec![0.0; dim * dim],
        }
    }

    /// Identity plus Gaussian noise of standard deviation `scale / sqrt(dim)`.
    pub fn perturbed_identity(dim: usize, scale: f64, seed: u64) -> Self {
        let mut enc = Self::identity(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = scale / (dim as f64).sqrt();
        for x in enc.w.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += sd * z;
        }
        enc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.w
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
    }

    fn encode(&self, terms: Vec<Term>, seed: u64) -> Encoded {
        let d = self.dim;
        let mut enc = Encoded {
            terms: Vec::new(),
            inputs: Vec::new(),
            pre: Vec::new(),
            out: Vec::new(),
        };
        for t in terms {
            let e: Vec<f64> = hash_embed(&t, d, seed).into_iter().map(f64::from).collect();
            let u: Vec<f64> = (0..d)
                .map(|r| self.w[r * d..(r + 1) * d].iter().zip(&e).map(|(a, b)| a * b).sum())
                .collect();
            let n = norm(&u).max(NORM_FLOOR);
            enc.out.push(u.iter().map(|x| x / n).collect());
            enc.terms.push(t);
            enc.inputs.push(e);
            enc.pre.push(u);
        }
        enc
    }

    fn encode_triple(&self, t: &Triple, cfg: &EncoderConfig) -> [Encoded; 3] {
        assert_eq!(cfg.dim, self.dim, "encoder config dimension differs from the toy encoder");
        [
            self.encode(query_terms(&t.query, cfg), cfg.seed),
            self.encode(doc_terms(&t.pos, cfg), cfg.seed),
            self.encode(doc_terms(&t.neg, cfg), cfg.seed),
        ]
    }

    /// Loss and its gradient with respect to the parameter matrix.
    pub fn loss_and_grad(&self, t: &Triple, cfg: &EncoderConfig) -> (f64, Vec<f64>) {
        let [q, p, n] = self.encode_triple(t, cfg);
        let sp = maxsim(&q, &p);
        let sn = maxsim(&q, &n);
        let loss = contrastive_ce_loss(sp.score, sn.score);
        let (gp, gn) = contrastive_ce_grad(sp.score, sn.score);

        let d = self.dim;
        let mut gq = vec![vec![0.0; d]; q.out.len()];
        let mut gpd = vec![vec![0.0; d]; p.out.len()];
        let mut gnd = vec![vec![0.0; d]; n.out.len()];
        for (i, qi) in q.out.iter().enumerate() {
            let (jp, jn) = (sp.argmax[i], sn.argmax[i]);
            for k in 0..d {
                gq[i][k] += gp * p.out[jp][k] + gn * n.out[jn][k];
                gpd[jp][k] += gp * qi[k];
                gnd[jn][k] += gn * qi[k];
            }
        }

        let mut grad = vec![0.0; d * d];
        for (enc, g) in [(&q, &gq), (&p, &gpd), (&n, &gnd)] {
            for r in 0..enc.out.len() {
                backprop_row(&enc.inputs[r], &enc.pre[r], &enc.out[r], &g[r], &mut grad);
            }
        }
        (loss, grad)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adds `d(loss)/dW` for one token: through `v = u / max(|u|, floor)` and
/// `u = W e`.
fn backprop_row(e: &[f64], u: &[f64], v: &[f64], gv: &[f64], grad: &mut [f64]) {
    let d = e.len();
    let n = norm(u);
    let gu: Vec<f64> = if n > NORM_FLOOR {
        let proj = dot(gv, v);
        gv.iter().zip(v).map(|(g, x)| (g - proj * x) / n).collect()
    } else {
        gv.iter().map(|g| g / NORM_FLOOR).collect()
    };
    for r in 0..d {
        if gu[r] == 0.0 {
            continue;
        }
        for (c, &ec) in e.iter().enumerate() {
            grad[r * d + c] += gu[r] * ec;
        }
    }
}

fn maxsim(q: &Encoded, doc: &Encoded) -> MaxSim {
    let mut out = MaxSim {
        score: 0.0,
        argmax: Vec::with_capacity(q.out.len()),
        gaps: Vec::with_capacity(q.out.len()),
    };
    for qi in &q.out {
        let sims: Vec<f64> = doc.out.iter().map(|dj| dot(qi, dj)).collect();
        let mut best = 0;
        for (j, &s) in sims.iter().enumerate() {
            if s > sims[best] {
                best = j;
            }
        }
        let runner_up = sims
            .iter()
            .enumerate()
            .filter(|&(j, _)| doc.terms[j] != doc.terms[best])
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        out.score += sims[best];
        out.argmax.push(best);
        out.gaps.push(sims[best] - runner_up);
    }
    out
}

/// Which document row each query row selects, for the positive and the
/// negative, plus the smallest top-two gap between distinct terms.
fn argmax_pattern(enc: &ToyEncoder, t: &Triple, cfg: &EncoderConfig) -> (Vec<usize>, Vec<usize>, f64) {
    let [q, p, n] = enc.encode_triple(t, cfg);
    let sp = maxsim(&q, &p);
    let sn = maxsim(&q, &n);
    let gap = sp.gaps.iter().chain(&sn.gaps).copied().fold(f64::INFINITY, f64::min);
    (sp.argmax, sn.argmax, gap)
}

/// Contrastive loss of a triple scored by MaxSim over toy-encoded rows.
pub fn triple_loss(enc: &ToyEncoder, t: &Triple, cfg: &EncoderConfig) -> f64 {
    let [q, p, n] = enc.encode_triple(t, cfg);
    contrastive_ce_loss(maxsim(&q, &p).score, maxsim(&q, &n).score)
}

/// Outcome of comparing the analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-7)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries skipped because MaxSim is at or near an argmax switch.
    pub excluded: usize,
}

/// Checks `n_entries` parameter entries drawn with `seed`. An entry is
/// excluded when some query row's best and runner-up distinct terms are
/// within 1e-6, or when nudging the entry by `±epsilon` changes any argmax.
pub fn grad_check(
    enc: &ToyEncoder,
    t: &Triple,
    cfg: &EncoderConfig,
    epsilon: f64,
    n_entries: usize,
    seed: u64,
) -> GradCheck {
    let (_, grad) = enc.loss_and_grad(t, cfg);
    let (base_p, base_n, base_gap) = argmax_pattern(enc, t, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
    };
    let mut probe = enc.clone();
    for _ in 0..n_entries {
        let idx = rng.random_range(0..enc.w.len());
        let orig = enc.w[idx];
        probe.w[idx] = orig + epsilon;
        let (pp, pn, _) = argmax_pattern(&probe, t, cfg);
        let up = triple_loss(&probe, t, cfg);
        probe.w[idx] = orig - epsilon;
        let (mp, mn, _) = argmax_pattern(&probe, t, cfg);
        let down = triple_loss(&probe, t, cfg);
        probe.w[idx] = orig;

        let switched = pp != base_p || pn != base_n || mp != base_p || mn != base_n;
        if base_gap < TIE_GAP || switched {
            report.excluded += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grad[idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    report
}

/// Full-batch gradient descent over `triples`; returns the mean loss before
/// each step and after the last one.
pub fn train_demo(enc: &mut ToyEncoder, triples: &[Triple], cfg: &EncoderConfig, lr: f64, steps: usize) -> Vec<f64> {
    let mut trace = Vec::with_capacity(steps + 1);
    if triples.is_empty() {
        return trace;
    }
    let scale = 1.0 / triples.len() as f64;
    for _ in 0..steps {
        let mut total = 0.0;
        let mut grad = vec![0.0; enc.w.len()];
        for t in triples {
            let (l, g) = enc.loss_and_grad(t, cfg);
            total += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        trace.push(total * scale);
        for (w, g) in enc.w.iter_mut().zip(grad) {
            *w -= lr * scale * g;
        }
    }
    trace.push(triples.iter().map(|t| triple_loss(enc, t, cfg)).sum::<f64>() * scale);
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            dim: 16,
            query_len: 8,
            doc_maxlen: 20,
            ..EncoderConfig::default()
        }
    }

    fn triple() -> Triple {
        Triple::new(
            "river flood warning",
            "the river flood warning was issued for the northern towns",
            "the football match ended in a draw after extra time",
        )
    }

    #[test]
    fn identical_passages_give_ln_two_and_zero_gradient() {
        let cfg = small_cfg();
        let enc = ToyEncoder::perturbed_identity(16, 0.3, 1);
        let t = Triple::new("a b c", "d e f g", "d e f g");
        let (loss, grad) = enc.loss_and_grad(&t, &cfg);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn loss_composes_loss_and_maxsim() {
        let cfg = small_cfg();
        let enc = ToyEncoder::perturbed_identity(16, 0.3, 2);
        let t = triple();
        let [q, p, n] = enc.encode_triple(&t, &cfg);
        let by_hand = |a: &Encoded, b: &Encoded| -> f64 {
            a.out
                .iter()
                .map(|x| b.out.iter().map(|y| dot(x, y)).fold(f64::MIN, f64::max))
                .sum()
        };
        let want = contrastive_ce_loss(by_hand(&q, &p), by_hand(&q, &n));
        assert!((triple_loss(&enc, &t, &cfg) - want).abs() < 1e-12);
    }

    #[test]
    fn identity_encoder_matches_hash_vectors() {
        let cfg = small_cfg();
        let enc = ToyEncoder::identity(16);
        let e = enc.encode(vec![Term::new("river").unwrap()], cfg.seed);
        let h = hash_embed(&Term::new("river").unwrap(), 16, cfg.seed);
        for (a, b) in e.out[0].iter().zip(h) {
            assert!((a - b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_encoder_has_finite_gradient() {
        let cfg = small_cfg();
        let (loss, grad) = ToyEncoder::zeros(16).loss_and_grad(&triple(), &cfg);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let cfg = small_cfg();
        let enc = ToyEncoder::perturbed_identity(16, 0.5, 3);
        let r = grad_check(&enc, &triple(), &cfg, 1e-5, 40, 0);
        assert!(r.checked > 0);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn descent_lowers_the_loss() {
        let cfg = small_cfg();
        let mut enc = ToyEncoder::perturbed_identity(16, 0.2, 4);
        let trace = train_demo(&mut enc, &[triple()], &cfg, 0.5, 10);
        assert_eq!(trace.len(), 11);
        assert!(trace.last().unwrap() < &trace[0]);
        assert!(enc.is_finite());
    }
}
