#![allow(dead_code)]

use hrere::encoder::{EncoderDims, LanguageModel};
use hrere::kbe::ComplexEmbeddingTable;
use hrere::linalg::ParamSet;
use hrere::supervision::{Bag, SentenceMention, PAD_ID};
use hrere::training::{kb_prediction, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DESK_RELATIONS: usize = 4;
pub const DESK_ENTITIES: usize = 6;
pub const DESK_VOCAB: usize = 20;

pub fn desk_dims(l: usize) -> EncoderDims {
    EncoderDims {
        d_w: 16,
        d_p: 8,
        d_s: 8,
        l,
        n_relations: DESK_RELATIONS,
    }
}

pub fn random_sentence<R: Rng>(l: usize, vocab: usize, rng: &mut R) -> SentenceMention {
    let real = rng.gen_range(2..=l);
    let head_pos = rng.gen_range(0..real);
    let mut tail_pos = rng.gen_range(0..real - 1);
    if tail_pos >= head_pos {
        tail_pos += 1;
    }
    let mut tokens: Vec<u32> = (0..real).map(|_| rng.gen_range(1..vocab as u32)).collect();
    tokens.resize(l, PAD_ID);
    let pad_mask = (0..l).map(|i| i >= real).collect();
    SentenceMention {
        tokens,
        head_pos,
        tail_pos,
        pad_mask,
    }
}

pub fn random_bags<R: Rng>(n: usize, t: usize, l: usize, rng: &mut R) -> Vec<Bag> {
    (0..n)
        .map(|_| {
            let head = rng.gen_range(0..DESK_ENTITIES);
            let mut tail = rng.gen_range(0..DESK_ENTITIES - 1);
            if tail >= head {
                tail += 1;
            }
            Bag {
                head,
                rel: rng.gen_range(0..=DESK_RELATIONS),
                tail,
                sentences: (0..t).map(|_| random_sentence(l, DESK_VOCAB, rng)).collect(),
            }
        })
        .collect()
}

/// A random desk-scale state and batch (d_k=4, d_w=16, d_p=8, d_s=8, L=10,
/// T=2, four relations). Initialization is larger than the training default
/// so that gradients are well above finite-difference noise.
pub fn desk_case(seed: u64) -> (ModelState, Vec<Bag>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = 10;
    let language = LanguageModel::random(&desk_dims(l), DESK_VOCAB, 0.4, &mut rng);
    let knowledge = ComplexEmbeddingTable::random(DESK_ENTITIES, DESK_RELATIONS + 1, 4, 0.6, &mut rng);
    let n = rng.gen_range(1..=3);
    let bags = random_bags(n, 2, l, &mut rng);
    (ModelState::new(language, knowledge), bags)
}

/// Knowledge-side argmax for each bag.
pub fn kb_argmaxes(state: &ModelState, bags: &[Bag]) -> Vec<usize> {
    bags.iter().map(|b| kb_prediction(&state.knowledge, b.head, b.tail)).collect()
}

#[derive(Debug, Clone)]
pub struct GroupError {
    pub tensor: usize,
    pub rel_error: f64,
    pub checked: usize,
}

/// Central-difference check of `analytic` against `f` at `base`.
///
/// For every tensor, up to `per_tensor` coordinates are sampled (all of them
/// when the tensor is small). The error of a tensor is
/// `||a - n|| / max(||a||, ||n||)` over its sampled coordinates, which stays
/// meaningful when individual entries are close to zero. `f` may return
/// `None` to mark a point where the objective is not differentiable; such
/// coordinates are skipped.
pub fn gradcheck<P, F>(base: &P, analytic: &P, mut f: F, per_tensor: usize, step: f64, rng: &mut ChaCha8Rng) -> Vec<GroupError>
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> Option<f64>,
{
    let n_tensors = base.tensors().len();
    let mut out = Vec::with_capacity(n_tensors);
    for ti in 0..n_tensors {
        let len = base.tensors()[ti].data.len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..len)).collect()
        };
        let (mut diff_sq, mut a_sq, mut n_sq, mut checked) = (0.0, 0.0, 0.0, 0);
        for c in coords {
            let mut plus = base.clone();
            plus.tensors_mut()[ti].data[c] += step;
            let mut minus = base.clone();
            minus.tensors_mut()[ti].data[c] -= step;
            let (Some(fp), Some(fm)) = (f(&plus), f(&minus)) else {
                continue;
            };
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic.tensors()[ti].data[c];
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
            checked += 1;
        }
        let scale = a_sq.sqrt().max(n_sq.sqrt());
        let rel_error = if scale < 1e-9 { diff_sq.sqrt() } else { diff_sq.sqrt() / scale };
        out.push(GroupError {
            tensor: ti,
            rel_error,
            checked,
        });
    }
    out
}

pub fn worst(errors: &[GroupError]) -> f64 {
    errors.iter().map(|e| e.rel_error).fold(0.0, f64::max)
}
