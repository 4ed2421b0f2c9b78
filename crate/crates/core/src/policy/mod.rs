//! Encoder-decoder pointer network over constraint tokens.
//!
//! The encoder reads one position per primitive with no positional signal, so
//! its outputs are permutation-equivariant. The decoder predicts either a
//! constraint type (or EOS) or, through a pointer head, a primitive reference.

mod checkpoint;
mod loss;
mod model;
mod optim;
mod sample;
pub mod tape;

pub use checkpoint::{from_bytes, load, save, to_bytes};
pub use loss::{loss_and_grad, loss_value, PairTerm, QueryLoss, SeqObjective, SeqTerm};
pub use model::{
    allowed_range, column_token, plan_sequence, token_column, DecoderCache, Encoded, PolicyConfig, PolicyParams,
    SequencePlan, TensorSpec, EOS_COL, TYPE_COLS,
};
pub use optim::Adam;
pub use sample::{greedy_sequence, group_logprobs, sample_sequence, sample_with, sequence_logprob, SampleOptions, Trajectory};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{Primitive, Sketch};
    use crate::tokenizer::Token;

    fn tiny(seed: u64) -> PolicyParams {
        PolicyParams::init(PolicyConfig {
            embed_dim: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            feedforward_dim: 16,
            max_seq_len: 40,
            seed,
        })
        .unwrap()
    }

    fn sketch() -> Sketch {
        Sketch::new(vec![
            Primitive::point(0, 0.0, 0.0).fixed(),
            Primitive::line(1, 0.0, 0.0, 2.0, 0.0),
            Primitive::line(2, 2.0, 0.0, 2.0, 1.0),
            Primitive::circle(3, 1.0, 1.0, 0.5),
        ])
        .unwrap()
    }

    #[test]
    fn pointer_is_near_uniform_at_init() {
        let p = tiny(3);
        let s = sketch();
        let enc = p.encode(&s).unwrap();
        let mut cache = p.start();
        p.step(&enc, &mut cache, Token::SOS);
        let logits = p.step(&enc, &mut cache, Token::of_type(crate::sketch::ConstraintKind::Parallel));
        let ptr = &logits[TYPE_COLS..];
        let z: f64 = ptr.iter().map(|v| v.exp()).sum();
        for v in ptr {
            let prob = v.exp() / z;
            assert!((prob - 0.25).abs() < 0.025, "{prob}");
        }
    }

    #[test]
    fn sampling_replays_and_is_deterministic() {
        let p = tiny(5);
        let s = sketch();
        for seed in 0..5 {
            let t = sample_sequence(&p, &s, SampleOptions::default(), seed).unwrap();
            assert_eq!(t, sample_sequence(&p, &s, SampleOptions::default(), seed).unwrap());
            let (total, per) = sequence_logprob(&p, &s, &t.tokens).unwrap();
            for (a, b) in per.iter().zip(&t.logprobs) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((total - per.iter().sum::<f64>()).abs() < 1e-12);
            crate::tokenizer::parse_structure(&t.tokens, &s.kinds()).unwrap();
        }
        let g = greedy_sequence(&p, &s).unwrap();
        assert_eq!(g, sample_sequence(&p, &s, SampleOptions::GREEDY, 99).unwrap());
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let p = tiny(1);
        let s = sketch();
        let perm = [2usize, 0, 3, 1];
        let mut prims: Vec<Primitive> = perm.iter().map(|&i| s.primitives[i].clone()).collect();
        for (k, pr) in prims.iter_mut().enumerate() {
            pr.id = k;
        }
        let t = Sketch::new(prims).unwrap();
        let a = p.encode(&s).unwrap();
        let b = p.encode(&t).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((a.out.row(i) - b.out.row(k)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn sft_overfits_one_sequence() {
        let mut p = tiny(2);
        let s = sketch();
        let toks = vec![
            Token::SOS,
            Token::of_type(crate::sketch::ConstraintKind::Perpendicular),
            Token::reference(1),
            Token::reference(2),
            Token::of_type(crate::sketch::ConstraintKind::RadiusDim),
            Token::reference(3),
            Token::EOS,
        ];
        let n = toks.len() - 1;
        let q = QueryLoss {
            sketch: s.clone(),
            sequences: vec![SeqTerm { tokens: toks.clone(), objective: SeqObjective::Weighted(vec![1.0 / n as f64; n]) }],
            pairs: vec![],
        };
        let mut opt = Adam::new(1e-2);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let (loss, g) = loss_and_grad(&p, std::slice::from_ref(&q)).unwrap();
            assert!(loss >= 0.0 && loss < last + 1e-12);
            last = loss;
            opt.step(&mut p.tensors, &g).unwrap();
        }
        assert!(last < 0.01, "{last}");
    }
}
