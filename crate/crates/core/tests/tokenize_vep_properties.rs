use genolm::lm::{MarkovConfig, MarkovLm, UniformLm};
use genolm::seq::NucleotideSequence;
use genolm::tokenize::{bpe_train, KmerTokenizer, Tokenizer};
use genolm::vep::{vep_score, Phase, Variant, VepOptions};
use proptest::prelude::*;

fn seq(s: &str) -> NucleotideSequence {
    NucleotideSequence::validate(s).unwrap()
}

proptest! {
    #[test]
    fn kmer_roundtrip_reassembles_input(s in "[ACGT]{1,300}", k in 1usize..=8, off in 0usize..8) {
        let tok = KmerTokenizer::new(k).unwrap();
        let enc = tok.encode_at(&seq(&s), off % k).unwrap();
        let body = tok.decode(&enc.ids).unwrap();
        prop_assert_eq!(format!("{}{}{}", enc.lead, body, enc.tail), s);
        prop_assert!(enc.tail.len() < k);
        prop_assert!(enc.ids.iter().all(|&id| (id as usize) < 1 << (2 * k)));
    }

    #[test]
    fn kmer_ids_follow_lexicographic_order(a in "[ACGT]{4}", b in "[ACGT]{4}") {
        let tok = KmerTokenizer::new(4).unwrap();
        let (ia, ib) = (tok.kmer_id(a.as_bytes()).unwrap(), tok.kmer_id(b.as_bytes()).unwrap());
        prop_assert_eq!(ia.cmp(&ib), a.cmp(&b));
        prop_assert_eq!(tok.vocab().token(ia), Some(a.as_str()));
    }

    #[test]
    fn bpe_roundtrip_is_exact(corpus in prop::collection::vec("[ACGT]{1,80}", 1..6), probe in "[ACGT]{1,200}") {
        let train: Vec<NucleotideSequence> = corpus.iter().map(|s| seq(s)).collect();
        let model = bpe_train(&train, 40, 1).unwrap();
        let ids = model.encode(&seq(&probe)).unwrap();
        prop_assert_eq!(model.decode(&ids).unwrap().to_string(), probe);
    }

    #[test]
    fn vep_is_antisymmetric(g in "[ACGT]{40,120}", at in 0usize..1000, shift in 1usize..4) {
        let genome = vec![seq(&g).with_id("c")];
        let tok = Tokenizer::kmer(2).unwrap();
        let lm = MarkovLm::train(tok.clone(), &[tok.encode(&genome[0]).unwrap()], &MarkovConfig::new(2, 0.5)).unwrap();
        let pos = at % g.len() + 1;
        let r = g.as_bytes()[pos - 1];
        let alt = b"ACGT"[(b"ACGT".iter().position(|&b| b == r).unwrap() + shift) % 4];
        let v = Variant { seq_id: "c".into(), pos, ref_allele: r, alt_allele: alt, label: None };
        let mut flipped = g.clone().into_bytes();
        flipped[pos - 1] = alt;
        let genome_alt = vec![NucleotideSequence::from_bytes(&flipped).unwrap().with_id("c")];
        for phase in [Phase::TokenEnd, Phase::Average, Phase::Fixed(0)] {
            let opts = VepOptions { phase, window: 30 };
            let fwd = vep_score(&lm, &tok, &genome, &v, &opts).unwrap().score;
            let back = vep_score(&lm, &tok, &genome_alt, &v.swapped(), &opts).unwrap().score;
            prop_assert_eq!(fwd, -back);
            prop_assert!(fwd.abs() <= 40.0);
        }
        let uniform = UniformLm::over_sequence_tokens(tok.vocab().clone());
        prop_assert_eq!(vep_score(&uniform, &tok, &genome, &v, &VepOptions::default()).unwrap().score, 0.0);
    }
}
