mod common;

use acsr_core::ctc::greedy_decode;
use acsr_core::domain::{CodingTable, HandCode, HandPosition, HandShape, Vocabulary};
use acsr_core::eval::{cer, edit_distance, token_errors, Transcript};
use acsr_core::fusion::embed_hand;
use acsr_core::keyframe::{
    filter_keyframes, movement_distances, FilterConfig, KeyframeResult, SlowMotionGroup, Trajectory,
};
use acsr_core::matrix::Matrix;
use acsr_core::recognizer::{parse_response, RecognitionResult};
use acsr_core::synth::{generate_corpus, SynthConfig};
use common::*;
use proptest::prelude::*;

fn xy_strategy(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    // integer-ish steps make exact threshold ties common
    prop::collection::vec((-12i32..=12, -12i32..=12, 0u8..4), 1..max_len).prop_map(|steps| {
        let mut p = (640.0, 360.0);
        steps
            .into_iter()
            .map(|(dx, dy, scale)| {
                let s = f64::from(scale) * 0.5 + 0.5;
                p = (p.0 + f64::from(dx) * s, p.1 + f64::from(dy) * s);
                p
            })
            .collect()
    })
}

fn code_strategy() -> impl Strategy<Value = HandCode> {
    (1u8..=5, 1u8..=8)
        .prop_map(|(p, s)| HandCode::new(HandPosition::new(p).unwrap(), HandShape::new(s).unwrap()))
}

fn line_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..6, 1..4), 0..6)
}

fn transcript(words: &[Vec<u8>]) -> Transcript {
    const SYMS: [&str; 6] = ["a", "b", "zh", "ong", "i", "m"];
    let line = words
        .iter()
        .map(|w| {
            w.iter()
                .map(|&i| SYMS[i as usize])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(" / ");
    Transcript::parse_line(&line)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn filter_agrees_with_closure_oracle(xy in xy_strategy(120), sigma in 0.5f64..10.0, theta in 1usize..5) {
        let cfg = FilterConfig::new(sigma, theta).unwrap();
        let traj = Trajectory::from_xy(&xy).unwrap();
        prop_assert_eq!(filter_keyframes(&traj, &cfg).to_json(), oracle_keyframes(&xy, sigma, theta));
    }

    #[test]
    fn groups_are_sorted_disjoint_and_slow(xy in xy_strategy(120), sigma in 0.5f64..10.0, theta in 1usize..5) {
        let cfg = FilterConfig::new(sigma, theta).unwrap();
        let traj = Trajectory::from_xy(&xy).unwrap();
        let d = movement_distances(&traj);
        let r = filter_keyframes(&traj, &cfg);
        let mut last = 0;
        for g in &r.groups {
            prop_assert!(g.members.contains(&g.keyframe));
            prop_assert!(g.members.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= theta));
            prop_assert!(g.first() > last || last == 0);
            prop_assert!(g.members.iter().all(|&j| j >= 1 && d.at_frame(j) <= sigma));
            last = g.last();
        }
        for w in r.groups.windows(2) {
            prop_assert!(w[1].first() - w[0].last() > theta);
        }
    }

    #[test]
    fn larger_sigma_only_merges_or_grows(xy in xy_strategy(100), s1 in 0.5f64..6.0, extra in 0.0f64..6.0, theta in 1usize..4) {
        let traj = Trajectory::from_xy(&xy).unwrap();
        let small = filter_keyframes(&traj, &FilterConfig::new(s1, theta).unwrap());
        let large = filter_keyframes(&traj, &FilterConfig::new(s1 + extra, theta).unwrap());
        for g in &small.groups {
            let host = large.group_of(g.first());
            prop_assert!(host.is_some());
            let host = &large.groups[host.unwrap()];
            prop_assert!(g.members.iter().all(|m| host.contains(*m)));
        }
    }

    #[test]
    fn translation_invariance(xy in xy_strategy(100), dx in -300i32..300, dy in -300i32..300) {
        let cfg = FilterConfig::default();
        let traj = Trajectory::from_xy(&xy).unwrap();
        // integer shifts keep the coordinate differences exact
        let moved = traj.translated(f64::from(dx), f64::from(dy));
        prop_assert_eq!(filter_keyframes(&traj, &cfg), filter_keyframes(&moved, &cfg));
    }

    #[test]
    fn edit_distance_is_a_metric(a in prop::collection::vec(0u8..5, 0..12),
                                 b in prop::collection::vec(0u8..5, 0..12),
                                 c in prop::collection::vec(0u8..5, 0..12)) {
        let (ab, align) = edit_distance(&a, &b);
        prop_assert_eq!(edit_distance(&a, &a).0, 0);
        prop_assert_eq!(ab, edit_distance(&b, &a).0);
        prop_assert!(ab <= edit_distance(&a, &c).0 + edit_distance(&c, &b).0);
        prop_assert!(ab >= a.len().abs_diff(b.len()) && ab <= a.len().max(b.len()));
        prop_assert_eq!(align.cost(), ab);
        prop_assert_eq!(align.replay(&a, &b), b);
    }

    #[test]
    fn pooled_cer_is_length_weighted(pairs in prop::collection::vec((line_strategy(), line_strategy()), 1..8)) {
        let refs: Vec<Transcript> = pairs.iter().map(|(r, _)| transcript(r)).collect();
        let hyps: Vec<Transcript> = pairs.iter().map(|(_, h)| transcript(h)).collect();
        let total: usize = refs.iter().map(|r| r.phonemes.len()).sum();
        prop_assume!(total > 0);
        let weighted: f64 = refs
            .iter()
            .zip(&hyps)
            .filter(|(r, _)| !r.phonemes.is_empty())
            .map(|(r, h)| cer(std::slice::from_ref(r), std::slice::from_ref(h)).unwrap() * r.phonemes.len() as f64)
            .sum::<f64>()
            + refs.iter().zip(&hyps).filter(|(r, _)| r.phonemes.is_empty()).map(|(_, h)| h.phonemes.len() as f64).sum::<f64>();
        let pooled = cer(&refs, &hyps).unwrap();
        prop_assert!((pooled - weighted / total as f64).abs() < 1e-12);
        prop_assert_eq!(token_errors(&refs, &hyps).unwrap().reference_len, total);
    }

    #[test]
    fn transcript_line_round_trip(words in line_strategy()) {
        let t = transcript(&words);
        prop_assert_eq!(Transcript::parse_line(&t.to_line()), t);
    }

    #[test]
    fn response_body_round_trip(codes in prop::collection::vec(code_strategy(), 1..30)) {
        let frames: Vec<usize> = (0..codes.len()).map(|i| 7 * i + 2).collect();
        let rec = RecognitionResult::from_codes(&frames, &codes);
        let parsed = parse_response(&rec.to_response_body(), codes.len()).unwrap().with_frames(&frames).unwrap();
        prop_assert_eq!(parsed, rec);
    }

    #[test]
    fn hand_rows_match_coding_table(codes in prop::collection::vec(code_strategy(), 0..8), gap in 0usize..3) {
        let vocab = Vocabulary::builtin();
        let table = CodingTable::builtin(&vocab);
        let mut groups = Vec::new();
        let mut f = 1;
        for _ in &codes {
            let members: Vec<usize> = (f..f + 3).collect();
            f += 3 + gap + 1;
            groups.push(SlowMotionGroup { keyframe: members[1], members });
        }
        let groups = KeyframeResult { groups };
        let rec = RecognitionResult::from_codes(&groups.keyframes(), &codes);
        let frames = f + 2;
        let hand = embed_hand(&rec, &groups, frames, &table).unwrap();
        prop_assert!(hand.matrix().data().iter().all(|&v| v == 0.0 || v == 1.0));
        for t in 0..frames {
            let want: Vec<usize> = match groups.group_of(t) {
                Some(g) => table.phonemes_for(codes[g].position, codes[g].shape).into_iter().collect(),
                None => Vec::new(),
            };
            prop_assert_eq!(hand.row_tokens(t), want);
        }
    }

    #[test]
    fn greedy_decode_follows_collapse_rule(path in prop::collection::vec(0usize..5, 0..20)) {
        let logits = Matrix::from_fn(path.len(), 5, |t, c| if c == path[t] { 1.0 } else { 0.0 });
        let mut want = Vec::new();
        for (i, &c) in path.iter().enumerate() {
            if c != 0 && (i == 0 || path[i - 1] != c) {
                want.push(c);
            }
        }
        prop_assert_eq!(greedy_decode(&logits), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_truth_is_recovered(seed in any::<u64>(), sigma in 4.0f64..9.0, theta in 1usize..5) {
        let vocab = Vocabulary::builtin();
        let table = CodingTable::builtin(&vocab);
        let cfg = SynthConfig {
            lip_dim: 1,
            rng_seed: seed,
            filter: FilterConfig::new(sigma, theta).unwrap(),
            transit_frames: [theta.saturating_sub(1).max(1), theta + 2],
            jitter_amplitude: sigma * 0.4,
            transit_step: sigma * 2.0,
            ..SynthConfig::default()
        };
        for s in generate_corpus(5, &vocab, &table, &cfg).unwrap() {
            prop_assert_eq!(filter_keyframes(&s.trajectory, &cfg.filter), s.truth_groups.clone());
            prop_assert_eq!(s.truth_labels.len(), s.truth_groups.len());
            prop_assert_eq!(s.trajectory.len(), s.lip.frames());
        }
    }
}
