mod common;

use std::io::Cursor;

use curriculum_lm::corpus::{
    build_age_ordered_corpus, corpus_stats, parse_transcripts, SpeakerRole, TranscriptFormat, Utterance,
};

#[test]
fn filter_is_complete_and_ages_are_monotone() {
    let utts = parse_transcripts(Cursor::new(common::transcript_fixture()), TranscriptFormat::Jsonl, "x").unwrap();
    assert_eq!(utts.len(), 1000);
    let corpus = build_age_ordered_corpus(utts.clone(), 72).unwrap();

    let expected: Vec<&Utterance> =
        utts.iter().filter(|u| u.speaker_role != SpeakerRole::TargetChild && u.child_age_months < 72).collect();
    assert_eq!(corpus.utterances.len(), expected.len());
    // no child speech, nothing at or over the cutoff
    assert!(corpus.utterances.iter().all(|u| u.speaker_role != SpeakerRole::TargetChild));
    assert!(corpus.utterances.iter().all(|u| u.child_age_months < 72));
    assert!(corpus.utterances.windows(2).all(|w| w[0].child_age_months <= w[1].child_age_months));
    // every eligible utterance survives, and equal ages keep input order
    for age in 0..72 {
        let a: Vec<_> = expected.iter().filter(|u| u.child_age_months == age).map(|u| *u).collect();
        let b: Vec<_> = corpus.utterances.iter().filter(|u| u.child_age_months == age).collect();
        assert_eq!(a, b, "age {age}");
    }
}

#[test]
fn stats_match_hand_counts() {
    let utts = parse_transcripts(Cursor::new(common::transcript_fixture()), TranscriptFormat::Jsonl, "x").unwrap();
    let corpus = build_age_ordered_corpus(utts, 72).unwrap();
    let stats = corpus_stats(&corpus);

    // counted directly from the generating rule
    let kept: Vec<usize> = (0..1000).filter(|i| i % 5 != 0 && (i * 37) % 96 < 72).collect();
    let tokens: usize = kept.iter().map(|i| if i % 3 == 0 { 3 } else { 2 }).sum();
    let mut types = std::collections::BTreeSet::new();
    for i in &kept {
        types.insert(format!("w{}", i % 13));
        types.insert(format!("w{}", i % 7));
        if i % 3 == 0 {
            types.insert("again".to_string());
        }
    }
    assert_eq!(stats.n_utterances, kept.len());
    assert_eq!(stats.n_tokens, tokens);
    assert_eq!(stats.vocab_size, types.len());
    assert!((stats.mean_sentence_length - tokens as f64 / kept.len() as f64).abs() < 1e-12);
}

#[test]
fn small_chat_transcript_by_hand() {
    let chat = "@Begin\n@Age: 1;11\n*MOT:\tlook at the doggie .\n*CHI:\tdoggie !\n*FAT:\t  where   is it\n\
                @Age: 0;06.12\n*GRA:\tpeekaboo\n*MOT:\t   \n@Age: 6;00\n*MOT:\ttoo old\n@End\n";
    let utts = parse_transcripts(Cursor::new(chat), TranscriptFormat::ChatLite, "fam").unwrap();
    assert_eq!(utts.len(), 5);
    let corpus = build_age_ordered_corpus(utts, 72).unwrap();
    let lines: Vec<&str> = corpus.lines().collect();
    assert_eq!(lines, ["peekaboo", "look at the doggie .", "where is it"]);
    let s = corpus_stats(&corpus);
    assert_eq!((s.n_utterances, s.n_tokens, s.vocab_size), (3, 9, 9));
    assert!((s.mean_sentence_length - 3.0).abs() < 1e-12);
    assert!(corpus.utterances.iter().all(|u| u.source_id == "fam"));
}

#[test]
fn malformed_lines_report_their_position() {
    let bad = "{\"speaker\": \"MOT\", \"age_months\": 3, \"text\": \"hi\"}\n{\"speaker\": \"MOT\"\n";
    let err = parse_transcripts(Cursor::new(bad), TranscriptFormat::Jsonl, "x").unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}
