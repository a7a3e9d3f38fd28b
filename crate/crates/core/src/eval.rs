//! Edit-distance metrics (CER over phoneme tokens, WER over words) and
//! phoneme confusion matrices.

use std::path::Path;

use thiserror::Error;

use crate::domain::{Vocabulary, BLANK, NUM_TOKENS, WORD_BOUNDARY};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{refs} references but {hyps} hypotheses")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("reference corpus has no {0}")]
    EmptyReference(&'static str),
    #[error("line {line}: unknown token `{token}`")]
    UnknownToken { line: usize, token: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Phoneme tokens with word boundaries. In text form words are separated by `/`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub phonemes: Vec<String>,
    /// Token offsets at which a new word starts (excluding 0), strictly increasing.
    pub word_boundaries: Vec<usize>,
}

impl Transcript {
    /// Builds from a token stream where `/` separates words. Empty words vanish.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut t = Transcript::default();
        let mut pending_boundary = false;
        for tok in tokens {
            let tok = tok.as_ref();
            if tok == WORD_BOUNDARY {
                pending_boundary = true;
                continue;
            }
            if pending_boundary && !t.phonemes.is_empty() {
                t.word_boundaries.push(t.phonemes.len());
            }
            pending_boundary = false;
            t.phonemes.push(tok.to_string());
        }
        t
    }

    pub fn parse_line(line: &str) -> Self {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        Self::from_tokens(&tokens)
    }

    /// Rejects tokens that are not non-blank vocabulary entries.
    pub fn validate(&self, vocab: &Vocabulary, line: usize) -> Result<(), EvalError> {
        for tok in &self.phonemes {
            match vocab.index_of(tok) {
                Some(i) if i != BLANK => {}
                _ => {
                    return Err(EvalError::UnknownToken {
                        line,
                        token: tok.clone(),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn from_indices(indices: &[usize], vocab: &Vocabulary) -> Self {
        let symbols: Vec<&str> = indices.iter().filter_map(|&i| vocab.symbol(i)).collect();
        Self::from_tokens(&symbols)
    }

    /// Vocabulary indices including word-boundary tokens, e.g. for CTC targets.
    pub fn to_indices(&self, vocab: &Vocabulary) -> Option<Vec<usize>> {
        let boundary = vocab.index_of(WORD_BOUNDARY)?;
        let mut out = Vec::with_capacity(self.phonemes.len() + self.word_boundaries.len());
        let mut next = self.word_boundaries.iter().peekable();
        for (i, tok) in self.phonemes.iter().enumerate() {
            if next.peek() == Some(&&i) {
                out.push(boundary);
                next.next();
            }
            out.push(vocab.index_of(tok)?);
        }
        Some(out)
    }

    pub fn words(&self) -> Vec<&[String]> {
        if self.phonemes.is_empty() {
            return Vec::new();
        }
        let mut starts = vec![0];
        starts.extend(&self.word_boundaries);
        starts.push(self.phonemes.len());
        starts
            .windows(2)
            .map(|w| &self.phonemes[w[0]..w[1]])
            .collect()
    }

    pub fn to_line(&self) -> String {
        self.words()
            .iter()
            .map(|w| w.join(" "))
            .collect::<Vec<_>>()
            .join(&format!(" {WORD_BOUNDARY} "))
    }
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<Transcript>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(Transcript::parse_line).collect())
}

pub fn write_transcripts(
    path: impl AsRef<Path>,
    transcripts: &[Transcript],
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut text = String::new();
    for t in transcripts {
        text.push_str(&t.to_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One step of an alignment; indices point into the reference and hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match { r: usize, h: usize },
    Substitute { r: usize, h: usize },
    Insert { h: usize },
    Delete { r: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| !matches!(op, AlignOp::Match { .. }))
            .count()
    }

    /// Rebuilds the hypothesis from the reference and the alignment.
    pub fn replay<T: Clone>(&self, reference: &[T], hypothesis: &[T]) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                AlignOp::Match { r, .. } => Some(reference[r].clone()),
                AlignOp::Substitute { h, .. } | AlignOp::Insert { h } => {
                    Some(hypothesis[h].clone())
                }
                AlignOp::Delete { .. } => None,
            })
            .collect()
    }
}

/// Unit-cost Levenshtein distance with a minimal alignment. Backtrace prefers
/// match, then substitution, deletion, insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, Alignment) {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let diag = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * w + j - 1];
            if reference[i - 1] == hypothesis[j - 1] && diag == here {
                ops.push(AlignOp::Match { r: i - 1, h: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
            if diag + 1 == here && reference[i - 1] != hypothesis[j - 1] {
                ops.push(AlignOp::Substitute { r: i - 1, h: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            ops.push(AlignOp::Delete { r: i - 1 });
            i -= 1;
        } else {
            ops.push(AlignOp::Insert { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    (dp[n * w + m], Alignment { ops })
}

/// Error counts pooled over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCount {
    pub edits: usize,
    pub reference_len: usize,
}

impl ErrorCount {
    pub fn rate(&self) -> f64 {
        self.edits as f64 / self.reference_len as f64
    }
}

fn check_lengths(refs: &[Transcript], hyps: &[Transcript]) -> Result<(), EvalError> {
    if refs.len() != hyps.len() {
        return Err(EvalError::LengthMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    Ok(())
}

pub fn token_errors(refs: &[Transcript], hyps: &[Transcript]) -> Result<ErrorCount, EvalError> {
    check_lengths(refs, hyps)?;
    let mut count = ErrorCount::default();
    for (r, h) in refs.iter().zip(hyps) {
        count.edits += edit_distance(&r.phonemes, &h.phonemes).0;
        count.reference_len += r.phonemes.len();
    }
    if count.reference_len == 0 {
        return Err(EvalError::EmptyReference("tokens"));
    }
    Ok(count)
}

pub fn word_errors(refs: &[Transcript], hyps: &[Transcript]) -> Result<ErrorCount, EvalError> {
    check_lengths(refs, hyps)?;
    let mut count = ErrorCount::default();
    for (r, h) in refs.iter().zip(hyps) {
        let rw = r.words();
        count.edits += edit_distance(&rw, &h.words()).0;
        count.reference_len += rw.len();
    }
    if count.reference_len == 0 {
        return Err(EvalError::EmptyReference("words"));
    }
    Ok(count)
}

/// Character (phoneme-token) error rate: total edits / total reference tokens.
pub fn cer(refs: &[Transcript], hyps: &[Transcript]) -> Result<f64, EvalError> {
    Ok(token_errors(refs, hyps)?.rate())
}

/// Word error rate over `/`-delimited words.
pub fn wer(refs: &[Transcript], hyps: &[Transcript]) -> Result<f64, EvalError> {
    Ok(word_errors(refs, hyps)?.rate())
}

/// Counts over the 44 tokens: rows are reference tokens plus a final
/// insertion row, columns are hypothesis tokens plus a final deletion column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
}

pub const CONFUSION_SIZE: usize = NUM_TOKENS + 1;
pub const INSERTION_ROW: usize = NUM_TOKENS;
pub const DELETION_COL: usize = NUM_TOKENS;

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self {
            counts: vec![0; CONFUSION_SIZE * CONFUSION_SIZE],
        }
    }
}

impl ConfusionMatrix {
    /// `row`/`col` are vocabulary indices (1-based) or the insertion/deletion slot.
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * CONFUSION_SIZE + col]
    }

    /// Count for reference symbol `r` predicted as `h`.
    pub fn pair(&self, vocab: &Vocabulary, r: &str, h: &str) -> u64 {
        match (vocab.index_of(r), vocab.index_of(h)) {
            (Some(ri), Some(hi)) if ri != BLANK && hi != BLANK => self.get(ri - 1, hi - 1),
            _ => 0,
        }
    }

    pub fn deletions(&self, vocab: &Vocabulary, r: &str) -> u64 {
        vocab
            .index_of(r)
            .filter(|&i| i != BLANK)
            .map_or(0, |i| self.get(i - 1, DELETION_COL))
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row * CONFUSION_SIZE..(row + 1) * CONFUSION_SIZE]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bump(&mut self, row: usize, col: usize) {
        self.counts[row * CONFUSION_SIZE + col] += 1;
    }

    /// Largest off-diagonal substitution as (reference, hypothesis, count).
    pub fn top_confusion(&self) -> Option<(usize, usize, u64)> {
        let mut best = None;
        for r in 0..NUM_TOKENS {
            for h in 0..NUM_TOKENS {
                let c = self.get(r, h);
                if r != h && c > 0 && best.is_none_or(|(_, _, b)| c > b) {
                    best = Some((r + 1, h + 1, c));
                }
            }
        }
        best
    }

    fn labels(vocab: &Vocabulary) -> Vec<String> {
        vocab.tokens().iter().map(|t| t.symbol.clone()).collect()
    }

    pub fn to_csv(&self, vocab: &Vocabulary) -> String {
        let labels = Self::labels(vocab);
        let mut out = String::from("ref\\hyp");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",<del>\n");
        for r in 0..CONFUSION_SIZE {
            out.push_str(if r == INSERTION_ROW {
                "<ins>"
            } else {
                &labels[r]
            });
            for c in self.row(r) {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Row-normalised intensities in `0..=255`.
    pub fn intensities(&self) -> Vec<u8> {
        let mut px = Vec::with_capacity(self.counts.len());
        for r in 0..CONFUSION_SIZE {
            let row = self.row(r);
            let sum: u64 = row.iter().sum();
            for &c in row {
                px.push(if sum == 0 {
                    0
                } else {
                    ((c as f64 * 255.0 / sum as f64).round()) as u8
                });
            }
        }
        px
    }

    /// Plain (P2) portable graymap.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{CONFUSION_SIZE} {CONFUSION_SIZE}\n255\n");
        for row in self.intensities().chunks(CONFUSION_SIZE) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    refs: &[Transcript],
    hyps: &[Transcript],
    vocab: &Vocabulary,
) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(refs, hyps)?;
    let mut m = ConfusionMatrix::default();
    let indices = |t: &Transcript, line: usize| -> Result<Vec<usize>, EvalError> {
        t.validate(vocab, line)?;
        Ok(t.phonemes
            .iter()
            .map(|s| vocab.index_of(s).expect("validated") - 1)
            .collect())
    };
    for (line, (r, h)) in refs.iter().zip(hyps).enumerate() {
        let ri = indices(r, line + 1)?;
        let hi = indices(h, line + 1)?;
        let (_, alignment) = edit_distance(&ri, &hi);
        for op in alignment.ops {
            match op {
                AlignOp::Match { r, h } | AlignOp::Substitute { r, h } => m.bump(ri[r], hi[h]),
                AlignOp::Delete { r } => m.bump(ri[r], DELETION_COL),
                AlignOp::Insert { h } => m.bump(INSERTION_ROW, hi[h]),
            }
        }
    }
    Ok(m)
}

/// Writes `<base>.csv` (exact counts) and `<base>.pgm` (row-normalised image).
pub fn render_heatmap(
    matrix: &ConfusionMatrix,
    vocab: &Vocabulary,
    base: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let base = base.as_ref();
    for (ext, body) in [("csv", matrix.to_csv(vocab)), ("pgm", matrix.to_pgm())] {
        let path = base.with_extension(ext);
        std::fs::write(&path, body).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Transcript {
        Transcript::parse_line(s)
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn distances() {
        assert_eq!(edit_distance(&toks("a b c"), &toks("a b c")).0, 0);
        assert_eq!(edit_distance(&toks("a b c"), &toks("")).0, 3);
        let (d, al) = edit_distance(&toks("k i t t e n"), &toks("s i t t i n g"));
        assert_eq!(d, 3);
        assert_eq!(al.cost(), 3);
        assert_eq!(
            al.replay(&toks("k i t t e n"), &toks("s i t t i n g")),
            toks("s i t t i n g")
        );
    }

    #[test]
    fn tie_break_prefers_substitution_over_indels() {
        let (_, al) = edit_distance(&["a"], &["b"]);
        assert_eq!(al.ops, vec![AlignOp::Substitute { r: 0, h: 0 }]);
        let (_, al) = edit_distance(&["a", "b"], &["b"]);
        assert_eq!(
            al.ops,
            vec![AlignOp::Delete { r: 0 }, AlignOp::Match { r: 1, h: 0 }]
        );
    }

    #[test]
    fn transcript_words() {
        let x = t("n i / h ao");
        assert_eq!(x.phonemes, toks("n i h ao"));
        assert_eq!(x.word_boundaries, vec![2]);
        assert_eq!(x.words().len(), 2);
        assert_eq!(x.to_line(), "n i / h ao");
        assert_eq!(t("/ a / / b /").word_boundaries, vec![1]);
        assert!(t("").words().is_empty());
        let v = Vocabulary::builtin();
        let idx = x.to_indices(&v).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(Transcript::from_indices(&idx, &v), x);
    }

    #[test]
    fn cer_cases() {
        let refs = vec![t("a b / c"), t("e i")];
        assert_eq!(cer(&refs, &refs).unwrap(), 0.0);
        assert_eq!(cer(&refs, &[t(""), t("")]).unwrap(), 1.0);
        assert_eq!(cer(&[t("a b")], &[t("a c")]).unwrap(), 0.5);
        assert!(matches!(
            cer(&refs, &[t("")]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            cer(&[t("")], &[t("")]),
            Err(EvalError::EmptyReference(_))
        ));
    }

    #[test]
    fn wer_cases() {
        let r = vec![t("n i / h ao")];
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        assert_eq!(wer(&r, &[t("n i / h a")]).unwrap(), 0.5);
        assert_eq!(wer(&r, &[t("n i h ao")]).unwrap(), 1.0);
    }

    #[test]
    fn confusion_a_as_er() {
        let v = Vocabulary::builtin();
        let m = confusion_matrix(&[t("a")], &[t("er")], &v).unwrap();
        assert_eq!(m.pair(&v, "a", "er"), 1);
        assert_eq!(m.total(), 1);
        assert_eq!(
            m.top_confusion(),
            Some((v.index_of("a").unwrap(), v.index_of("er").unwrap(), 1))
        );
    }

    #[test]
    fn confusion_identity_is_diagonal() {
        let v = Vocabulary::builtin();
        let refs = vec![t("a b a / zh ong"), t("a")];
        let m = confusion_matrix(&refs, &refs, &v).unwrap();
        assert_eq!(m.pair(&v, "a", "a"), 3);
        assert_eq!(m.total(), 6);
        assert!(m.top_confusion().is_none());
    }

    #[test]
    fn confusion_rejects_unknown_tokens() {
        let v = Vocabulary::builtin();
        assert!(matches!(
            confusion_matrix(&[t("a")], &[t("qq")], &v),
            Err(EvalError::UnknownToken { line: 1, .. })
        ));
    }

    #[test]
    fn heatmap_outputs() {
        let v = Vocabulary::builtin();
        let refs = vec![t("a b c d")];
        let m = confusion_matrix(&refs, &refs, &v).unwrap();
        let px = m.intensities();
        for tok in ["a", "b", "c", "d"] {
            let i = v.index_of(tok).unwrap() - 1;
            assert_eq!(px[i * CONFUSION_SIZE + i], 255);
        }
        let zero = ConfusionMatrix::default();
        assert!(zero.intensities().iter().all(|&p| p == 0));
        let csv = zero.to_csv(&v);
        assert_eq!(csv.lines().count(), CONFUSION_SIZE + 1);
        assert!(csv
            .lines()
            .skip(1)
            .all(|l| l.split(',').skip(1).all(|c| c == "0")));
        assert!(m.to_pgm().starts_with("P2\n45 45\n255\n"));
    }
}
