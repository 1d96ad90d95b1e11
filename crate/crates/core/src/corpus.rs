//! Bag-of-words corpora: UCI reader/writer, curation and document statistics.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse object counts of one training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    counts: Vec<(usize, u32)>,
    length: u64,
}

impl Document {
    /// Builds a document from `(object, count)` pairs. Duplicate indices are
    /// merged and zero counts dropped.
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(pairs: I) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (i, c) in pairs {
            if c > 0 {
                *merged.entry(i).or_insert(0) += c;
            }
        }
        let counts: Vec<(usize, u32)> = merged.into_iter().collect();
        let length = counts.iter().map(|&(_, c)| c as u64).sum();
        Document { counts, length }
    }

    /// Dense count vector of length `n` into a sparse document.
    pub fn from_dense(h: &[u32]) -> Self {
        Self::from_counts(h.iter().enumerate().map(|(i, &c)| (i, c)))
    }

    /// `(object, count)` pairs sorted by object index.
    pub fn counts(&self) -> &[(usize, u32)] {
        &self.counts
    }

    /// Total number of tokens `n_m`.
    pub fn len(&self) -> u64 {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn count(&self, object: usize) -> u32 {
        self.counts
            .binary_search_by_key(&object, |&(i, _)| i)
            .map(|p| self.counts[p].1)
            .unwrap_or(0)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.counts.last().map(|&(i, _)| i)
    }
}

/// A collection of documents over a labelled vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    vocabulary: Vec<String>,
    doc_freq: Vec<u32>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocabulary: Vec<String>) -> Result<Self> {
        let n = vocabulary.len();
        for (m, doc) in documents.iter().enumerate() {
            if let Some(max) = doc.max_index() {
                if max >= n {
                    return Err(Error::InvalidArgument(format!(
                        "document {m} references object {max} but the vocabulary has {n} entries"
                    )));
                }
            }
        }
        let doc_freq = document_frequencies(&documents, n);
        Ok(Corpus {
            documents,
            vocabulary,
            doc_freq,
        })
    }

    /// Corpus with generated labels `w0, w1, ...`.
    pub fn with_generated_labels(documents: Vec<Document>, n: usize) -> Result<Self> {
        Self::new(documents, (0..n).map(|i| format!("w{i}")).collect())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    /// Number of documents containing each object (`D₁`).
    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn mean_length(&self) -> f64 {
        if self.documents.is_empty() {
            0.0
        } else {
            self.total_tokens() as f64 / self.documents.len() as f64
        }
    }

    /// Corpus term frequency of every object.
    pub fn term_freq(&self) -> Vec<u64> {
        let mut tf = vec![0u64; self.vocab_size()];
        for doc in &self.documents {
            for &(i, c) in doc.counts() {
                tf[i] += c as u64;
            }
        }
        tf
    }

    /// Sorted ids of documents containing each object in `objects`.
    pub fn postings(&self, objects: &[usize]) -> Vec<Vec<u32>> {
        let mut slot = vec![usize::MAX; self.vocab_size()];
        for (s, &o) in objects.iter().enumerate() {
            slot[o] = s;
        }
        let mut lists = vec![Vec::new(); objects.len()];
        for (m, doc) in self.documents.iter().enumerate() {
            for &(i, _) in doc.counts() {
                if slot[i] != usize::MAX {
                    lists[slot[i]].push(m as u32);
                }
            }
        }
        lists
    }
}

fn document_frequencies(documents: &[Document], n: usize) -> Vec<u32> {
    let mut df = vec![0u32; n];
    for doc in documents {
        for &(i, _) in doc.counts() {
            df[i] += 1;
        }
    }
    df
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

fn parse_header_value(path: &Path, line: usize, text: &str, name: &str) -> Result<usize> {
    text.trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("malformed header: expected {name}, got {text:?}")))
}

/// Reads a vocabulary file, one UTF-8 label per line.
pub fn read_vocabulary(path: &Path) -> Result<Vec<String>> {
    let mut labels = Vec::new();
    for (_, text) in read_lines(path)? {
        let text = text.map_err(|e| Error::io(path, e))?;
        labels.push(text.trim_end_matches('\r').to_string());
    }
    // trailing blank lines are not labels
    while matches!(labels.last(), Some(l) if l.is_empty()) {
        labels.pop();
    }
    Ok(labels)
}

/// Reads the UCI bag-of-words format (`docword` + `vocab` files).
///
/// Empty documents are kept so document ids stay aligned with the file.
pub fn load_uci(docword_path: &Path, vocab_path: &Path) -> Result<Corpus> {
    let mut lines = read_lines(docword_path)?;
    let mut header = [0usize; 3];
    let names = ["M (number of documents)", "V (vocabulary size)", "NNZ"];
    for (slot, name) in header.iter_mut().zip(names) {
        let (line, text) = lines
            .next()
            .ok_or_else(|| Error::parse(docword_path, 0, format!("malformed header: missing {name}")))?;
        let text = text.map_err(|e| Error::io(docword_path, e))?;
        *slot = parse_header_value(docword_path, line, &text, name)?;
    }
    let [m, v, nnz] = header;

    let mut triples: Vec<Vec<(usize, u32)>> = vec![Vec::new(); m];
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut entries = 0usize;
    for (line, text) in lines {
        let text = text.map_err(|e| Error::io(docword_path, e))?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                docword_path,
                line,
                format!("expected \"docID wordID count\", got {text:?}"),
            ));
        }
        let doc: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(docword_path, line, format!("bad docID {:?}", fields[0])))?;
        let word: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(docword_path, line, format!("bad wordID {:?}", fields[1])))?;
        let count: i64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(docword_path, line, format!("bad count {:?}", fields[2])))?;
        if doc == 0 || doc > m {
            return Err(Error::parse(docword_path, line, format!("docID out of range: {doc} (M = {m})")));
        }
        if word == 0 || word > v {
            return Err(Error::parse(docword_path, line, format!("wordID out of range: {word} (V = {v})")));
        }
        if count <= 0 || count > u32::MAX as i64 {
            return Err(Error::parse(docword_path, line, format!("non-positive count {count}")));
        }
        if !seen.insert((doc, word)) {
            return Err(Error::parse(docword_path, line, format!("duplicate entry for docID {doc}, wordID {word}")));
        }
        triples[doc - 1].push((word - 1, count as u32));
        entries += 1;
    }
    if entries != nnz {
        return Err(Error::parse(
            docword_path,
            3,
            format!("NNZ mismatch: header says {nnz}, file has {entries} entries"),
        ));
    }

    let vocabulary = read_vocabulary(vocab_path)?;
    if vocabulary.len() != v {
        return Err(Error::parse(
            vocab_path,
            vocabulary.len(),
            format!("vocabulary has {} labels but the docword header says V = {v}", vocabulary.len()),
        ));
    }
    let documents = triples.into_iter().map(Document::from_counts).collect();
    Corpus::new(documents, vocabulary)
}

/// Writes the corpus in UCI format.
pub fn write_uci(corpus: &Corpus, docword_path: &Path, vocab_path: &Path) -> Result<()> {
    let file = File::create(docword_path).map_err(|e| Error::io(docword_path, e))?;
    let mut w = BufWriter::new(file);
    let nnz: usize = corpus.documents().iter().map(|d| d.counts().len()).sum();
    let io = |e| Error::io(docword_path, e);
    writeln!(w, "{}", corpus.num_documents()).map_err(io)?;
    writeln!(w, "{}", corpus.vocab_size()).map_err(io)?;
    writeln!(w, "{nnz}").map_err(io)?;
    for (m, doc) in corpus.documents().iter().enumerate() {
        for &(i, c) in doc.counts() {
            writeln!(w, "{} {} {}", m + 1, i + 1, c).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let file = File::create(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
    let mut w = BufWriter::new(file);
    for label in corpus.vocabulary() {
        writeln!(w, "{label}").map_err(|e| Error::io(vocab_path, e))?;
    }
    w.flush().map_err(|e| Error::io(vocab_path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub stopwords: HashSet<String>,
    pub target_vocab: usize,
    pub min_doc_length: u64,
}

impl CurationConfig {
    pub fn new(target_vocab: usize) -> Self {
        CurationConfig {
            stopwords: HashSet::new(),
            target_vocab,
            min_doc_length: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.target_vocab < 1 {
            return Err(Error::InvalidArgument("target vocabulary must be at least 1".into()));
        }
        if self.min_doc_length < 2 {
            return Err(Error::InvalidArgument("minimum document length must be at least 2".into()));
        }
        Ok(())
    }
}

/// Index remapping produced by [`curate`]: entry `i` holds the original index
/// of curated object / document `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationMap {
    pub objects: Vec<usize>,
    pub documents: Vec<usize>,
}

impl CurationMap {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("curation map serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

/// tf-idf score `tf_i · ln(M / D₁(i))` of every object.
pub fn tfidf_scores(corpus: &Corpus) -> Vec<f64> {
    let m = corpus.num_documents() as f64;
    corpus
        .term_freq()
        .iter()
        .zip(corpus.doc_freq())
        .map(|(&tf, &df)| if df == 0 { 0.0 } else { tf as f64 * (m / df as f64).ln() })
        .collect()
}

/// Removes stopwords, keeps the top-`V` objects by tf-idf and drops short
/// documents. Objects left without any occurrence after the document drop
/// are removed as well, so the result may hold fewer than `V` objects.
pub fn curate(corpus: &Corpus, config: &CurationConfig) -> Result<(Corpus, CurationMap)> {
    config.validate()?;
    let scores = tfidf_scores(corpus);
    let mut eligible: Vec<usize> = (0..corpus.vocab_size())
        .filter(|&i| corpus.doc_freq()[i] > 0 && !config.stopwords.contains(&corpus.vocabulary()[i]))
        .collect();
    if config.target_vocab > eligible.len() {
        return Err(Error::Curation(format!(
            "target vocabulary {} exceeds the {} objects surviving stopword removal",
            config.target_vocab,
            eligible.len()
        )));
    }
    // stable sort keeps lower original index first among ties
    eligible.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    eligible.truncate(config.target_vocab);
    eligible.sort_unstable();

    let mut remap = vec![usize::MAX; corpus.vocab_size()];
    for (new, &old) in eligible.iter().enumerate() {
        remap[old] = new;
    }
    let mut kept_docs = Vec::new();
    let mut documents = Vec::new();
    for (m, doc) in corpus.documents().iter().enumerate() {
        let reduced = Document::from_counts(
            doc.counts()
                .iter()
                .filter(|&&(i, _)| remap[i] != usize::MAX)
                .map(|&(i, c)| (remap[i], c)),
        );
        if reduced.len() >= config.min_doc_length {
            kept_docs.push(m);
            documents.push(reduced);
        }
    }
    if documents.is_empty() {
        return Err(Error::Curation(format!(
            "every document has fewer than {} tokens after vocabulary curation",
            config.min_doc_length
        )));
    }

    let df = document_frequencies(&documents, eligible.len());
    let mut second = vec![usize::MAX; eligible.len()];
    let mut objects = Vec::new();
    for (i, &d) in df.iter().enumerate() {
        if d > 0 {
            second[i] = objects.len();
            objects.push(eligible[i]);
        }
    }
    if objects.len() < eligible.len() {
        log::warn!(
            "{} curated objects occur only in dropped documents and were removed",
            eligible.len() - objects.len()
        );
        documents = documents
            .into_iter()
            .map(|d| Document::from_counts(d.counts().iter().map(|&(i, c)| (second[i], c))))
            .collect();
    }
    let vocabulary = objects.iter().map(|&o| corpus.vocabulary()[o].clone()).collect();
    let curated = Corpus::new(documents, vocabulary)?;
    Ok((
        curated,
        CurationMap {
            objects,
            documents: kept_docs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_small_uci_file() {
        let dir = tempfile::tempdir().unwrap();
        let dw = write(dir.path(), "docword.txt", "2\n3\n3\n1 1 2\n1 3 1\n2 2 4\n");
        let vo = write(dir.path(), "vocab.txt", "a\nb\nc\n");
        let c = load_uci(&dw, &vo).unwrap();
        assert_eq!(c.num_documents(), 2);
        assert_eq!(c.documents()[0].counts(), &[(0, 2), (2, 1)]);
        assert_eq!(c.documents()[1].counts(), &[(1, 4)]);
        assert_eq!(c.doc_freq(), &[1, 1, 1]);
        assert_eq!(c.vocabulary(), &["a", "b", "c"]);
    }

    #[test]
    fn keeps_empty_documents() {
        let dir = tempfile::tempdir().unwrap();
        let dw = write(dir.path(), "docword.txt", "3\n2\n1\n2 1 5\n");
        let vo = write(dir.path(), "vocab.txt", "a\nb\n");
        let c = load_uci(&dw, &vo).unwrap();
        assert_eq!(c.num_documents(), 3);
        assert!(c.documents()[0].is_empty());
        assert_eq!(c.documents()[1].len(), 5);
    }

    #[test]
    fn rejects_doc_id_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let dw = write(dir.path(), "docword.txt", "2\n3\n1\n3 1 1\n");
        let vo = write(dir.path(), "vocab.txt", "a\nb\nc\n");
        let err = load_uci(&dw, &vo).unwrap_err().to_string();
        assert!(err.contains("docID out of range"), "{err}");
        assert!(err.contains(":4:"), "line number missing: {err}");
    }

    #[test]
    fn rejects_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let vo = write(dir.path(), "vocab.txt", "a\nb\n");
        let cases = [
            ("x\n2\n1\n1 1 1\n", "malformed header"),
            ("1\n2\n1\n1 3 1\n", "wordID out of range"),
            ("1\n2\n1\n1 1 0\n", "non-positive count"),
            ("1\n2\n2\n1 1 1\n", "NNZ mismatch"),
            ("1\n2\n2\n1 1 1\n1 1 2\n", "duplicate entry"),
            ("1\n2\n1\n1 1\n", "expected"),
        ];
        for (i, (text, needle)) in cases.iter().enumerate() {
            let dw = write(dir.path(), &format!("dw{i}.txt"), text);
            let err = load_uci(&dw, &vo).unwrap_err().to_string();
            assert!(err.contains(needle), "case {i}: {err}");
        }
        let dw = write(dir.path(), "ok.txt", "1\n3\n1\n1 1 1\n");
        let err = load_uci(&dw, &vo).unwrap_err().to_string();
        assert!(err.contains("vocabulary has 2 labels"), "{err}");
    }

    #[test]
    fn uci_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![
            Document::from_dense(&[1, 0, 3]),
            Document::from_dense(&[0, 0, 0]),
            Document::from_dense(&[2, 2, 0]),
        ];
        let c = Corpus::new(docs, vec!["x".into(), "y".into(), "z".into()]).unwrap();
        let dw = dir.path().join("dw.txt");
        let vo = dir.path().join("vo.txt");
        write_uci(&c, &dw, &vo).unwrap();
        assert_eq!(load_uci(&dw, &vo).unwrap(), c);
    }

    #[test]
    fn zero_idf_word_is_pruned() {
        // object 0 occurs in every document
        let docs = vec![
            Document::from_dense(&[3, 2, 0, 1]),
            Document::from_dense(&[3, 0, 2, 1]),
            Document::from_dense(&[3, 1, 1, 0]),
        ];
        let c = Corpus::with_generated_labels(docs, 4).unwrap();
        let mut cfg = CurationConfig::new(3);
        cfg.min_doc_length = 2;
        let (cur, map) = curate(&c, &cfg).unwrap();
        assert_eq!(map.objects, vec![1, 2, 3]);
        assert_eq!(cur.vocabulary(), &["w1", "w2", "w3"]);
    }

    #[test]
    fn short_documents_are_dropped() {
        let docs = vec![
            Document::from_dense(&[4, 0]),
            Document::from_dense(&[2, 3]),
            Document::from_dense(&[4, 5]),
        ];
        let c = Corpus::with_generated_labels(docs, 2).unwrap();
        let (cur, map) = curate(&c, &CurationConfig::new(2)).unwrap();
        assert_eq!(cur.num_documents(), 2);
        assert_eq!(map.documents, vec![1, 2]);
        assert!(cur.documents().iter().all(|d| d.len() >= 5));
    }

    #[test]
    fn stopwords_are_removed() {
        let docs = vec![Document::from_dense(&[3, 3, 3]), Document::from_dense(&[0, 3, 3])];
        let c = Corpus::new(docs, vec!["the".into(), "cat".into(), "dog".into()]).unwrap();
        let mut cfg = CurationConfig::new(2);
        cfg.stopwords.insert("the".into());
        let (cur, _) = curate(&c, &cfg).unwrap();
        assert_eq!(cur.vocabulary(), &["cat", "dog"]);
        assert_eq!(cur.documents()[0].len(), 6);
    }

    #[test]
    fn curation_errors() {
        let docs = vec![Document::from_dense(&[1, 1])];
        let c = Corpus::with_generated_labels(docs, 2).unwrap();
        assert!(matches!(curate(&c, &CurationConfig::new(3)), Err(Error::Curation(_))));
        assert!(matches!(curate(&c, &CurationConfig::new(2)), Err(Error::Curation(_))));
        let mut bad = CurationConfig::new(2);
        bad.min_doc_length = 1;
        assert!(matches!(curate(&c, &bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn curation_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = CurationMap {
            objects: vec![3, 5, 9],
            documents: vec![0, 2],
        };
        let p = dir.path().join("map.json");
        map.write_json(&p).unwrap();
        assert_eq!(CurationMap::read_json(&p).unwrap(), map);
    }
}
