//! Text file formats for bitext, BPE models, vocabularies and documents.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::synthetic::{DocumentPair, GoldLink};
use super::{segment_sentences, BpeModel, Corpus, Origin, RawPair, Tokenizer, Vocab};
use crate::error::{Error, Result};

/// Write `contents` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `source<TAB>target[<TAB>domain]` per line.
pub fn read_pairs(path: &Path) -> Result<Vec<RawPair>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let mut pair = match cols.as_slice() {
            [s, t] | [s, t, _] => RawPair::new(*s, *t),
            _ => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 2 or 3 tab-separated fields, got {}", cols.len()),
                ))
            }
        };
        if let Some(d) = cols.get(2) {
            pair.domain = Some(
                d.trim()
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad domain label {d:?}")))?,
            );
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn write_pairs(path: &Path, pairs: &[RawPair]) -> Result<()> {
    let mut buf = Vec::new();
    for p in pairs {
        match p.domain {
            Some(d) => writeln!(buf, "{}\t{}\t{}", p.source, p.target, d)?,
            None => writeln!(buf, "{}\t{}", p.source, p.target)?,
        }
    }
    write_atomic(path, &buf)
}

/// Read and tokenize a pair file, keeping file and line provenance.
pub fn load_corpus(path: &Path, source: &Tokenizer, target: &Tokenizer) -> Result<Corpus> {
    let raw = read_pairs(path)?;
    let mut corpus = super::tokenize_pairs(&raw, source, target);
    corpus.path = Some(path.to_path_buf());
    Ok(corpus)
}

/// Inverse of [`load_corpus`] for a corpus whose tokenizers are known.
pub fn corpus_to_raw(corpus: &Corpus, source: &Tokenizer, target: &Tokenizer) -> Vec<RawPair> {
    corpus
        .iter()
        .map(|p| {
            let mut r = RawPair::new(source.detokenize(&p.source), target.detokenize(&p.target));
            r.domain = p.domain;
            r
        })
        .collect()
}

const BPE_HEADER: &str = "BPE v1";

pub fn write_bpe(path: &Path, model: &BpeModel) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{BPE_HEADER} {}", model.merges.len())?;
    for (l, r) in &model.merges {
        writeln!(buf, "{l} {r}")?;
    }
    write_atomic(path, &buf)
}

pub fn read_bpe(path: &Path) -> Result<BpeModel> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let n: usize = header
        .strip_prefix(BPE_HEADER)
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, 1, format!("expected `{BPE_HEADER} <n>` header")))?;
    let mut merges = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let (l, r) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(path, i + 2, "expected `left right`"))?;
        merges.push((l.to_string(), r.to_string()));
    }
    if merges.len() != n {
        return Err(Error::parse(
            path,
            1,
            format!("header announces {n} merges, file has {}", merges.len()),
        ));
    }
    Ok(BpeModel::from_merges(merges))
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut buf = Vec::new();
    for t in vocab.tokens() {
        writeln!(buf, "{t}")?;
    }
    write_atomic(path, &buf)
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path)?;
    let vocab = Vocab::from_tokens(text.lines());
    if vocab.len() != text.lines().count().max(4) {
        return Err(Error::parse(
            path,
            1,
            "duplicate or misplaced reserved tokens",
        ));
    }
    Ok(vocab)
}

/// `doc_id<TAB>src_index<TAB>tgt_index` per line.
pub fn write_gold(path: &Path, gold: &[GoldLink]) -> Result<()> {
    let mut buf = Vec::new();
    for g in gold {
        writeln!(buf, "{}\t{}\t{}", g.doc, g.src_index, g.tgt_index)?;
    }
    write_atomic(path, &buf)
}

pub fn read_gold(path: &Path) -> Result<Vec<GoldLink>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse(path, i + 1, "expected doc<TAB>src<TAB>tgt");
            if cols.len() != 3 {
                return Err(bad());
            }
            Ok(Origin {
                doc: cols[0].to_string(),
                src_index: cols[1].parse().map_err(|_| bad())?,
                tgt_index: cols[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn paragraphs_to_text(pars: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (k, par) in pars.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for s in par {
            out.push_str(s);
            out.push('\n');
        }
    }
    out
}

/// Paragraphs are separated by blank lines and segmented into sentences.
pub fn parse_paragraphs(text: &str) -> Vec<Vec<String>> {
    let mut pars = Vec::new();
    let mut cur = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !cur.trim().is_empty() {
                pars.push(segment_sentences(&cur));
            }
            cur.clear();
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(line.trim());
        }
    }
    pars
}

/// Write documents as `dir/src/<id>.txt` and `dir/tgt/<id>.txt`.
pub fn write_documents(dir: &Path, docs: &[DocumentPair]) -> Result<()> {
    let (src, tgt) = (dir.join("src"), dir.join("tgt"));
    fs::create_dir_all(&src)?;
    fs::create_dir_all(&tgt)?;
    for d in docs {
        let name = format!("{}.txt", d.id);
        write_atomic(&src.join(&name), paragraphs_to_text(&d.source).as_bytes())?;
        write_atomic(&tgt.join(&name), paragraphs_to_text(&d.target).as_bytes())?;
    }
    Ok(())
}

/// Pair up same-named files of two directories (sorted by name).
pub fn read_documents(src_dir: &Path, tgt_dir: &Path) -> Result<Vec<DocumentPair>> {
    let mut names: Vec<String> = fs::read_dir(src_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut docs = Vec::with_capacity(names.len());
    for name in names {
        let tgt_path = tgt_dir.join(&name);
        if !tgt_path.is_file() {
            return Err(Error::Input(format!(
                "{} has no counterpart in {}",
                name,
                tgt_dir.display()
            )));
        }
        let id = Path::new(&name)
            .file_stem()
            .map_or(name.clone(), |s| s.to_string_lossy().into_owned());
        docs.push(DocumentPair {
            id,
            source: parse_paragraphs(&fs::read_to_string(src_dir.join(&name))?),
            target: parse_paragraphs(&fs::read_to_string(tgt_path)?),
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::learn_bpe;
    use crate::corpus::synthetic::{generate_synthetic_documents, NoiseRates, SyntheticSpec};

    #[test]
    fn pair_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        let mut a = RawPair::new("你好", "hello there");
        a.domain = Some(2);
        let pairs = vec![a, RawPair::new("再见", "bye")];
        write_pairs(&path, &pairs).unwrap();
        assert_eq!(read_pairs(&path).unwrap(), pairs);
    }

    #[test]
    fn malformed_pair_line_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        fs::write(&path, "a\tb\nonly-one-field\n").unwrap();
        match read_pairs(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bpe_file_has_header_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bpe.txt");
        let m = learn_bpe(&["low", "low", "lower"], 2);
        write_bpe(&path, &m).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "BPE v1 2\nl o\nlo w\n");
        assert_eq!(read_bpe(&path).unwrap().merges, m.merges);
    }

    #[test]
    fn vocab_file_index_is_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocab::from_tokens(["a", "b"]);
        write_vocab(&path, &v).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(5), Some("b"));
        assert_eq!(read_vocab(&path).unwrap(), v);
    }

    #[test]
    fn documents_and_gold_round_trip() {
        let spec = SyntheticSpec {
            domains: 1,
            vocab_size: 30,
            pairs: 40,
            noise: NoiseRates {
                misalignment: 0.2,
                identical: 0.1,
                ..Default::default()
            },
            ..Default::default()
        };
        let (docs, gold) = generate_synthetic_documents(&spec, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_documents(dir.path(), &docs).unwrap();
        write_gold(&dir.path().join("gold.tsv"), &gold).unwrap();
        let back = read_documents(&dir.path().join("src"), &dir.path().join("tgt")).unwrap();
        assert_eq!(back, docs);
        assert_eq!(read_gold(&dir.path().join("gold.tsv")).unwrap(), gold);
    }
}
