use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Ordered BPE merges plus the character alphabet they were learned over.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    pub alphabet: BTreeSet<String>,
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let mut alphabet = BTreeSet::new();
        for (l, r) in &merges {
            for c in l.chars().chain(r.chars()) {
                alphabet.insert(c.to_string());
            }
        }
        Self { merges, alphabet }
    }

    /// Alphabet plus every symbol produced by a merge.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = self.alphabet.clone();
        for (l, r) in &self.merges {
            out.insert(format!("{l}{r}"));
        }
        out
    }
}

/// Learn up to `num_merges` merges from the whitespace-separated words of `corpus`.
///
/// Each step merges the most frequent adjacent pair; equal counts go to the
/// lexicographically smallest pair. Learning stops early once no word has two
/// symbols left.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> BpeModel {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            *freq.entry(word).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = freq
        .into_iter()
        .map(|(w, n)| (w.chars().map(String::from).collect(), n))
        .collect();
    let alphabet = words
        .iter()
        .flat_map(|(syms, _)| syms.iter().cloned())
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, n) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0].as_str(), w[1].as_str())).or_default() += n;
            }
        }
        let best = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((l, r), _)) = best else { break };
        let pair = (l.to_string(), r.to_string());
        for (syms, _) in words.iter_mut() {
            merge_in_place(syms, &pair.0, &pair.1);
        }
        merges.push(pair);
    }
    BpeModel { merges, alphabet }
}

fn merge_in_place(syms: &mut Vec<String>, left: &str, right: &str) {
    if syms.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut syms[i]));
            i += 1;
        }
    }
    *syms = out;
}

/// Segment one word by replaying the merges in learned order, leftmost first.
pub fn apply_bpe(model: &BpeModel, word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    for (l, r) in &model.merges {
        if syms.len() < 2 {
            break;
        }
        merge_in_place(&mut syms, l, r);
    }
    syms
}
