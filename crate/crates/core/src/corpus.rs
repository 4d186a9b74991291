//! Symbol alphabets and id-encoded corpora partitioned into estimation blocks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

/// Surface form reserved for the out-of-vocabulary symbol.
pub const OOV_TOKEN: &str = "<oov>";

/// Modeling unit: one symbol per Unicode code point, or per whitespace-separated word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Char,
    Word,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Char => "char",
            Unit::Word => "word",
        }
    }
}

impl core::str::FromStr for Unit {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, CorpusError> {
        match s {
            "char" => Ok(Unit::Char),
            "word" => Ok(Unit::Word),
            _ => Err(CorpusError::BadUnit(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    Empty,
    BadUnit(String),
    ReservedToken,
    BadBlockCount { requested: usize, length: usize },
    BadFraction(f64),
    DegenerateSplit { train: usize, test: usize },
    BadBlockId { id: usize, blocks: usize },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Empty => write!(f, "corpus is empty"),
            CorpusError::BadUnit(s) => write!(f, "unknown unit {s:?} (expected char or word)"),
            CorpusError::ReservedToken => {
                write!(f, "corpus contains the reserved token {OOV_TOKEN:?}")
            }
            CorpusError::BadBlockCount { requested, length } => write!(
                f,
                "cannot split {length} symbols into {requested} nonempty blocks"
            ),
            CorpusError::BadFraction(x) => {
                write!(f, "train fraction must lie strictly in (0,1), got {x}")
            }
            CorpusError::DegenerateSplit { train, test } => write!(
                f,
                "train/test split is degenerate (train={train}, test={test} symbols)"
            ),
            CorpusError::BadBlockId { id, blocks } => {
                write!(f, "block id {id} out of range ({blocks} blocks)")
            }
        }
    }
}

/// Bidirectional symbol <-> dense id map with a reserved out-of-vocabulary id.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
    oov_id: u32,
    unit: Unit,
}

impl Alphabet {
    /// Builds an alphabet from the distinct in-vocabulary surface tokens.
    /// Tokens are sorted for a deterministic id assignment and the OOV symbol
    /// is appended last.
    pub fn from_tokens<I>(tokens: I, unit: Unit) -> Result<Alphabet, CorpusError>
    where
        I: IntoIterator<Item = String>,
    {
        let mut symbols: Vec<String> = tokens.into_iter().collect();
        symbols.sort_unstable();
        symbols.dedup();
        if symbols.iter().any(|s| s == OOV_TOKEN) {
            return Err(CorpusError::ReservedToken);
        }
        symbols.push(OOV_TOKEN.to_string());
        let oov_id = (symbols.len() - 1) as u32;
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(Alphabet {
            symbols,
            index,
            oov_id,
            unit,
        })
    }

    /// Rebuilds from an id-ordered symbol list, as read back from a model file.
    pub fn from_parts(symbols: Vec<String>, oov_id: u32, unit: Unit) -> Alphabet {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Alphabet {
            symbols,
            index,
            oov_id,
            unit,
        }
    }

    /// Alphabet size `k`, including the OOV symbol.
    #[inline]
    pub fn len(&self) -> u32 {
        self.symbols.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        false // always holds at least OOV; keeps clippy's len-without-is-empty quiet
    }

    #[inline]
    pub fn oov_id(&self) -> u32 {
        self.oov_id
    }

    #[inline]
    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Surface form of an id.
    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Maps a surface token to its id; unknown tokens map to the OOV id.
    #[inline]
    pub fn id_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.oov_id)
    }
}

/// An id sequence together with the block bounds used for cross-estimation.
///
/// `block_bounds` holds `m + 1` ascending offsets `0 = b_0 < ... < b_m = T`;
/// block `i` is `data[b_i..b_{i+1}]`. Contexts never reach across a bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    data: Vec<u32>,
    block_bounds: Vec<usize>,
}

impl Corpus {
    /// Wraps an id sequence as a single-block corpus.
    pub fn from_ids(data: Vec<u32>) -> Result<Corpus, CorpusError> {
        if data.is_empty() {
            return Err(CorpusError::Empty);
        }
        let t = data.len();
        Ok(Corpus {
            data,
            block_bounds: alloc::vec![0, t],
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn num_blocks(&self) -> usize {
        self.block_bounds.len() - 1
    }

    pub fn block_bounds(&self) -> &[usize] {
        &self.block_bounds
    }

    /// The symbols of one block.
    pub fn block(&self, i: usize) -> Result<&[u32], CorpusError> {
        if i >= self.num_blocks() {
            return Err(CorpusError::BadBlockId {
                id: i,
                blocks: self.num_blocks(),
            });
        }
        Ok(&self.data[self.block_bounds[i]..self.block_bounds[i + 1]])
    }

    /// Repartitions into `m` contiguous blocks whose lengths differ by at most one.
    pub fn partition_blocks(&self, m: usize) -> Result<Corpus, CorpusError> {
        let t = self.len();
        if m == 0 || m > t {
            return Err(CorpusError::BadBlockCount {
                requested: m,
                length: t,
            });
        }
        let base = t / m;
        let rem = t % m;
        let mut bounds = Vec::with_capacity(m + 1);
        bounds.push(0);
        let mut pos = 0;
        for i in 0..m {
            pos += base + usize::from(i < rem);
            bounds.push(pos);
        }
        Ok(Corpus {
            data: self.data.clone(),
            block_bounds: bounds,
        })
    }

    /// Joins two corpora end to end, keeping each side's block bounds.
    pub fn concat_blocked(a: &Corpus, b: &Corpus) -> Corpus {
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        let mut bounds = a.block_bounds.clone();
        bounds.extend(b.block_bounds[1..].iter().map(|&o| o + a.len()));
        Corpus {
            data,
            block_bounds: bounds,
        }
    }

    /// Deterministic prefix/suffix split: the first `floor(fraction * T)`
    /// symbols become the training side. Each side comes back as a
    /// single-block corpus.
    pub fn train_test_split(&self, fraction: f64) -> Result<(Corpus, Corpus), CorpusError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(CorpusError::BadFraction(fraction));
        }
        let t = self.len();
        let cut = (fraction * t as f64) as usize;
        if cut == 0 || cut == t {
            return Err(CorpusError::DegenerateSplit {
                train: cut,
                test: t - cut,
            });
        }
        let train = Corpus::from_ids(self.data[..cut].to_vec())?;
        let test = Corpus::from_ids(self.data[cut..].to_vec())?;
        Ok((train, test))
    }
}

/// Encodes a token stream against an existing alphabet (evaluation-time path:
/// unknown tokens become OOV).
pub fn encode_tokens<'a, I>(alphabet: &Alphabet, tokens: I) -> Result<Corpus, CorpusError>
where
    I: IntoIterator<Item = &'a str>,
{
    let ids: Vec<u32> = tokens.into_iter().map(|t| alphabet.id_of(t)).collect();
    Corpus::from_ids(ids)
}

/// Builds a char-unit alphabet and corpus from text: one symbol per code point.
pub fn build_char_corpus(text: &str) -> Result<(Alphabet, Corpus), CorpusError> {
    if text.is_empty() {
        return Err(CorpusError::Empty);
    }
    let alphabet = Alphabet::from_tokens(text.chars().map(|c| c.to_string()), Unit::Char)?;
    let mut buf = [0u8; 4];
    let ids = text
        .chars()
        .map(|c| alphabet.id_of(c.encode_utf8(&mut buf)))
        .collect();
    let corpus = Corpus::from_ids(ids)?;
    Ok((alphabet, corpus))
}

/// Builds a word-unit alphabet and corpus from text. The vocabulary keeps the
/// tokens occurring at least `min_freq` times; everything else maps to OOV.
pub fn build_word_corpus(text: &str, min_freq: u32) -> Result<(Alphabet, Corpus), CorpusError> {
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut freq: HashMap<&str, u32> = HashMap::new();
    for t in &tokens {
        *freq.entry(t).or_insert(0) += 1;
    }
    let vocab = freq
        .iter()
        .filter(|&(_, &c)| c >= min_freq)
        .map(|(&t, _)| t.to_string());
    let alphabet = Alphabet::from_tokens(vocab, Unit::Word)?;
    let corpus = encode_tokens(&alphabet, tokens.iter().copied())?;
    Ok((alphabet, corpus))
}
