//! Tag vocabulary, recommendation chains-of-thought and labels.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordered, duplicate-free list of preference tag names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagVocabulary {
    tags: Vec<String>,
}

impl TagVocabulary {
    /// `cot_len` is the length of the cots this vocabulary will render; the
    /// vocabulary must hold at least that many tags (and at least two).
    pub fn new(tags: Vec<String>, cot_len: usize) -> Result<Self> {
        if tags.len() < 2 || tags.len() < cot_len {
            return Err(Error::InvalidInput(format!(
                "vocabulary needs at least max(2, {cot_len}) tags, got {}",
                tags.len()
            )));
        }
        for (i, t) in tags.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidInput(format!("tag {i} is empty")));
            }
            if tags[..i].contains(t) {
                return Err(Error::InvalidInput(format!("duplicate tag name {t:?}")));
            }
        }
        Ok(TagVocabulary { tags })
    }

    /// `tag_0 .. tag_{k-1}`.
    pub fn numbered(num_tags: usize, cot_len: usize) -> Result<Self> {
        Self::new((0..num_tags).map(|i| format!("tag_{i}")).collect(), cot_len)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.tags.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.tags
    }
}

/// A recommendation chain-of-thought: distinct tag ids in generation order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecCot {
    tags: Vec<usize>,
}

impl RecCot {
    /// Rejects repeated tags. Range checks against a vocabulary size happen
    /// where the size is known, see [`RecCot::check`].
    pub fn new(tags: Vec<usize>) -> Result<Self> {
        for (i, t) in tags.iter().enumerate() {
            if tags[..i].contains(t) {
                return Err(Error::InvalidInput(format!("tag {t} repeated in cot {tags:?}")));
            }
        }
        Ok(RecCot { tags })
    }

    pub(crate) fn from_distinct(tags: Vec<usize>) -> Self {
        debug_assert!(RecCot::new(tags.clone()).is_ok());
        RecCot { tags }
    }

    pub fn tags(&self) -> &[usize] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Every id below `num_tags` and, when given, exactly `cot_len` ids.
    pub fn check(&self, num_tags: usize, cot_len: Option<usize>) -> Result<()> {
        if let Some(&bad) = self.tags.iter().find(|&&t| t >= num_tags) {
            return Err(Error::InvalidInput(format!(
                "tag id {bad} out of range for {num_tags} tags"
            )));
        }
        match cot_len {
            Some(l) if l != self.tags.len() => Err(Error::InvalidInput(format!(
                "cot has {} tags, expected {l}",
                self.tags.len()
            ))),
            _ => Ok(()),
        }
    }

    /// `"prefers: <tag>, <tag>, ..."` in sequence order.
    pub fn render(&self, vocab: &TagVocabulary) -> Result<String> {
        self.check(vocab.len(), None)?;
        let mut out = String::from("prefers: ");
        for (i, &t) in self.tags.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&vocab.tags[t]);
        }
        Ok(out)
    }

    /// 1.0 at every tag in the cot, 0.0 elsewhere.
    pub fn multi_hot(&self, num_tags: usize) -> Result<Vec<f64>> {
        self.check(num_tags, None)?;
        let mut v = vec![0.0; num_tags];
        for &t in &self.tags {
            v[t] = 1.0;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn from_bool(clicked: bool) -> Self {
        if clicked {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Label::Yes
    }

    /// 1.0 for Yes, 0.0 for No.
    pub fn target(self) -> f64 {
        match self {
            Label::Yes => 1.0,
            Label::No => 0.0,
        }
    }
}
