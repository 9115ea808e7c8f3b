use serde::{Deserialize, Serialize};

use super::TextEncoder;
use crate::embedding::TokenEmbedding;
use crate::error::{Error, Result};
use crate::Vector;

pub const TOKEN_SLOT: &str = "{*}";
pub const PARENT_SLOT: &str = "{c}";

/// Where the custom token sits relative to the parent word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOrder {
    /// `[t, *, c]`, e.g. "image of a * teapot".
    #[default]
    TokenThenParent,
    /// `[t, c, *]`.
    ParentThenToken,
}

pub fn default_paraphrases() -> Vec<String> {
    [
        "a photo of a {*} {c}",
        "a rendering of a {*} {c}",
        "a cropped photo of the {*} {c}",
        "a dark photo of a {*} {c}",
        "a close-up photo of a {*} {c}",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Context text `t` with a custom-token slot `{*}` and an optional parent slot `{c}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub context_text: String,
    pub paraphrase_set: Vec<String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        let paraphrase_set = default_paraphrases();
        Self { context_text: paraphrase_set[0].clone(), paraphrase_set }
    }
}

impl PromptTemplate {
    pub fn new(context_text: impl Into<String>) -> Result<Self> {
        let context_text = context_text.into();
        let t = Self { paraphrase_set: vec![context_text.clone()], context_text };
        t.validate()?;
        Ok(t)
    }

    pub fn with_paraphrases(context_text: impl Into<String>, paraphrase_set: Vec<String>) -> Result<Self> {
        let t = Self { context_text: context_text.into(), paraphrase_set };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        validate_template(&self.context_text)?;
        for p in &self.paraphrase_set {
            validate_template(p)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_template(template: &str) -> Result<()> {
    let tokens = template.matches(TOKEN_SLOT).count();
    let parents = template.matches(PARENT_SLOT).count();
    if tokens == 0 {
        return Err(Error::SlotMissing("token"));
    }
    if tokens > 1 {
        return Err(Error::InvalidTemplate {
            template: template.to_string(),
            reason: "more than one token slot".into(),
        });
    }
    if parents > 1 {
        return Err(Error::InvalidTemplate {
            template: template.to_string(),
            reason: "more than one parent slot".into(),
        });
    }
    Ok(())
}

/// What goes into the token slot.
#[derive(Clone, Copy, Debug)]
pub enum SlotFill<'a> {
    /// The learned rows of a token.
    Token(&'a TokenEmbedding),
    /// Arbitrary rows (used during training, before they become a token).
    Rows(&'a [Vector]),
    /// Plain text, e.g. an attribute word `a_i`.
    Text(&'a str),
    /// Drop the slot, e.g. for the parent-only prompt `[t, c]`.
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TokenPiece {
    Vocab(u32),
    /// An injected embedding row; `index` is its position within the custom token.
    Injected {
        row: Vector,
        index: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenSequence {
    pieces: Vec<TokenPiece>,
}

impl TokenSequence {
    pub fn from_ids(ids: &[u32]) -> Self {
        Self { pieces: ids.iter().map(|&i| TokenPiece::Vocab(i)).collect() }
    }

    pub fn pieces(&self) -> &[TokenPiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Positions of injected rows, in order.
    pub fn injected_positions(&self) -> Vec<usize> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, TokenPiece::Injected { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

enum Segment<'t> {
    Text(&'t str),
    Token,
    Parent,
}

fn segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while !rest.is_empty() {
        let next_token = rest.find(TOKEN_SLOT);
        let next_parent = rest.find(PARENT_SLOT);
        let (pos, seg) = match (next_token, next_parent) {
            (Some(a), Some(b)) if a < b => (a, Segment::Token),
            (Some(_), Some(b)) => (b, Segment::Parent),
            (Some(a), None) => (a, Segment::Token),
            (None, Some(b)) => (b, Segment::Parent),
            (None, None) => {
                out.push(Segment::Text(rest));
                break;
            }
        };
        if pos > 0 {
            out.push(Segment::Text(&rest[..pos]));
        }
        out.push(seg);
        rest = &rest[pos + 3..];
    }
    out
}

/// Assembles `template` with the custom token injected at `{*}` and the
/// tokenized `parent` at `{c}`.
pub fn assemble(
    template: &PromptTemplate,
    token: &TokenEmbedding,
    parent: &str,
    encoder: &dyn TextEncoder,
) -> Result<TokenSequence> {
    assemble_with(&template.context_text, SlotFill::Token(token), parent, PromptOrder::default(), encoder)
}

/// General assembly over a single template string.
pub fn assemble_with(
    template: &str,
    fill: SlotFill<'_>,
    parent: &str,
    order: PromptOrder,
    encoder: &dyn TextEncoder,
) -> Result<TokenSequence> {
    validate_template(template)?;
    let mut pieces = Vec::new();
    for seg in segments(template) {
        let seg = match (order, seg) {
            (PromptOrder::ParentThenToken, Segment::Token) => Segment::Parent,
            (PromptOrder::ParentThenToken, Segment::Parent) => Segment::Token,
            (_, s) => s,
        };
        match seg {
            Segment::Text(text) => {
                pieces.extend(encoder.tokenize(text)?.into_iter().map(TokenPiece::Vocab));
            }
            Segment::Parent => {
                pieces.extend(encoder.tokenize(parent)?.into_iter().map(TokenPiece::Vocab));
            }
            Segment::Token => match fill {
                SlotFill::Token(token) => inject(&mut pieces, token.vectors(), encoder)?,
                SlotFill::Rows(rows) => inject(&mut pieces, rows, encoder)?,
                SlotFill::Text(text) => {
                    pieces.extend(encoder.tokenize(text)?.into_iter().map(TokenPiece::Vocab));
                }
                SlotFill::Empty => {}
            },
        }
    }
    if pieces.len() > encoder.context_len() {
        return Err(Error::SequenceTooLong { len: pieces.len(), max: encoder.context_len() });
    }
    Ok(TokenSequence { pieces })
}

fn inject(pieces: &mut Vec<TokenPiece>, rows: &[Vector], encoder: &dyn TextEncoder) -> Result<()> {
    for (index, row) in rows.iter().enumerate() {
        if row.len() != encoder.embed_dim() {
            return Err(Error::DimensionMismatch { expected: encoder.embed_dim(), got: row.len() });
        }
        pieces.push(TokenPiece::Injected { row: row.clone(), index });
    }
    Ok(())
}
