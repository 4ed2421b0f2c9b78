//! Token vocabulary, geometry quantization, and the constraint grammar.
//!
//! Geometry is input-only: each primitive becomes one encoder position
//! (kind, fixed flag, five sample points quantized to a 64-bin grid). The
//! decoder emits `SOS (TYPE REF{1,2})* EOS`; dimension values are never
//! tokenized and are re-measured from the geometry at decode time.

mod grammar;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sketch::{
    measure_dimension, validate_constraint, ConstraintInstance, ConstraintKind, ConstraintSequence, PrimitiveKind,
    Sketch, MAX_CONSTRAINTS, MAX_PRIMITIVES,
};

pub use grammar::{grammar_mask, AllowedClasses, GrammarState, Position};

/// Quantization bins per axis for input geometry.
pub const COORD_BINS: usize = 64;
/// Sample points per primitive.
pub const SAMPLE_POINTS: usize = 5;
/// Coordinate slots per primitive (5 points x 2 axes).
pub const COORD_SLOTS: usize = 2 * SAMPLE_POINTS;
/// `SOS` + 64 items of at most three tokens + `EOS`.
pub const MAX_SEQ_LEN: usize = 1 + MAX_CONSTRAINTS * 3 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(pub u32);

const TYPE_BASE: u32 = 3;
const REF_BASE: u32 = TYPE_BASE + ConstraintKind::ALL.len() as u32;
const KIND_BASE: u32 = REF_BASE + MAX_PRIMITIVES as u32;
const FLAG_BASE: u32 = KIND_BASE + 4;
const COORD_BASE: u32 = FLAG_BASE + 2;
const VOCAB_SIZE: u32 = COORD_BASE + COORD_BINS as u32;

/// What a token id denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Pad,
    Sos,
    Eos,
    Type(ConstraintKind),
    Ref(usize),
    PrimitiveKind(PrimitiveKind),
    Fixed(bool),
    Coord(usize),
}

impl Token {
    pub const PAD: Token = Token(0);
    pub const SOS: Token = Token(1);
    pub const EOS: Token = Token(2);

    pub fn of_type(kind: ConstraintKind) -> Token {
        Token(TYPE_BASE + kind.index() as u32)
    }

    pub fn reference(i: usize) -> Token {
        assert!(i < MAX_PRIMITIVES, "reference {i} out of range");
        Token(REF_BASE + i as u32)
    }

    pub fn class(self) -> Option<TokenClass> {
        let id = self.0;
        Some(match id {
            0 => TokenClass::Pad,
            1 => TokenClass::Sos,
            2 => TokenClass::Eos,
            _ if id < REF_BASE => TokenClass::Type(ConstraintKind::from_index((id - TYPE_BASE) as usize)?),
            _ if id < KIND_BASE => TokenClass::Ref((id - REF_BASE) as usize),
            _ if id < FLAG_BASE => TokenClass::PrimitiveKind(PrimitiveKind::ALL[(id - KIND_BASE) as usize]),
            _ if id < COORD_BASE => TokenClass::Fixed(id - FLAG_BASE == 1),
            _ if id < VOCAB_SIZE => TokenClass::Coord((id - COORD_BASE) as usize),
            _ => return None,
        })
    }

    pub fn name(self) -> String {
        match self.class() {
            Some(TokenClass::Pad) => "<PAD>".into(),
            Some(TokenClass::Sos) => "<SOS>".into(),
            Some(TokenClass::Eos) => "<EOS>".into(),
            Some(TokenClass::Type(k)) => format!("<{}>", k.mnemonic()),
            Some(TokenClass::Ref(i)) => format!("<REF_{i}>"),
            Some(TokenClass::PrimitiveKind(k)) => format!("<{}>", format!("{k:?}").to_uppercase()),
            Some(TokenClass::Fixed(f)) => if f { "<FIXED>" } else { "<FREE>" }.into(),
            Some(TokenClass::Coord(b)) => format!("<COORD_{b}>"),
            None => format!("<UNK_{}>", self.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VocabEntry {
    pub id: u32,
    pub name: String,
}

/// Token table plus the fixed conventions other modules rely on.
#[derive(Debug, Clone, Serialize)]
pub struct Vocabulary {
    pub tokens: Vec<VocabEntry>,
    pub coord_bins: usize,
    pub max_seq_len: usize,
    pub wl_iterations: usize,
    pub wl_digest: &'static str,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self {
            tokens: (0..VOCAB_SIZE).map(|id| VocabEntry { id, name: Token(id).name() }).collect(),
            coord_bins: COORD_BINS,
            max_seq_len: MAX_SEQ_LEN,
            wl_iterations: crate::eval::WL_ITERATIONS,
            wl_digest: "sha256",
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// One encoder position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimitiveTokens {
    pub kind: PrimitiveKind,
    pub fixed: bool,
    /// x0, y0, x1, y1, ... over the five sample points.
    pub bins: [u8; COORD_SLOTS],
}

impl PrimitiveTokens {
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = vec![Token(KIND_BASE + self.kind.index() as u32), Token(FLAG_BASE + self.fixed as u32)];
        out.extend(self.bins.iter().map(|&b| Token(COORD_BASE + b as u32)));
        out
    }
}

/// Quantizes every primitive's sample points onto the sketch canvas.
pub fn encode_geometry(sketch: &Sketch) -> Result<Vec<PrimitiveTokens>> {
    if sketch.len() > MAX_PRIMITIVES {
        return Err(Error::TooManyPrimitives { count: sketch.len(), limit: MAX_PRIMITIVES });
    }
    Ok(sketch
        .primitives
        .iter()
        .map(|p| {
            let mut bins = [0u8; COORD_SLOTS];
            for (k, pt) in p.sample_points().iter().enumerate() {
                for axis in 0..2 {
                    bins[2 * k + axis] = sketch.canvas.bin(pt[axis], axis, COORD_BINS) as u8;
                }
            }
            PrimitiveTokens { kind: p.kind, fixed: p.fixed, bins }
        })
        .collect())
}

/// `SOS`, then per item a type token and its reference tokens, then `EOS`.
pub fn encode_constraints(seq: &ConstraintSequence) -> Result<Vec<Token>> {
    let mut out = Vec::with_capacity(2 + 3 * seq.len());
    out.push(Token::SOS);
    for c in seq.iter() {
        if c.refs.is_empty() || c.refs.len() > c.kind.max_arity() {
            return Err(Error::BadArity { kind: c.kind, expected: c.kind.max_arity(), got: c.refs.len() });
        }
        out.push(Token::of_type(c.kind));
        for &r in &c.refs {
            if r >= MAX_PRIMITIVES {
                return Err(Error::RefOutOfRange { reference: r, count: MAX_PRIMITIVES });
            }
            out.push(Token::reference(r));
        }
    }
    out.push(Token::EOS);
    Ok(out)
}

/// One item per type token, references grouped; stops at `EOS`.
///
/// Returns the raw items and the token span of each item, without semantic
/// checks. Fails on structural errors only.
pub fn parse_structure(tokens: &[Token], kinds: &[PrimitiveKind]) -> Result<Vec<(ConstraintKind, Vec<usize>)>> {
    if tokens.first() != Some(&Token::SOS) {
        return Err(Error::UnexpectedToken { token: tokens.first().map_or(0, |t| t.0), position: 0 });
    }
    let mut state = GrammarState::new();
    let mut items: Vec<(ConstraintKind, Vec<usize>)> = Vec::new();
    for (pos, &tok) in tokens.iter().enumerate().skip(1) {
        match (state.position(), tok.class()) {
            (Position::Done, _) => break,
            (Position::ExpectTypeOrEos, Some(TokenClass::Type(kind))) => items.push((kind, Vec::new())),
            (Position::ExpectTypeOrEos, Some(TokenClass::Eos)) => {}
            (Position::ExpectRef(_), Some(TokenClass::Ref(i))) => {
                if i >= kinds.len() {
                    return Err(Error::RefOutOfRange { reference: i, count: kinds.len() });
                }
                items.last_mut().expect("ref follows a type").1.push(i);
            }
            (Position::ExpectRef(_), Some(TokenClass::Eos | TokenClass::Type(_))) => {
                let (kind, refs) = items.last().expect("ref follows a type");
                let expected = refs.first().map_or(kind.max_arity(), |&r| kind.arity_given(kinds[r]));
                return Err(Error::BadArity { kind: *kind, expected, got: refs.len() });
            }
            _ => return Err(Error::UnexpectedToken { token: tok.0, position: pos }),
        }
        state.advance(tok, kinds)?;
    }
    if state.position() != Position::Done {
        return Err(Error::Truncated);
    }
    Ok(items)
}

/// Inverse of [`encode_constraints`]; dimension values are measured on `sketch`.
pub fn decode(tokens: &[Token], sketch: &Sketch) -> Result<ConstraintSequence> {
    let kinds = sketch.kinds();
    let items = parse_structure(tokens, &kinds)?;
    let mut out = Vec::with_capacity(items.len());
    for (kind, refs) in items {
        let mut c = ConstraintInstance::new(kind, refs);
        if kind.is_dimension() {
            c.value = Some(measure_dimension(sketch, &c)?);
        }
        validate_constraint(sketch, &c)?;
        out.push(c);
    }
    ConstraintSequence::new(out)
}

/// Token index ranges (into the full stream, SOS at 0) covering each item.
pub fn item_spans(tokens: &[Token]) -> Vec<std::ops::Range<usize>> {
    let mut spans: Vec<std::ops::Range<usize>> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match t.class() {
            Some(TokenClass::Type(_)) => spans.push(i..i + 1),
            Some(TokenClass::Ref(_)) => {
                if let Some(last) = spans.last_mut() {
                    last.end = i + 1;
                }
            }
            Some(TokenClass::Eos) => break,
            _ => {}
        }
    }
    spans
}
