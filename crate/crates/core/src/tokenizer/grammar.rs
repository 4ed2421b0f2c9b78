use super::{Token, TokenClass};
use crate::error::{Error, Result};
use crate::sketch::{ConstraintKind, PrimitiveKind, MAX_CONSTRAINTS};

/// Where the decoder stands inside `SOS (TYPE REF{1,2})* EOS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    ExpectTypeOrEos,
    /// References still owed by the open item. Horizontal and Vertical report
    /// 2 until their first operand reveals whether it is a line.
    ExpectRef(usize),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarState {
    open: Option<(ConstraintKind, usize)>,
    emitted: usize,
    done: bool,
}

/// Token classes permitted at the next step. Operand kinds are never checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllowedClasses {
    pub types: bool,
    pub eos: bool,
    pub refs: bool,
}

impl AllowedClasses {
    pub fn admits(&self, token: Token, primitive_count: usize) -> bool {
        match token.class() {
            Some(TokenClass::Type(_)) => self.types,
            Some(TokenClass::Eos) => self.eos,
            Some(TokenClass::Ref(i)) => self.refs && i < primitive_count,
            _ => false,
        }
    }
}

impl GrammarState {
    /// State right after `SOS`.
    pub fn new() -> Self {
        Self { open: None, emitted: 0, done: false }
    }

    /// Completed plus open items.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn position(&self) -> Position {
        if self.done {
            return Position::Done;
        }
        match self.open {
            None => Position::ExpectTypeOrEos,
            Some((kind, 0)) => Position::ExpectRef(kind.max_arity()),
            Some((kind, got)) => Position::ExpectRef(kind.max_arity() - got),
        }
    }

    /// Consumes one token. `kinds` lists the sketch's primitive kinds, used
    /// only to resolve Horizontal/Vertical arity from the first operand.
    pub fn advance(&mut self, token: Token, kinds: &[PrimitiveKind]) -> Result<()> {
        let unexpected = || Error::UnexpectedToken { token: token.0, position: 0 };
        if self.done {
            return Err(unexpected());
        }
        match (self.open, token.class()) {
            (None, Some(TokenClass::Eos)) => self.done = true,
            (None, Some(TokenClass::Type(kind))) if self.emitted < MAX_CONSTRAINTS => {
                self.open = Some((kind, 0));
                self.emitted += 1;
            }
            (Some((kind, got)), Some(TokenClass::Ref(i))) => {
                let first = if got == 0 { kinds.get(i).copied() } else { None };
                let arity = match first {
                    Some(k) => kind.arity_given(k),
                    None => kind.max_arity(),
                };
                self.open = if got + 1 >= arity { None } else { Some((kind, got + 1)) };
            }
            _ => return Err(unexpected()),
        }
        Ok(())
    }
}

impl Default for GrammarState {
    fn default() -> Self {
        Self::new()
    }
}

pub fn grammar_mask(state: &GrammarState) -> AllowedClasses {
    match state.position() {
        Position::ExpectTypeOrEos => {
            AllowedClasses { types: state.emitted < MAX_CONSTRAINTS, eos: true, refs: false }
        }
        Position::ExpectRef(_) => AllowedClasses { types: false, eos: false, refs: true },
        Position::Done => AllowedClasses { types: false, eos: false, refs: false },
    }
}
