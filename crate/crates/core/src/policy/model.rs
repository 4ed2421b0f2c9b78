use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Pick, Tape, Var};
use crate::error::{Error, Result};
use crate::sketch::{ConstraintKind, PrimitiveKind, Sketch};
use crate::tokenizer::{
    encode_geometry, grammar_mask, GrammarState, Position, PrimitiveTokens, Token, TokenClass, COORD_BINS, COORD_SLOTS,
    MAX_SEQ_LEN,
};

/// Type-head columns: the 14 kinds then EOS.
pub const TYPE_COLS: usize = ConstraintKind::ALL.len() + 1;
pub const EOS_COL: usize = TYPE_COLS - 1;
/// Decoder input rows: the 14 kinds, SOS, and the shared REF row.
const DEC_TOKENS: usize = ConstraintKind::ALL.len() + 2;
const SOS_ROW: usize = ConstraintKind::ALL.len();
const REF_ROW: usize = SOS_ROW + 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub feedforward_dim: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            feedforward_dim: 256,
            max_seq_len: MAX_SEQ_LEN,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads)));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zeros,
    Ones,
    /// Uniform in +-1/sqrt(fan_in), times a gain.
    FanIn(f64),
    /// Uniform in [0.5, 1.5].
    AroundOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    init: Option<Init>,
}

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct FfIds {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: NormIds,
    attn: AttnIds,
    ln2: NormIds,
    ff: FfIds,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: NormIds,
    self_attn: AttnIds,
    ln2: NormIds,
    cross: AttnIds,
    ln3: NormIds,
    ff: FfIds,
}

/// Tensor indices of every named weight.
#[derive(Debug, Clone)]
struct Layout {
    kind: usize,
    fixed: usize,
    coord: usize,
    slot: usize,
    enc: Vec<EncLayer>,
    enc_norm: NormIds,
    dec_tok: usize,
    dec_pos: usize,
    dec: Vec<DecLayer>,
    dec_norm: NormIds,
    type_w: usize,
    type_b: usize,
    ptr: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.specs.push(TensorSpec { name, rows, cols, init: Some(init) });
        self.specs.len() - 1
    }

    fn norm(&mut self, p: &str, d: usize) -> NormIds {
        NormIds { g: self.add(format!("{p}.g"), 1, d, Init::Ones), b: self.add(format!("{p}.b"), 1, d, Init::Zeros) }
    }

    fn attn(&mut self, p: &str, d: usize) -> AttnIds {
        AttnIds {
            wq: self.add(format!("{p}.wq"), d, d, Init::FanIn(1.0)),
            wk: self.add(format!("{p}.wk"), d, d, Init::FanIn(1.0)),
            wv: self.add(format!("{p}.wv"), d, d, Init::FanIn(1.0)),
            wo: self.add(format!("{p}.wo"), d, d, Init::FanIn(1.0)),
        }
    }

    fn ff(&mut self, p: &str, d: usize, f: usize) -> FfIds {
        FfIds {
            w1: self.add(format!("{p}.w1"), d, f, Init::FanIn(1.0)),
            b1: self.add(format!("{p}.b1"), 1, f, Init::Zeros),
            w2: self.add(format!("{p}.w2"), f, d, Init::FanIn(1.0)),
            b2: self.add(format!("{p}.b2"), 1, d, Init::Zeros),
        }
    }
}

fn layout(cfg: &PolicyConfig) -> (Layout, Vec<TensorSpec>) {
    let (d, f) = (cfg.embed_dim, cfg.feedforward_dim);
    let mut b = Builder { specs: Vec::new() };
    let kind = b.add("enc.kind".into(), 4, d, Init::FanIn(1.0));
    let fixed = b.add("enc.fixed".into(), 2, d, Init::FanIn(1.0));
    let coord = b.add("enc.coord".into(), COORD_BINS, d, Init::FanIn(1.0));
    let slot = b.add("enc.slot".into(), COORD_SLOTS, d, Init::AroundOne);
    let enc = (0..cfg.encoder_layers)
        .map(|l| EncLayer {
            ln1: b.norm(&format!("enc.{l}.ln1"), d),
            attn: b.attn(&format!("enc.{l}.attn"), d),
            ln2: b.norm(&format!("enc.{l}.ln2"), d),
            ff: b.ff(&format!("enc.{l}.ff"), d, f),
        })
        .collect();
    let enc_norm = b.norm("enc.norm", d);
    let dec_tok = b.add("dec.tok".into(), DEC_TOKENS, d, Init::FanIn(1.0));
    let dec_pos = b.add("dec.pos".into(), cfg.max_seq_len, d, Init::FanIn(1.0));
    let dec = (0..cfg.decoder_layers)
        .map(|l| DecLayer {
            ln1: b.norm(&format!("dec.{l}.ln1"), d),
            self_attn: b.attn(&format!("dec.{l}.self"), d),
            ln2: b.norm(&format!("dec.{l}.ln2"), d),
            cross: b.attn(&format!("dec.{l}.cross"), d),
            ln3: b.norm(&format!("dec.{l}.ln3"), d),
            ff: b.ff(&format!("dec.{l}.ff"), d, f),
        })
        .collect();
    let dec_norm = b.norm("dec.norm", d);
    let type_w = b.add("head.type_w".into(), d, TYPE_COLS, Init::FanIn(0.02));
    let type_b = b.add("head.type_b".into(), 1, TYPE_COLS, Init::Zeros);
    let ptr = b.add("head.ptr".into(), d, d, Init::FanIn(0.02));
    let l = Layout { kind, fixed, coord, slot, enc, enc_norm, dec_tok, dec_pos, dec, dec_norm, type_w, type_b, ptr };
    (l, b.specs)
}

/// All policy weights plus an update counter.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub tensors: Vec<Mat>,
    pub version: u64,
    specs: Vec<TensorSpec>,
    layout: Layout,
}

impl PartialEq for PolicyParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.tensors == other.tensors && self.version == other.version
    }
}

/// Column range of the combined [type | pointer] logits allowed next.
pub fn allowed_range(state: &GrammarState, len: usize, max_len: usize, n: usize) -> (usize, usize) {
    match state.position() {
        Position::ExpectRef(_) => (TYPE_COLS, TYPE_COLS + n),
        _ => {
            // Leave room for a full item plus EOS.
            if grammar_mask(state).types && len + 4 <= max_len {
                (0, TYPE_COLS)
            } else {
                (EOS_COL, TYPE_COLS)
            }
        }
    }
}

/// Combined-logit column of a decoder output token.
pub fn token_column(token: Token) -> Option<usize> {
    match token.class()? {
        TokenClass::Type(k) => Some(k.index()),
        TokenClass::Eos => Some(EOS_COL),
        TokenClass::Ref(i) => Some(TYPE_COLS + i),
        _ => None,
    }
}

/// Inverse of [`token_column`].
pub fn column_token(col: usize) -> Token {
    if col < EOS_COL {
        Token::of_type(ConstraintKind::ALL[col])
    } else if col == EOS_COL {
        Token::EOS
    } else {
        Token::reference(col - TYPE_COLS)
    }
}

/// Per-step scoring plan for a token stream: grammar-checked picks and the
/// decoder input rows.
#[derive(Debug, Clone)]
pub struct SequencePlan {
    pub picks: Vec<Pick>,
    pub input_rows: Vec<usize>,
    /// Primitive referenced by each input position, if it is a REF.
    pub input_refs: Vec<Option<usize>>,
}

pub fn plan_sequence(tokens: &[Token], kinds: &[PrimitiveKind], max_len: usize) -> Result<SequencePlan> {
    let n = kinds.len();
    let bad = |m: &str| Error::StructurallyInvalid(m.to_string());
    if tokens.first() != Some(&Token::SOS) {
        return Err(bad("missing SOS"));
    }
    if tokens.len() > max_len {
        return Err(bad("longer than max_seq_len"));
    }
    let mut state = GrammarState::new();
    let mut picks = Vec::with_capacity(tokens.len());
    let mut input_rows = vec![SOS_ROW];
    let mut input_refs = vec![None];
    for (t, &tok) in tokens.iter().enumerate().skip(1) {
        if state.position() == Position::Done {
            return Err(bad("tokens after EOS"));
        }
        let (lo, hi) = allowed_range(&state, t, max_len, n);
        let col = token_column(tok).ok_or_else(|| bad("non-decoder token"))?;
        if col < lo || col >= hi {
            return Err(bad("token not allowed by the grammar"));
        }
        picks.push(Pick { row: t - 1, col, lo, hi });
        state.advance(tok, kinds).map_err(|e| bad(&e.to_string()))?;
        match tok.class() {
            Some(TokenClass::Type(k)) => {
                input_rows.push(k.index());
                input_refs.push(None);
            }
            Some(TokenClass::Ref(i)) => {
                input_rows.push(REF_ROW);
                input_refs.push(Some(i));
            }
            _ => {}
        }
    }
    if state.position() != Position::Done {
        return Err(bad("missing EOS"));
    }
    input_rows.truncate(picks.len());
    input_refs.truncate(picks.len());
    Ok(SequencePlan { picks, input_rows, input_refs })
}

impl PolicyParams {
    pub fn init(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = specs
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.rows as f64).sqrt();
                Mat::from_fn(s.rows, s.cols, |_, _| match s.init.expect("builder sets init") {
                    Init::Zeros => 0.0,
                    Init::Ones => 1.0,
                    Init::FanIn(gain) => gain * rng.gen_range(-bound..bound),
                    Init::AroundOne => rng.gen_range(0.5..1.5),
                })
            })
            .collect();
        Ok(Self { config, tensors, version: 0, specs, layout })
    }

    /// Rebuilds from stored tensors; shapes must match the config.
    pub fn from_tensors(config: PolicyConfig, tensors: Vec<Mat>, version: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = layout(&config);
        if specs.len() != tensors.len()
            || specs.iter().zip(&tensors).any(|(s, t)| (s.rows, s.cols) != t.shape())
        {
            return Err(Error::Checkpoint("tensor shapes do not match the config".into()));
        }
        Ok(Self { config, tensors, version, specs, layout })
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.rows * s.cols).sum()
    }

    /// Flat view, tensors in layout order, each column-major.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in &self.tensors {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, v: f64) {
        for t in &mut self.tensors {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn attn_block(&self, tape: &mut Tape, x: Var, kv: Var, ids: AttnIds, causal: bool) -> Var {
        let (wq, wk, wv, wo) = (tape.param(ids.wq), tape.param(ids.wk), tape.param(ids.wv), tape.param(ids.wo));
        let q = tape.matmul(x, wq);
        let k = tape.matmul(kv, wk);
        let v = tape.matmul(kv, wv);
        let a = tape.attention(q, k, v, self.config.heads, causal);
        tape.matmul(a, wo)
    }

    fn norm(&self, tape: &mut Tape, x: Var, ids: NormIds) -> Var {
        let (g, b) = (tape.param(ids.g), tape.param(ids.b));
        tape.layer_norm(x, g, b)
    }

    fn ff_block(&self, tape: &mut Tape, x: Var, ids: FfIds) -> Var {
        let (w1, b1, w2, b2) = (tape.param(ids.w1), tape.param(ids.b1), tape.param(ids.w2), tape.param(ids.b2));
        let h = tape.matmul(x, w1);
        let h = tape.add_row(h, b1);
        let h = tape.gelu(h);
        let h = tape.matmul(h, w2);
        tape.add_row(h, b2)
    }

    /// Encoder outputs, one row per primitive.
    pub fn encode_on_tape(&self, tape: &mut Tape, geom: &[PrimitiveTokens]) -> Var {
        let l = &self.layout;
        let kind = tape.param(l.kind);
        let fixed = tape.param(l.fixed);
        let coord = tape.param(l.coord);
        let slot = tape.param(l.slot);
        let k = tape.gather_rows(kind, geom.iter().map(|g| Some(g.kind.index())).collect());
        let f = tape.gather_rows(fixed, geom.iter().map(|g| Some(g.fixed as usize)).collect());
        let c = tape.coord_embed(coord, slot, geom.iter().map(|g| g.bins.iter().map(|&b| b as usize).collect()).collect());
        let mut x = tape.add(k, f);
        x = tape.add(x, c);
        for layer in &l.enc {
            let h = self.norm(tape, x, layer.ln1);
            let a = self.attn_block(tape, h, h, layer.attn, false);
            x = tape.add(x, a);
            let h = self.norm(tape, x, layer.ln2);
            let m = self.ff_block(tape, h, layer.ff);
            x = tape.add(x, m);
        }
        self.norm(tape, x, l.enc_norm)
    }

    /// Per-token log-probabilities (column vector) of a planned sequence.
    pub fn decode_on_tape(&self, tape: &mut Tape, enc: Var, plan: &SequencePlan) -> Var {
        let l = &self.layout;
        let t = plan.input_rows.len();
        let tok = tape.param(l.dec_tok);
        let pos = tape.param(l.dec_pos);
        let e = tape.gather_rows(tok, plan.input_rows.iter().map(|&r| Some(r)).collect());
        let r = tape.gather_rows(enc, plan.input_refs.clone());
        let p = tape.gather_rows(pos, (0..t).map(Some).collect());
        let mut x = tape.add(e, r);
        x = tape.add(x, p);
        for layer in &l.dec {
            let h = self.norm(tape, x, layer.ln1);
            let a = self.attn_block(tape, h, h, layer.self_attn, true);
            x = tape.add(x, a);
            let h = self.norm(tape, x, layer.ln2);
            let a = self.attn_block(tape, h, enc, layer.cross, false);
            x = tape.add(x, a);
            let h = self.norm(tape, x, layer.ln3);
            let m = self.ff_block(tape, h, layer.ff);
            x = tape.add(x, m);
        }
        let h = self.norm(tape, x, l.dec_norm);
        let (tw, tb, pw) = (tape.param(l.type_w), tape.param(l.type_b), tape.param(l.ptr));
        let type_logits = tape.matmul(h, tw);
        let type_logits = tape.add_row(type_logits, tb);
        let q = tape.matmul(h, pw);
        let ptr = tape.matmul_t(q, enc);
        let ptr = tape.scale(ptr, 1.0 / (self.config.embed_dim as f64).sqrt());
        let logits = tape.concat_cols(type_logits, ptr);
        tape.log_softmax_pick(logits, plan.picks.clone())
    }

    /// Encoder for inference, with per-layer cross-attention keys and values.
    pub fn encode(&self, sketch: &Sketch) -> Result<Encoded> {
        let geom = encode_geometry(sketch)?;
        let mut tape = Tape::new(&self.tensors);
        let enc = self.encode_on_tape(&mut tape, &geom);
        let out = tape.value(enc).clone();
        let t = &self.tensors;
        let cross = self
            .layout
            .dec
            .iter()
            .map(|layer| (&out * &t[layer.cross.wk], &out * &t[layer.cross.wv]))
            .collect();
        let ptr_keys = out.clone() * (1.0 / (self.config.embed_dim as f64).sqrt());
        Ok(Encoded { out, cross, ptr_keys })
    }

    /// Fresh incremental decoder state.
    pub fn start(&self) -> DecoderCache {
        let d = self.config.embed_dim;
        let cap = self.config.max_seq_len;
        DecoderCache {
            keys: self.layout.dec.iter().map(|_| Mat::zeros(cap, d)).collect(),
            values: self.layout.dec.iter().map(|_| Mat::zeros(cap, d)).collect(),
            len: 0,
        }
    }

    fn norm_row(&self, x: &Mat, ids: NormIds) -> Mat {
        let (xhat, _) = super::tape::normalize_rows(x);
        let mut y = xhat.component_mul(&self.tensors[ids.g]);
        y += &self.tensors[ids.b];
        y
    }

    /// Feeds one decoder input token and returns the combined logits
    /// `[type (15) | pointer (n)]` for the next position.
    pub fn step(&self, enc: &Encoded, cache: &mut DecoderCache, input: Token) -> Vec<f64> {
        let t = &self.tensors;
        let l = &self.layout;
        let pos = cache.len;
        let row = match input.class() {
            Some(TokenClass::Sos) => SOS_ROW,
            Some(TokenClass::Type(k)) => k.index(),
            Some(TokenClass::Ref(_)) => REF_ROW,
            other => panic!("{other:?} is not a decoder input"),
        };
        let mut x: Mat = t[l.dec_tok].rows(row, 1) + t[l.dec_pos].rows(pos, 1);
        if let Some(TokenClass::Ref(i)) = input.class() {
            x += enc.out.rows(i, 1);
        }
        let heads = self.config.heads;
        for (li, layer) in l.dec.iter().enumerate() {
            let h = self.norm_row(&x, layer.ln1);
            let q = &h * &t[layer.self_attn.wq];
            cache.keys[li].rows_mut(pos, 1).copy_from(&(&h * &t[layer.self_attn.wk]));
            cache.values[li].rows_mut(pos, 1).copy_from(&(&h * &t[layer.self_attn.wv]));
            let k = cache.keys[li].rows(0, pos + 1).into_owned();
            let v = cache.values[li].rows(0, pos + 1).into_owned();
            let (a, _) = super::tape::attention(&q, &k, &v, heads, false);
            x += &a * &t[layer.self_attn.wo];
            let h = self.norm_row(&x, layer.ln2);
            let q = &h * &t[layer.cross.wq];
            let (ck, cv) = &enc.cross[li];
            let (a, _) = super::tape::attention(&q, ck, cv, heads, false);
            x += &a * &t[layer.cross.wo];
            let h = self.norm_row(&x, layer.ln3);
            let mut m = &h * &t[layer.ff.w1];
            m += &t[layer.ff.b1];
            m.apply(|v| *v = 0.5 * *v * (1.0 + (0.797_884_560_802_865_4 * (*v + 0.044715 * *v * *v * *v)).tanh()));
            let mut m = &m * &t[layer.ff.w2];
            m += &t[layer.ff.b2];
            x += m;
        }
        cache.len += 1;
        let h = self.norm_row(&x, l.dec_norm);
        let mut logits: Vec<f64> = (&h * &t[l.type_w] + &t[l.type_b]).iter().copied().collect();
        let q = &h * &t[l.ptr];
        logits.extend((q * enc.ptr_keys.transpose()).iter().copied());
        logits
    }
}

/// Encoder output and per-layer cross-attention projections.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub out: Mat,
    cross: Vec<(Mat, Mat)>,
    ptr_keys: Mat,
}

impl Encoded {
    pub fn primitive_count(&self) -> usize {
        self.out.nrows()
    }
}

/// Self-attention keys and values of already-fed decoder positions.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    keys: Vec<Mat>,
    values: Vec<Mat>,
    len: usize,
}

impl DecoderCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
