//! Reversible template reduction for full λ-DCS parse text.
//!
//! Raw parses bury short programs under boilerplate: a `listValue` root,
//! `call` markers, `(string …)` wrappers, and a four-node idiom just to name
//! an entity type. `normalize_external` strips all of that down to a flat
//! token sequence and masks entity ids to placeholders; `denormalize` rebuilds
//! the original parse from the tokens and the placeholder map. Constructs
//! outside the rewrite table pass through verbatim (with a warning) so the
//! round trip never corrupts what it does not understand.

use std::collections::BTreeMap;

use crate::error::DataError;
use crate::lang::is_placeholder;

/// Call heads that survive normalization, with their argument counts.
/// The arities drive paren-free reconstruction in [`denormalize`].
const HEADS: &[(&str, usize)] = &[
    ("SW.filter", 4),
    ("SW.getProperty", 2),
    ("SW.ensureNumericProperty", 1),
    ("SW.ensureNumericEntity", 1),
];

const LIST_VALUE: &str = "SW.listValue";

fn head_arity(tok: &str) -> Option<usize> {
    HEADS.iter().find(|(h, _)| *h == tok).map(|&(_, n)| n)
}

/// Entity ids have a third dot segment on top of the type: `en.recipe.stew`.
fn is_entity_atom(tok: &str) -> bool {
    tok.starts_with("en.") && tok.matches('.').count() >= 2
}

/// Bare entity types: `en.recipe`.
fn is_type_atom(tok: &str) -> bool {
    tok.starts_with("en.") && tok.matches('.').count() == 1
}

#[derive(Debug, Clone, PartialEq)]
enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

fn atom(s: &str) -> Sexpr {
    Sexpr::Atom(s.to_string())
}

impl Sexpr {
    fn render(&self, out: &mut String) {
        match self {
            Sexpr::Atom(a) => out.push_str(a),
            Sexpr::List(items) => {
                out.push('(');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    item.render(out);
                }
                out.push(')');
            }
        }
    }

    fn to_text(&self) -> String {
        let mut s = String::new();
        self.render(&mut s);
        s
    }
}

/// Re-render parse text with one space between tokens and tight parens.
/// Useful for comparing parses that differ only in layout.
pub fn canonical_ldcs(text: &str) -> Result<String, DataError> {
    Ok(parse_sexpr(text)?.to_text())
}

fn lex(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

fn parse_sexpr(text: &str) -> Result<Sexpr, DataError> {
    let toks = lex(text);
    if toks.is_empty() {
        return Err(DataError::Normalize("empty input".to_string()));
    }
    let mut pos = 0usize;
    let node = parse_node(&toks, &mut pos)?;
    if pos != toks.len() {
        return Err(DataError::Normalize(format!(
            "trailing tokens after the s-expression, starting at token {pos} (`{}`)",
            toks[pos]
        )));
    }
    Ok(node)
}

fn parse_node(toks: &[String], pos: &mut usize) -> Result<Sexpr, DataError> {
    let tok = toks
        .get(*pos)
        .ok_or_else(|| DataError::Normalize("unbalanced parentheses".to_string()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                let next = toks.get(*pos).ok_or_else(|| {
                    DataError::Normalize("unbalanced parentheses".to_string())
                })?;
                if next == ")" {
                    *pos += 1;
                    return Ok(Sexpr::List(items));
                }
                items.push(parse_node(toks, pos)?);
            }
        }
        ")" => Err(DataError::Normalize(format!(
            "unexpected `)` at token {}",
            *pos - 1
        ))),
        _ => Ok(Sexpr::Atom(tok.clone())),
    }
}

/// `(call SW.getProperty (call SW.singleton TYPE) (string ! type))` — the
/// four-node idiom raw parses use to name an entity type. Collapses to TYPE.
fn as_type_idiom(node: &Sexpr) -> Option<&str> {
    let Sexpr::List(items) = node else { return None };
    let [Sexpr::Atom(call), Sexpr::Atom(head), singleton, marker] = items.as_slice() else {
        return None;
    };
    if call.as_str() != "call" || head.as_str() != "SW.getProperty" {
        return None;
    }
    let Sexpr::List(s_items) = singleton else { return None };
    let [Sexpr::Atom(c2), Sexpr::Atom(h2), Sexpr::Atom(ty)] = s_items.as_slice() else {
        return None;
    };
    if c2.as_str() != "call" || h2.as_str() != "SW.singleton" {
        return None;
    }
    let Sexpr::List(m_items) = marker else { return None };
    let [Sexpr::Atom(s), Sexpr::Atom(bang), Sexpr::Atom(t)] = m_items.as_slice() else {
        return None;
    };
    if s.as_str() == "string" && bang.as_str() == "!" && t.as_str() == "type" {
        Some(ty)
    } else {
        None
    }
}

fn type_idiom(ty: &str) -> Sexpr {
    Sexpr::List(vec![
        atom("call"),
        atom("SW.getProperty"),
        Sexpr::List(vec![atom("call"), atom("SW.singleton"), atom(ty)]),
        Sexpr::List(vec![atom("string"), atom("!"), atom("type")]),
    ])
}

/// `(call HEAD args…)` where HEAD is in the rewrite table at the right arity.
fn as_recognized_call(items: &[Sexpr]) -> Option<(&str, &[Sexpr])> {
    let [Sexpr::Atom(call), Sexpr::Atom(head), rest @ ..] = items else {
        return None;
    };
    if call.as_str() != "call" {
        return None;
    }
    let arity = head_arity(head)?;
    if rest.len() != arity {
        return None;
    }
    Some((head.as_str(), rest))
}

/// A single-atom `(string X)` wrapper, which collapses to the bare atom.
fn as_string_wrapper(items: &[Sexpr]) -> Option<&str> {
    let [Sexpr::Atom(s), Sexpr::Atom(x)] = items else {
        return None;
    };
    if s.as_str() == "string" {
        Some(x.as_str())
    } else {
        None
    }
}

/// Whether the normalized form of `node` still starts with a call head
/// (as opposed to collapsing to a single token or passing through verbatim).
fn is_surviving_call(node: &Sexpr) -> bool {
    if as_type_idiom(node).is_some() {
        return false;
    }
    let Sexpr::List(items) = node else {
        return false;
    };
    if as_string_wrapper(items).is_some() {
        return false;
    }
    as_recognized_call(items).is_some()
}

#[derive(Default)]
struct Normalizer {
    out: Vec<String>,
    map: BTreeMap<String, String>,
    by_entity: BTreeMap<String, String>,
}

impl Normalizer {
    fn placeholder_for(&mut self, ent: &str) -> String {
        if let Some(p) = self.by_entity.get(ent) {
            return p.clone();
        }
        let p = format!("e{}", self.by_entity.len());
        self.by_entity.insert(ent.to_string(), p.clone());
        self.map.insert(p.clone(), ent.to_string());
        p
    }

    fn emit_verbatim(&mut self, node: &Sexpr) {
        match node {
            Sexpr::Atom(a) => self.out.push(a.clone()),
            Sexpr::List(items) => {
                self.out.push("(".to_string());
                for item in items {
                    self.emit_verbatim(item);
                }
                self.out.push(")".to_string());
            }
        }
    }

    fn emit(&mut self, node: &Sexpr) {
        if let Some(ty) = as_type_idiom(node) {
            self.out.push(ty.to_string());
            return;
        }
        match node {
            Sexpr::Atom(a) => {
                if is_entity_atom(a) {
                    let p = self.placeholder_for(a);
                    self.out.push(p);
                } else {
                    self.out.push(a.clone());
                }
            }
            Sexpr::List(items) => {
                if let Some(x) = as_string_wrapper(items) {
                    self.out.push(x.to_string());
                    return;
                }
                if let Some((head, args)) = as_recognized_call(items) {
                    let head = head.to_string();
                    // A compound in the filter's value slot keeps one pair of
                    // parens; everything else flattens bare, since the arity
                    // table makes the prefix form unambiguous.
                    let grouped = if head == "SW.filter" {
                        args.len() - 1
                    } else {
                        usize::MAX
                    };
                    self.out.push(head);
                    for (i, arg) in args.iter().enumerate() {
                        let group = i == grouped && is_surviving_call(arg);
                        if group {
                            self.out.push("(".to_string());
                        }
                        self.emit(arg);
                        if group {
                            self.out.push(")".to_string());
                        }
                    }
                    return;
                }
                log::warn!(
                    "unrecognized construct passed through unnormalized: {}",
                    node.to_text()
                );
                self.emit_verbatim(node);
            }
        }
    }
}

/// Reduce full λ-DCS parse text to the flat normalized token form.
///
/// Drops the root `listValue` wrapper, collapses the type-naming idiom and
/// `(string …)` wrappers, strips `call` markers from recognized heads, and
/// masks entity ids to `e0`, `e1`, … in order of first appearance. Returns
/// the tokens and the placeholder → entity-id map that [`denormalize`] needs
/// to rebuild the original.
pub fn normalize_external(
    text: &str,
) -> Result<(Vec<String>, BTreeMap<String, String>), DataError> {
    let root = parse_sexpr(text)?;
    let body = match &root {
        Sexpr::List(items) => match items.as_slice() {
            [Sexpr::Atom(call), Sexpr::Atom(head), inner]
                if call.as_str() == "call" && head.as_str() == LIST_VALUE =>
            {
                inner
            }
            _ => &root,
        },
        _ => &root,
    };
    let mut n = Normalizer::default();
    n.emit(body);
    Ok((n.out, n.map))
}

struct NormParser<'a> {
    toks: &'a [String],
    pos: usize,
    map: &'a BTreeMap<String, String>,
}

impl<'a> NormParser<'a> {
    fn next(&mut self) -> Result<&'a str, DataError> {
        let tok = self.toks.get(self.pos).ok_or_else(|| {
            DataError::Normalize("unexpected end of the normalized sequence".to_string())
        })?;
        self.pos += 1;
        Ok(tok.as_str())
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn expect_close(&mut self) -> Result<(), DataError> {
        let pos = self.pos;
        let tok = self.next()?;
        if tok == ")" {
            Ok(())
        } else {
            Err(DataError::Normalize(format!(
                "expected `)` at token {pos}, found `{tok}`"
            )))
        }
    }

    fn parse_expr(&mut self) -> Result<Sexpr, DataError> {
        let pos = self.pos;
        let tok = self.next()?;
        if tok == "(" {
            // Grouping parens around a surviving call are redundant for the
            // parse; anything else inside parens is a verbatim pass-through.
            if self.peek().is_some_and(|t| head_arity(t).is_some()) {
                let inner = self.parse_expr()?;
                self.expect_close()?;
                return Ok(inner);
            }
            return self.parse_raw_list();
        }
        if tok == ")" {
            return Err(DataError::Normalize(format!(
                "unexpected `)` at token {pos}"
            )));
        }
        if let Some(arity) = head_arity(tok) {
            let mut items = vec![atom("call"), atom(tok)];
            for _ in 0..arity {
                items.push(self.parse_expr()?);
            }
            return Ok(Sexpr::List(items));
        }
        if is_placeholder(tok) {
            let ent = self.map.get(tok).ok_or_else(|| {
                DataError::Normalize(format!("placeholder `{tok}` is not bound in the entity map"))
            })?;
            return Ok(Sexpr::Atom(ent.clone()));
        }
        if is_type_atom(tok) {
            return Ok(type_idiom(tok));
        }
        if is_entity_atom(tok) {
            // Unmasked entity from a partial normalization; keep it bare.
            return Ok(Sexpr::Atom(tok.to_string()));
        }
        Ok(Sexpr::List(vec![atom("string"), atom(tok)]))
    }

    /// Rebuild a passed-through sub-expression exactly as it was emitted.
    /// The opening `(` has already been consumed.
    fn parse_raw_list(&mut self) -> Result<Sexpr, DataError> {
        let mut items = Vec::new();
        loop {
            let tok = self.peek().ok_or_else(|| {
                DataError::Normalize("unbalanced parentheses in the normalized sequence".to_string())
            })?;
            if tok == ")" {
                self.pos += 1;
                return Ok(Sexpr::List(items));
            }
            if tok == "(" {
                self.pos += 1;
                items.push(self.parse_raw_list()?);
            } else {
                items.push(Sexpr::Atom(tok.to_string()));
                self.pos += 1;
            }
        }
    }
}

/// Rebuild the original parse text from normalized tokens and the entity map.
///
/// Reconstructs a complete parse, including the `listValue` root that every
/// full parse carries. Output uses canonical spacing (single spaces, tight
/// parens); compare against [`canonical_ldcs`] of the original.
pub fn denormalize(
    tokens: &[String],
    entity_map: &BTreeMap<String, String>,
) -> Result<String, DataError> {
    if tokens.is_empty() {
        return Err(DataError::Normalize("empty normalized sequence".to_string()));
    }
    let mut p = NormParser {
        toks: tokens,
        pos: 0,
        map: entity_map,
    };
    let body = p.parse_expr()?;
    if p.pos != tokens.len() {
        return Err(DataError::Normalize(format!(
            "trailing tokens after the program, starting at token {} (`{}`)",
            p.pos, tokens[p.pos]
        )));
    }
    let root = Sexpr::List(vec![atom("call"), atom(LIST_VALUE), body]);
    Ok(root.to_text())
}
