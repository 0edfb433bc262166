//! The program language: expression tree, token serialization, and parser.
//!
//! Serialization is a prefix form with parentheses only around compound
//! value sub-programs, e.g.
//! `filter en.recipe posting_date >= ( getProperty e0 posting_date )`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::LangError;
use crate::lang::kb::format_number;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub const ALL: [Comparator; 6] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        Comparator::ALL.into_iter().find(|c| c.token() == tok)
    }

    /// Whether the comparator needs an ordered (numeric) domain.
    pub fn is_ordered(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuperlativeKind {
    ArgMax,
    ArgMin,
}

impl SuperlativeKind {
    pub fn token(self) -> &'static str {
        match self {
            SuperlativeKind::ArgMax => "argmax",
            SuperlativeKind::ArgMin => "argmin",
        }
    }
}

/// Right-hand side of a filter: a literal, an entity placeholder, or a
/// property read off a placeholder-bound entity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ValueExpr {
    Number(f64),
    Str(String),
    Placeholder(String),
    /// `( getProperty e0 property )`
    PlaceholderProperty { placeholder: String, property: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    /// All entities of the domain's type.
    TypeSet(String),
    Filter {
        source: Box<Expr>,
        property: String,
        cmp: Comparator,
        rhs: ValueExpr,
    },
    Superlative {
        source: Box<Expr>,
        kind: SuperlativeKind,
        property: String,
    },
    GetProperty {
        source: Box<Expr>,
        property: String,
    },
    Count(Box<Expr>),
}

pub const KW_FILTER: &str = "filter";
pub const KW_GET_PROPERTY: &str = "getProperty";
pub const KW_COUNT: &str = "count";

/// Structural tokens every program vocabulary must contain, independent of
/// any knowledge base.
pub fn structural_tokens() -> Vec<&'static str> {
    let mut out = vec![
        KW_FILTER,
        SuperlativeKind::ArgMax.token(),
        SuperlativeKind::ArgMin.token(),
        KW_GET_PROPERTY,
        KW_COUNT,
        "(",
        ")",
    ];
    out.extend(Comparator::ALL.iter().map(|c| c.token()));
    out
}

pub fn is_placeholder(tok: &str) -> bool {
    tok.len() >= 2
        && tok.starts_with('e')
        && tok[1..].chars().all(|c| c.is_ascii_digit())
}

impl Expr {
    pub fn serialize(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.write_tokens(&mut out);
        out
    }

    pub fn serialize_str(&self) -> String {
        self.serialize().join(" ")
    }

    fn write_tokens(&self, out: &mut Vec<String>) {
        match self {
            Expr::TypeSet(t) => out.push(t.clone()),
            Expr::Filter {
                source,
                property,
                cmp,
                rhs,
            } => {
                out.push(KW_FILTER.to_string());
                source.write_tokens(out);
                out.push(property.clone());
                out.push(cmp.token().to_string());
                match rhs {
                    ValueExpr::Number(n) => out.push(format_number(*n)),
                    ValueExpr::Str(s) => out.push(s.clone()),
                    ValueExpr::Placeholder(p) => out.push(p.clone()),
                    ValueExpr::PlaceholderProperty {
                        placeholder,
                        property,
                    } => {
                        out.push("(".to_string());
                        out.push(KW_GET_PROPERTY.to_string());
                        out.push(placeholder.clone());
                        out.push(property.clone());
                        out.push(")".to_string());
                    }
                }
            }
            Expr::Superlative {
                source,
                kind,
                property,
            } => {
                out.push(kind.token().to_string());
                source.write_tokens(out);
                out.push(property.clone());
            }
            Expr::GetProperty { source, property } => {
                out.push(KW_GET_PROPERTY.to_string());
                source.write_tokens(out);
                out.push(property.clone());
            }
            Expr::Count(source) => {
                out.push(KW_COUNT.to_string());
                source.write_tokens(out);
            }
        }
    }

    /// Placeholders mentioned anywhere in the expression, in token order.
    pub fn placeholders(&self) -> Vec<String> {
        self.serialize()
            .into_iter()
            .filter(|t| is_placeholder(t))
            .collect()
    }
}

struct Parser<'a> {
    tokens: &'a [String],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> LangError {
        LangError::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, LangError> {
        let tok = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| self.error(format!("expected {what}, found end of sequence")))?;
        self.pos += 1;
        Ok(tok.as_str())
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        let start = self.pos;
        let head = self.next("an expression")?;
        match head {
            KW_FILTER => {
                let source = Box::new(self.expr()?);
                let property = self.property()?;
                let cmp_pos = self.pos;
                let cmp_tok = self.next("a comparator")?;
                let cmp = Comparator::from_token(cmp_tok).ok_or_else(|| LangError::Parse {
                    pos: cmp_pos,
                    msg: format!("expected a comparator, found `{cmp_tok}`"),
                })?;
                let rhs = self.value_expr()?;
                Ok(Expr::Filter {
                    source,
                    property,
                    cmp,
                    rhs,
                })
            }
            "argmax" | "argmin" => {
                let kind = if head == "argmax" {
                    SuperlativeKind::ArgMax
                } else {
                    SuperlativeKind::ArgMin
                };
                let source = Box::new(self.expr()?);
                let property = self.property()?;
                Ok(Expr::Superlative {
                    source,
                    kind,
                    property,
                })
            }
            KW_GET_PROPERTY => {
                let source = Box::new(self.expr()?);
                let property = self.property()?;
                Ok(Expr::GetProperty { source, property })
            }
            KW_COUNT => Ok(Expr::Count(Box::new(self.expr()?))),
            "(" | ")" => Err(LangError::Parse {
                pos: start,
                msg: format!("`{head}` cannot start an expression"),
            }),
            _ => {
                if Comparator::from_token(head).is_some() {
                    return Err(LangError::Parse {
                        pos: start,
                        msg: format!("comparator `{head}` cannot start an expression"),
                    });
                }
                Ok(Expr::TypeSet(head.to_string()))
            }
        }
    }

    fn property(&mut self) -> Result<String, LangError> {
        let pos = self.pos;
        let tok = self.next("a property name")?;
        if tok == "(" || tok == ")" || Comparator::from_token(tok).is_some() {
            return Err(LangError::Parse {
                pos,
                msg: format!("expected a property name, found `{tok}`"),
            });
        }
        Ok(tok.to_string())
    }

    fn value_expr(&mut self) -> Result<ValueExpr, LangError> {
        let pos = self.pos;
        let tok = self.next("a value")?;
        if tok == "(" {
            let head_pos = self.pos;
            let head = self.next("getProperty")?;
            if head != KW_GET_PROPERTY {
                return Err(LangError::Parse {
                    pos: head_pos,
                    msg: format!("expected `getProperty` in a value sub-program, found `{head}`"),
                });
            }
            let ph_pos = self.pos;
            let placeholder = self.next("an entity placeholder")?;
            if !is_placeholder(placeholder) {
                return Err(LangError::Parse {
                    pos: ph_pos,
                    msg: format!("expected a placeholder (e0, e1, …), found `{placeholder}`"),
                });
            }
            let property = self.property()?;
            let close_pos = self.pos;
            let close = self.next("a closing parenthesis")?;
            if close != ")" {
                return Err(LangError::Parse {
                    pos: close_pos,
                    msg: format!("expected `)`, found `{close}`"),
                });
            }
            return Ok(ValueExpr::PlaceholderProperty {
                placeholder: placeholder.to_string(),
                property: property.to_string(),
            });
        }
        if tok == ")" {
            return Err(LangError::Parse {
                pos,
                msg: "unexpected `)` in value position".to_string(),
            });
        }
        if is_placeholder(tok) {
            return Ok(ValueExpr::Placeholder(tok.to_string()));
        }
        if let Ok(n) = tok.parse::<f64>() {
            return Ok(ValueExpr::Number(n));
        }
        Ok(ValueExpr::Str(tok.to_string()))
    }
}

/// Parses a full token sequence into an expression. Errors carry the index
/// of the first offending token.
pub fn parse_program(tokens: &[String]) -> Result<Expr, LangError> {
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.expr()?;
    if p.pos != tokens.len() {
        return Err(LangError::Parse {
            pos: p.pos,
            msg: format!("trailing tokens after a complete program: `{}`", tokens[p.pos]),
        });
    }
    Ok(expr)
}

/// Convenience for whitespace-separated program text.
pub fn parse_program_str(text: &str) -> Result<Expr, LangError> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    parse_program(&tokens)
}
