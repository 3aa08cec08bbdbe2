//! Human-readable mapping notation, e.g.
//! `Web_fetch: arg0 = SearchRes["list"][0]["url"]`.
//!
//! ```text
//! mapping := [tool ':'] binding (';' binding)*
//! binding := ident '=' expr
//! expr    := term ('+' term)*
//! term    := string | ref | ('lower' | 'trim') '(' ref ')'
//! ref     := (Tool | 'Ctx' N) ('Res' | 'Args') step*
//! step    := '[' string ']' | '[' N ']' | '[' N '+' 'failures' '(' tool ')' ']'
//! ```
//!
//! `Tool` resolves to the first context position with that tool type,
//! preferring successful events.

use super::{ArgBinding, Lookup, MappingExpr, Normalization, PathStep, Source, TemplatePart, ValueMapping};
use crate::event::EventSignature;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("mapping alias, offset {offset}: {message}")]
pub struct AliasError {
    pub offset: usize,
    pub message: String,
}

pub fn parse_alias(text: &str, context: &[EventSignature]) -> Result<ValueMapping, AliasError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        context,
    };
    p.skip_ws();
    // Optional `Tool:` prefix.
    let save = p.pos;
    if let Some(_tool) = p.ident() {
        p.skip_ws();
        if !p.eat(':') {
            p.pos = save;
        }
    }
    let mut mapping = ValueMapping::default();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        let arg = p.ident().ok_or_else(|| p.err("expected argument name"))?;
        p.skip_ws();
        if !p.eat('=') {
            return Err(p.err("expected '='"));
        }
        let expr = p.expr()?;
        if mapping.bindings.iter().any(|b| b.arg == arg) {
            return Err(p.err(&format!("argument {arg} bound twice")));
        }
        mapping.bindings.push(ArgBinding {
            arg: arg.to_string(),
            expr,
        });
        p.skip_ws();
        if !p.eat(';') {
            break;
        }
    }
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input"));
    }
    if mapping.bindings.is_empty() {
        return Err(p.err("no bindings"));
    }
    Ok(mapping)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    context: &'a [EventSignature],
}

enum Step {
    Plain(PathStep),
    Fallback { start: usize, tool: String },
}

struct Ref {
    ctx: usize,
    src: Source,
    steps: Vec<Step>,
}

enum Term {
    Lit(String),
    Ref(Ref, Normalization),
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> AliasError {
        AliasError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        (self.pos > start).then(|| &self.src[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        self.src[start..self.pos].parse().ok()
    }

    fn string(&mut self) -> Result<String, AliasError> {
        // JSON string syntax; find the closing quote honoring escapes.
        let start = self.pos;
        if !self.eat('"') {
            return Err(self.err("expected string"));
        }
        let mut escaped = false;
        while let Some(c) = self.peek() {
            self.pos += c.len_utf8();
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                return serde_json::from_str(&self.src[start..self.pos]).map_err(|e| AliasError {
                    offset: start,
                    message: format!("bad string literal: {e}"),
                });
            }
        }
        Err(AliasError {
            offset: start,
            message: "unterminated string".into(),
        })
    }

    fn expr(&mut self) -> Result<MappingExpr, AliasError> {
        let start = self.pos;
        let mut terms = vec![self.term()?];
        loop {
            self.skip_ws();
            if !self.eat('+') {
                break;
            }
            terms.push(self.term()?);
        }
        if terms.len() == 1 {
            if let Term::Ref(r, Normalization::None) = &terms[0] {
                return self.plain_ref(r, start);
            }
        }
        let mut normalize = None;
        let mut parts = Vec::new();
        for t in terms {
            match t {
                Term::Lit(s) => parts.push(TemplatePart::Lit(s)),
                Term::Ref(r, n) => {
                    match normalize {
                        None => normalize = Some(n),
                        Some(prev) if prev != n => {
                            return Err(AliasError {
                                offset: start,
                                message: "mixed normalizations in one template".into(),
                            })
                        }
                        _ => {}
                    }
                    let mut path = Vec::new();
                    for s in r.steps {
                        match s {
                            Step::Plain(p) => path.push(p),
                            Step::Fallback { .. } => {
                                return Err(AliasError {
                                    offset: start,
                                    message: "failure-indexed steps are not allowed in templates".into(),
                                })
                            }
                        }
                    }
                    if path.is_empty() {
                        return Err(AliasError {
                            offset: start,
                            message: "template hole without a path".into(),
                        });
                    }
                    parts.push(TemplatePart::Hole(Lookup { ctx: r.ctx, src: r.src, path }));
                }
            }
        }
        let Some(normalize) = normalize else {
            return Err(AliasError {
                offset: start,
                message: "constant expressions are not supported".into(),
            });
        };
        Ok(MappingExpr::FormatTemplate { parts, normalize })
    }

    fn plain_ref(&self, r: &Ref, offset: usize) -> Result<MappingExpr, AliasError> {
        let fallback_at = r.steps.iter().position(|s| matches!(s, Step::Fallback { .. }));
        let plain = |steps: &[Step]| -> Result<Vec<PathStep>, AliasError> {
            steps
                .iter()
                .map(|s| match s {
                    Step::Plain(p) => Ok(p.clone()),
                    Step::Fallback { .. } => Err(AliasError {
                        offset,
                        message: "at most one failure-indexed step".into(),
                    }),
                })
                .collect()
        };
        match fallback_at {
            None => {
                let path = plain(&r.steps)?;
                if path.is_empty() {
                    return Err(AliasError {
                        offset,
                        message: "reference without a path".into(),
                    });
                }
                Ok(MappingExpr::PathLookup(Lookup { ctx: r.ctx, src: r.src, path }))
            }
            Some(i) => {
                let Step::Fallback { start, tool } = &r.steps[i] else { unreachable!() };
                Ok(MappingExpr::IndexedFallback {
                    ctx: r.ctx,
                    src: r.src,
                    prefix: plain(&r.steps[..i])?,
                    start: *start,
                    suffix: plain(&r.steps[i + 1..])?,
                    counted_tool: tool.clone(),
                })
            }
        }
    }

    fn term(&mut self) -> Result<Term, AliasError> {
        self.skip_ws();
        if self.peek() == Some('"') {
            return Ok(Term::Lit(self.string()?));
        }
        let save = self.pos;
        let name = self.ident().ok_or_else(|| self.err("expected reference or string"))?;
        let norm = match name {
            "lower" => Some(Normalization::Lowercase),
            "trim" => Some(Normalization::Trim),
            _ => None,
        };
        if let Some(norm) = norm {
            self.skip_ws();
            if self.eat('(') {
                let r = self.reference()?;
                self.skip_ws();
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                return Ok(Term::Ref(r, norm));
            }
        }
        self.pos = save;
        Ok(Term::Ref(self.reference()?, Normalization::None))
    }

    fn reference(&mut self) -> Result<Ref, AliasError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident().ok_or_else(|| self.err("expected reference"))?;
        let (head, src) = if let Some(h) = name.strip_suffix("Res") {
            (h, Source::Result)
        } else if let Some(h) = name.strip_suffix("Result") {
            (h, Source::Result)
        } else if let Some(h) = name.strip_suffix("Args") {
            (h, Source::Args)
        } else {
            return Err(AliasError {
                offset: start,
                message: format!("reference {name} must end in Res or Args"),
            });
        };
        let ctx = self.resolve(head).ok_or_else(|| AliasError {
            offset: start,
            message: format!("{head} does not name a context event"),
        })?;
        let mut steps = Vec::new();
        loop {
            self.skip_ws();
            if !self.eat('[') {
                break;
            }
            self.skip_ws();
            let step = if self.peek() == Some('"') {
                Step::Plain(PathStep::Key(self.string()?))
            } else {
                let n = self.number().ok_or_else(|| self.err("expected index or key"))?;
                self.skip_ws();
                if self.eat('+') {
                    self.skip_ws();
                    if self.ident() != Some("failures") {
                        return Err(self.err("expected failures(<tool>)"));
                    }
                    self.skip_ws();
                    if !self.eat('(') {
                        return Err(self.err("expected '('"));
                    }
                    self.skip_ws();
                    let tool = self.ident().ok_or_else(|| self.err("expected tool name"))?.to_string();
                    self.skip_ws();
                    if !self.eat(')') {
                        return Err(self.err("expected ')'"));
                    }
                    Step::Fallback { start: n, tool }
                } else {
                    Step::Plain(PathStep::Index(n))
                }
            };
            self.skip_ws();
            if !self.eat(']') {
                return Err(self.err("expected ']'"));
            }
            steps.push(step);
        }
        Ok(Ref { ctx, src, steps })
    }

    fn resolve(&self, head: &str) -> Option<usize> {
        if let Some(n) = head.strip_prefix("Ctx").and_then(|n| n.parse::<usize>().ok()) {
            return (n < self.context.len()).then_some(n);
        }
        let exact = |s: &EventSignature| s.tool_type == head;
        let loose = |s: &EventSignature| s.tool_type.eq_ignore_ascii_case(head);
        let pick = |pred: &dyn Fn(&EventSignature) -> bool| {
            self.context
                .iter()
                .position(|s| pred(s) && s.status.is_success())
                .or_else(|| self.context.iter().position(pred))
        };
        pick(&exact).or_else(|| pick(&loose))
    }
}
