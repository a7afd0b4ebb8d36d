use num_bigint::BigInt;

use crate::text::{read_escape, Escape, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(BigInt),
    Str(String),
    /// Raw rule text of a `lang L = { ... }` block and the position of its
    /// first character.
    Grammar(String, Pos),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub msg: String,
}

const PUNCT: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "..", "(", ")", "{", "}", "[", "]", ",", ";", ":", "|", "=",
    "<", ">", "+", "-", "*", "/", "%", "!", ".", "∈",
];

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn string(&mut self) -> Result<String, LexError> {
        let start = self.pos();
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(LexError {
                        pos: start,
                        msg: "unterminated string literal".into(),
                    })
                }
                Some('"') => return Ok(out),
                Some('\\') => {
                    let at = self.pos();
                    match read_escape(&mut || self.bump()) {
                        Escape::Char(c) => out.push(c),
                        Escape::Invalid(msg) => {
                            return Err(LexError {
                                pos: at,
                                msg: msg.to_string(),
                            })
                        }
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }

    /// Consume a brace-delimited grammar block, returning its inner text.
    fn grammar_block(&mut self) -> Result<(String, Pos), LexError> {
        let open = self.pos();
        self.bump();
        let inner_pos = self.pos();
        let from = self.i;
        let mut depth = 0usize;
        loop {
            let Some(c) = self.peek() else {
                return Err(LexError {
                    pos: open,
                    msg: "unterminated grammar block".into(),
                });
            };
            match c {
                '}' if depth == 0 => {
                    let text: String = self.chars[from..self.i].iter().collect();
                    self.bump();
                    return Ok((text, inner_pos));
                }
                '{' => {
                    depth += 1;
                    self.bump();
                }
                '}' => {
                    depth -= 1;
                    self.bump();
                }
                '#' => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '"' | '[' => {
                    let close = if c == '"' { '"' } else { ']' };
                    self.bump();
                    loop {
                        match self.bump() {
                            None => break,
                            Some('\\') => {
                                self.bump();
                            }
                            Some(d) if d == close => break,
                            Some(_) => {}
                        }
                    }
                }
                _ => {
                    self.bump();
                }
            }
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out: Vec<Token> = Vec::new();
    loop {
        lx.skip_trivia();
        let pos = lx.pos();
        let Some(c) = lx.peek() else {
            out.push(Token { tok: Tok::Eof, pos });
            return Ok(out);
        };
        let tok = if c == '{' && after_lang_header(&out) {
            let (text, at) = lx.grammar_block()?;
            Tok::Grammar(text, at)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = lx.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    lx.bump();
                } else {
                    break;
                }
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(c) = lx.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    lx.bump();
                } else {
                    break;
                }
            }
            if lx.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
                return Err(LexError {
                    pos,
                    msg: "identifiers cannot start with a digit".into(),
                });
            }
            Tok::Int(s.parse().expect("digits"))
        } else if c == '"' {
            Tok::Str(lx.string()?)
        } else {
            let found = PUNCT.iter().find(|p| {
                p.chars()
                    .enumerate()
                    .all(|(k, pc)| lx.peek_at(k) == Some(pc))
            });
            match found {
                Some(p) => {
                    for _ in 0..p.chars().count() {
                        lx.bump();
                    }
                    Tok::Punct(p)
                }
                None => {
                    return Err(LexError {
                        pos,
                        msg: format!("unexpected character {c:?}"),
                    })
                }
            }
        };
        out.push(Token { tok, pos });
    }
}

/// True when the tokens so far end in `lang Name =`.
fn after_lang_header(toks: &[Token]) -> bool {
    match toks {
        [.., a, b, c] => {
            a.tok == Tok::Ident("lang".into())
                && matches!(b.tok, Tok::Ident(_))
                && c.tok == Tok::Punct("=")
        }
        _ => false,
    }
}
