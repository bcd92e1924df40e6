//! Tokenizer for the `.anm` modeling language.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    // keywords
    Const,
    KwInt,
    KwReal,
    Chan,
    Broadcast,
    Func,
    Automaton,
    Location,
    Init,
    Committed,
    Edge,
    Guard,
    Sync,
    Weight,
    Do,
    Var,
    If,
    Else,
    For,
    In,
    Return,
    // punctuation
    Arrow,
    DotDot,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    EqEq,
    Ne,
    Ge,
    Gt,
    AndAnd,
    OrOr,
    Bang,
    Question,
    Colon,
    Assign,
    Comma,
    Semi,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Real(v) => write!(f, "real `{v}`"),
            Tok::Const => write!(f, "`const`"),
            Tok::KwInt => write!(f, "`int`"),
            Tok::KwReal => write!(f, "`real`"),
            Tok::Chan => write!(f, "`chan`"),
            Tok::Broadcast => write!(f, "`broadcast`"),
            Tok::Func => write!(f, "`func`"),
            Tok::Automaton => write!(f, "`automaton`"),
            Tok::Location => write!(f, "`location`"),
            Tok::Init => write!(f, "`init`"),
            Tok::Committed => write!(f, "`committed`"),
            Tok::Edge => write!(f, "`edge`"),
            Tok::Guard => write!(f, "`guard`"),
            Tok::Sync => write!(f, "`sync`"),
            Tok::Weight => write!(f, "`weight`"),
            Tok::Do => write!(f, "`do`"),
            Tok::Var => write!(f, "`var`"),
            Tok::If => write!(f, "`if`"),
            Tok::Else => write!(f, "`else`"),
            Tok::For => write!(f, "`for`"),
            Tok::In => write!(f, "`in`"),
            Tok::Return => write!(f, "`return`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::DotDot => write!(f, "`..`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Percent => write!(f, "`%`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Question => write!(f, "`?`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

/// Parse diagnostic with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, col {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for Diagnostic {}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: self.line, col: self.col, message: message.into() }
    }

    fn skip_trivia(&mut self) -> Result<(), Diagnostic> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(b'/') if self.peek2() == Some(b'*') => {
                    let start = self.err("unterminated block comment");
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            None => return Err(start),
                            Some(b'*') if self.peek2() == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn number(&mut self) -> Result<Tok, Diagnostic> {
        let start = self.pos;
        while self.peek().map_or(false, |c| c.is_ascii_digit()) {
            self.bump();
        }
        let mut is_real = false;
        // fractional part, but not the `..` range operator
        if self.peek() == Some(b'.') && self.peek2().map_or(false, |c| c.is_ascii_digit()) {
            is_real = true;
            self.bump();
            while self.peek().map_or(false, |c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if self.peek() == Some(b'e') || self.peek() == Some(b'E') {
            let after_sign = match self.peek2() {
                Some(b'+') | Some(b'-') => self.src.get(self.pos + 2).copied(),
                other => other,
            };
            if after_sign.map_or(false, |c| c.is_ascii_digit()) {
                is_real = true;
                self.bump(); // e
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.bump();
                }
                while self.peek().map_or(false, |c| c.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("digits are ascii");
        if is_real {
            text.parse::<f64>()
                .map(Tok::Real)
                .map_err(|_| self.err(format!("invalid real literal `{text}`")))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.err(format!("integer literal `{text}` out of range")))
        }
    }
}

fn keyword(ident: &str) -> Option<Tok> {
    Some(match ident {
        "const" => Tok::Const,
        "int" => Tok::KwInt,
        "real" => Tok::KwReal,
        "chan" => Tok::Chan,
        "broadcast" => Tok::Broadcast,
        "func" => Tok::Func,
        "automaton" => Tok::Automaton,
        "location" => Tok::Location,
        "init" => Tok::Init,
        "committed" => Tok::Committed,
        "edge" => Tok::Edge,
        "guard" => Tok::Guard,
        "sync" => Tok::Sync,
        "weight" => Tok::Weight,
        "do" => Tok::Do,
        "var" => Tok::Var,
        "if" => Tok::If,
        "else" => Tok::Else,
        "for" => Tok::For,
        "in" => Tok::In,
        "return" => Tok::Return,
        _ => return None,
    })
}

/// Tokenize the whole source. Never panics; malformed input yields a
/// positioned diagnostic.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut lx = Lexer { src: source.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia()?;
        let (line, col) = (lx.line, lx.col);
        let tok = match lx.peek() {
            None => {
                out.push(Token { tok: Tok::Eof, line, col });
                return Ok(out);
            }
            Some(c) if c.is_ascii_digit() => lx.number()?,
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = lx.pos;
                while lx
                    .peek()
                    .map_or(false, |c| c.is_ascii_alphanumeric() || c == b'_')
                {
                    lx.bump();
                }
                let text = std::str::from_utf8(&lx.src[start..lx.pos])
                    .expect("identifier bytes are ascii");
                keyword(text).unwrap_or_else(|| Tok::Ident(text.to_string()))
            }
            Some(c) => {
                lx.bump();
                match c {
                    b'-' if lx.peek() == Some(b'>') => {
                        lx.bump();
                        Tok::Arrow
                    }
                    b'-' => Tok::Minus,
                    b'.' if lx.peek() == Some(b'.') => {
                        lx.bump();
                        Tok::DotDot
                    }
                    b'+' => Tok::Plus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'%' => Tok::Percent,
                    b'<' if lx.peek() == Some(b'=') => {
                        lx.bump();
                        Tok::Le
                    }
                    b'<' => Tok::Lt,
                    b'>' if lx.peek() == Some(b'=') => {
                        lx.bump();
                        Tok::Ge
                    }
                    b'>' => Tok::Gt,
                    b'=' if lx.peek() == Some(b'=') => {
                        lx.bump();
                        Tok::EqEq
                    }
                    b'=' => Tok::Assign,
                    b'!' if lx.peek() == Some(b'=') => {
                        lx.bump();
                        Tok::Ne
                    }
                    b'!' => Tok::Bang,
                    b'&' if lx.peek() == Some(b'&') => {
                        lx.bump();
                        Tok::AndAnd
                    }
                    b'|' if lx.peek() == Some(b'|') => {
                        lx.bump();
                        Tok::OrOr
                    }
                    b'?' => Tok::Question,
                    b':' => Tok::Colon,
                    b',' => Tok::Comma,
                    b';' => Tok::Semi,
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b'{' => Tok::LBrace,
                    b'}' => Tok::RBrace,
                    b'[' => Tok::LBracket,
                    b']' => Tok::RBracket,
                    other => {
                        return Err(Diagnostic {
                            line,
                            col,
                            message: format!("unexpected character `{}`", other as char),
                        })
                    }
                }
            }
        };
        out.push(Token { tok, line, col });
    }
}
