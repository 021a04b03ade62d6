use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Fn,
    Let,
    In,
    If,
    Then,
    Else,
    Match,
    Try,
    Catch,
    Throw,
    Receive,
    True,
    False,
    Ident(String),
    /// Magnitude of an integer literal; the sign is applied by the parser.
    Int(u64),
    Str(String),
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    EqEq,
    Ne,
    PlusPlus,
    ColonColon,
    Eq,
    Arrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Fn => "fn",
            Tok::Let => "let",
            Tok::In => "in",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::Match => "match",
            Tok::Try => "try",
            Tok::Catch => "catch",
            Tok::Throw => "throw",
            Tok::Receive => "receive",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Ident(name) => return write!(f, "identifier `{name}`"),
            Tok::Int(n) => return write!(f, "integer {n}"),
            Tok::Str(_) => "string literal",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::PlusPlus => "++",
            Tok::ColonColon => "::",
            Tok::Eq => "=",
            Tok::Arrow => "->",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: lex error: {}", self.line, self.message)
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "fn" => Tok::Fn,
        "let" => Tok::Let,
        "in" => Tok::In,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "match" => Tok::Match,
        "try" => Tok::Try,
        "catch" => Tok::Catch,
        "throw" => Tok::Throw,
        "receive" => Tok::Receive,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut line = 1u32;
    let mut i = 0;
    let err = |line, message: &str| LexError { line, message: message.to_string() };

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
            }
            b' ' | b'\t' | b'\r' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let digits = &source[start..i];
                let n: u64 = digits.parse().map_err(|_| err(line, "integer literal out of range"))?;
                if n > i64::MAX as u64 + 1 {
                    return Err(err(line, "integer literal out of range"));
                }
                tokens.push(Token { tok: Tok::Int(n), line });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &source[start..i];
                let tok = keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()));
                tokens.push(Token { tok, line });
            }
            b'"' => {
                let start_line = line;
                i += 1;
                let mut text = String::new();
                loop {
                    let Some(&b) = bytes.get(i) else {
                        return Err(err(start_line, "unterminated string"));
                    };
                    match b {
                        b'"' => {
                            i += 1;
                            break;
                        }
                        b'\\' => {
                            let esc = bytes.get(i + 1).copied();
                            if esc == Some(b'x') {
                                let hex = source.get(i + 2..i + 4).and_then(|h| u8::from_str_radix(h, 16).ok());
                                match hex {
                                    Some(v) if v < 0x80 => text.push(v as char),
                                    _ => return Err(err(line, "bad \\x escape")),
                                }
                                i += 4;
                                continue;
                            }
                            let ch = match esc {
                                Some(b'"') => '"',
                                Some(b'\\') => '\\',
                                Some(b'n') => '\n',
                                Some(b't') => '\t',
                                Some(b'r') => '\r',
                                None => return Err(err(start_line, "unterminated string")),
                                Some(_) => return Err(err(line, "unknown escape sequence")),
                            };
                            text.push(ch);
                            i += 2;
                        }
                        b'\n' => {
                            line += 1;
                            text.push('\n');
                            i += 1;
                        }
                        _ => {
                            // Copy one UTF-8 scalar.
                            let rest = &source[i..];
                            let ch = rest.chars().next().expect("in bounds");
                            text.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                tokens.push(Token { tok: Tok::Str(text), line: start_line });
            }
            _ => {
                let two = bytes.get(i + 1).copied();
                let (tok, width) = match (c, two) {
                    (b'+', Some(b'+')) => (Tok::PlusPlus, 2),
                    (b':', Some(b':')) => (Tok::ColonColon, 2),
                    (b'<', Some(b'=')) => (Tok::Le, 2),
                    (b'=', Some(b'=')) => (Tok::EqEq, 2),
                    (b'!', Some(b'=')) => (Tok::Ne, 2),
                    (b'-', Some(b'>')) => (Tok::Arrow, 2),
                    (b'+', _) => (Tok::Plus, 1),
                    (b'-', _) => (Tok::Minus, 1),
                    (b'*', _) => (Tok::Star, 1),
                    (b'/', _) => (Tok::Slash, 1),
                    (b'<', _) => (Tok::Lt, 1),
                    (b'=', _) => (Tok::Eq, 1),
                    (b'(', _) => (Tok::LParen, 1),
                    (b')', _) => (Tok::RParen, 1),
                    (b'[', _) => (Tok::LBracket, 1),
                    (b']', _) => (Tok::RBracket, 1),
                    (b'{', _) => (Tok::LBrace, 1),
                    (b'}', _) => (Tok::RBrace, 1),
                    (b',', _) => (Tok::Comma, 1),
                    _ => {
                        let ch = source[i..].chars().next().expect("in bounds");
                        return Err(LexError { line, message: alloc::format!("illegal character {ch:?}") });
                    }
                };
                tokens.push(Token { tok, line });
                i += width;
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn minimal_program() {
        assert_eq!(
            toks("fn main() = 42"),
            vec![Tok::Fn, Tok::Ident("main".into()), Tok::LParen, Tok::RParen, Tok::Eq, Tok::Int(42)]
        );
    }

    #[test]
    fn comments_and_lines() {
        let t = tokenize("1 # c\n2").unwrap();
        assert_eq!(t, vec![Token { tok: Tok::Int(1), line: 1 }, Token { tok: Tok::Int(2), line: 2 }]);
    }

    #[test]
    fn unterminated_string() {
        assert_eq!(tokenize("\"ab").unwrap_err().line, 1);
    }

    #[test]
    fn illegal_character() {
        let e = tokenize("fn main() =\n 1 $ 2").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn operators() {
        assert_eq!(
            toks("a :: b ++ c <= d != e -> f"),
            vec![
                Tok::Ident("a".into()),
                Tok::ColonColon,
                Tok::Ident("b".into()),
                Tok::PlusPlus,
                Tok::Ident("c".into()),
                Tok::Le,
                Tok::Ident("d".into()),
                Tok::Ne,
                Tok::Ident("e".into()),
                Tok::Arrow,
                Tok::Ident("f".into())
            ]
        );
    }

    #[test]
    fn string_escapes() {
        assert_eq!(toks(r#""a\"b\\n\n""#), vec![Tok::Str("a\"b\\n\n".into())]);
        assert_eq!(toks(r#""\x01\x7f""#), vec![Tok::Str("\u{1}\u{7f}".into())]);
    }
}
