use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum TokenKind {
    /// Bare or backtick-quoted identifier; keywords are bare identifiers too.
    Ident { text: String, quoted: bool },
    Number(String),
    /// Single- or double-quoted string; the benchmark uses both for values.
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub pos: usize,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident { text, quoted: false } if text.eq_ignore_ascii_case(kw))
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, message: String| Error::Syntax { position: pos, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = |kind| Token { kind, pos: start };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push(simple(TokenKind::LParen)),
            b')' => out.push(simple(TokenKind::RParen)),
            b',' => out.push(simple(TokenKind::Comma)),
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                out.push(simple(TokenKind::Dot))
            }
            b'*' => out.push(simple(TokenKind::Star)),
            b'+' => out.push(simple(TokenKind::Plus)),
            b'-' => out.push(simple(TokenKind::Minus)),
            b'/' => out.push(simple(TokenKind::Slash)),
            b';' => out.push(simple(TokenKind::Semicolon)),
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                }
                out.push(simple(TokenKind::Eq))
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 1;
                out.push(simple(TokenKind::NotEq))
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 1;
                    out.push(simple(TokenKind::LtEq))
                }
                Some(b'>') => {
                    i += 1;
                    out.push(simple(TokenKind::NotEq))
                }
                _ => out.push(simple(TokenKind::Lt)),
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    out.push(simple(TokenKind::GtEq))
                } else {
                    out.push(simple(TokenKind::Gt))
                }
            }
            b'\'' | b'"' => {
                let quote = c;
                let mut text = String::new();
                let mut j = i + 1;
                loop {
                    let Some(&b) = bytes.get(j) else {
                        return Err(err(start, "unterminated string literal".into()));
                    };
                    if b == quote {
                        if bytes.get(j + 1) == Some(&quote) {
                            text.push(quote as char);
                            j += 2;
                            continue;
                        }
                        break;
                    }
                    let ch = src[j..].chars().next().unwrap();
                    text.push(ch);
                    j += ch.len_utf8();
                }
                out.push(Token {
                    kind: TokenKind::Str(text),
                    pos: start,
                });
                i = j + 1;
                continue;
            }
            b'`' => {
                let Some(end) = src[i + 1..].find('`') else {
                    return Err(err(start, "unterminated quoted identifier".into()));
                };
                out.push(Token {
                    kind: TokenKind::Ident {
                        text: src[i + 1..i + 1 + end].to_string(),
                        quoted: true,
                    },
                    pos: start,
                });
                i += end + 2;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut seen_dot = false;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || (bytes[j] == b'.' && !seen_dot))
                {
                    seen_dot |= bytes[j] == b'.';
                    j += 1;
                }
                // Identifiers such as `18_49_rating` start with digits.
                if j < bytes.len() && (bytes[j].is_ascii_alphabetic() || bytes[j] == b'_') && !seen_dot {
                    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                        j += 1;
                    }
                    out.push(Token {
                        kind: TokenKind::Ident {
                            text: src[i..j].to_string(),
                            quoted: false,
                        },
                        pos: start,
                    });
                } else {
                    out.push(Token {
                        kind: TokenKind::Number(src[i..j].to_string()),
                        pos: start,
                    });
                }
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident {
                        text: src[i..j].to_string(),
                        quoted: false,
                    },
                    pos: start,
                });
                i = j;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap();
                return Err(err(start, format!("unexpected character `{ch}`")));
            }
        }
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn operators_and_literals() {
        assert_eq!(
            kinds("a <> 'it''s' >= 3.5"),
            vec![
                TokenKind::Ident { text: "a".into(), quoted: false },
                TokenKind::NotEq,
                TokenKind::Str("it's".into()),
                TokenKind::GtEq,
                TokenKind::Number("3.5".into()),
            ]
        );
    }

    #[test]
    fn digit_led_identifier() {
        assert_eq!(
            kinds("18_49_rating"),
            vec![TokenKind::Ident { text: "18_49_rating".into(), quoted: false }]
        );
    }

    #[test]
    fn unterminated_string_reports_position() {
        match tokenize("select 'abc").unwrap_err() {
            Error::Syntax { position, .. } => assert_eq!(position, 7),
            e => panic!("{e}"),
        }
    }
}
