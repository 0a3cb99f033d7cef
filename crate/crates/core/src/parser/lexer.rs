use crate::ast::Span;

use super::ParseDiagnostic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Word(String),
    Label(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that prefixes never shadow longer operators.
const SYMBOLS: &[&str] = &[
    "|->", "-->", "+->", "<->", "<-|", ":=", "/:", "/=", "/\\", "\\/", "<:", "<|", "<+", "=>",
    "**", ":", "=", "\\", "&", ";", "~", "!", "#", ".", ",", "(", ")", "{", "}", "[", "]",
];

pub fn lex(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    let is_word_start = |c: char| c.is_ascii_alphabetic() || c == '_';
    let is_word_char = |c: char| c.is_ascii_alphanumeric() || c == '_';

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if is_word_start(c) || (c == '@' && chars.get(i + 1).is_some_and(|&n| is_word_char(n))) {
            let label = c == '@';
            let begin = if label { i + 1 } else { i };
            let mut j = begin;
            while j < chars.len() {
                let ch = chars[j];
                // Hyphens join words only between letters (`attribute-classes`).
                let hyphen = ch == '-'
                    && j > begin
                    && chars[j - 1].is_ascii_alphabetic()
                    && chars.get(j + 1).is_some_and(|n| n.is_ascii_alphabetic());
                if is_word_char(ch) || hyphen {
                    j += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[begin..j].iter().collect();
            let len = j - i;
            out.push(Token {
                tok: if label { Tok::Label(text) } else { Tok::Word(text) },
                span: Span::new(line, start_col, len),
            });
            col += len;
            i = j;
            continue;
        }
        let rest = &chars[i..];
        let sym = SYMBOLS.iter().find(|s| {
            let sc: Vec<char> = s.chars().collect();
            rest.len() >= sc.len() && rest[..sc.len()] == sc[..]
        });
        match sym {
            Some(s) => {
                let n = s.chars().count();
                out.push(Token {
                    tok: Tok::Sym(s),
                    span: Span::new(line, start_col, n),
                });
                i += n;
                col += n;
            }
            None => {
                return Err(ParseDiagnostic::error(
                    Span::new(line, start_col, 1),
                    format!("unexpected character {c:?}"),
                ))
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col, 0),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn longest_operator_wins() {
        assert_eq!(
            syms("a<-|b<+c\\/d\\e"),
            vec![
                Tok::Word("a".into()),
                Tok::Sym("<-|"),
                Tok::Word("b".into()),
                Tok::Sym("<+"),
                Tok::Word("c".into()),
                Tok::Sym("\\/"),
                Tok::Word("d".into()),
                Tok::Sym("\\"),
                Tok::Word("e".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_crlf() {
        let toks = lex("x // note\r\n@grd1 y").unwrap();
        assert_eq!(toks[1].tok, Tok::Label("grd1".into()));
        assert_eq!(toks[1].span.line, 2);
        assert_eq!(toks[2].span.column, 7);
    }

    #[test]
    fn hyphenated_layer_word() {
        assert_eq!(syms("attribute-classes")[0], Tok::Word("attribute-classes".into()));
        assert_eq!(syms("f-->g")[1], Tok::Sym("-->"));
    }

    #[test]
    fn bad_character_has_span() {
        let err = lex("a\n  $").unwrap_err();
        assert_eq!((err.span.line, err.span.column), (2, 3));
    }
}
