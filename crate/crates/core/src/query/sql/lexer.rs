use crate::query::QueryError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Double-quoted identifier; never a keyword.
    Quoted(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

const SYMBOLS: [&str; 20] = ["==", "!=", "<>", "<=", ">=", "||", "(", ")", ",", ".", ";", "*", "+", "-", "/", "%", "=", "<", ">", "|"];

fn err(pos: usize, msg: impl Into<String>) -> QueryError {
    QueryError::Parse { pos, msg: msg.into() }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, QueryError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b[i..].starts_with(b"--") {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(src[start..i].to_string()), start, end: i });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut float = false;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i < b.len() && b[i] == b'.' {
                float = true;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| err(start, format!("bad number {text}")))?)
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Float(text.parse().map_err(|_| err(start, format!("bad number {text}")))?),
                }
            };
            out.push(Token { tok, start, end: i });
            continue;
        }
        if c == b'\'' || c == b'"' {
            let mut s = String::new();
            i += 1;
            loop {
                let Some(rel) = src[i..].find(c as char) else {
                    return Err(err(start, "unterminated quote"));
                };
                s.push_str(&src[i..i + rel]);
                i += rel + 1;
                // A doubled quote is an escaped quote.
                if b.get(i) == Some(&c) {
                    s.push(c as char);
                    i += 1;
                } else {
                    break;
                }
            }
            let tok = if c == b'\'' { Tok::Str(s) } else { Tok::Quoted(s) };
            out.push(Token { tok, start, end: i });
            continue;
        }
        for sym in SYMBOLS {
            if b[i..].starts_with(sym.as_bytes()) {
                i += sym.len();
                out.push(Token { tok: Tok::Sym(sym), start, end: i });
                continue 'outer;
            }
        }
        let ch = src[i..].chars().next().unwrap();
        return Err(err(start, format!("unexpected character {ch:?}")));
    }
    out.push(Token { tok: Tok::Eof, start: b.len(), end: b.len() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        let t: Vec<Tok> = tokenize("SELECT a,'it''s' -- c\n FROM x WHERE b<>1.5e2 and c==.5;").unwrap().into_iter().map(|t| t.tok).collect();
        assert_eq!(
            t,
            vec![
                Tok::Ident("SELECT".into()),
                Tok::Ident("a".into()),
                Tok::Sym(","),
                Tok::Str("it's".into()),
                Tok::Ident("FROM".into()),
                Tok::Ident("x".into()),
                Tok::Ident("WHERE".into()),
                Tok::Ident("b".into()),
                Tok::Sym("<>"),
                Tok::Float(150.0),
                Tok::Ident("and".into()),
                Tok::Ident("c".into()),
                Tok::Sym("=="),
                Tok::Float(0.5),
                Tok::Sym(";"),
                Tok::Eof,
            ]
        );
        assert!(tokenize("'open").is_err());
        assert!(tokenize("a # b").is_err());
    }
}
