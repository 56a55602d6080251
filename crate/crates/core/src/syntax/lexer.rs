use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Backslash,
    Dot,
    LParen,
    RParen,
    LAngle,
    RAngle,
    LBracket,
    RBracket,
    /// `[]`, the empty evaluation context.
    Hole,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Eq,
    /// `=>`
    Turnstile,
    /// `->`
    Arrow,
    Minus,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Backslash => "`\\`".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LAngle => "`<`".into(),
            Tok::RAngle => "`>`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Hole => "`[]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Turnstile => "`=>`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Minus => "`-`".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Tokenizes one line (comments already stripped). Columns are 1-based.
pub fn lex_line(text: &str, line: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match c {
            '\\' | 'λ' => (Tok::Backslash, 1),
            '.' => (Tok::Dot, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '<' => (Tok::LAngle, 1),
            '>' => (Tok::RAngle, 1),
            '[' if next == Some(']') => (Tok::Hole, 2),
            '[' => (Tok::LBracket, 1),
            ']' => (Tok::RBracket, 1),
            '{' => (Tok::LBrace, 1),
            '}' => (Tok::RBrace, 1),
            ',' => (Tok::Comma, 1),
            ';' => (Tok::Semi, 1),
            ':' => (Tok::Colon, 1),
            '=' if next == Some('>') => (Tok::Turnstile, 2),
            '=' => (Tok::Eq, 1),
            '-' if next == Some('>') => (Tok::Arrow, 2),
            '-' => (Tok::Minus, 1),
            c if is_ident_char(c) => {
                let start = i;
                let mut j = i;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                let s: String = chars[start..j].iter().collect();
                (Tok::Ident(s), j - start)
            }
            other => {
                return Err(ParseError::new(line, col, format!("unexpected character `{other}`")));
            }
        };
        out.push(Token { tok, line, col });
        i += len;
    }
    Ok(out)
}

/// Drops a trailing `#` comment.
pub fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}
