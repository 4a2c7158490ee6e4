//! Text form of trigonometric terms.
//!
//! ```text
//! term    := number [ '*' ] ( 'cos' | 'sin' ) '(' two_pi [ '*' ] '(' linear ')' ')'
//!          | number
//! two_pi  := '2pi' | '2π' | '2*pi'
//! linear  := item { ( '+' | '-' ) item }
//! item    := [ integer [ '*' ] ] var | number
//! var     := 'x' | 'y' | 'x1' | 'x2' | 'x3' | 'y1' | 'y2' | 'y3'
//! ```
//!
//! `x` and `y` are `x1` and `y1`; `sin θ` is stored as `cos(θ - π/2)`.
//! Whitespace is ignored.

use std::fmt::Write as _;

use torus_mfg::TrigTerm;

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), String> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(format!("expected `{lit}` at column {}", self.pos + 1))
        }
    }

    /// Unsigned decimal number with optional exponent.
    fn number(&mut self) -> Result<f64, String> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9' | b'.')) {
            self.pos += 1;
        }
        if self.pos > start && matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(b'0'..=b'9')) {
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map_err(|_| format!("expected a number at column {}", start + 1))
    }

    fn signed_number(&mut self) -> Result<f64, String> {
        let neg = if self.eat("-") {
            true
        } else {
            self.eat("+");
            false
        };
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }
}

fn variable(c: &mut Cursor) -> Option<(bool, usize)> {
    let is_x = match c.peek() {
        Some(b'x') => true,
        Some(b'y') => false,
        _ => return None,
    };
    c.pos += 1;
    let axis = match c.peek() {
        Some(d @ b'1'..=b'3') => {
            c.pos += 1;
            (d - b'1') as usize
        }
        _ => 0,
    };
    Some((is_x, axis))
}

fn linear(c: &mut Cursor, term: &mut TrigTerm) -> Result<(), String> {
    let mut first = true;
    loop {
        let sign = if c.eat("+") {
            1.0
        } else if c.eat("-") {
            -1.0
        } else if first {
            1.0
        } else {
            return Ok(());
        };
        first = false;
        let col = c.pos + 1;
        let coeff = if matches!(c.peek(), Some(b'0'..=b'9' | b'.')) {
            Some(c.number()?)
        } else {
            None
        };
        let had_star = c.eat("*");
        match variable(c) {
            Some((is_x, axis)) => {
                let k = coeff.unwrap_or(1.0);
                if k.fract() != 0.0 || k.abs() > i32::MAX as f64 {
                    return Err(format!("frequency {k} at column {col} is not an integer"));
                }
                let k = (sign * k) as i32;
                if is_x {
                    term.k[axis] += k;
                } else {
                    term.l[axis] += k;
                }
            }
            None => {
                if had_star {
                    return Err(format!("expected a variable at column {}", c.pos + 1));
                }
                let v = coeff.ok_or_else(|| format!("expected a term at column {col}"))?;
                term.phase += sign * v;
            }
        }
    }
}

/// Parses one term; see the module docs for the grammar.
pub fn parse_term(text: &str) -> Result<TrigTerm, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let compact = compact.replace('π', "pi");
    let mut c = Cursor {
        s: compact.as_bytes(),
        pos: 0,
    };
    let amp = c.signed_number()?;
    if c.peek().is_none() {
        return Ok(TrigTerm::constant(amp));
    }
    c.eat("*");
    let is_sin = if c.eat("cos") {
        false
    } else if c.eat("sin") {
        true
    } else {
        return Err(format!("expected `cos` or `sin` at column {}", c.pos + 1));
    };
    c.expect("(")?;
    if !(c.eat("2pi") || c.eat("2*pi")) {
        return Err(format!("expected `2pi` at column {}", c.pos + 1));
    }
    c.eat("*");
    c.expect("(")?;
    let mut term = TrigTerm::new(amp, [0; 3], [0; 3], 0.0);
    linear(&mut c, &mut term)?;
    c.expect(")")?;
    c.expect(")")?;
    if c.peek().is_some() {
        return Err(format!("unexpected text at column {}", c.pos + 1));
    }
    if is_sin {
        term.phase -= 0.25;
    }
    Ok(term)
}

/// Canonical text of a term; parsing it gives back the same term.
pub fn format_term(t: &TrigTerm) -> String {
    if t.k == [0; 3] && t.l == [0; 3] && t.phase == 0.0 {
        return format!("{:?}", t.amp);
    }
    let mut lin = String::new();
    for (name, freq) in [("x", &t.k), ("y", &t.l)] {
        for (axis, &f) in freq.iter().enumerate() {
            if f == 0 {
                continue;
            }
            let sign = if f < 0 { "-" } else if lin.is_empty() { "" } else { "+" };
            let sep = if lin.is_empty() { "" } else { " " };
            let space = if lin.is_empty() || sign.is_empty() { "" } else { " " };
            let mag = f.unsigned_abs();
            let coeff = if mag == 1 { String::new() } else { mag.to_string() };
            let _ = write!(lin, "{sep}{sign}{space}{coeff}{name}{}", axis + 1);
        }
    }
    if t.phase != 0.0 || lin.is_empty() {
        if lin.is_empty() {
            let _ = write!(lin, "{:?}", t.phase);
        } else if t.phase < 0.0 {
            let _ = write!(lin, " - {:?}", -t.phase);
        } else {
            let _ = write!(lin, " + {:?}", t.phase);
        }
    }
    format!("{:?}*cos(2pi({lin}))", t.amp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_forms() {
        let t = parse_term("0.1*cos(2pi(x - y))").unwrap();
        assert_eq!(t, TrigTerm::new(0.1, [1, 0, 0], [-1, 0, 0], 0.0));
        let t = parse_term("-2e-2 sin(2π(2x2 + y1 - 3*y3 + 0.1))").unwrap();
        assert_eq!(t.amp, -0.02);
        assert_eq!(t.k, [0, 2, 0]);
        assert_eq!(t.l, [1, 0, -3]);
        assert_eq!(t.phase, 0.1 - 0.25);
        assert_eq!(parse_term(" 1.5 ").unwrap(), TrigTerm::constant(1.5));
    }

    #[test]
    fn rejects_malformed_terms() {
        for bad in ["", "cos(2pi(x))", "1*tan(2pi(x))", "1*cos(2pi(0.5x))", "1*cos(pi(x))", "1*cos(2pi(x)))"] {
            assert!(parse_term(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        for t in [
            TrigTerm::new(0.1, [1, 0, 0], [-1, 0, 0], 0.0),
            TrigTerm::new(-3.5e-7, [0, -2, 1], [3, 0, 0], -0.3),
            TrigTerm::new(1.0, [0; 3], [0; 3], 0.125),
            TrigTerm::constant(0.7),
            TrigTerm::new(0.2, [0, 0, 0], [0, 1, 0], 0.1 + 0.2),
        ] {
            let text = format_term(&t);
            assert_eq!(parse_term(&text).unwrap(), t, "{text}");
        }
    }
}
