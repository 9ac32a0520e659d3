//! Combination directives: `A-B` pulls two modalities' feature covariances
//! together, `A+B` pushes them apart, and `/` chains several directives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::ModalityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectiveKind {
    Shared,
    Private,
}

impl DirectiveKind {
    fn symbol(self) -> char {
        match self {
            DirectiveKind::Shared => '-',
            DirectiveKind::Private => '+',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignmentDirective {
    pub kind: DirectiveKind,
    pub pair: (ModalityId, ModalityId),
}

impl AlignmentDirective {
    pub fn new(kind: DirectiveKind, a: ModalityId, b: ModalityId) -> Result<Self> {
        if a == b {
            return Err(Error::Contract(format!("directive pairs {a} with itself")));
        }
        Ok(Self { kind, pair: (a, b) })
    }

    fn unordered_key(&self) -> (DirectiveKind, ModalityId, ModalityId) {
        let (a, b) = self.pair;
        (self.kind, a.min(b), a.max(b))
    }
}

impl fmt::Display for AlignmentDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.pair.0, self.kind.symbol(), self.pair.1)
    }
}

/// Ordered list of directives. Empty means alignment is disabled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSpec {
    directives: Vec<AlignmentDirective>,
}

impl AlignmentSpec {
    pub fn new(directives: Vec<AlignmentDirective>) -> Result<Self> {
        for (i, d) in directives.iter().enumerate() {
            if directives[..i].iter().any(|p| p.unordered_key() == d.unordered_key()) {
                return Err(Error::Contract(format!("duplicate directive {d}")));
            }
        }
        Ok(Self { directives })
    }

    pub fn directives(&self) -> &[AlignmentDirective] {
        &self.directives
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    pub fn len(&self) -> usize {
        self.directives.len()
    }
}

impl fmt::Display for AlignmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.directives.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for AlignmentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_alignment_spec(s)
    }
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

/// Parses `directive ("/" directive)*` where `directive := MOD ("-"|"+") MOD`
/// and `MOD ∈ {T, A, V}`. Positions in errors are character offsets.
pub fn parse_alignment_spec(text: &str) -> Result<AlignmentSpec> {
    let chars: Vec<char> = text.chars().collect();
    let mut directives: Vec<AlignmentDirective> = Vec::new();
    if chars.is_empty() {
        return Ok(AlignmentSpec::default());
    }

    let modality_at = |pos: usize| -> Result<ModalityId> {
        match chars.get(pos) {
            None => Err(parse_error(pos, "expected modality letter (T, A or V), found end of input")),
            Some(&c) => ModalityId::from_letter(c)
                .ok_or_else(|| parse_error(pos, format!("unknown modality `{c}`, expected T, A or V"))),
        }
    };

    let mut pos = 0;
    loop {
        let start = pos;
        let a = modality_at(pos)?;
        let kind = match chars.get(pos + 1) {
            Some('-') => DirectiveKind::Shared,
            Some('+') => DirectiveKind::Private,
            Some(&c) => return Err(parse_error(pos + 1, format!("expected `-` or `+`, found `{c}`"))),
            None => return Err(parse_error(pos + 1, "expected `-` or `+`, found end of input")),
        };
        let b = modality_at(pos + 2)?;
        if a == b {
            return Err(parse_error(pos + 2, format!("directive pairs {a} with itself")));
        }
        let directive = AlignmentDirective { kind, pair: (a, b) };
        if directives
            .iter()
            .any(|d| d.unordered_key() == directive.unordered_key())
        {
            return Err(parse_error(start, format!("duplicate directive {directive}")));
        }
        directives.push(directive);
        pos += 3;
        match chars.get(pos) {
            None => break,
            Some('/') => pos += 1,
            Some(&c) => return Err(parse_error(pos, format!("expected `/` or end of input, found `{c}`"))),
        }
    }
    Ok(AlignmentSpec { directives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ModalityId::*;

    fn position(text: &str) -> usize {
        match parse_alignment_spec(text) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        }
    }

    #[test]
    fn single_shared() {
        let spec = parse_alignment_spec("V-A").unwrap();
        assert_eq!(
            spec.directives(),
            &[AlignmentDirective {
                kind: DirectiveKind::Shared,
                pair: (Vision, Audio)
            }]
        );
    }

    #[test]
    fn chained_shared_and_private() {
        let spec = parse_alignment_spec("T-V/T+A").unwrap();
        assert_eq!(
            spec.directives(),
            &[
                AlignmentDirective {
                    kind: DirectiveKind::Shared,
                    pair: (Text, Vision)
                },
                AlignmentDirective {
                    kind: DirectiveKind::Private,
                    pair: (Text, Audio)
                },
            ]
        );
    }

    #[test]
    fn empty_disables_alignment() {
        assert!(parse_alignment_spec("").unwrap().is_empty());
    }

    #[test]
    fn error_positions() {
        assert_eq!(position("X-A"), 0);
        assert_eq!(position("Q-A"), 0);
        assert_eq!(position("V-X"), 2);
        assert_eq!(position("V*A"), 1);
        assert_eq!(position("A-A"), 2);
        assert_eq!(position("V-A/"), 4);
        assert_eq!(position("V-AT"), 3);
        assert_eq!(position("V-"), 2);
        // duplicates compare the unordered pair within the same kind
        assert_eq!(position("V-A/A-V"), 4);
        assert_eq!(position("T-V/V+A/T-A/V+A"), 12);
    }

    #[test]
    fn same_pair_different_kind_is_allowed() {
        assert_eq!(parse_alignment_spec("V-A/A+V").unwrap().len(), 2);
    }

    #[test]
    fn constructor_rejects_duplicates() {
        let d = AlignmentDirective::new(DirectiveKind::Shared, Text, Audio).unwrap();
        let e = AlignmentDirective::new(DirectiveKind::Shared, Audio, Text).unwrap();
        assert!(AlignmentSpec::new(vec![d, e]).is_err());
        assert!(AlignmentDirective::new(DirectiveKind::Private, Text, Text).is_err());
    }

    fn arb_spec() -> impl Strategy<Value = AlignmentSpec> {
        let directive = (any::<bool>(), 0usize..3, 1usize..3).prop_map(|(shared, a, off)| {
            let kind = if shared { DirectiveKind::Shared } else { DirectiveKind::Private };
            AlignmentDirective {
                kind,
                pair: (ModalityId::ALL[a], ModalityId::ALL[(a + off) % 3]),
            }
        });
        prop::collection::vec(directive, 0..6).prop_map(|ds| {
            let mut kept: Vec<AlignmentDirective> = Vec::new();
            for d in ds {
                if !kept.iter().any(|k| k.unordered_key() == d.unordered_key()) {
                    kept.push(d);
                }
            }
            AlignmentSpec::new(kept).unwrap()
        })
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(spec in arb_spec()) {
            let text = spec.to_string();
            prop_assert_eq!(parse_alignment_spec(&text).unwrap(), spec);
        }
    }
}
