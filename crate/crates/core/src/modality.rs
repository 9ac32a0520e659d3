use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModalityId {
    #[serde(rename = "T")]
    Text,
    #[serde(rename = "A")]
    Audio,
    #[serde(rename = "V")]
    Vision,
}

impl ModalityId {
    pub const ALL: [ModalityId; 3] = [ModalityId::Text, ModalityId::Audio, ModalityId::Vision];

    /// Position in `[T, A, V]` ordered arrays.
    pub fn index(self) -> usize {
        match self {
            ModalityId::Text => 0,
            ModalityId::Audio => 1,
            ModalityId::Vision => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ModalityId::Text => 'T',
            ModalityId::Audio => 'A',
            ModalityId::Vision => 'V',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'T' => Some(ModalityId::Text),
            'A' => Some(ModalityId::Audio),
            'V' => Some(ModalityId::Vision),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityId::Text => "text",
            ModalityId::Audio => "audio",
            ModalityId::Vision => "vision",
        }
    }
}

impl fmt::Display for ModalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}
