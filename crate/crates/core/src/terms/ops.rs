//! Operator table shared by the reader and the printer.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

#[derive(Debug, Clone, Copy)]
pub struct InfixOp {
    pub priority: u16,
    pub assoc: Assoc,
}

impl InfixOp {
    pub fn left_max(self) -> u16 {
        match self.assoc {
            Assoc::Yfx => self.priority,
            _ => self.priority - 1,
        }
    }

    pub fn right_max(self) -> u16 {
        match self.assoc {
            Assoc::Xfy => self.priority,
            _ => self.priority - 1,
        }
    }
}

pub fn infix(name: &str) -> Option<InfixOp> {
    use Assoc::*;
    let (priority, assoc) = match name {
        ":-" | "-->" => (1200, Xfx),
        "::" => (1150, Xfx),
        ";" | "|" => (1100, Xfy),
        "->" => (1050, Xfy),
        "," => (1000, Xfy),
        "=" | "\\=" | "==" | "\\==" | "is" | "<" | ">" | "=<" | ">=" | "=:=" | "=\\=" | "=.." => (700, Xfx),
        "+" | "-" => (500, Yfx),
        "*" | "/" | "//" | "mod" | "rem" => (400, Yfx),
        "**" => (200, Xfx),
        "^" => (200, Xfy),
        _ => return None,
    };
    Some(InfixOp { priority, assoc })
}

/// Prefix operators, all `fy`.
pub fn prefix(name: &str) -> Option<u16> {
    match name {
        "-" | "+" => Some(200),
        "\\+" => Some(900),
        _ => None,
    }
}
