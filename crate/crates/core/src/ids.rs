//! User and receiver labels for the two-cell model.
//!
//! Receiver `l` is the base station of cell `l`; the multiple access channel
//! formed at that receiver is labelled by the same index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A user terminal (transmitter in the uplink).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum User {
    One,
    Two,
}

/// A receiving base station, equivalently the MAC decoded there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Mac {
    One,
    Two,
}

impl User {
    pub const BOTH: [User; 2] = [User::One, User::Two];

    /// Zero-based index.
    pub fn index(self) -> usize {
        match self {
            User::One => 0,
            User::Two => 1,
        }
    }

    pub fn other(self) -> User {
        match self {
            User::One => User::Two,
            User::Two => User::One,
        }
    }

    pub fn from_index(i: usize) -> User {
        if i == 0 {
            User::One
        } else {
            User::Two
        }
    }
}

impl Mac {
    pub const BOTH: [Mac; 2] = [Mac::One, Mac::Two];

    /// Zero-based receiver index.
    pub fn index(self) -> usize {
        match self {
            Mac::One => 0,
            Mac::Two => 1,
        }
    }

    pub fn other(self) -> Mac {
        match self {
            Mac::One => Mac::Two,
            Mac::Two => Mac::One,
        }
    }

    pub fn from_index(i: usize) -> Mac {
        if i == 0 {
            Mac::One
        } else {
            Mac::Two
        }
    }

    /// The user whose cell this receiver serves.
    pub fn own_user(self) -> User {
        User::from_index(self.index())
    }
}

impl TryFrom<u8> for User {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self, Error> {
        match v {
            1 => Ok(User::One),
            2 => Ok(User::Two),
            _ => Err(Error::Argument(format!("user must be 1 or 2, got {v}"))),
        }
    }
}

impl TryFrom<u8> for Mac {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self, Error> {
        match v {
            1 => Ok(Mac::One),
            2 => Ok(Mac::Two),
            _ => Err(Error::Argument(format!("mac must be 1 or 2, got {v}"))),
        }
    }
}

impl From<User> for u8 {
    fn from(u: User) -> u8 {
        u.index() as u8 + 1
    }
}

impl From<Mac> for u8 {
    fn from(m: Mac) -> u8 {
        m.index() as u8 + 1
    }
}

impl fmt::Display for User {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

impl fmt::Display for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}
