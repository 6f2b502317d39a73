use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SongId, StationId, UserId};

/// Assigns dense indices to string ids in first-seen order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: u32) -> Option<&str> {
        self.names.get(i as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl From<Vec<String>> for Interner {
    fn from(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Interner { names, index }
    }
}

impl From<Interner> for Vec<String> {
    fn from(i: Interner) -> Self {
        i.names
    }
}

/// Id maps for users, songs and stations. Station index 0 is reserved for
/// the null station, so interned stations start at 1.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub users: Interner,
    pub songs: Interner,
    pub stations: Interner,
}

impl Catalog {
    pub fn user(&mut self, name: &str) -> UserId {
        UserId(self.users.intern(name))
    }

    pub fn song(&mut self, name: &str) -> SongId {
        SongId(self.songs.intern(name))
    }

    pub fn station(&mut self, name: &str) -> StationId {
        if name.is_empty() {
            StationId::NULL
        } else {
            StationId(self.stations.intern(name) + 1)
        }
    }

    pub fn song_count(&self) -> usize {
        self.songs.len()
    }

    /// Number of non-null stations.
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn user_name(&self, u: UserId) -> &str {
        self.users.name(u.0).unwrap_or("")
    }

    pub fn song_name(&self, s: SongId) -> &str {
        self.songs.name(s.0).unwrap_or("")
    }

    pub fn station_name(&self, s: StationId) -> &str {
        if s.is_null() {
            ""
        } else {
            self.stations.name(s.0 - 1).unwrap_or("")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_first_seen_order() {
        let mut c = Catalog::default();
        assert_eq!(c.song("s9"), SongId(0));
        assert_eq!(c.song("s3"), SongId(1));
        assert_eq!(c.song("s9"), SongId(0));
        assert_eq!(c.station(""), StationId::NULL);
        assert_eq!(c.station("st2"), StationId(1));
        assert_eq!(c.station_name(StationId(1)), "st2");
        assert_eq!(c.song_name(SongId(1)), "s3");
    }

    #[test]
    fn interner_survives_serde() {
        let mut i = Interner::default();
        i.intern("a");
        i.intern("b");
        let s = serde_json::to_string(&i).unwrap();
        let back: Interner = serde_json::from_str(&s).unwrap();
        assert_eq!(back.get("b"), Some(1));
    }
}
