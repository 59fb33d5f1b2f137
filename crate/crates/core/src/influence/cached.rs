//! Derived data computed on first use and never serialized or compared.

use std::sync::OnceLock;

#[derive(Debug)]
pub(crate) struct Cached<T>(OnceLock<T>);

impl<T> Cached<T> {
    pub(crate) fn get_or_init(&self, f: impl FnOnce() -> T) -> &T {
        self.0.get_or_init(f)
    }
}

impl<T> Default for Cached<T> {
    fn default() -> Self {
        Cached(OnceLock::new())
    }
}

// A clone starts cold; the source fields may be edited afterwards.
impl<T> Clone for Cached<T> {
    fn clone(&self) -> Self {
        Cached::default()
    }
}

impl<T> PartialEq for Cached<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
