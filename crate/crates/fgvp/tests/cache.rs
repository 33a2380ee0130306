use std::path::PathBuf;

use fgvp::cache::{CacheKey, DiskCache};

fn entry_path(dir: &std::path::Path, key: &CacheKey) -> PathBuf {
    dir.join(&key.as_str()[..2]).join(format!("{}.bin", key.as_str()))
}

#[test]
fn put_then_get_returns_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = DiskCache::open(dir.path());
    let key = CacheKey::new("/v1/embed_text", "m1", b"hello");
    assert_eq!(cache.get(&key), None);
    let payload: Vec<u8> = (0..=255u8).cycle().take(5000).collect();
    cache.put(&key, &payload);
    assert_eq!(cache.get(&key).as_deref(), Some(&payload[..]));
    assert!(entry_path(dir.path(), &key).is_file());
    let stats = cache.stats();
    assert_eq!((stats.hits, stats.misses, stats.writes, stats.entries), (1, 1, 1, 1));
}

#[test]
fn keys_separate_endpoint_model_and_input() {
    let a = CacheKey::new("/v1/embed_text", "m1", b"x");
    assert_ne!(a, CacheKey::new("/v1/embed_image", "m1", b"x"));
    assert_ne!(a, CacheKey::new("/v1/embed_text", "m2", b"x"));
    assert_ne!(a, CacheKey::new("/v1/embed_text", "m1", b"y"));
    // Length prefixes keep field boundaries unambiguous.
    assert_ne!(CacheKey::new("ab", "c", b""), CacheKey::new("a", "bc", b""));
    assert_eq!(a, CacheKey::new("/v1/embed_text", "m1", b"x"));
}

#[test]
fn truncated_and_tampered_entries_are_misses() {
    let dir = tempfile::tempdir().unwrap();
    let cache = DiskCache::open(dir.path());
    let key = CacheKey::new("e", "m", b"truncate me");
    cache.put(&key, b"some payload bytes");
    let path = entry_path(dir.path(), &key);
    let raw = std::fs::read(&path).unwrap();
    std::fs::write(&path, &raw[..raw.len() - 3]).unwrap();
    assert_eq!(cache.get(&key), None);
    assert_eq!(cache.stats().corrupt, 1);

    let mut flipped = raw.clone();
    *flipped.last_mut().unwrap() ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert_eq!(cache.get(&key), None);
    std::fs::write(&path, b"garbage").unwrap();
    assert_eq!(cache.get(&key), None);
    assert_eq!(cache.stats().corrupt, 3);

    // A fresh write repairs the entry.
    cache.put(&key, b"some payload bytes");
    assert_eq!(cache.get(&key).as_deref(), Some(&b"some payload bytes"[..]));
}

#[test]
fn unwritable_directory_disables_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, b"x").unwrap();
    let cache = DiskCache::open(file.join("cache"));
    assert!(!cache.is_enabled());
    let key = CacheKey::new("e", "m", b"i");
    cache.put(&key, b"v");
    assert_eq!(cache.get(&key), None);
    let stats = cache.stats();
    assert!(!stats.enabled);
    assert_eq!((stats.writes, stats.entries), (0, 0));
}

#[test]
fn concurrent_writers_leave_a_valid_entry() {
    let dir = tempfile::tempdir().unwrap();
    let key = CacheKey::new("e", "m", b"shared");
    let payload: Vec<u8> = (0..100_000u32).map(|i| (i * 7 % 251) as u8).collect();
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                let cache = DiskCache::open(dir.path());
                for _ in 0..20 {
                    cache.put(&key, &payload);
                    if let Some(got) = cache.get(&key) {
                        assert_eq!(got, payload);
                    }
                }
            });
        }
    });
    let cache = DiskCache::open(dir.path());
    assert_eq!(cache.get(&key), Some(payload));
    assert_eq!(cache.stats().corrupt, 0);
    assert_eq!(cache.stats().entries, 1);
}

#[test]
fn clear_removes_entries_only() {
    let dir = tempfile::tempdir().unwrap();
    let cache = DiskCache::open(dir.path());
    for i in 0..5u8 {
        cache.put(&CacheKey::new("e", "m", &[i]), &[i; 10]);
    }
    std::fs::write(dir.path().join("README"), b"keep").unwrap();
    assert_eq!(cache.stats().entries, 5);
    assert_eq!(cache.clear().unwrap(), 5);
    assert_eq!(cache.stats().entries, 0);
    assert!(dir.path().join("README").exists());
}
