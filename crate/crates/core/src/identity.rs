//! Registration, authentication and MAC pseudonymization.
//!
//! Raw MAC addresses never leave this module: they are replaced by a keyed
//! HMAC-SHA256 digest under a deployment salt. Profiles are sealed with
//! ChaCha20-Poly1305 before they reach the account store file.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use chrono::NaiveDate;
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::time::Timestamp;

pub const MIN_SALT_LEN: usize = 16;
pub const MIN_PASSWORD_LEN: usize = 8;
pub const SESSION_TTL_SECONDS: i64 = 24 * 3600;
pub const DEFAULT_PBKDF2_ROUNDS: u32 = 100_000;

const STORE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("malformed MAC {0:?}")]
    MalformedMac(String),
    #[error("salt must be at least {MIN_SALT_LEN} bytes, got {0}")]
    SaltTooShort(usize),
    #[error("at least one MAC required")]
    NoMac,
    #[error("email already registered")]
    DuplicateEmail,
    #[error("malformed email")]
    MalformedEmail,
    #[error("password must be at least {MIN_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("invalid profile: {0}")]
    InvalidProfile(&'static str),
    #[error("encryption key must be 32 bytes")]
    BadKey,
    #[error("profile could not be decrypted")]
    Decrypt,
    #[error("account store: {0}")]
    Store(String),
}

/// Opaque authentication failure. Unknown email and wrong password are indistinguishable.
#[derive(Debug, Error, PartialEq, Eq, Clone, Copy)]
#[error("invalid credentials")]
pub struct Rejected;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacAddress([u8; 6]);

impl MacAddress {
    pub fn octets(&self) -> [u8; 6] {
        self.0
    }

    pub fn from_octets(octets: [u8; 6]) -> Self {
        Self(octets)
    }
}

impl FromStr for MacAddress {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IdentityError::MalformedMac(s.to_string());
        let parts: Vec<&str> = s.trim().split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let mut octets = [0u8; 6];
        for (o, part) in octets.iter_mut().zip(parts) {
            if part.len() != 2 || !part.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad());
            }
            *o = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        Ok(Self(octets))
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

/// Hex digest standing in for a MAC everywhere after ingest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MacPseudonym(String);

impl MacPseudonym {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts a previously issued token (64 lowercase hex digits).
    pub fn parse(token: &str) -> Option<Self> {
        (token.len() == 64 && token.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
            .then(|| Self(token.to_string()))
    }
}

impl fmt::Display for MacPseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Keyed one-way MAC digest under a deployment salt.
#[derive(Clone)]
pub struct Pseudonymizer {
    salt: Vec<u8>,
}

impl fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Pseudonymizer(..)")
    }
}

impl Pseudonymizer {
    pub fn new(salt: &[u8]) -> Result<Self, IdentityError> {
        if salt.len() < MIN_SALT_LEN {
            return Err(IdentityError::SaltTooShort(salt.len()));
        }
        Ok(Self {
            salt: salt.to_vec(),
        })
    }

    pub fn pseudonymize(&self, mac: &MacAddress) -> MacPseudonym {
        let mut h = <Hmac<Sha256> as Mac>::new_from_slice(&self.salt).expect("HMAC accepts any key length");
        h.update(mac.to_string().as_bytes());
        MacPseudonym(hex::encode(h.finalize().into_bytes()))
    }
}

pub fn pseudonymize_mac(mac: &MacAddress, salt: &[u8]) -> Result<MacPseudonym, IdentityError> {
    Ok(Pseudonymizer::new(salt)?.pseudonymize(mac))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub name: String,
    pub surname: String,
    pub fathers_name: String,
    pub date_of_birth: NaiveDate,
    pub profession: String,
    pub family_status: String,
    pub contact_number: String,
    pub address: String,
    pub driving_license: bool,
    pub car_owner: bool,
}

impl UserProfile {
    fn validate(&self, today: NaiveDate) -> Result<(), IdentityError> {
        if self.name.trim().is_empty() {
            return Err(IdentityError::InvalidProfile("name is empty"));
        }
        if self.surname.trim().is_empty() {
            return Err(IdentityError::InvalidProfile("surname is empty"));
        }
        if self.date_of_birth >= today {
            return Err(IdentityError::InvalidProfile("date of birth is not in the past"));
        }
        Ok(())
    }
}

/// Authenticated encryption of profiles with a single static deployment key.
#[derive(Clone)]
pub struct ProfileCipher {
    cipher: ChaCha20Poly1305,
}

impl fmt::Debug for ProfileCipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ProfileCipher(..)")
    }
}

impl ProfileCipher {
    pub fn new(key: &[u8]) -> Result<Self, IdentityError> {
        if key.len() != 32 {
            return Err(IdentityError::BadKey);
        }
        Ok(Self {
            cipher: ChaCha20Poly1305::new(Key::from_slice(key)),
        })
    }

    /// Hex of `nonce || ciphertext`.
    pub fn seal(&self, profile: &UserProfile) -> String {
        let mut nonce = [0u8; 12];
        rand::thread_rng().fill_bytes(&mut nonce);
        let plaintext = serde_json::to_vec(profile).expect("profile serializes");
        let ct = self
            .cipher
            .encrypt(Nonce::from_slice(&nonce), plaintext.as_slice())
            .expect("in-memory encryption cannot fail");
        let mut out = nonce.to_vec();
        out.extend(ct);
        hex::encode(out)
    }

    pub fn open(&self, sealed: &str) -> Result<UserProfile, IdentityError> {
        let bytes = hex::decode(sealed).map_err(|_| IdentityError::Decrypt)?;
        if bytes.len() < 12 {
            return Err(IdentityError::Decrypt);
        }
        let (nonce, ct) = bytes.split_at(12);
        let pt = self
            .cipher
            .decrypt(Nonce::from_slice(nonce), ct)
            .map_err(|_| IdentityError::Decrypt)?;
        serde_json::from_slice(&pt).map_err(|_| IdentityError::Decrypt)
    }
}

fn derive(password: &str, salt: &[u8], rounds: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, rounds, &mut out);
    out
}

/// `pbkdf2-sha256$<rounds>$<salt hex>$<hash hex>`
fn hash_password(password: &str, rounds: u32) -> String {
    let mut salt = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut salt);
    let hash = derive(password, &salt, rounds);
    format!("pbkdf2-sha256${rounds}${}${}", hex::encode(salt), hex::encode(hash))
}

fn verify_password(password: &str, digest: &str) -> bool {
    let mut parts = digest.split('$');
    let (Some("pbkdf2-sha256"), Some(rounds), Some(salt), Some(hash), None) = (
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
    ) else {
        return false;
    };
    let (Ok(rounds), Ok(salt), Ok(hash)) = (rounds.parse::<u32>(), hex::decode(salt), hex::decode(hash))
    else {
        return false;
    };
    let computed = derive(password, &salt, rounds);
    computed.ct_eq(hash.as_slice()).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub user_id: String,
    pub email: String,
    pub password_digest: String,
    /// Sealed [`UserProfile`].
    pub profile: String,
    pub pseudonyms: Vec<MacPseudonym>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreFile {
    version: u32,
    accounts: Vec<Account>,
}

#[derive(Debug, Clone)]
struct Session {
    user_id: String,
    expires_at: Timestamp,
}

/// File-backed account store. Writes are serialized; each write rewrites the file atomically.
#[derive(Debug)]
pub struct AccountStore {
    path: PathBuf,
    pseudonymizer: Pseudonymizer,
    cipher: ProfileCipher,
    rounds: u32,
    accounts: RwLock<Vec<Account>>,
    write_lock: Mutex<()>,
    sessions: Mutex<HashMap<String, Session>>,
    // Verified against on unknown email so both rejection paths cost the same.
    decoy_digest: String,
}

impl AccountStore {
    pub fn open(
        path: impl AsRef<Path>,
        pseudonymizer: Pseudonymizer,
        cipher: ProfileCipher,
    ) -> Result<Self, IdentityError> {
        Self::open_with_rounds(path, pseudonymizer, cipher, DEFAULT_PBKDF2_ROUNDS)
    }

    pub fn open_with_rounds(
        path: impl AsRef<Path>,
        pseudonymizer: Pseudonymizer,
        cipher: ProfileCipher,
        rounds: u32,
    ) -> Result<Self, IdentityError> {
        let path = path.as_ref().to_path_buf();
        let accounts = match std::fs::read_to_string(&path) {
            Ok(text) => {
                let file: StoreFile = serde_json::from_str(&text)
                    .map_err(|e| IdentityError::Store(format!("{}: {e}", path.display())))?;
                if file.version != STORE_VERSION {
                    return Err(IdentityError::Store(format!(
                        "unsupported store version {}",
                        file.version
                    )));
                }
                file.accounts
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(IdentityError::Store(e.to_string())),
        };
        Ok(Self {
            path,
            pseudonymizer,
            cipher,
            rounds,
            accounts: RwLock::new(accounts),
            write_lock: Mutex::new(()),
            sessions: Mutex::new(HashMap::new()),
            decoy_digest: hash_password("decoy-password", rounds),
        })
    }

    pub fn pseudonymizer(&self) -> &Pseudonymizer {
        &self.pseudonymizer
    }

    pub fn register_user(
        &self,
        profile: UserProfile,
        macs: &[&str],
        email: &str,
        password: &str,
        now: Timestamp,
    ) -> Result<String, IdentityError> {
        if macs.is_empty() {
            return Err(IdentityError::NoMac);
        }
        let parsed = macs
            .iter()
            .map(|m| m.parse::<MacAddress>())
            .collect::<Result<Vec<_>, _>>()?;
        let email = email.trim().to_lowercase();
        if !email.contains('@') {
            return Err(IdentityError::MalformedEmail);
        }
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(IdentityError::WeakPassword);
        }
        let today = chrono::DateTime::from_timestamp(now, 0)
            .ok_or(IdentityError::InvalidProfile("clock out of range"))?
            .date_naive();
        profile.validate(today)?;

        let mut pseudonyms: Vec<MacPseudonym> = Vec::new();
        for mac in &parsed {
            let p = self.pseudonymizer.pseudonymize(mac);
            if !pseudonyms.contains(&p) {
                pseudonyms.push(p);
            }
        }

        let _guard = self.write_lock.lock().expect("write lock poisoned");
        if self
            .accounts
            .read()
            .expect("accounts lock poisoned")
            .iter()
            .any(|a| a.email == email)
        {
            return Err(IdentityError::DuplicateEmail);
        }
        let account = Account {
            user_id: uuid::Uuid::new_v4().simple().to_string(),
            email,
            password_digest: hash_password(password, self.rounds),
            profile: self.cipher.seal(&profile),
            pseudonyms,
        };
        let user_id = account.user_id.clone();
        let mut next = self.accounts.read().expect("accounts lock poisoned").clone();
        next.push(account);
        self.persist(&next)?;
        *self.accounts.write().expect("accounts lock poisoned") = next;
        Ok(user_id)
    }

    fn persist(&self, accounts: &[Account]) -> Result<(), IdentityError> {
        let file = StoreFile {
            version: STORE_VERSION,
            accounts: accounts.to_vec(),
        };
        let text = serde_json::to_string_pretty(&file).expect("store serializes");
        let tmp = self.path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| IdentityError::Store(e.to_string()))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| IdentityError::Store(e.to_string()))
    }

    /// Verifies credentials and issues a bearer token valid for 24 h.
    pub fn authenticate(&self, email: &str, password: &str, now: Timestamp) -> Result<String, Rejected> {
        let email = email.trim().to_lowercase();
        let account = self
            .accounts
            .read()
            .expect("accounts lock poisoned")
            .iter()
            .find(|a| a.email == email)
            .cloned();
        let (ok, user_id) = match account {
            Some(a) => (verify_password(password, &a.password_digest), Some(a.user_id)),
            None => {
                let _ = verify_password(password, &self.decoy_digest);
                (false, None)
            }
        };
        match (ok, user_id) {
            (true, Some(user_id)) => {
                let mut raw = [0u8; 32];
                rand::thread_rng().fill_bytes(&mut raw);
                let token = hex::encode(raw);
                self.sessions.lock().expect("sessions lock poisoned").insert(
                    token.clone(),
                    Session {
                        user_id,
                        expires_at: now + SESSION_TTL_SECONDS,
                    },
                );
                Ok(token)
            }
            _ => Err(Rejected),
        }
    }

    /// Resolves a bearer token to its user id, dropping it once expired.
    pub fn resolve_session(&self, token: &str, now: Timestamp) -> Option<String> {
        let mut sessions = self.sessions.lock().expect("sessions lock poisoned");
        match sessions.get(token) {
            Some(s) if now < s.expires_at => Some(s.user_id.clone()),
            Some(_) => {
                sessions.remove(token);
                None
            }
            None => None,
        }
    }

    pub fn account(&self, user_id: &str) -> Option<Account> {
        self.accounts
            .read()
            .expect("accounts lock poisoned")
            .iter()
            .find(|a| a.user_id == user_id)
            .cloned()
    }

    pub fn profile(&self, user_id: &str) -> Result<Option<UserProfile>, IdentityError> {
        self.account(user_id)
            .map(|a| self.cipher.open(&a.profile))
            .transpose()
    }

    pub fn len(&self) -> usize {
        self.accounts.read().expect("accounts lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Byte comparison whose timing does not depend on where the inputs differ.
pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && bool::from(a.ct_eq(b))
}

/// Every textual form a MAC might take in a file: separators `:`, `-`, none; any case.
pub fn mac_variants(mac: &MacAddress) -> Vec<String> {
    let lower: Vec<String> = mac.octets().iter().map(|o| format!("{o:02x}")).collect();
    let mut out = Vec::new();
    for sep in [":", "-", ""] {
        let s = lower.join(sep);
        out.push(s.to_uppercase());
        out.push(s);
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    pub(crate) const SALT: &[u8] = b"unit-test-salt-0123456789";
    pub(crate) const KEY: [u8; 32] = [7u8; 32];
    // 2020-01-01T00:00:00Z
    pub(crate) const NOW: Timestamp = 1_577_836_800;

    pub(crate) fn profile() -> UserProfile {
        UserProfile {
            name: "Eleni".into(),
            surname: "Papadopoulou".into(),
            fathers_name: "Giorgos".into(),
            date_of_birth: NaiveDate::from_ymd_opt(1948, 3, 14).unwrap(),
            profession: "Retired teacher".into(),
            family_status: "Widowed".into(),
            contact_number: "+30 2310 000000".into(),
            address: "Egnatia 1, Thessaloniki".into(),
            driving_license: true,
            car_owner: true,
        }
    }

    fn store(dir: &Path) -> AccountStore {
        AccountStore::open_with_rounds(
            dir.join("accounts.json"),
            Pseudonymizer::new(SALT).unwrap(),
            ProfileCipher::new(&KEY).unwrap(),
            1_000,
        )
        .unwrap()
    }

    #[test]
    fn mac_parsing_canonicalizes() {
        let a: MacAddress = "AA:BB:CC:DD:EE:FF".parse().unwrap();
        let b: MacAddress = "aa-bb-cc-dd-ee-ff".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "aa:bb:cc:dd:ee:ff");
        for bad in ["zz:00", "aa:bb:cc:dd:ee", "aa:bb:cc:dd:ee:ff:00", "aab:b:cc:dd:ee:ff", "gg:bb:cc:dd:ee:ff", ""] {
            assert!(matches!(bad.parse::<MacAddress>(), Err(IdentityError::MalformedMac(_))), "{bad}");
        }
    }

    #[test]
    fn pseudonyms_are_deterministic_and_canonical() {
        let a: MacAddress = "AA:BB:CC:DD:EE:FF".parse().unwrap();
        let b: MacAddress = "aa-bb-cc-dd-ee-ff".parse().unwrap();
        let p1 = pseudonymize_mac(&a, SALT).unwrap();
        assert_eq!(p1, pseudonymize_mac(&a, SALT).unwrap());
        assert_eq!(p1, pseudonymize_mac(&b, SALT).unwrap());
        assert_eq!(p1.as_str().len(), 64);
        assert!(MacPseudonym::parse(p1.as_str()).is_some());
        assert_eq!(pseudonymize_mac(&a, b"short"), Err(IdentityError::SaltTooShort(5)));
    }

    #[test]
    fn distinct_salts_give_distinct_pseudonyms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mac: MacAddress = "00:11:22:33:44:55".parse().unwrap();
        for _ in 0..10_000 {
            let s1: [u8; 16] = rng.gen();
            let s2: [u8; 16] = rng.gen();
            if s1 == s2 {
                continue;
            }
            assert_ne!(
                pseudonymize_mac(&mac, &s1).unwrap(),
                pseudonymize_mac(&mac, &s2).unwrap()
            );
        }
    }

    #[test]
    fn pseudonymization_is_injective_on_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = Pseudonymizer::new(SALT).unwrap();
        let mut macs = HashSet::new();
        while macs.len() < 100_000 {
            macs.insert(rng.gen::<[u8; 6]>());
        }
        let tokens: HashSet<MacPseudonym> = macs
            .iter()
            .map(|m| ps.pseudonymize(&MacAddress::from_octets(*m)))
            .collect();
        assert_eq!(tokens.len(), 100_000);
    }

    #[test]
    fn registration_and_login() {
        let dir = tempfile::tempdir().unwrap();
        let store = store(dir.path());
        let id = store
            .register_user(profile(), &["AA:BB:CC:DD:EE:01"], "eleni@example.org", "longpassword", NOW)
            .unwrap();
        let account = store.account(&id).unwrap();
        assert_eq!(account.pseudonyms.len(), 1);
        assert_eq!(store.profile(&id).unwrap().unwrap(), profile());

        let token = store.authenticate("eleni@example.org", "longpassword", NOW).unwrap();
        assert_eq!(store.resolve_session(&token, NOW + 10), Some(id.clone()));
        assert_eq!(store.resolve_session(&token, NOW + SESSION_TTL_SECONDS), None);
        assert_eq!(store.resolve_session("nope", NOW), None);

        let wrong = store.authenticate("eleni@example.org", "wrongpassword", NOW);
        let unknown = store.authenticate("nobody@example.org", "longpassword", NOW);
        assert_eq!(wrong, Err(Rejected));
        assert_eq!(wrong, unknown);
        assert_eq!(format!("{:?}", wrong), format!("{:?}", unknown));
    }

    #[test]
    fn registration_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = store(dir.path());
        let p = profile();
        assert_eq!(
            store.register_user(p.clone(), &[], "a@b.c", "longpassword", NOW),
            Err(IdentityError::NoMac)
        );
        assert_eq!(
            store
                .register_user(p.clone(), &[], "a@b.c", "longpassword", NOW)
                .unwrap_err()
                .to_string(),
            "at least one MAC required"
        );
        let err = store
            .register_user(p.clone(), &["zz:00"], "a@b.c", "longpassword", NOW)
            .unwrap_err();
        assert!(err.to_string().starts_with("malformed MAC"));
        assert_eq!(
            store.register_user(p.clone(), &["00:00:00:00:00:01"], "a@b.c", "short", NOW),
            Err(IdentityError::WeakPassword)
        );
        assert_eq!(
            store.register_user(p.clone(), &["00:00:00:00:00:01"], "no-at-sign", "longpassword", NOW),
            Err(IdentityError::MalformedEmail)
        );
        let mut unborn = p.clone();
        unborn.date_of_birth = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        assert!(matches!(
            store.register_user(unborn, &["00:00:00:00:00:01"], "a@b.c", "longpassword", NOW),
            Err(IdentityError::InvalidProfile(_))
        ));
        store
            .register_user(p.clone(), &["00:00:00:00:00:01"], "a@b.c", "longpassword", NOW)
            .unwrap();
        assert_eq!(
            store.register_user(p, &["00:00:00:00:00:02"], "A@b.c", "longpassword", NOW),
            Err(IdentityError::DuplicateEmail)
        );
    }

    #[test]
    fn store_survives_restart_without_raw_macs() {
        let dir = tempfile::tempdir().unwrap();
        let macs = ["AA:BB:CC:00:11:22", "aa-bb-cc-00-11-33"];
        let id = {
            let s = store(dir.path());
            s.register_user(profile(), &macs, "x@y.z", "longpassword", NOW).unwrap()
        };
        let reopened = store(dir.path());
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.account(&id).unwrap().pseudonyms.len(), 2);
        assert_eq!(reopened.profile(&id).unwrap().unwrap(), profile());
        assert!(reopened.authenticate("x@y.z", "longpassword", NOW).is_ok());

        let text = std::fs::read_to_string(dir.path().join("accounts.json")).unwrap().to_lowercase();
        for m in macs {
            for v in mac_variants(&m.parse().unwrap()) {
                assert!(!text.contains(&v.to_lowercase()), "store leaks {v}");
            }
        }
        assert!(!text.contains("papadopoulou"));
    }

    #[test]
    fn wrong_key_cannot_open_profile() {
        let sealed = ProfileCipher::new(&KEY).unwrap().seal(&profile());
        let other = ProfileCipher::new(&[9u8; 32]).unwrap();
        assert_eq!(other.open(&sealed), Err(IdentityError::Decrypt));
        assert_eq!(ProfileCipher::new(&[0u8; 16]).err(), Some(IdentityError::BadKey));
    }

    fn arb_profile() -> impl Strategy<Value = UserProfile> {
        (
            "[A-Za-zΑ-Ωα-ω]{1,12}",
            "[A-Za-z]{1,12}",
            ".{0,20}",
            (1920i32..2000, 1u32..13, 1u32..29),
            ".{0,30}",
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(name, surname, free, (y, m, d), addr, dl, car)| UserProfile {
                name,
                surname,
                fathers_name: free.clone(),
                date_of_birth: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
                profession: free.clone(),
                family_status: free,
                contact_number: "0".into(),
                address: addr,
                driving_license: dl,
                car_owner: car,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn profile_seal_round_trip(p in arb_profile()) {
            let c = ProfileCipher::new(&KEY).unwrap();
            prop_assert_eq!(c.open(&c.seal(&p)).unwrap(), p);
        }

        #[test]
        fn mac_display_parse_round_trip(octets in any::<[u8; 6]>()) {
            let mac = MacAddress::from_octets(octets);
            for v in mac_variants(&mac).iter().filter(|v| v.len() == 17) {
                prop_assert_eq!(v.parse::<MacAddress>().unwrap(), mac);
            }
        }
    }
}
